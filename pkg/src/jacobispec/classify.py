"""Cesaro-mean multiplicity classification, the Floquet oracle for periodic
families, energy-grid scans, and the phase-constancy experiment.

The classifier decides, per energy x and per r = 1..l, whether

    C_r(L) = (1/L) sum_{n<=L} s_{l-r+1}^2[phi_n(x)] + s_{l-r+1}^2[psi_n(x)]

stays bounded as L runs over a dyadic grid; boundedness is read off the
log-log slope (bounded means slope near 0, exponential growth means slope
far above 1). The largest bounded r estimates the AC multiplicity at x.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import matblock, models, recurrence, scaling, weyl
from .errors import InvalidInputError

DEFAULT_L_GRID = tuple(2**k for k in range(8, 17))
OVERFLOW_LOG2 = 830.0  # log2 of ~1e250; C_r beyond this is flagged unbounded
# Sliding blocks are renormalized once they leave 2^+-120, checked every 8
# steps; this keeps every intermediate of the closed-form singular values
# finite for per-step growth factors up to ~1e4.
_RESCALE_LOG2 = 120
_RESCALE_EVERY = 8


def _coefficient_cursor(spec):
    """Per-step (D_n, D_n^-1, V_n) with caching for periodic families."""
    period = getattr(spec, "period", None)
    if period is not None:
        cache = {}
        for r in range(period):
            d, v = spec.coefficient_at(r)
            cache[r] = (d, np.linalg.inv(d), v)
        return lambda n: cache[n % period]

    memo = {}

    def cursor(n):
        got = memo.get(n)
        if got is None:
            d, v = spec.coefficient_at(n)
            got = (d, np.linalg.inv(d), v)
            if len(memo) < 4:
                memo[n] = got
        return got

    return cursor


def _cesaro_sums(spec, xs, l_grid):
    """log2 of C_r(L) on the grid, streamed over a whole energy batch.

    Returns (log2_c, max_log2) with log2_c of shape (len(l_grid), B, l);
    the trailing axis is ordered by descending singular index (column j
    holds s_{j+1}), so C_r lives in column l - r.
    """
    xs = np.asarray(xs, dtype=float)
    batch = xs.size
    l = spec.dim
    l_grid = tuple(int(v) for v in l_grid)
    if not l_grid or any(b <= a for a, b in zip(l_grid, l_grid[1:])) or l_grid[0] < 2:
        raise InvalidInputError("cutoff grid must be increasing integers >= 2")
    cursor = _coefficient_cursor(spec)
    eye = np.eye(l)
    prev = np.zeros((2 * batch, l, l))
    prev[batch:] = eye
    cur = np.zeros_like(prev)
    cur[:batch] = eye
    exp2 = np.zeros(2 * batch, dtype=np.int64)
    acc_m = np.zeros((batch, l))
    acc_e = np.zeros((batch, l), dtype=np.int64)
    # raw mantissa-scale sums since the last fold; folded into the scaled
    # accumulator only at rescale events and checkpoints
    buf = np.zeros((2 * batch, l))
    x2 = np.concatenate([xs, xs])[:, None, None]
    out = np.empty((len(l_grid), batch, l))
    ck = 0
    l_max = l_grid[-1]

    def fold():
        nonlocal acc_m, acc_e
        acc_m, acc_e = scaling.add(acc_m, acc_e, buf[:batch], 2 * exp2[:batch, None])
        acc_m, acc_e = scaling.add(acc_m, acc_e, buf[batch:], 2 * exp2[batch:, None])
        buf[:] = 0.0

    for n in range(1, l_max + 1):
        buf += matblock.batched_singular_sq(cur)
        if n == l_grid[ck]:
            fold()
            out[ck] = scaling.log2(acc_m, acc_e) - math.log2(n)
            ck += 1
            if ck == len(l_grid):
                break
        d_n, d_inv, v_n = cursor(n)
        d_prev = cursor(n - 1)[0]
        nxt = d_inv @ (x2 * cur - v_n @ cur - d_prev @ prev)
        prev, cur = cur, nxt
        if n % _RESCALE_EVERY == 0:
            pair = np.maximum(
                np.max(np.abs(cur.reshape(2 * batch, -1)), axis=1),
                np.max(np.abs(prev.reshape(2 * batch, -1)), axis=1),
            )
            hot = (pair > 2.0**_RESCALE_LOG2) | ((pair > 0) & (pair < 2.0**-_RESCALE_LOG2))
            if np.any(hot):
                fold()
                _, e = np.frexp(pair)
                shift = np.where(hot, e, 0).astype(np.int64)
                factor = np.ldexp(1.0, -shift)[:, None, None]
                cur = cur * factor
                prev = prev * factor
                exp2 = exp2 + shift
    return out


@dataclass
class CesaroProfile:
    """Per-energy growth record of the truncated Cesaro means."""

    x: float
    dim: int
    l_grid: tuple
    log2_c: np.ndarray  # (len(l_grid), l); column r-1 belongs to C_r
    slopes: np.ndarray  # (l,)
    intercepts: np.ndarray
    overflow: np.ndarray  # (l,) bool

    def c_values(self):
        """C_r(L) as plain floats (inf where they left float range)."""
        with np.errstate(over="ignore"):
            return np.exp2(np.minimum(self.log2_c, 1024.0))


def _fit_profiles(xs, log2_c, l_grid, dim):
    logs = np.log2(np.asarray(l_grid, dtype=float))
    xbar = logs.mean()
    denom = float(np.sum((logs - xbar) ** 2))
    # zero sums fit as flat; belt-and-braces against any stray non-finite
    y = np.clip(np.nan_to_num(log2_c, nan=0.0, posinf=1e9, neginf=-1074.0), -1074.0, None)
    ybar = y.mean(axis=0)
    slopes = np.einsum("g,gbl->bl", logs - xbar, y - ybar) / denom
    intercepts = ybar - slopes * xbar
    overflow = np.any(log2_c > OVERFLOW_LOG2, axis=0)
    profiles = []
    for j, x in enumerate(np.atleast_1d(xs)):
        # flip from descending-singular-index order into r = 1..l order
        profiles.append(
            CesaroProfile(
                x=float(x),
                dim=dim,
                l_grid=tuple(l_grid),
                log2_c=log2_c[:, j, ::-1].copy(),
                slopes=slopes[j, ::-1].copy(),
                intercepts=intercepts[j, ::-1].copy(),
                overflow=overflow[j, ::-1].copy(),
            )
        )
    return profiles


def cesaro_profile(spec, x, l_grid=DEFAULT_L_GRID):
    """Cesaro growth profile of one energy (see module docstring)."""
    log2_c = _cesaro_sums(spec, np.array([float(x)]), l_grid)
    return _fit_profiles([x], log2_c, l_grid, spec.dim)[0]


def cesaro_profiles_grid(spec, xs, l_grid=DEFAULT_L_GRID):
    xs = np.asarray(xs, dtype=float)
    log2_c = _cesaro_sums(spec, xs, l_grid)
    return _fit_profiles(xs, log2_c, l_grid, spec.dim)


def classify_multiplicity(profile, slope_threshold=0.2):
    """Largest r whose Cesaro mean stays bounded, with a confidence flag.

    r_ces is the largest r with slope below the threshold and no overflow
    marker (0 when none qualifies). Slopes landing in the gray zone
    (threshold, 2*threshold) flag the verdict low-confidence.
    """
    r_ces = 0
    low_conf = False
    for r in range(1, profile.dim + 1):
        slope = float(profile.slopes[r - 1])
        if not profile.overflow[r - 1] and slope < slope_threshold:
            r_ces = r
        if slope_threshold < slope < 2.0 * slope_threshold:
            low_conf = True
    return r_ces, low_conf


# ---------------------------------------------------------------------------
# Floquet oracle for periodic families.


@dataclass
class FloquetResult:
    x: float
    r_flo: int
    band_edge: bool
    eigenvalues: np.ndarray
    log2_scale: int


def floquet_multiplicity(spec, x, eps=1e-6, ambiguity_factor=10.0):
    """Elliptic-pair count of the period monodromy at real x.

    Eigenvalues of the one-period transfer product come in (lambda,
    1/lambda) pairs; those on the unit circle (within ``eps``) mark open
    channels, so r_flo = count/2. An odd count, or a modulus within the
    ambiguity band of the circle, raises the band-edge flag.
    """
    period = getattr(spec, "period", None)
    if period is None:
        raise InvalidInputError("Floquet oracle needs a periodic model")
    mono, exp2 = recurrence.cocycle_product(spec, float(x), period + 1)
    lam = np.linalg.eigvals(mono)
    # |true eigenvalue| = |lam| * 2^exp2, recovered through logs so the
    # ledger never has to be materialized
    with np.errstate(divide="ignore"):
        log_mod = np.log(np.abs(lam)) + exp2 * math.log(2.0)
    dist = np.abs(np.expm1(log_mod))  # exactly | |lambda| - 1 |
    on_circle = dist < eps
    ambiguous = np.any((dist >= eps) & (dist < ambiguity_factor * eps))
    count = int(np.sum(on_circle))
    return FloquetResult(
        x=float(x),
        r_flo=count // 2,
        band_edge=bool(count % 2 == 1 or ambiguous),
        eigenvalues=lam,
        log2_scale=int(exp2),
    )


def floquet_band_edges(spec, lo, hi, coarse=2048, eps=1e-6, refine_tol=1e-9):
    """Multiplicity-transition energies of a periodic family in [lo, hi].

    Coarse scan then bisection on each transition interval.
    """
    xs = np.linspace(float(lo), float(hi), int(coarse))
    mult = np.array([floquet_multiplicity(spec, x, eps).r_flo for x in xs])
    edges = []
    for i in np.nonzero(np.diff(mult))[0]:
        a, b = xs[i], xs[i + 1]
        ra = mult[i]
        while b - a > refine_tol:
            mid = 0.5 * (a + b)
            if floquet_multiplicity(spec, mid, eps).r_flo == ra:
                a = mid
            else:
                b = mid
        edges.append(0.5 * (a + b))
    return edges


# ---------------------------------------------------------------------------
# Energy-grid scans.


@dataclass
class ScanParams:
    l_grid: tuple = DEFAULT_L_GRID
    slope_threshold: float = 0.2
    y_ladder: tuple = weyl.DEFAULT_Y_LADDER
    tau_rel: float = 1e-3
    rank_tol: float = 1e-8
    floquet_eps: float = 1e-6
    edge_exclusion: float = 0.05
    with_rank: bool = True
    with_floquet: bool = True  # effective only for periodic models


@dataclass
class ScanRecord:
    x: float
    r_ces: int
    slopes: tuple
    low_confidence: bool
    r_rank: int | None = None
    trace_growth: float = float("nan")
    r_flo: int | None = None
    flags: list = field(default_factory=list)
    error: str = ""


def _chunk_records(spec, xs, params):
    records = []
    profiles = cesaro_profiles_grid(spec, xs, params.l_grid)
    ranks = None
    if params.with_rank:
        ranks = weyl.im_m_boundary_grid(
            spec, xs, params.y_ladder, params.tau_rel, params.rank_tol
        )
    periodic = getattr(spec, "period", None) is not None
    for j, x in enumerate(xs):
        prof = profiles[j]
        r_ces, low_conf = classify_multiplicity(prof, params.slope_threshold)
        rec = ScanRecord(
            x=float(x),
            r_ces=r_ces,
            slopes=tuple(float(s) for s in prof.slopes),
            low_confidence=low_conf,
        )
        if low_conf:
            rec.flags.append("low-confidence")
        if ranks is not None:
            br = ranks[j]
            rec.r_rank = br.rank
            rec.trace_growth = br.trace_growth
            rec.flags.extend(br.flags())
        if periodic and params.with_floquet:
            flo = floquet_multiplicity(spec, x, params.floquet_eps)
            rec.r_flo = flo.r_flo
            if flo.band_edge:
                rec.flags.append("band-edge")
            rec.flags.append("ces=flo" if flo.r_flo == r_ces else "ces!=flo")
            if rec.r_rank is not None:
                rec.flags.append("rank=flo" if rec.r_rank == flo.r_flo else "rank!=flo")
        records.append(rec)
    return records


def _chunk_safe(spec, xs, params):
    try:
        return _chunk_records(spec, xs, params)
    except Exception:
        # isolate the failing energies; a bad point must not sink the scan
        records = []
        for x in xs:
            try:
                records.extend(_chunk_records(spec, np.array([x]), params))
            except Exception as exc:  # noqa: BLE001 - recorded, not raised
                records.append(
                    ScanRecord(
                        x=float(x),
                        r_ces=-1,
                        slopes=(),
                        low_confidence=True,
                        flags=["error"],
                        error=f"{type(exc).__name__}: {exc}",
                    )
                )
        return records


def scan_energy_grid(spec, x_grid, params=None, threads=1):
    """Classify every energy on the grid; deterministic order, errors kept.

    Grid points are independent; with threads > 1 the grid is split into
    contiguous chunks merged back in index order, so results do not depend
    on the thread count.
    """
    params = params or ScanParams()
    xs = np.asarray(x_grid, dtype=float)
    if xs.size == 0:
        return []
    threads = max(1, int(threads))
    if threads == 1 or xs.size < 2 * threads:
        return _chunk_safe(spec, xs, params)
    chunks = np.array_split(xs, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda c: _chunk_safe(spec, c, params), chunks))
    out = []
    for part in parts:
        out.extend(part)
    return out


def agreement_summary(records, edges=None, exclusion=0.05):
    """Cesaro-vs-Floquet and rank-vs-Floquet agreement away from band edges."""
    edges = list(edges or [])

    def non_edge(x):
        return all(abs(x - e) > exclusion for e in edges)

    eligible = [r for r in records if not r.error and non_edge(r.x) and "band-edge" not in r.flags]
    ces = [r for r in eligible if r.r_flo is not None]
    ces_agree = sum(1 for r in ces if r.r_ces == r.r_flo)
    ranked = [r for r in ces if r.r_rank is not None]
    rank_agree = sum(1 for r in ranked if r.r_rank == r.r_flo)
    return {
        "n_records": len(records),
        "n_eligible": len(eligible),
        "ces_vs_floquet": ces_agree / len(ces) if ces else float("nan"),
        "rank_vs_floquet": rank_agree / len(ranked) if ranked else float("nan"),
        "n_rank_determinate": len(ranked),
    }


# ---------------------------------------------------------------------------
# Phase-constancy experiment for dynamically defined families.


@dataclass
class PhaseClassification:
    phase: tuple
    r_plus: np.ndarray
    r_minus: np.ndarray
    full_multiplicity: np.ndarray
    determinate: np.ndarray


@dataclass
class ConstancyReport:
    x_grid: np.ndarray
    phases: list
    classifications: list
    pairwise: dict

    def summary(self):
        lines = []
        for (i, j), stats in sorted(self.pairwise.items()):
            lines.append(
                f"phases {i} vs {j}: agreement {stats['agreement']:.4f} "
                f"over {stats['n_joint_determinate']} determinate points; "
                f"sym-diff by even multiplicity: "
                + ", ".join(
                    f"2k={m}: {v:.4f}" for m, v in sorted(stats["sym_diff_by_even"].items())
                )
            )
        return "\n".join(lines)


def _classify_phase(spec, xs, params):
    right = cesaro_profiles_grid(spec, xs, params.l_grid)
    left = cesaro_profiles_grid(models.reflect(spec), xs, params.l_grid)
    r_plus = np.empty(xs.size, dtype=int)
    r_minus = np.empty(xs.size, dtype=int)
    det = np.empty(xs.size, dtype=bool)
    for j in range(xs.size):
        rp, lcp = classify_multiplicity(right[j], params.slope_threshold)
        rm, lcm = classify_multiplicity(left[j], params.slope_threshold)
        r_plus[j] = rp
        r_minus[j] = rm
        det[j] = not (lcp or lcm)
    return r_plus, r_minus, det


def constancy_experiment(spec, phases, x_grid, params=None, threads=1):
    """Compare whole-line multiplicity classifications across phases.

    The whole-line AC multiplicity at x is estimated as r_plus + r_minus
    (right plus reflected-left half-line Cesaro multiplicities), which is
    even exactly when the two half-lines agree. For each phase pair the
    report carries the agreement fraction over jointly determinate points
    and the symmetric-difference fraction of each even-multiplicity set.
    """
    if len(phases) < 2:
        raise InvalidInputError("need at least two phases")
    if not hasattr(spec, "with_phase"):
        raise InvalidInputError("constancy experiment needs a dynamical model")
    params = params or ScanParams()
    xs = np.asarray(x_grid, dtype=float)

    def one(phase):
        phased = spec.with_phase(np.atleast_1d(phase))
        r_plus, r_minus, det = _classify_phase(phased, xs, params)
        return PhaseClassification(
            phase=tuple(np.atleast_1d(phase)),
            r_plus=r_plus,
            r_minus=r_minus,
            full_multiplicity=r_plus + r_minus,
            determinate=det,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, phases))
    else:
        results = [one(p) for p in phases]

    pairwise = {}
    l = spec.dim
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            a, b = results[i], results[j]
            joint = a.determinate & b.determinate
            n_joint = int(np.sum(joint))
            agree = (
                float(np.sum(a.full_multiplicity[joint] == b.full_multiplicity[joint]) / n_joint)
                if n_joint
                else float("nan")
            )
            by_even = {}
            for k in range(1, l + 1):
                m = 2 * k
                sa = joint & (a.full_multiplicity == m)
                sb = joint & (b.full_multiplicity == m)
                union = int(np.sum(sa | sb))
                sym = int(np.sum(sa ^ sb))
                by_even[m] = sym / union if union else 0.0
            pairwise[(i, j)] = {
                "agreement": agree,
                "n_joint_determinate": n_joint,
                "n_indeterminate": int(np.sum(~joint)),
                "sym_diff_by_even": by_even,
            }
    return ConstancyReport(
        x_grid=xs, phases=[tuple(np.atleast_1d(p)) for p in phases],
        classifications=results, pairwise=pairwise,
    )
