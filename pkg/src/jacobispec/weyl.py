"""Weyl m-functions, Green blocks, boundary-value ranks, and the
subordinacy (truncated-norm) bounds on ||M||.

Two independent routes compute the same l-by-l Herglotz matrix M(z):

* ``m_riccati``: the descending corner-resolvent recursion
  M_n = ((V_n - z) - D_n M_{n+1} D_n)^-1 seeded with a Dirichlet wall
  (M = 0) at a doubling depth, stopped by a Cauchy test on M_1;
* ``m_resolvent``: the (1,1) block of the inverse of the banded
  truncation of the half-line operator, via LAPACK banded LU.

Both equal the Green block G(1,1;z) in exact arithmetic; their agreement
is the package's primary cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import matblock, recurrence, truncnorm
from .errors import ConvergenceError, DomainError, InvalidInputError

MIN_IM_Z = 1e-8
DEFAULT_Y_LADDER = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
SYMMETRY_REL_TOL = 1e-8
HERGLOTZ_EIG_TOL = 1e-10


@dataclass
class WeylM:
    """An m-function value with its convergence metadata."""

    z: complex
    m: np.ndarray
    method: str
    depth: int
    last_delta: float

    def __post_init__(self):
        sym = matblock.frobenius_norm(self.m - self.m.T)
        scale = max(matblock.frobenius_norm(self.m), 1e-300)
        if sym > SYMMETRY_REL_TOL * scale:
            raise ConvergenceError(
                f"m-function lost symmetry (defect {sym / scale:.3e})",
                last_delta=self.last_delta,
                depth=self.depth,
            )
        min_eig = float(np.linalg.eigvalsh(self.m.imag)[0])
        if min_eig < -HERGLOTZ_EIG_TOL:
            raise ConvergenceError(
                f"Im M lost positivity (min eigenvalue {min_eig:.3e})",
                last_delta=self.last_delta,
                depth=self.depth,
            )

    @property
    def frobenius_norm(self):
        return matblock.frobenius_norm(self.m)

    @property
    def operator_norm(self):
        return matblock.operator_norm(self.m)


def _require_upper(z):
    z = complex(z)
    if z.imag < MIN_IM_Z:
        raise DomainError(f"need Im z >= {MIN_IM_Z}, got {z.imag}")
    return z


def _riccati_sweep(spec, z, depth, collect_to=0):
    """Descend M_n = ((V_n - z) - D_n M_{n+1} D_n)^-1 from a zero seed.

    Returns M_1 and, when ``collect_to`` > 0, the chain M_1..M_collect_to.
    """
    l = spec.dim
    eye = np.eye(l)
    m = np.zeros((l, l), dtype=complex)
    chain = [None] * (collect_to + 1) if collect_to else None
    for n in range(depth, 0, -1):
        d_n, v_n = spec.coefficient_at(n)
        m = np.linalg.inv((v_n - z * eye) - d_n @ m @ d_n)
        if chain is not None and n <= collect_to:
            chain[n] = m
    return m, chain


def m_riccati(spec, z, tol=1e-10, max_depth=2**18, initial_depth=64):
    """m-function by the descending corner recursion with depth doubling."""
    z = _require_upper(z)
    depth = int(initial_depth)
    prev = None
    while depth <= max_depth:
        m, _ = _riccati_sweep(spec, z, depth)
        if prev is not None:
            delta = matblock.frobenius_norm(m - prev)
            if delta < tol:
                return WeylM(z, m, "riccati", depth, float(delta))
        prev = m
        depth *= 2
    delta = matblock.frobenius_norm(m - prev) if prev is not None else math.inf
    raise ConvergenceError(
        f"riccati recursion not Cauchy at depth {max_depth} for z = {z}",
        last_delta=float(delta),
        depth=max_depth,
    )


def _banded_corner_block(spec, z, n_blocks):
    """(1,1) block of (T_N - z)^-1 for the N-block half-line truncation."""
    l = spec.dim
    dim = n_blocks * l
    bw = 2 * l - 1
    ab = np.zeros((2 * bw + 1, dim), dtype=complex)
    eye = np.eye(l)
    vs = np.empty((n_blocks, l, l), dtype=complex)
    ds = np.empty((max(n_blocks - 1, 0), l, l))
    for k in range(n_blocks):
        d_k, v_k = spec.coefficient_at(k + 1)
        vs[k] = v_k - z * eye
        if k < n_blocks - 1:
            ds[k] = d_k
    rows_l = np.arange(l)
    # scatter each block diagonal into LAPACK's diag-ordered band storage
    def scatter(blocks, block_row0, block_col0):
        count = blocks.shape[0]
        i = (np.arange(count)[:, None, None] + block_row0) * l + rows_l[None, :, None]
        j = (np.arange(count)[:, None, None] + block_col0) * l + rows_l[None, None, :]
        ab[bw + i - j, j] = blocks

    scatter(vs, 0, 0)
    if n_blocks > 1:
        scatter(ds.astype(complex), 0, 1)  # D_n couples block n to n+1
        scatter(ds.astype(complex), 1, 0)
    rhs = np.zeros((dim, l), dtype=complex)
    rhs[:l, :] = eye
    sol = scipy.linalg.solve_banded((bw, bw), ab, rhs)
    return sol[:l, :]


def _corner_block_guarded(spec, z, n_blocks):
    """Banded solve with the near-real breakdown guard.

    A pivot breakdown cannot happen for Im z > 0, but if the banded LU
    ever reports singularity the solve is retried once with Im z bumped
    by the domain floor; callers see the bump through the flag.
    """
    try:
        return _banded_corner_block(spec, z, n_blocks), False
    except np.linalg.LinAlgError:
        bumped = complex(z.real, z.imag + MIN_IM_Z)
        return _banded_corner_block(spec, bumped, n_blocks), True


def m_resolvent(spec, z, n_blocks=None, tol=1e-10, max_blocks=2**17, initial_blocks=64):
    """m-function as the corner block of the banded-truncation resolvent.

    Independent oracle for :func:`m_riccati`: same limit, different
    algorithm (LAPACK banded LU with pivoting instead of the hand-rolled
    descending recursion). Truncation size doubles until Cauchy unless
    ``n_blocks`` pins it.
    """
    z = complex(z)
    bumped = False
    if 0 < z.imag < MIN_IM_Z:
        z = complex(z.real, MIN_IM_Z)
        bumped = True
    z = _require_upper(z)
    if n_blocks is not None:
        n_blocks = int(n_blocks)
        if n_blocks < 8:
            raise InvalidInputError("need at least 8 blocks")
        m, hit_guard = _corner_block_guarded(spec, z, n_blocks)
        out = WeylM(z, m, "resolvent", n_blocks, float("nan"))
        out.bumped = bumped or hit_guard
        return out
    n = int(initial_blocks)
    prev = None
    while n <= max_blocks:
        m, hit_guard = _corner_block_guarded(spec, z, n)
        bumped = bumped or hit_guard
        if prev is not None:
            delta = matblock.frobenius_norm(m - prev)
            if delta < tol:
                out = WeylM(z, m, "resolvent", n, float(delta))
                out.bumped = bumped
                return out
        prev = m
        n *= 2
    delta = matblock.frobenius_norm(m - prev) if prev is not None else math.inf
    raise ConvergenceError(
        f"resolvent truncation not Cauchy at {max_blocks} blocks for z = {z}",
        last_delta=float(delta),
        depth=max_blocks,
    )


# ---------------------------------------------------------------------------
# Stable Jost blocks and identities.


def jost_chain(spec, z, n_max, tol=1e-12, max_depth=2**18):
    """Square-summable solution blocks F_0..F_n_max, built stably.

    Uses F_k = -M_k D_{k-1} F_{k-1} with the corner-resolvent chain M_k,
    which decays like the true Jost solution instead of cancelling two
    exponentially growing tracks. Returns (blocks, M_1 WeylM).
    """
    z = _require_upper(z)
    n_max = int(n_max)
    depth = 64
    while depth < 4 * max(n_max, 1):
        depth *= 2
    prev = None
    while depth <= max_depth:
        m1, chain = _riccati_sweep(spec, z, depth, collect_to=max(n_max, 1))
        probe = chain[max(n_max, 1)]
        if prev is not None:
            delta = max(
                matblock.frobenius_norm(m1 - prev[0]),
                matblock.frobenius_norm(probe - prev[1]),
            )
            if delta < tol:
                break
        prev = (m1, probe)
        depth *= 2
    else:
        raise ConvergenceError(
            f"corner chain not Cauchy at depth {max_depth}",
            last_delta=None,
            depth=max_depth,
        )
    l = spec.dim
    blocks = np.empty((n_max + 1, l, l), dtype=complex)
    blocks[0] = np.eye(l)
    for k in range(1, n_max + 1):
        d_prev = spec.coefficient_at(k - 1)[0]
        blocks[k] = -chain[k] @ d_prev @ blocks[k - 1]
    return blocks, WeylM(z, m1, "riccati", depth, float(delta))


@dataclass
class HerglotzCheck:
    residual: float
    n_terms: int
    tail_estimate: float
    slow_decay: bool


def herglotz_identity_check(spec, z, n_terms=None, tol=1e-12, max_terms=2**15):
    """Defect of D0 Im[M] D0 = Im[z] * sum_k F_k^* F_k.

    The sum is truncated once the geometric tail estimate drops below
    1e-12 of the running total (or at ``n_terms`` when given); slow Jost
    decay (z too close to the spectrum) sets the ``slow_decay`` flag.
    """
    z = _require_upper(z)
    d0 = spec.coefficient_at(0)[0]
    n = int(n_terms) if n_terms is not None else 256
    slow = False
    n = max(n, 16)
    while True:
        blocks, m1 = jost_chain(spec, z, n, tol=tol)
        term_norms = np.array(
            [float(np.sum(np.abs(blocks[k]) ** 2)) for k in range(n - 8, n + 1)]
        )
        ratios = term_norms[1:] / np.maximum(term_norms[:-1], 1e-300)
        rho = float(np.exp(np.mean(np.log(np.maximum(ratios, 1e-300)))))
        total = np.einsum("kji,kjl->il", blocks[1:].conj(), blocks[1:])
        tail = term_norms[-1] * rho / (1.0 - rho) if rho < 1 else math.inf
        total_scale = max(float(np.trace(total).real), 1e-300)
        if n_terms is not None or tail <= 1e-12 * total_scale:
            break
        if n >= max_terms:
            slow = True
            break
        n *= 2
    lhs = d0 @ m1.m.imag @ d0
    rhs = z.imag * total
    residual = matblock.frobenius_norm(lhs - rhs) / max(
        matblock.frobenius_norm(lhs), 1e-300
    )
    if not math.isfinite(tail):
        slow = True
    return HerglotzCheck(float(residual), n, float(tail / total_scale if math.isfinite(tail) else math.inf), slow)


def herglotz_identity_residual(spec, z, n_terms=None, **kw) -> float:
    return herglotz_identity_check(spec, z, n_terms=n_terms, **kw).residual


def green_block(spec, p, q, z, m_weyl=None, tol=1e-10):
    """G(p,q;z) = -phi_p D0^-1 F_q^t for p <= q (transposed branch above).

    Assembled from the Dirichlet/Neumann tracks and the Jost combination
    F = psi - phi M D0 at the same energy.
    """
    p, q = int(p), int(q)
    if p < 0 or q < 0:
        raise InvalidInputError("indices must be >= 0")
    z = _require_upper(z)
    if m_weyl is None:
        m_weyl = m_riccati(spec, z, tol=tol)
    hi = max(p, q, 1) + 1
    phi, psi = recurrence.dirichlet_neumann(spec, z, hi)
    f_track = recurrence.jost_assemble(phi, psi, m_weyl.m)
    d0_inv = matblock.invert(spec.coefficient_at(0)[0])
    if p <= q:
        return -phi.block(p) @ d0_inv @ f_track.block(q).T
    return -f_track.block(p) @ d0_inv @ phi.block(q).T


# ---------------------------------------------------------------------------
# Boundary-value rank ladder.


@dataclass
class BoundaryRank:
    x: float
    y_ladder: tuple
    ranks: list
    eigenvalues: list
    traces: list
    rank: int | None
    stabilized_rung: int | None
    trace_growth: float
    indeterminate: bool

    def flags(self):
        return [] if not self.indeterminate else ["rank-indeterminate"]


def _ladder_verdict(x, y_ladder, eig_list, tau_rel, rel_change=0.2):
    # An eigenvalue is retained at rung k when it clears the relative cut
    # AND persists (< 20% move) from the previous rung; eigenvalues heading
    # to zero with y shrink by ~ y_k/y_{k-1} per rung and drop out even
    # though they stay comparable to each other, which is what makes the
    # rank-0 region detectable at finite y.
    ranks = []
    for k in range(len(y_ladder)):
        eigs = np.asarray(eig_list[k])
        cut = tau_rel * max(float(eigs[-1]), 1e-12)
        if k == 0:
            ranks.append(int(np.sum(eigs > cut)))
            continue
        prev = np.asarray(eig_list[k - 1])
        persists = np.abs(eigs - prev) < rel_change * np.maximum(prev, 1e-12)
        ranks.append(int(np.sum((eigs > cut) & persists)))
    traces = [float(np.sum(np.clip(e, 0.0, None))) for e in eig_list]
    stabilized = None
    for k in range(len(y_ladder) - 1, 1, -1):
        if ranks[k] == ranks[k - 1]:
            stabilized = k
            break
    logs_y = np.log(np.asarray(y_ladder))
    logs_t = np.log(np.maximum(np.asarray(traces), 1e-300))
    slope = float(np.polyfit(logs_y, logs_t, 1)[0])
    return BoundaryRank(
        x=float(x),
        y_ladder=tuple(y_ladder),
        ranks=ranks,
        eigenvalues=[np.asarray(e) for e in eig_list],
        traces=traces,
        rank=ranks[stabilized] if stabilized is not None else None,
        stabilized_rung=stabilized,
        trace_growth=-slope,
        indeterminate=stabilized is None,
    )


def im_m_boundary(spec, x, y_ladder=DEFAULT_Y_LADDER, tau_rel=1e-3, tol=1e-8):
    """Rank of Im M(x + iy) down a decreasing y ladder.

    The reported rank counts eigenvalues of Im M above tau_rel times the
    largest one at the smallest stabilized rung (same rank at two
    consecutive rungs, retained eigenvalues moving < 20%). A ladder that
    never stabilizes yields rank None and ``indeterminate``. The trace
    growth exponent g (tr Im M ~ y^-g as y drops) doubles as a
    singular-support indicator.
    """
    y_ladder = tuple(float(y) for y in y_ladder)
    if any(b >= a for a, b in zip(y_ladder, y_ladder[1:])) or y_ladder[-1] <= 0:
        raise InvalidInputError("y ladder must be strictly decreasing and positive")
    eig_list = []
    for y in y_ladder:
        m = m_riccati(spec, complex(x, y), tol=tol)
        eig_list.append(np.linalg.eigvalsh(m.m.imag))
    return _ladder_verdict(x, y_ladder, eig_list, tau_rel)


# Batched ladder over an energy grid (shared by the scan engine).


def m_riccati_grid(spec, xs, y, tol=1e-8, max_depth=2**17, initial_depth=64):
    """Vectorized riccati descent at z = x_j + iy over a whole grid."""
    xs = np.asarray(xs, dtype=float)
    if y < MIN_IM_Z:
        raise DomainError(f"need y >= {MIN_IM_Z}")
    l = spec.dim
    z = (xs + 1j * y)[:, None, None]
    eye = np.eye(l)
    depth = int(initial_depth)
    prev = None
    while depth <= max_depth:
        m = np.zeros((xs.size, l, l), dtype=complex)
        for n in range(depth, 0, -1):
            d_n, v_n = spec.coefficient_at(n)
            core = (v_n - z * eye) - d_n @ m @ d_n
            m = matblock.batched_inv(core)
        if prev is not None:
            delta = float(np.max(np.sqrt(np.sum(np.abs(m - prev) ** 2, axis=(1, 2)))))
            if delta < tol:
                return m, depth, delta
        prev = m
        depth *= 2
    raise ConvergenceError(
        f"batched riccati not Cauchy at depth {max_depth} (y = {y})",
        last_delta=None,
        depth=max_depth,
    )


def im_m_boundary_grid(spec, xs, y_ladder=DEFAULT_Y_LADDER, tau_rel=1e-3, tol=1e-8):
    xs = np.asarray(xs, dtype=float)
    y_ladder = tuple(float(y) for y in y_ladder)
    eigs = np.empty((len(y_ladder), xs.size, spec.dim))
    for i, y in enumerate(y_ladder):
        m, _, _ = m_riccati_grid(spec, xs, y, tol=tol)
        eigs[i] = np.linalg.eigvalsh(m.imag)
    return [
        _ladder_verdict(xs[j], y_ladder, [eigs[i, j] for i in range(len(y_ladder))], tau_rel)
        for j in range(xs.size)
    ]


# ---------------------------------------------------------------------------
# Truncated-norm bounds on ||M||.


@dataclass
class JLBoundReport:
    x: float
    y: float
    l_cutoff: float
    ratio: float
    condition_term: float
    k1: float
    k2: float
    m_norm: float
    m_operator_norm: float
    verdict: bool | None
    status: str = "ok"  # ok | condition-overflow
    solver_residual: float = float("nan")
    extras: dict = field(default_factory=dict)


def jl_constants(spec):
    """(b, k1, k2) from the Frobenius convention (C1 = C2 = 1)."""
    l = spec.dim
    d0 = spec.coefficient_at(0)[0]
    nd0 = matblock.frobenius_norm(d0)
    nd0_inv = matblock.frobenius_norm(matblock.invert(d0))
    s_l_d0sq = float(matblock.singular_values(d0 @ d0)[-1])
    b = -(2.0 * nd0 / nd0_inv + 9.0 * nd0**2)
    k1 = -1.0 / (b * nd0_inv)
    k2 = -2.0 * l * b * nd0_inv / s_l_d0sq
    return b, k1, k2


def jl_bounds(spec, x, y, *, m_tol=1e-9, slack=1e-9, tracks=None):
    """Evaluate k1 * ratio <= ||M||_F <= k2 * ratio * condition_term at (x, y).

    ratio = ||psi||_L / ||phi||_L and condition_term = ||phi||_L^2 /
    s_l[phi]_L^2 at the matched cutoff L(y); ||M||_F comes from the
    resolvent route. A vanishing truncated smallest singular value marks
    the report ``condition-overflow`` and skips the verdict.
    """
    x = float(x)
    y = float(y)
    solve = truncnorm.solve_l_of_y(spec, x, y, tracks=tracks)
    l_cut = solve.l_value
    l = spec.dim
    _, k1, k2 = jl_constants(spec)
    norm_phi = truncnorm.truncated_norm(solve.phi, l_cut)
    norm_psi = truncnorm.truncated_norm(solve.psi, l_cut)
    ratio = norm_psi / norm_phi
    s_l_phi = truncnorm.truncated_singular(solve.phi, l, l_cut)
    m_val = m_resolvent(spec, complex(x, y), tol=m_tol)
    report = JLBoundReport(
        x=x,
        y=y,
        l_cutoff=l_cut,
        ratio=ratio,
        condition_term=float("nan"),
        k1=k1,
        k2=k2,
        m_norm=m_val.frobenius_norm,
        m_operator_norm=m_val.operator_norm,
        verdict=None,
        solver_residual=solve.residual,
    )
    if s_l_phi**2 < 1e-300:
        report.status = "condition-overflow"
        return report
    report.condition_term = norm_phi**2 / s_l_phi**2
    lower = k1 * ratio
    upper = k2 * ratio * report.condition_term
    report.verdict = bool(lower <= report.m_norm + slack and report.m_norm <= upper + slack)
    report.extras = {"lower": lower, "upper": upper}
    return report
