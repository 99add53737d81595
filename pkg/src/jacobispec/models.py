"""Operator families (D_n, V_n): explicit lists, periodic blocks, torus rotations.

A model is anything with ``dim`` and ``coefficient_at(n) -> (D_n, V_n)`` for
integer n (negative indices where the family supports a left half-line).
All coefficient blocks are real symmetric; D_n must be invertible; these
hypotheses are checked by :func:`validate_model`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import matblock
from .errors import InvalidInputError, ModelValidationError

SYMMETRY_TOL = 1e-10
MIN_SINGULAR = 1e-12


def _sym_block(a, name="block"):
    arr = np.array(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    arr = matblock.as_block(arr)
    if not matblock.is_symmetric(arr, tol=1e-12):
        raise InvalidInputError(f"{name} must be real symmetric")
    return arr


# ---------------------------------------------------------------------------
# Sampling maps for dynamically defined models. A small closed library so
# model definitions stay serializable in run configs.


class SamplingMap:
    """Maps a torus point (d-vector in [0,1)) to a real symmetric block."""

    dim: int

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantMap(SamplingMap):
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _sym_block(self.matrix, "constant map"))

    @property
    def dim(self):
        return self.matrix.shape[0]

    def __call__(self, theta):
        return self.matrix

    def to_config(self):
        return {"kind": "constant", "matrix": self.matrix.tolist()}


@dataclass(frozen=True)
class CosinePolynomialMap(SamplingMap):
    """f(theta) = C0 + sum_t A_t cos(2 pi (k_t . theta + phase_t)).

    Every amplitude block is symmetric, so the values are symmetric for
    free. Frequency vectors k_t are integer.
    """

    constant: np.ndarray
    terms: tuple = ()  # of (freq tuple, amplitude block, phase)

    def __post_init__(self):
        object.__setattr__(self, "constant", _sym_block(self.constant, "cosine constant"))
        cooked = []
        for freq, amp, phase in self.terms:
            freq = tuple(int(f) for f in np.atleast_1d(freq))
            cooked.append((freq, _sym_block(amp, "cosine amplitude"), float(phase)))
        object.__setattr__(self, "terms", tuple(cooked))

    @property
    def dim(self):
        return self.constant.shape[0]

    def __call__(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        out = self.constant.copy()
        for freq, amp, phase in self.terms:
            arg = float(np.dot(freq, theta)) + phase
            out = out + amp * np.cos(2.0 * np.pi * arg)
        return out

    def to_config(self):
        return {
            "kind": "cosine",
            "constant": self.constant.tolist(),
            "terms": [
                {"freq": list(freq), "amplitude": amp.tolist(), "phase": phase}
                for freq, amp, phase in self.terms
            ],
        }


@dataclass(frozen=True)
class PiecewiseArcMap(SamplingMap):
    """Piecewise-constant over arcs of the 1-d torus.

    ``breaks`` are arc endpoints 0 < b_1 < ... < b_m = 1; arc i is
    [b_{i-1}, b_i) with b_0 = 0.
    """

    breaks: tuple
    matrices: tuple

    def __post_init__(self):
        breaks = tuple(float(b) for b in self.breaks)
        if not breaks or abs(breaks[-1] - 1.0) > 1e-15 or any(
            b2 <= b1 for b1, b2 in zip((0.0,) + breaks, breaks)
        ):
            raise InvalidInputError("arc breaks must increase to 1.0")
        mats = tuple(_sym_block(m, "arc block") for m in self.matrices)
        if len(mats) != len(breaks):
            raise InvalidInputError("need one block per arc")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "matrices", mats)

    @property
    def dim(self):
        return self.matrices[0].shape[0]

    def __call__(self, theta):
        t = float(np.atleast_1d(theta)[0]) % 1.0
        idx = int(np.searchsorted(self.breaks, t, side="right"))
        return self.matrices[min(idx, len(self.matrices) - 1)]

    def to_config(self):
        return {
            "kind": "arcs",
            "breaks": list(self.breaks),
            "matrices": [m.tolist() for m in self.matrices],
        }


def sampling_map_from_config(cfg: dict) -> SamplingMap:
    kind = cfg.get("kind")
    if kind == "constant":
        return ConstantMap(np.array(cfg["matrix"]))
    if kind == "cosine":
        terms = tuple(
            (tuple(t["freq"]), np.array(t["amplitude"]), float(t.get("phase", 0.0)))
            for t in cfg.get("terms", [])
        )
        return CosinePolynomialMap(np.array(cfg["constant"]), terms)
    if kind == "arcs":
        return PiecewiseArcMap(tuple(cfg["breaks"]), tuple(np.array(m) for m in cfg["matrices"]))
    raise InvalidInputError(f"unknown sampling map kind {kind!r}")


# ---------------------------------------------------------------------------
# Operator families.


@dataclass(frozen=True)
class ExplicitSpec:
    """A finite list of (D_n, V_n) pairs plus an extension rule.

    ``extension`` is "wrap" (periodic continuation of the list) or
    "constant" (repeat the last pair). Negative indices need ``left``,
    a list of pairs for n = -1, -2, ... continued by the same rule.
    """

    pairs: tuple
    extension: str = "wrap"
    left: tuple = ()

    def __post_init__(self):
        if self.extension not in ("wrap", "constant"):
            raise InvalidInputError("extension must be 'wrap' or 'constant'")
        cooked = tuple((_sym_block(d, "D"), _sym_block(v, "V")) for d, v in self.pairs)
        if not cooked:
            raise InvalidInputError("explicit model needs at least one (D, V) pair")
        left = tuple((_sym_block(d, "D"), _sym_block(v, "V")) for d, v in self.left)
        object.__setattr__(self, "pairs", cooked)
        object.__setattr__(self, "left", left)

    @property
    def dim(self):
        return self.pairs[0][0].shape[0]

    def coefficient_at(self, n: int):
        n = int(n)
        if n >= 0:
            seq = self.pairs
            idx = n
        else:
            if not self.left:
                raise InvalidInputError(
                    "explicit model has no declared left extension for n < 0"
                )
            seq = self.left
            idx = -n - 1
        if idx < len(seq):
            return seq[idx]
        if self.extension == "constant":
            return seq[-1]
        return seq[idx % len(seq)]

    @property
    def supports_negative(self):
        return bool(self.left)

    def to_config(self):
        out = {
            "kind": "explicit",
            "extension": self.extension,
            "pairs": [[d.tolist(), v.tolist()] for d, v in self.pairs],
        }
        if self.left:
            out["left"] = [[d.tolist(), v.tolist()] for d, v in self.left]
        return out


@dataclass(frozen=True)
class PeriodicSpec:
    """Period-p blocks, defined on the whole line via n mod p."""

    ds: tuple
    vs: tuple

    def __post_init__(self):
        ds = tuple(_sym_block(d, "D") for d in self.ds)
        vs = tuple(_sym_block(v, "V") for v in self.vs)
        if not ds or len(ds) != len(vs):
            raise InvalidInputError("periodic model needs equal-length D and V lists")
        object.__setattr__(self, "ds", ds)
        object.__setattr__(self, "vs", vs)

    @property
    def period(self):
        return len(self.ds)

    @property
    def dim(self):
        return self.ds[0].shape[0]

    def coefficient_at(self, n: int):
        idx = int(n) % self.period
        return self.ds[idx], self.vs[idx]

    supports_negative = True

    def to_config(self):
        return {
            "kind": "periodic",
            "ds": [d.tolist() for d in self.ds],
            "vs": [v.tolist() for v in self.vs],
        }


def _dyadic(x: float) -> Fraction:
    # Every float is an exact dyadic rational; Fraction preserves it.
    return Fraction(float(x))


@dataclass(frozen=True)
class DynamicalSpec:
    """Coefficients sampled along a torus-rotation orbit.

    D_n = f_D(T^n omega), V_n = f_V(T^n omega) with T(omega) = omega + alpha
    mod 1 componentwise. The orbit is evaluated exactly: each float alpha_i
    is a dyadic rational p/q, and n*alpha_i mod 1 = (n*p mod q)/q in integer
    arithmetic, so phases never drift.
    """

    alpha: tuple
    omega: tuple
    f_d: SamplingMap
    f_v: SamplingMap

    def __post_init__(self):
        alpha = tuple(float(a) % 1.0 for a in np.atleast_1d(self.alpha))
        omega = tuple(float(w) % 1.0 for w in np.atleast_1d(self.omega))
        if len(alpha) != len(omega):
            raise InvalidInputError("alpha and omega must have the same torus dimension")
        if self.f_d.dim != self.f_v.dim:
            raise InvalidInputError("f_D and f_V must produce blocks of equal size")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "_alpha_frac", tuple(_dyadic(a) for a in alpha))

    @property
    def torus_dim(self):
        return len(self.alpha)

    @property
    def dim(self):
        return self.f_v.dim

    def phase_at(self, n: int) -> np.ndarray:
        """T^n omega, with the n*alpha reduction done in exact arithmetic."""
        n = int(n)
        out = np.empty(self.torus_dim)
        for i, (w, af) in enumerate(zip(self.omega, self._alpha_frac)):
            p, q = af.numerator, af.denominator
            step = ((n * p) % q) / q
            out[i] = (w + step) % 1.0
        return out

    def coefficient_at(self, n: int):
        theta = self.phase_at(n)
        return self.f_d(theta), self.f_v(theta)

    def shifted(self, m: int) -> "DynamicalSpec":
        """The same family seen from phase T^m omega."""
        return DynamicalSpec(self.alpha, tuple(self.phase_at(m)), self.f_d, self.f_v)

    def with_phase(self, omega) -> "DynamicalSpec":
        return DynamicalSpec(self.alpha, omega, self.f_d, self.f_v)

    supports_negative = True

    def rationality_report(self, depth: int = 20) -> dict:
        """Continued-fraction probe of the rotation numbers.

        A float can never certify irrationality; this records whether the
        expansion terminates within ``depth`` partial quotients (it does for
        visibly rational alpha such as 1/3) so reports can flag suspect
        orbits. Heuristic only.
        """
        out = {}
        for i, a in enumerate(self.alpha):
            x = a
            quotients = []
            for _ in range(depth):
                ai = int(np.floor(x))
                quotients.append(ai)
                frac = x - ai
                if frac < 1e-15:
                    break
                x = 1.0 / frac
            out[i] = {
                "terminates_within_depth": len(quotients) < depth,
                "partial_quotients": quotients,
            }
        return out

    def to_config(self):
        return {
            "kind": "dynamical",
            "alpha": list(self.alpha),
            "omega": list(self.omega),
            "f_d": self.f_d.to_config(),
            "f_v": self.f_v.to_config(),
        }


@dataclass(frozen=True)
class ReflectedSpec:
    """Index reflection mapping the left half-line onto the right.

    With u~_m := u_{-m}, the eigenvalue equation for n <= -1 becomes the
    right half-line equation with D~_n = D_{-n-1} and V~_n = V_{-n}.
    """

    base: object

    @property
    def dim(self):
        return self.base.dim

    def coefficient_at(self, n: int):
        n = int(n)
        d = self.base.coefficient_at(-n - 1)[0]
        v = self.base.coefficient_at(-n)[1]
        return d, v

    @property
    def supports_negative(self):
        return True

    def to_config(self):
        return {"kind": "reflected", "base": self.base.to_config()}


def reflect(spec):
    """Left half-line companion of ``spec`` (see ReflectedSpec)."""
    if not getattr(spec, "supports_negative", False):
        raise InvalidInputError(
            "model does not define coefficients for n < 0; declare a left extension"
        )
    return ReflectedSpec(spec)


def free_model(l: int = 1):
    """D = I, V = 0: the constant-coefficient reference family."""
    return PeriodicSpec((np.eye(l),), (np.zeros((l, l)),))


def spec_from_config(cfg: dict):
    kind = cfg.get("kind")
    if kind == "free":
        return free_model(int(cfg.get("dim", 1)))
    if kind == "explicit":
        pairs = tuple((np.array(d), np.array(v)) for d, v in cfg["pairs"])
        left = tuple((np.array(d), np.array(v)) for d, v in cfg.get("left", []))
        return ExplicitSpec(pairs, cfg.get("extension", "wrap"), left)
    if kind == "periodic":
        return PeriodicSpec(
            tuple(np.array(d) for d in cfg["ds"]), tuple(np.array(v) for v in cfg["vs"])
        )
    if kind == "dynamical":
        return DynamicalSpec(
            tuple(cfg["alpha"]),
            tuple(cfg["omega"]),
            sampling_map_from_config(cfg["f_d"]),
            sampling_map_from_config(cfg["f_v"]),
        )
    if kind == "reflected":
        return ReflectedSpec(spec_from_config(cfg["base"]))
    raise InvalidInputError(f"unknown model kind {kind!r}")


def coefficient_at(spec, n: int):
    """(D_n, V_n) for any supported model object."""
    return spec.coefficient_at(n)


# ---------------------------------------------------------------------------
# Hypothesis validation and the limit-point sufficient condition.


@dataclass
class ValidationReport:
    window: int
    min_s_l: float
    max_s_1: float
    max_symmetry_defect: float
    offenders: list = field(default_factory=list)
    passed: bool = True
    two_sided: bool = False

    def summary(self) -> str:
        lo = -self.window if self.two_sided else 0
        lines = [
            f"window n in [{lo}, {self.window}]",
            f"min s_l[D] = {self.min_s_l:.17g}",
            f"max s_1[D] = {self.max_s_1:.17g}",
            f"max symmetry defect = {self.max_symmetry_defect:.17g}",
            f"passed = {self.passed}",
        ]
        if self.offenders:
            lines.append(f"offending n = {self.offenders}")
        return "\n".join(lines)


def validate_model(spec, window: int = 100, *, min_singular: float = MIN_SINGULAR,
                   symmetry_tol: float = SYMMETRY_TOL) -> ValidationReport:
    """Check the standing hypotheses over |n| <= window.

    Verifies every D_n, V_n is symmetric, every D_n has smallest singular
    value above ``min_singular``, and records the extreme singular values.
    Raises ModelValidationError (with the report attached) on violation.
    """
    if window < 1:
        raise InvalidInputError("validation window must be >= 1")
    two_sided = getattr(spec, "supports_negative", False)
    indices = range(-window, window + 1) if two_sided else range(0, window + 1)
    min_sl = np.inf
    max_s1 = 0.0
    max_defect = 0.0
    offenders = []
    for n in indices:
        d, v = spec.coefficient_at(n)
        s = np.linalg.svd(d, compute_uv=False)
        defect = max(
            matblock.frobenius_norm(d - d.T), matblock.frobenius_norm(v - v.T)
        )
        bad = s[-1] < min_singular or defect > symmetry_tol
        if bad:
            offenders.append(int(n))
        min_sl = min(min_sl, float(s[-1]))
        max_s1 = max(max_s1, float(s[0]))
        max_defect = max(max_defect, float(defect))
    report = ValidationReport(
        window=window,
        min_s_l=float(min_sl),
        max_s_1=float(max_s1),
        max_symmetry_defect=float(max_defect),
        offenders=offenders,
        passed=not offenders,
        two_sided=two_sided,
    )
    if offenders:
        raise ModelValidationError(
            f"model violates standing hypotheses at n = {offenders[:8]}"
            + ("..." if len(offenders) > 8 else ""),
            report=report,
            offenders=offenders,
        )
    return report


def limit_point_partial_sum(spec, n_terms: int, *, tail_fraction: float = 0.05):
    """Partial sum of 1/||D_k|| over k = 0..n_terms and a divergence verdict.

    The sufficient condition for the limit point case needs the full series
    to diverge, which a finite window cannot prove. Decision rule: the
    verdict is "sufficient-condition-met" when the second half of the window
    still contributes at least ``tail_fraction`` of the total (bounded
    coefficients give a linearly growing sum, so the tail share stays near
    1/2; summable tails collapse to ~0). Otherwise "inconclusive".
    """
    if n_terms < 1:
        raise InvalidInputError("n_terms must be >= 1")
    terms = np.empty(n_terms + 1)
    for k in range(n_terms + 1):
        d, _ = spec.coefficient_at(k)
        terms[k] = 1.0 / float(np.linalg.svd(d, compute_uv=False)[0])
    total = float(np.sum(terms))
    half = float(np.sum(terms[: (n_terms + 1) // 2]))
    tail_share = (total - half) / total if total > 0 else 0.0
    verdict = "sufficient-condition-met" if tail_share >= tail_fraction else "inconclusive"
    return total, verdict
