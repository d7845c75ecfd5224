"""Dense-orbit function approximation at desk scale.

A unimodal self-map of [0,1] (increasing to 1 at an interior turning point,
then decreasing back to 0) is topologically transitive, so some points have
orbits dense in [0,1]. That turns approximation into point fitting: split
[0,1] into K bins, pick one target value per bin, and store only how many
times to compose the map from a fixed seed to land near each target. The
approximant's real parameters are the map coefficients and the seed - their
count and magnitudes never change; only the integer composition counts grow.

Numerics: chaotic iteration loses about one bit per step, so a plain float
orbit of the tent map collapses onto the dyadic grid and dies at zero within
~55 steps. Orbit scans therefore run in exact rational arithmetic whenever
the branches are linear with integer coefficients (the tent map), seeded at
non-dyadic rationals with a large odd denominator; the scanned orbit is then
the true orbit of that seed. For general polynomial branches iteration uses
compensated (error-free transformation) Horner evaluation at working
precision, and the computed pseudo-orbit is itself the object being fit, so
the resulting approximant is self-consistent by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

_ENDPOINT_TOL = 1e-12
_GRID = 10_000

# Odd denominator for rational seeds: 2 is a primitive root modulo 5**k, so
# doubling-type dynamics on the q-grid have period ~ 4*5**25 >> any scan.
_SEED_DENOM = 5 ** 26

_SEED_CONSTANTS = [
    ("1/pi", 1.0 / math.pi),
    ("1/e", 1.0 / math.e),
    ("sqrt2-1", math.sqrt(2.0) - 1.0),
    ("phi-1", (math.sqrt(5.0) - 1.0) / 2.0),
]


def transitive_seed_candidates() -> list[tuple[str, Fraction]]:
    """Non-dyadic rational surrogates of the irrational seed candidates."""
    out = []
    for name, c in _SEED_CONSTANTS:
        p = round(c * _SEED_DENOM)
        if p % 5 == 0:
            p += 1
        out.append((name, Fraction(p, _SEED_DENOM)))
    return out


# ---------------------------------------------------------------------------
# compensated polynomial evaluation (error-free transformations)

_SPLITTER = 134217729.0  # 2**27 + 1


def _two_sum(a: float, b: float) -> tuple[float, float]:
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _two_prod(a: float, b: float) -> tuple[float, float]:
    p = a * b
    ca = _SPLITTER * a
    ah = ca - (ca - a)
    al = a - ah
    cb = _SPLITTER * b
    bh = cb - (cb - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def compensated_polyval(coeffs: Sequence[float], x: float) -> float:
    """Horner evaluation with a running correction term (~twice working
    precision). ``coeffs`` ascending: c0 + c1 x + ..."""
    rev = list(coeffs)[::-1]
    s = rev[0]
    comp = 0.0
    for a in rev[1:]:
        p, pi = _two_prod(s, x)
        s, sigma = _two_sum(p, a)
        comp = comp * x + (pi + sigma)
    return s + comp


# ---------------------------------------------------------------------------
# the map


@dataclass
class UnimodalMap:
    """Piecewise-polynomial unimodal self-map of [0, 1].

    ``left_coeffs``/``right_coeffs`` are ascending polynomial coefficients
    for the branches on [0, eta] and [eta, 1]. Construction verifies the
    endpoint/peak conditions to 1e-12 and branch monotonicity on a
    10^4-point grid.
    """

    eta: float
    left_coeffs: tuple[float, ...]
    right_coeffs: tuple[float, ...]
    label: str = "unimodal"

    def __post_init__(self):
        self.left_coeffs = tuple(float(c) for c in self.left_coeffs)
        self.right_coeffs = tuple(float(c) for c in self.right_coeffs)
        if not 0.0 < self.eta < 1.0:
            raise ValueError("turning point must be interior to (0, 1)")
        checks = {
            "T_L(0) = 0": abs(compensated_polyval(self.left_coeffs, 0.0)),
            "T_R(1) = 0": abs(compensated_polyval(self.right_coeffs, 1.0)),
            "T_L(eta) = 1": abs(compensated_polyval(self.left_coeffs, self.eta) - 1.0),
            "T_R(eta) = 1": abs(compensated_polyval(self.right_coeffs, self.eta) - 1.0),
        }
        for name, err in checks.items():
            if err > _ENDPOINT_TOL:
                raise ValueError(f"unimodal condition {name} violated by {err:.3e}")
        tl = np.linspace(0.0, self.eta, _GRID)
        if np.any(np.diff(npoly.polyval(tl, self.left_coeffs)) < -1e-12):
            raise ValueError("left branch is not monotone increasing")
        tr = np.linspace(self.eta, 1.0, _GRID)
        if np.any(np.diff(npoly.polyval(tr, self.right_coeffs)) > 1e-12):
            raise ValueError("right branch is not monotone decreasing")

    def __call__(self, x: float) -> float:
        coeffs = self.left_coeffs if x <= self.eta else self.right_coeffs
        return min(1.0, max(0.0, compensated_polyval(coeffs, x)))

    def coefficient_count(self) -> int:
        """Stored real parameters of the map itself (branch coeffs + eta)."""
        return len(self.left_coeffs) + len(self.right_coeffs) + 1

    # -- orbit generation ----------------------------------------------------

    def _exact_linear(self):
        """(c0L, c1L, c0R, c1R, eta) as Fractions when both branches are
        linear with integer coefficients; rational iteration is then exact
        with a bounded denominator."""
        if len(self.left_coeffs) > 2 or len(self.right_coeffs) > 2:
            return None
        pad = lambda cs: (list(cs) + [0.0, 0.0])[:2]
        cs = pad(self.left_coeffs) + pad(self.right_coeffs)
        if any(c != int(c) for c in cs):
            return None
        c0l, c1l, c0r, c1r = (Fraction(int(c)) for c in cs)
        return c0l, c1l, c0r, c1r, Fraction(self.eta)

    def orbit_iter(self, x0: float | Fraction) -> Iterator[float]:
        """Yield T^0(x0), T^1(x0), ... (exact rationals where possible)."""
        lin = self._exact_linear()
        if lin is None:
            x = float(x0)
            while True:
                yield x
                x = self(x)
        elif lin == (0, 2, 2, -2, Fraction(1, 2)):
            x = Fraction(x0)
            p, q = x.numerator, x.denominator
            while True:
                yield p / q
                p *= 2
                if p > q:
                    p = 2 * q - p
        else:
            c0l, c1l, c0r, c1r, eta = lin
            x = Fraction(x0)
            one, zero = Fraction(1), Fraction(0)
            while True:
                yield float(x)
                x = (c0l + c1l * x) if x <= eta else (c0r + c1r * x)
                x = min(one, max(zero, x))


def tent_map() -> UnimodalMap:
    """The canonical tent map: slope 2 up to 1/2, slope -2 back to 0 at 1."""
    return UnimodalMap(eta=0.5, left_coeffs=(0.0, 2.0), right_coeffs=(2.0, -2.0), label="tent")


def iterate(umap: UnimodalMap, x0: float, n: int) -> float:
    """T^n(x0), each iterate clamped to [0, 1].

    Linear integer-coefficient maps iterate exactly in rational arithmetic
    (a float x0 is a dyadic rational, so its true tent orbit reaches 0 once
    doubling exhausts its bits); other maps use compensated float steps.
    """
    if not 0.0 <= x0 <= 1.0:
        raise ValueError("x0 must lie in [0, 1]")
    if n < 0:
        raise ValueError("n must be >= 0")
    it = umap.orbit_iter(x0)
    val = next(it)
    for _ in range(n):
        val = next(it)
    return val


def orbit_array(umap: UnimodalMap, x0: float | Fraction, n_steps: int) -> np.ndarray:
    """[T^0(x0), ..., T^{n_steps}(x0)] as floats."""
    it = umap.orbit_iter(x0)
    return np.array([next(it) for _ in range(n_steps + 1)])


# ---------------------------------------------------------------------------
# construction of unimodal maps from polynomials


def _real_roots(coeffs: np.ndarray) -> np.ndarray:
    r = npoly.polyroots(coeffs)
    return np.sort(np.real(r[np.abs(np.imag(r)) < 1e-9]))


def _newton_polish(coeffs: np.ndarray, x: float, iters: int = 4) -> float:
    d = npoly.polyder(coeffs)
    for _ in range(iters):
        dfx = npoly.polyval(x, d)
        if dfx == 0.0:
            break
        x = x - npoly.polyval(x, coeffs) / dfx
    return float(x)


def _compose_affine(p: np.ndarray, shift: float, scale: float) -> np.ndarray:
    """Ascending coefficients of p(shift + scale * t), via Horner."""
    q = np.array([p[-1]], dtype=np.float64)
    lin = np.array([shift, scale], dtype=np.float64)
    for c in p[-2::-1]:
        q = npoly.polymul(q, lin)
        q[0] += c
    return q


def unimodalize(poly_coeffs: Sequence[float]) -> UnimodalMap:
    """Bend a polynomial around one interior local maximum into a unimodal
    self-map of [0, 1].

    Locates a local maximum from the derivative's real roots (flipping sign
    if the polynomial only has a minimum), anchors both sides at a common
    level L (the nearest critical value, or peak - 1 where the polynomial
    just falls away), then maps domain [a, b] -> [0, 1] and range
    [L, peak] -> [0, 1]. Raises for polynomials with no interior extremum.
    """
    coeffs = np.asarray(poly_coeffs, dtype=np.float64)
    if coeffs.size < 2 or not np.any(coeffs[1:] != 0.0):
        raise ValueError("polynomial is constant; supply order >= 2 with an interior maximum")
    if coeffs.size == 2:
        raise ValueError("polynomial is monotone on R (no interior extremum); supply order >= 2")
    for flipped in (False, True):
        p = -coeffs if flipped else coeffs
        crit = _real_roots(npoly.polyder(p))
        if crit.size == 0:
            raise ValueError(
                "polynomial is monotone on R (no interior extremum); supply order >= 2"
            )
        d2 = npoly.polyder(p, 2)
        maxima = [float(x) for x in crit if npoly.polyval(x, d2) < 0.0]
        if not maxima:
            continue
        x_star = max(maxima, key=lambda x: npoly.polyval(x, p))
        peak = float(npoly.polyval(x_star, p))

        left_crit = [c for c in crit if c < x_star - 1e-12]
        right_crit = [c for c in crit if c > x_star + 1e-12]
        anchors = []
        if left_crit:
            anchors.append(float(npoly.polyval(max(left_crit), p)))
        if right_crit:
            anchors.append(float(npoly.polyval(min(right_crit), p)))
        level = max(anchors) if anchors else peak - 1.0

        shifted = p.copy()
        shifted[0] -= level
        roots = _real_roots(shifted)
        left_roots = roots[roots < x_star - 1e-14]
        right_roots = roots[roots > x_star + 1e-14]
        if left_roots.size == 0 or right_roots.size == 0:
            continue
        a = _newton_polish(shifted, float(left_roots.max()))
        b = _newton_polish(shifted, float(right_roots.min()))

        # compose with t -> a + (b-a) t, then pin the endpoints exactly:
        # subtract the residual constant and scale the peak to 1
        q = _compose_affine(p, a, b - a)
        q[0] -= float(npoly.polyval(0.0, q))
        eta = (x_star - a) / (b - a)
        q = q / float(npoly.polyval(eta, q))
        return UnimodalMap(
            eta=float(eta),
            left_coeffs=tuple(q),
            right_coeffs=tuple(q),
            label=f"poly-deg{coeffs.size - 1}",
        )
    raise ValueError("polynomial has no interior local maximum even after flipping")


# ---------------------------------------------------------------------------
# point fitting and function approximation


@dataclass
class OrbitFit:
    """Result of fitting targets with composition counts along one orbit."""

    xi: float
    seed_label: str
    targets: list[float]
    iteration_counts: list[int | None]
    achieved_errors: list[float]
    fitted_values: list[float]
    eps: float
    n_scanned: int

    @property
    def complete(self) -> bool:
        return all(m is not None for m in self.iteration_counts)

    @property
    def uncovered(self) -> list[int]:
        return [k for k, m in enumerate(self.iteration_counts) if m is None]


def fit_points(
    umap: UnimodalMap,
    targets: Sequence[float],
    eps: float,
    max_iters: int,
    seeds: Sequence[tuple[str, float | Fraction]] | None = None,
) -> OrbitFit:
    """First composition count within eps of each target, scanning one orbit.

    Candidate seeds are tried in order; the fit succeeds when a single seed
    covers every target within ``max_iters`` compositions. On budget
    exhaustion the best partial fit is returned with its uncovered targets
    listed (callers should relax eps or max_iters).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    targets = [float(t) for t in targets]
    if not all(math.isfinite(t) for t in targets):
        raise ValueError("targets must be finite")
    if seeds is None:
        seeds = transitive_seed_candidates()

    best: OrbitFit | None = None
    for label, seed in seeds:
        counts: list[int | None] = [None] * len(targets)
        errors = [math.inf] * len(targets)
        values = [math.nan] * len(targets)
        remaining = set(range(len(targets)))
        it = umap.orbit_iter(seed)
        n = 0
        for n in range(max_iters + 1):
            val = next(it)
            if not remaining:
                break
            for k in [k for k in remaining if abs(val - targets[k]) < eps]:
                counts[k] = n
                errors[k] = abs(val - targets[k])
                values[k] = val
                remaining.discard(k)
        fit = OrbitFit(
            xi=float(seed),
            seed_label=label,
            targets=targets,
            iteration_counts=counts,
            achieved_errors=errors,
            fitted_values=values,
            eps=eps,
            n_scanned=n,
        )
        if fit.complete:
            return fit
        if best is None or len(fit.uncovered) < len(best.uncovered):
            best = fit
    assert best is not None
    return best


class OrbitBudgetError(RuntimeError):
    """Point fitting ran out of iterations before covering every target."""


@dataclass
class OrbitApproximant:
    """Piecewise-constant approximant h(x) = T^{m(bin(x))}(xi).

    Stored real parameters: the map coefficients and the seed, independent
    of K and eps; only the integer composition counts grow with accuracy.
    """

    umap: UnimodalMap
    fit: OrbitFit
    k_intervals: int
    values: np.ndarray  # orbit value per bin

    def __call__(self, x: float | np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        bins = np.clip(np.floor(self.k_intervals * x).astype(int), 0, self.k_intervals - 1)
        return self.values[bins]

    def parameter_count(self) -> int:
        return self.umap.coefficient_count() + 1  # + the seed xi

    @property
    def m_counts(self) -> list[int]:
        return [int(m) for m in self.fit.iteration_counts]


def approximate_function(
    f: Callable[[np.ndarray], np.ndarray],
    k_intervals: int,
    eps: float,
    umap: UnimodalMap,
    max_iters: int = 10 ** 6,
) -> tuple[OrbitApproximant, dict]:
    """Approximate f: [0,1] -> [0,1] by bin-and-fit.

    Each bin J_k = [(k-1)/K, k/K) takes the target f evaluated at the bin
    midpoint (clipped to [0,1]); one orbit scan fits all K targets. Reports
    the sup-norm error against f on a 10K-point grid, which stays below
    f's modulus of continuity at the bin radius plus eps.
    """
    if k_intervals < 1:
        raise ValueError("k_intervals must be >= 1")
    mids = (np.arange(k_intervals) + 0.5) / k_intervals
    targets = np.clip(np.asarray(f(mids), dtype=np.float64), 0.0, 1.0)
    fit = fit_points(umap, targets.tolist(), eps, max_iters)
    if not fit.complete:
        raise OrbitBudgetError(
            f"{len(fit.uncovered)}/{k_intervals} targets uncovered after "
            f"{fit.n_scanned} iterations; relax eps or max_iters"
        )
    approx = OrbitApproximant(umap, fit, k_intervals, np.asarray(fit.fitted_values))

    grid = np.linspace(0.0, 1.0, 10 * k_intervals)
    sup_error = float(np.max(np.abs(np.asarray(f(grid), dtype=np.float64) - approx(grid))))
    report = {
        "K": k_intervals,
        "eps": eps,
        "xi": fit.xi,
        "seed_label": fit.seed_label,
        "m_counts": approx.m_counts,
        "max_fit_error": float(np.max(fit.achieved_errors)),
        "sup_error": sup_error,
        "param_count": approx.parameter_count(),
        "n_scanned": fit.n_scanned,
    }
    return approx, report
