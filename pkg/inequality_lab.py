"""
Inequality Laboratory
Numerical checks of the weighted Hardy inequality
    int_0^1 x**beta |y|^2 <= C int_0^1 x**alpha |y'|^2,   y(1) = 0
against its bracket constant K, and of the size-aware interpolation inequality
    ||f'||^2 <= K ((d-c)^2 ||f''||^2 + (d-c)^-2 ||f||^2)   on (c, d)
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from damping_model import hardy_admissible
from lab_errors import InequalityViolation
from quadrature import integrate_adaptive

logger = logging.getLogger(__name__)

QUAD_TOL = 1e-10
DENOMINATOR_FLOOR = 1e-14
BRACKET_SLACK = 1e-9
DILATION_TOL = 1e-9

# Upper bracket for the squared quotient: K <= C <= 4K.
# The norm form ||x^(beta/2) y|| <= c ||x^(alpha/2) y'|| has sqrt(K) <= c <= 2 sqrt(K).
HARDY_BRACKET = 4.0

ArrayFn = Callable[[np.ndarray], np.ndarray]


class FamilyKind(str, Enum):
    POLYNOMIAL = "polynomial"
    SPLINE = "spline"
    RANDOM_FOURIER = "random_fourier"


@dataclass(frozen=True)
class TestFunction:
    """A test function on [0, 1] with its first two derivatives"""

    __test__ = False

    name: str
    value: ArrayFn
    d1: ArrayFn
    d2: ArrayFn
    breakpoints: Tuple[float, ...] = ()

    def scaled(self, s: float) -> "TestFunction":
        return TestFunction(
            name=f"{s:g}*{self.name}",
            value=lambda x: s * self.value(x),
            d1=lambda x: s * self.d1(x),
            d2=lambda x: s * self.d2(x),
            breakpoints=self.breakpoints,
        )


@dataclass
class TestFunctionFamily:
    """Seeded family of functions with y(1) = 0"""

    __test__ = False

    kind: FamilyKind
    count: int
    seed: int
    members: List[TestFunction] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class HardyCase:
    """Right exponent alpha, left exponent beta on (0, L); K is the bracket constant"""

    alpha: float
    beta: float
    L: float = 1.0
    K: float = float("nan")

    @property
    def admissible(self) -> bool:
        return hardy_admissible(self.alpha, self.beta)


def _times_one_minus_x(p: Callable, dp: Callable, d2p: Callable) -> Tuple[ArrayFn, ArrayFn, ArrayFn]:
    # y = (1 - x) p(x) vanishes at x = 1 exactly
    return (
        lambda x: (1.0 - x) * p(x),
        lambda x: -p(x) + (1.0 - x) * dp(x),
        lambda x: -2.0 * dp(x) + (1.0 - x) * d2p(x),
    )


def _polynomial_member(rng: np.random.Generator, index: int) -> TestFunction:
    degree = int(rng.integers(0, 3))
    p = Polynomial(rng.standard_normal(degree + 1))
    value, d1, d2 = _times_one_minus_x(p, p.deriv(1), p.deriv(2))
    return TestFunction(f"polynomial[{index}]", value, d1, d2)


def _spline_member(rng: np.random.Generator, index: int, knots: int = 6) -> TestFunction:
    xs = np.linspace(0.0, 1.0, knots)
    s = CubicSpline(xs, rng.standard_normal(knots))
    value, d1, d2 = _times_one_minus_x(s, s.derivative(1), s.derivative(2))
    return TestFunction(f"spline[{index}]", value, d1, d2, breakpoints=tuple(xs[1:-1]))


def _fourier_member(rng: np.random.Generator, index: int, modes: int = 5) -> TestFunction:
    k = np.arange(1, modes + 1)
    coeffs = rng.standard_normal(modes) / k
    w = 0.5 * math.pi * k

    def value(x):
        return coeffs @ np.sin(np.outer(w, 1.0 - np.asarray(x, dtype=float)))

    def d1(x):
        return -(coeffs * w) @ np.cos(np.outer(w, 1.0 - np.asarray(x, dtype=float)))

    def d2(x):
        return -(coeffs * w ** 2) @ np.sin(np.outer(w, 1.0 - np.asarray(x, dtype=float)))

    return TestFunction(f"random_fourier[{index}]", value, d1, d2)


_BUILDERS = {
    FamilyKind.POLYNOMIAL: _polynomial_member,
    FamilyKind.SPLINE: _spline_member,
    FamilyKind.RANDOM_FOURIER: _fourier_member,
}


def make_family(kind: str, count: int, seed: int) -> TestFunctionFamily:
    """Seeded family on [0, 1]; every member is (1 - x) times a smooth factor or a sine series in 1 - x"""
    kind = FamilyKind(kind)
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    members = [_BUILDERS[kind](rng, i) for i in range(count)]
    return TestFunctionFamily(kind=kind, count=count, seed=seed, members=members)


def linear_witness() -> TestFunction:
    """f(x) = x; interpolation quotient 3 on every interval"""
    return TestFunction("x", lambda x: np.asarray(x, dtype=float), lambda x: np.ones_like(x), lambda x: np.zeros_like(x))


def constant_witness(c: float = 1.0) -> TestFunction:
    return TestFunction(
        f"const({c:g})", lambda x: np.full_like(x, c, dtype=float), lambda x: np.zeros_like(x), lambda x: np.zeros_like(x)
    )


def hardy_side_condition(alpha: float, beta: float) -> Optional[str]:
    """Name of the failing side condition, or None when K is finite"""
    if not beta > -1.0:
        return f"beta > -1 fails (beta={beta})"
    if alpha > 1.0 and beta < alpha - 2.0 - 1e-12:
        return f"beta >= alpha - 2 fails for alpha > 1 (alpha={alpha}, beta={beta})"
    return None


def _bracket(alpha: float, beta: float, L: float, s: np.ndarray) -> np.ndarray:
    # (int_0^s t^beta dt) * (int_s^L t^-alpha dt), expm1 keeps alpha near 1 accurate
    log_ratio = np.log(L / s)
    if alpha == 1.0:
        tail = log_ratio
    else:
        tail = s ** (1.0 - alpha) * np.expm1((1.0 - alpha) * log_ratio) / (1.0 - alpha)
    return s ** (beta + 1.0) / (beta + 1.0) * tail


def hardy_constant(case: HardyCase) -> float:
    """
    K = sup over s in (0, L) of the bracket product, by a geometric scan
    followed by bounded scalar refinement. Infinite when a side condition
    fails.
    """
    alpha, beta, L = case.alpha, case.beta, case.L
    if not L > 0:
        raise ValueError(f"L must be > 0, got {L}")

    failing = hardy_side_condition(alpha, beta)
    if failing:
        logger.info(f"Hardy bracket diverges: {failing}")
        return float("inf")

    s = L * np.geomspace(1e-12, 1.0 - 1e-12, 4000)
    values = _bracket(alpha, beta, L, s)
    best = int(np.argmax(values))
    lo, hi = s[max(best - 1, 0)], s[min(best + 1, len(s) - 1)]

    refined = minimize_scalar(
        lambda t: -float(_bracket(alpha, beta, L, np.array([t]))[0]),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-14 * L},
    )
    K = max(float(values[best]), -float(refined.fun))

    # on beta = alpha - 2 the supremum is the limit at s -> 0
    if alpha > 1.0 and abs(beta - (alpha - 2.0)) <= 1e-12:
        K = max(K, 1.0 / (alpha - 1.0) ** 2)
    return K


def make_case(alpha: float, beta: float, L: float = 1.0) -> HardyCase:
    case = HardyCase(alpha=alpha, beta=beta, L=L)
    return replace(case, K=hardy_constant(case))


def hardy_ratio(fn: TestFunction, alpha: float, beta: float) -> Tuple[float, float, float]:
    """(numerator, denominator, ratio) of the Hardy quotient; ratio is nan for a skipped sample"""

    def integrand(x):
        return np.stack([x ** beta * fn.value(x) ** 2, x ** alpha * fn.d1(x) ** 2])

    num, den = integrate_adaptive(
        integrand,
        0.0,
        1.0,
        tol=QUAD_TOL,
        rel_tol=1e-12,
        breakpoints=fn.breakpoints,
        singular_left=beta < 0 or alpha < 0,
        label=f"hardy quotient of {fn.name}",
    )
    if den < DENOMINATOR_FLOOR:
        return float(num), float(den), float("nan")
    return float(num), float(den), float(num / den)


def check_hardy(
    family: TestFunctionFamily, alpha: float, beta: float, jobs: int = 1, bracket: float = HARDY_BRACKET
) -> Dict:
    """
    Largest Hardy quotient over the family, checked against bracket * K.
    Raises InequalityViolation when the bound is exceeded.
    """
    case = make_case(alpha, beta)
    if not math.isfinite(case.K):
        raise ValueError(f"check_hardy needs an admissible pair: {hardy_side_condition(alpha, beta)}")

    members = family.members
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            ratios = list(pool.map(lambda fn: hardy_ratio(fn, alpha, beta)[2], members))
    else:
        ratios = [hardy_ratio(fn, alpha, beta)[2] for fn in members]

    ratios = np.asarray(ratios, dtype=float)
    kept = ~np.isnan(ratios)
    if not np.any(kept):
        max_ratio, arg_max = 0.0, None
    else:
        best = int(np.nanargmax(ratios))
        max_ratio, arg_max = float(ratios[best]), members[best].name

    report = {
        "alpha": alpha,
        "beta": beta,
        "L": case.L,
        "K": case.K,
        "two_K": 2.0 * case.K,
        "four_K": 4.0 * case.K,
        "bound": bracket * case.K,
        "max_ratio": max_ratio,
        "arg_max": arg_max,
        "within_two_K": bool(max_ratio <= 2.0 * case.K + BRACKET_SLACK),
        "kind": family.kind.value,
        "seed": family.seed,
        "sample_count": int(np.count_nonzero(kept)),
        "skipped": int(np.count_nonzero(~kept)),
    }

    if max_ratio > bracket * case.K + BRACKET_SLACK:
        raise InequalityViolation(
            f"Hardy quotient {max_ratio:.6g} of {arg_max} exceeds {bracket:g}K = {bracket * case.K:.6g} "
            f"at alpha={alpha}, beta={beta}"
        )
    logger.info(f"✅ Hardy ({alpha}, {beta}): max ratio {max_ratio:.4g} <= {bracket:g}K = {bracket * case.K:.4g}")
    return report


def concentration_ratios(
    alpha: float,
    beta: float,
    eps_list: Sequence[float] = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8),
    power: float = 0.75,
) -> List[Tuple[float, float]]:
    """
    Hardy quotients of y_eps(x) = (1 - x)(x + eps)**(-power). When
    beta < alpha - 2 they grow without bound as eps -> 0.
    """
    results = []
    for eps in eps_list:
        def value(x, eps=eps):
            return (1.0 - x) * (x + eps) ** (-power)

        def d1(x, eps=eps):
            return -((x + eps) ** (-power)) - power * (1.0 - x) * (x + eps) ** (-power - 1.0)

        fn = TestFunction(
            name=f"concentrating(eps={eps:g})",
            value=value,
            d1=d1,
            d2=lambda x: np.zeros_like(x),
            breakpoints=tuple(b for b in eps * np.geomspace(1.0, 1e12, 49) if b < 1.0),
        )
        num, den, ratio = hardy_ratio(fn, alpha, beta)
        results.append((float(eps), ratio))
    return results


def interpolation_ratio(fn: TestFunction, c: float = 0.0, d: float = 1.0) -> float:
    """
    ||f'||^2 / ((d-c)^2 ||f''||^2 + (d-c)^-2 ||f||^2) for x -> f((x - c)/(d - c)) on (c, d)
    """
    if not (math.isfinite(c) and math.isfinite(d) and c < d):
        raise ValueError(f"degenerate interval ({c}, {d})")
    width = d - c

    def integrand(x):
        t = (x - c) / width
        return np.stack([fn.value(t) ** 2, (fn.d1(t) / width) ** 2, (fn.d2(t) / width ** 2) ** 2])

    f_sq, d1_sq, d2_sq = integrate_adaptive(
        integrand,
        c,
        d,
        tol=1e-300,
        rel_tol=1e-13,
        breakpoints=[c + width * b for b in fn.breakpoints],
        label=f"interpolation quotient of {fn.name}",
    )
    denominator = width ** 2 * d2_sq + f_sq / width ** 2
    if denominator <= 0:
        return 0.0
    return float(d1_sq / denominator)


def check_interpolation(
    family: TestFunctionFamily, c: float, d: float, extra: Sequence[TestFunction] = ()
) -> Dict:
    """
    Empirical constant of the interpolation inequality on (c, d). Each ratio
    is also computed on (0, 1); the quotient is dilation invariant, so the two
    must agree to 1e-9.
    """
    if not c < d:
        raise ValueError(f"degenerate interval ({c}, {d})")

    members = list(family.members) + list(extra)
    on_interval = np.array([interpolation_ratio(fn, c, d) for fn in members])
    on_unit = np.array([interpolation_ratio(fn, 0.0, 1.0) for fn in members])

    if not np.all(np.isfinite(on_interval)):
        raise InequalityViolation("interpolation quotient is not finite")
    deviation = float(np.max(np.abs(on_interval - on_unit)))
    if deviation > DILATION_TOL:
        raise InequalityViolation(f"dilation invariance broken on ({c}, {d}): max deviation {deviation:.3e}")

    best = int(np.argmax(on_interval))
    return {
        "interval": [c, d],
        "empirical_K": float(on_interval[best]),
        "arg_max": members[best].name,
        "ratios": on_interval.tolist(),
        "dilation_max_deviation": deviation,
        "kind": family.kind.value,
        "seed": family.seed,
        "sample_count": len(members),
    }


def hardy_report(cases: Sequence[Tuple[float, float]], kind: str, count: int, seed: int, jobs: int = 1) -> List[Dict]:
    """check_hardy over several (alpha, beta) pairs with one seeded family"""
    family = make_family(kind, count, seed)
    return [check_hardy(family, alpha, beta, jobs=jobs) for alpha, beta in cases]


def interpolation_report(kind: str, count: int, seed: int, intervals: Sequence[Tuple[float, float]] = ((0.0, 1.0), (0.0, 10.0))) -> List[Dict]:
    family = make_family(kind, count, seed)
    return [check_interpolation(family, c, d, extra=[linear_witness()]) for c, d in intervals]
