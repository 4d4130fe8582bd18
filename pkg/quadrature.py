"""
Adaptive Gauss-Legendre quadrature
Globally adaptive bisection with a 20/10-point Gauss error estimate, used for
the damping moments of the beam elements and for the weighted Hardy ratios
"""

import heapq
import itertools
import logging
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from lab_errors import QuadratureError

logger = logging.getLogger(__name__)

HIGH_ORDER = 20
LOW_ORDER = 10

_HIGH_NODES, _HIGH_WEIGHTS = leggauss(HIGH_ORDER)
_LOW_NODES, _LOW_WEIGHTS = leggauss(LOW_ORDER)

# fraction of the interval kept next to a singular endpoint when splitting
SINGULAR_SPLIT = 0.2


def gauss_rule(f: Callable[[np.ndarray], np.ndarray], a: float, b: float, order: int = HIGH_ORDER) -> np.ndarray:
    """Fixed Gauss-Legendre rule on [a, b]; f is evaluated on the whole node vector"""
    if order == HIGH_ORDER:
        nodes, weights = _HIGH_NODES, _HIGH_WEIGHTS
    elif order == LOW_ORDER:
        nodes, weights = _LOW_NODES, _LOW_WEIGHTS
    else:
        nodes, weights = leggauss(order)

    half = 0.5 * (b - a)
    x = 0.5 * (a + b) + half * nodes
    values = np.asarray(f(x), dtype=float)
    return half * (values @ weights)


def _estimate(f, a: float, b: float):
    high = gauss_rule(f, a, b, HIGH_ORDER)
    low = gauss_rule(f, a, b, LOW_ORDER)
    error = float(np.max(np.abs(high - low)))
    return high, error


def integrate_adaptive(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    tol: float = 1e-10,
    rel_tol: float = 0.0,
    breakpoints: Optional[Sequence[float]] = None,
    singular_left: bool = False,
    max_intervals: int = 2000,
    label: str = "integrand",
) -> np.ndarray:
    """
    Integrate f over [a, b] to max(tol, rel_tol * |I|).

    f may be vector valued: it receives an array of abscissae and returns an
    array whose last axis runs over them. The interval with the largest error
    estimate is bisected until the summed estimate meets the tolerance. With
    singular_left the interval touching a is split close to a, which handles
    integrable power singularities x**beta with beta > -1.
    """
    if not (np.isfinite(a) and np.isfinite(b)) or b <= a:
        raise QuadratureError(f"{label}: degenerate interval [{a}, {b}]")

    cuts = [a]
    if breakpoints is not None:
        cuts.extend(sorted(float(p) for p in breakpoints if a < p < b))
    cuts.append(b)

    counter = itertools.count()
    heap = []
    for left, right in zip(cuts[:-1], cuts[1:]):
        value, error = _estimate(f, left, right)
        heapq.heappush(heap, (-error, next(counter), left, right, value))

    while True:
        total = sum(item[4] for item in heap)
        error_total = sum(-item[0] for item in heap)
        target = max(tol, rel_tol * float(np.max(np.abs(total))))
        if error_total <= target:
            return total

        if len(heap) >= max_intervals:
            raise QuadratureError(
                f"{label}: no convergence after {len(heap)} intervals "
                f"(error estimate {error_total:.3e}, target {target:.3e})"
            )

        _, _, left, right, _ = heapq.heappop(heap)
        if singular_left and left == a:
            mid = left + SINGULAR_SPLIT * (right - left)
        else:
            mid = 0.5 * (left + right)

        if not (left < mid < right):
            raise QuadratureError(f"{label}: interval [{left}, {right}] cannot be split further")

        for lo, hi in ((left, mid), (mid, right)):
            value, error = _estimate(f, lo, hi)
            heapq.heappush(heap, (-error, next(counter), lo, hi, value))
