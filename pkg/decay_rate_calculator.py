"""
Decay Rate Calculator
Closed-form energy-decay exponent tau(alpha), the reduced linear program whose
infimum gives gamma = 2 / tau(alpha), a two-stage numerical optimizer for that
program and the Figure-1 (alpha, tau) table
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar

from damping_model import ALPHA_MAX, ALPHA_MIN, hardy_admissible
from lab_errors import RateProgramError

logger = logging.getLogger(__name__)

FIRST_BREAK = 5.0 / 3.0
SECOND_BREAK = 3.0
DEFAULT_ETA = 1e-6
STRICT_MARGIN = 1e-12
ACTIVE_TOL = 1e-7

CONSTRAINT_IDS = (
    "(1+beta')delta",
    "(1+beta0)delta",
    "(alpha+1)delta-2",
    "(1-alpha)delta",
    "(beta'-1)delta+2",
    "(alpha+3)delta-2",
    "(3-alpha)delta",
    "alpha*delta-2",
    "(beta-1)delta+2",
)


class Branch(str, Enum):
    CASE1 = "case1"
    CASE2A = "case2a"
    CASE2B = "case2b"
    CASE3 = "case3"
    CASE4 = "case4"


def _check_alpha(alpha: float):
    if not (ALPHA_MIN < alpha < ALPHA_MAX):
        raise ValueError(f"alpha must lie in open interval (0,5), got {alpha}")


def tau_closed(alpha: float) -> float:
    """Energy-decay exponent; branch points take the left formula"""
    _check_alpha(alpha)
    if alpha <= FIRST_BREAK:
        return (5.0 - alpha) / (3.0 - alpha)
    if alpha <= SECOND_BREAK:
        return (5.0 + alpha) / (1.0 + alpha)
    return 4.0 / (alpha - 1.0)


def gamma_closed(alpha: float) -> float:
    """Resolvent growth exponent, equal to 2 / tau_closed(alpha)"""
    _check_alpha(alpha)
    if alpha <= FIRST_BREAK:
        return 2.0 * (3.0 - alpha) / (5.0 - alpha)
    if alpha <= SECOND_BREAK:
        return 2.0 * (1.0 + alpha) / (5.0 + alpha)
    return (alpha - 1.0) / 2.0


def branch_of(alpha: float) -> Branch:
    _check_alpha(alpha)
    if alpha <= 1.0:
        return Branch.CASE1
    if alpha <= FIRST_BREAK:
        return Branch.CASE2A
    if alpha < 2.0:
        return Branch.CASE2B
    if alpha <= SECOND_BREAK:
        return Branch.CASE3
    return Branch.CASE4


def wave_rate(alpha: float) -> Optional[float]:
    """Decay exponent of the wave equation with the same degenerate damping, defined for alpha < 1"""
    if not 0.0 < alpha < 1.0:
        return None
    return (3.0 - alpha) / (2.0 * (1.0 - alpha))


class RatePoint(NamedTuple):
    gamma: float
    delta: float
    beta: float
    beta0: float


@dataclass(frozen=True)
class RateProgram:
    """
    Reduced program: minimize gamma subject to nine linear lower bounds in
    delta, the delta-regime and beta-admissibility. beta' is identified with
    beta. The max-expressions p and p0 do not appear separately; their
    nonpositivity is already folded into the constraint list.
    """

    alpha: float
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not 0.0 < self.eta < 1e-2:
            raise ValueError(f"eta must lie in (0, 1e-2), got {self.eta}")

    @property
    def beta0_pin(self) -> float:
        if self.alpha < 1.0:
            return -1.0 + self.eta
        if self.alpha == 1.0:
            return 0.0
        return self.alpha - 2.0

    @property
    def beta_pin(self) -> float:
        if self.alpha <= SECOND_BREAK:
            return -1.0 + self.eta
        return self.alpha - 4.0

    def delta_intervals(self) -> List[Tuple[float, float, str, str]]:
        """Closures of the admissible delta-intervals, with names of their edges"""
        return delta_intervals(self.alpha)

    def gamma_of_delta(self, delta: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Smallest gamma meeting every linear constraint at the pinned betas"""
        values = constraint_values(self.alpha, delta, self.beta_pin, self.beta0_pin)
        return np.max(np.stack([np.asarray(v, dtype=float) for v in values.values()]), axis=0)


@dataclass
class RateResult:
    alpha: float
    gamma_star: float
    delta_star: float
    active_constraints: List[str]
    branch: Branch
    beta: float = float("nan")
    beta0: float = float("nan")
    eta: float = DEFAULT_ETA
    gamma_closed: float = float("nan")

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["branch"] = self.branch.value
        data["tau_star"] = 2.0 / self.gamma_star
        data["wave_rate"] = wave_rate(self.alpha)
        return data


def constraint_values(
    alpha: float, delta: Union[float, np.ndarray], beta: float, beta0: float, beta_prime: Optional[float] = None
) -> Dict[str, Union[float, np.ndarray]]:
    """Right-hand sides of gamma >= ... keyed by readable id"""
    bp = beta if beta_prime is None else beta_prime
    d = np.asarray(delta, dtype=float) if np.ndim(delta) else float(delta)
    return {
        "(1+beta')delta": (1.0 + bp) * d,
        "(1+beta0)delta": (1.0 + beta0) * d,
        "(alpha+1)delta-2": (alpha + 1.0) * d - 2.0,
        "(1-alpha)delta": (1.0 - alpha) * d,
        "(beta'-1)delta+2": (bp - 1.0) * d + 2.0,
        "(alpha+3)delta-2": (alpha + 3.0) * d - 2.0,
        "(3-alpha)delta": (3.0 - alpha) * d,
        "alpha*delta-2": alpha * d - 2.0,
        "(beta-1)delta+2": (beta - 1.0) * d + 2.0,
    }


def delta_intervals(alpha: float) -> List[Tuple[float, float, str, str]]:
    """
    Closures of the two delta-regimes:
    (alpha/(alpha+2), 1/alpha) when alpha < 2, and [max(1/2, 1/alpha), oo)
    truncated two units past its lower end.
    """
    _check_alpha(alpha)
    intervals = []
    if alpha < 2.0:
        intervals.append((alpha / (alpha + 2.0), 1.0 / alpha, "delta>alpha/(alpha+2)", "delta<1/alpha"))
    if 1.0 / alpha >= 0.5:
        lower, name = 1.0 / alpha, "delta>=1/alpha"
    else:
        lower, name = 0.5, "delta>1/2"
    intervals.append((lower, lower + 2.0, name, "delta<oo"))
    return intervals


def in_delta_regime(alpha: float, delta: float) -> bool:
    """Strict edges checked with a 1e-12 margin"""
    first = alpha < 2.0 and alpha / (alpha + 2.0) + STRICT_MARGIN < delta < 1.0 / alpha - STRICT_MARGIN
    second = delta > 0.5 + STRICT_MARGIN and delta >= 1.0 / alpha - STRICT_MARGIN
    return first or second


def feasible(prog: RateProgram, point: RatePoint) -> Tuple[bool, List[str]]:
    """Evaluate every constraint at point; returns (feasible, violated ids)"""
    gamma, delta, beta, beta0 = point
    alpha = prog.alpha
    violations = []

    if not in_delta_regime(alpha, delta):
        violations.append("delta-regime")

    if not (-1.0 + STRICT_MARGIN < beta < 1.0 - STRICT_MARGIN):
        violations.append("-1<beta<1")
    if not hardy_admissible(alpha - 2.0, beta):
        violations.append("beta-admissibility")
    if not (beta0 > -1.0 + STRICT_MARGIN and hardy_admissible(alpha, beta0)):
        violations.append("beta0-admissibility")

    for cid, bound in constraint_values(alpha, delta, beta, beta0).items():
        if gamma < bound - STRICT_MARGIN:
            violations.append(cid)

    return not violations, violations


def _minimize_on_interval(prog: RateProgram, lower: float, upper: float, resolution: float) -> Tuple[float, float]:
    # coarse scan, then bounded Brent refinement in the bracket around the best sample
    n = max(int(math.ceil((upper - lower) / resolution)) + 1, 3)
    deltas = np.linspace(lower, upper, n)
    gammas = prog.gamma_of_delta(deltas)
    best = int(np.argmin(gammas))

    a = deltas[max(best - 1, 0)]
    b = deltas[min(best + 1, n - 1)]
    refined = minimize_scalar(
        lambda x: float(prog.gamma_of_delta(x)), bounds=(a, b), method="bounded", options={"xatol": 1e-12}
    )
    delta = float(refined.x)

    # endpoints of the closure are candidates too
    candidates = [(float(prog.gamma_of_delta(x)), x) for x in (delta, lower, upper)]
    gamma, delta = min(candidates)
    return gamma, delta


def optimize_gamma(alpha: float, resolution: float = 1e-4, eta: float = DEFAULT_ETA) -> RateResult:
    """Infimum of gamma with beta parameters pinned to their extremal admissible values"""
    if not 0 < resolution <= 1e-3:
        raise ValueError(f"resolution must lie in (0, 1e-3], got {resolution}")
    prog = RateProgram(alpha, eta)

    best = None
    for lower, upper, lower_name, upper_name in prog.delta_intervals():
        if upper <= lower:
            continue
        gamma, delta = _minimize_on_interval(prog, lower, upper, resolution)
        if best is None or gamma < best[0]:
            best = (gamma, delta, lower, upper, lower_name, upper_name)

    if best is None or not (best[0] > 0 and math.isfinite(best[0])):
        raise RateProgramError(f"empty feasible region for alpha={alpha}")

    gamma, delta, lower, upper, lower_name, upper_name = best
    values = constraint_values(alpha, delta, prog.beta_pin, prog.beta0_pin)
    active = [cid for cid in CONSTRAINT_IDS if values[cid] >= gamma - ACTIVE_TOL]
    if abs(delta - lower) <= ACTIVE_TOL:
        active.append(lower_name)
    if abs(delta - upper) <= ACTIVE_TOL:
        active.append(upper_name)

    return RateResult(
        alpha=alpha,
        gamma_star=float(gamma),
        delta_star=float(delta),
        active_constraints=active,
        branch=branch_of(alpha),
        beta=prog.beta_pin,
        beta0=prog.beta0_pin,
        eta=eta,
        gamma_closed=gamma_closed(alpha),
    )


def eta_sensitivity(alpha: float, eta: float = DEFAULT_ETA, resolution: float = 1e-4) -> float:
    """|gamma*(eta) - gamma*(eta/10)|; expected below 10 * eta"""
    return abs(optimize_gamma(alpha, resolution, eta).gamma_star - optimize_gamma(alpha, resolution, eta / 10).gamma_star)


def optimize_many(alphas: Sequence[float], resolution: float = 1e-4, jobs: int = 1) -> List[RateResult]:
    """optimize_gamma over an alpha grid, ordered by alpha"""
    alphas = sorted(float(a) for a in alphas)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda a: optimize_gamma(a, resolution), alphas))
    else:
        results = [optimize_gamma(a, resolution) for a in alphas]

    worst = max(abs(r.gamma_star - r.gamma_closed) for r in results) if results else 0.0
    logger.info(f"Optimized {len(results)} alpha values; max |gamma* - gamma_closed| = {worst:.2e}")
    return results


def default_alpha_grid() -> np.ndarray:
    """99 interior points of a uniform grid on (0, 5) plus the peak 5/3"""
    grid = np.linspace(0.0, 5.0, 101)[1:-1]
    return np.sort(np.append(grid, FIRST_BREAK))


def figure1_frame(alpha_grid: Optional[Sequence[float]] = None) -> pd.DataFrame:
    alphas = default_alpha_grid() if alpha_grid is None else np.asarray(alpha_grid, dtype=float)
    for a in alphas:
        _check_alpha(a)
    return pd.DataFrame({"alpha": alphas, "tau": [tau_closed(a) for a in alphas]})


def figure1_metadata() -> Dict:
    """Branch boundaries and the one-sided tau values there"""
    return {
        "branch_boundaries": [FIRST_BREAK, SECOND_BREAK],
        "branch_convention": "left",
        "one_sided": {
            "5/3": {"left": (5.0 - FIRST_BREAK) / (3.0 - FIRST_BREAK), "right": (5.0 + FIRST_BREAK) / (1.0 + FIRST_BREAK)},
            "3": {"left": (5.0 + SECOND_BREAK) / (1.0 + SECOND_BREAK), "right": 4.0 / (SECOND_BREAK - 1.0)},
        },
        "peak": {"alpha": FIRST_BREAK, "tau": tau_closed(FIRST_BREAK)},
    }


def emit_figure1(alpha_grid: Optional[Sequence[float]] = None, path: Optional[Union[str, Path]] = None) -> pd.DataFrame:
    """(alpha, tau) table; written as CSV when path is given"""
    frame = figure1_frame(alpha_grid)
    if path is not None:
        frame.to_csv(Path(path), index=False, float_format="%.17g")
        logger.info(f"📊 Figure-1 table with {len(frame)} rows written to {path}")
    return frame
