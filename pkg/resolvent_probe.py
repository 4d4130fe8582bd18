"""
Resolvent Growth Probe
Estimates the energy-norm of (i lambda - A_h)^{-1} along the imaginary axis by
power iteration in the G-inner product and fits the growth exponent gamma
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse.linalg as spla

from beam_fem import AssembledSystem, StateVector, assemble, build_mesh, g_inner, g_norm
from damping_model import DampingProfile
from lab_errors import FitError, NumericalError, ResolventBreakdownError

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240501
MIN_SWEEP_POINTS = 8
MIN_FIT_SAMPLES = 6
TREND_RESIDUAL_LIMIT = 0.2
RATE_SLACK = 0.35


@dataclass
class ResolventSample:
    """One point of the sweep: lambda and the estimated G-norm of the resolvent"""

    lam: float
    norm: float
    iterations: int
    converged: bool
    residual: float = float("nan")


@dataclass
class GammaFit:
    """Slope of log ||R(i lambda)|| against log lambda"""

    gamma_num: float
    lambda_window: Tuple[float, float]
    residual: float
    n_samples: int
    intercept: float

    @property
    def trend_flagged(self) -> bool:
        """Regression residual above the limit: the window is dominated by discrete-spectrum structure"""
        return self.residual > TREND_RESIDUAL_LIMIT


class ShiftedSystem:
    """
    Reduced second-order solve for (i lam - A_h) U = F.

    With F = (f, g): (K - lam^2 M + i lam D) u = M g + i lam M f + D f and
    v = i lam u - f. The G-adjoint system matrix is the complex conjugate of
    the same matrix, so one LU factor serves both directions.
    """

    def __init__(self, sys: AssembledSystem, lam: float):
        self.sys = sys
        self.lam = float(lam)
        z = (sys.K - lam * lam * sys.M + 1j * lam * sys.D).tocsc().astype(complex)
        try:
            self.factor = spla.splu(z)
        except RuntimeError as e:
            raise ResolventBreakdownError(f"shifted matrix is singular at lambda={lam}: {e}", lam=lam) from e

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        u = self.factor.solve(rhs)
        if not np.all(np.isfinite(u)):
            raise ResolventBreakdownError(f"non-finite resolvent solve at lambda={self.lam}", lam=self.lam)
        return u

    def apply(self, f: StateVector) -> StateVector:
        sys, lam = self.sys, self.lam
        rhs = sys.M @ f.v + 1j * lam * (sys.M @ f.u) + sys.D @ f.u
        u = self._solve(rhs.astype(complex))
        return StateVector(u, 1j * lam * u - f.u)

    def apply_adjoint(self, f: StateVector) -> StateVector:
        sys, lam = self.sys, self.lam
        rhs = -(sys.M @ f.v) - 1j * lam * (sys.M @ f.u) + sys.D @ f.u
        u = np.conj(self._solve(np.conj(rhs.astype(complex))))
        return StateVector(u, f.u + 1j * lam * u)


def resolvent_apply(sys: AssembledSystem, lam: float, f: StateVector) -> StateVector:
    """U with (i lam - A_h) U = f"""
    return ShiftedSystem(sys, lam).apply(f)


def apply_shifted_operator(sys: AssembledSystem, lam: float, U: StateVector) -> StateVector:
    """(i lam - A_h) U with A_h (u, v) = (v, -M^{-1}(K u + D v))"""
    mass_factor = spla.splu(sys.M.tocsc())
    force = np.asarray(sys.K @ U.u + sys.D @ U.v, dtype=complex)
    # real factor, so real and imaginary parts are solved separately
    accel = mass_factor.solve(force.real) + 1j * mass_factor.solve(force.imag)
    return StateVector(1j * lam * U.u - U.v, 1j * lam * U.v + accel)


def start_vector(sys: AssembledSystem, seed: int) -> StateVector:
    """Deterministic pseudo-random start vector normalized in the G-norm"""
    rng = np.random.default_rng(seed)
    x = StateVector(rng.standard_normal(sys.n_dof) + 0j, rng.standard_normal(sys.n_dof) + 0j)
    return x.scaled(1.0 / g_norm(sys, x))


def resolvent_norm(
    sys: AssembledSystem,
    lam: float,
    tol: float = 1e-6,
    max_iter: int = 500,
    seed: int = DEFAULT_SEED,
) -> ResolventSample:
    """
    Largest G-singular value of R = (i lam - A_h)^{-1} by power iteration on
    R* R, each iteration costing one forward and one adjoint solve.
    """
    if not 0 < tol <= 1e-4:
        raise ValueError(f"tol must lie in (0, 1e-4], got {tol}")

    try:
        shifted = ShiftedSystem(sys, lam)
        x = start_vector(sys, seed)
        sigma_sq = 0.0
        residual = float("inf")

        for iteration in range(1, max_iter + 1):
            y = shifted.apply(x)
            z = shifted.apply_adjoint(y)
            sigma_sq = g_inner(sys, y, y).real

            if not (np.isfinite(sigma_sq) and sigma_sq > 0):
                return ResolventSample(lam=lam, norm=float("inf"), iterations=iteration, converged=False)

            gap = StateVector(z.u - sigma_sq * x.u, z.v - sigma_sq * x.v)
            residual = g_norm(sys, gap) / sigma_sq
            if residual <= tol:
                return ResolventSample(
                    lam=lam, norm=math.sqrt(sigma_sq), iterations=iteration, converged=True, residual=residual
                )

            x = z.scaled(1.0 / g_norm(sys, z))

    except ResolventBreakdownError as e:
        logger.warning(f"⚠️ Resolvent breakdown: {e}")
        return ResolventSample(lam=lam, norm=float("inf"), iterations=0, converged=False)

    logger.debug(f"power iteration at lambda={lam:.4g} stopped after {max_iter} iterations (residual {residual:.2e})")
    return ResolventSample(lam=lam, norm=math.sqrt(sigma_sq), iterations=max_iter, converged=False, residual=residual)


def dense_resolvent_norm(sys: AssembledSystem, lam: float) -> float:
    """Dense cross-check: sigma_max of L^T R L^{-T} with G = L L^T"""
    n = sys.n_dof
    M = sys.M.toarray()
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = -scipy.linalg.solve(M, sys.K.toarray(), assume_a="pos")
    A[n:, n:] = -scipy.linalg.solve(M, sys.D.toarray(), assume_a="pos")

    R = scipy.linalg.inv(1j * lam * np.eye(2 * n) - A)
    L = scipy.linalg.cholesky(sys.G.toarray(), lower=True)
    weighted = L.T @ R @ scipy.linalg.inv(L.T)
    return float(scipy.linalg.svdvals(weighted)[0])


def lambda_grid(
    lambda_min: float, lambda_max: float, points: int, n_elements: Optional[int] = None
) -> Tuple[np.ndarray, Dict]:
    """Log-spaced grid over the window; with n_elements the window goes through default_lambda_window"""
    lower, upper = lambda_min, lambda_max
    if n_elements is not None:
        lower, upper = default_lambda_window(n_elements, lambda_min, lambda_max)
        if (n_elements / 10.0) ** 2 <= lambda_min:
            logger.warning(
                f"⚠️ Mesh with {n_elements} elements resolves only lambda <= {(n_elements / 10.0) ** 2:.3g}; "
                f"keeping the requested window"
            )

    grid = np.logspace(np.log10(lower), np.log10(upper), points)
    meta = {
        "requested_window": [lambda_min, lambda_max],
        "window": [float(grid[0]), float(grid[-1])],
        "points": points,
        "clipped_to_mesh": upper < lambda_max,
        "resolvable_lambda": None if n_elements is None else (n_elements / 10.0) ** 2,
    }
    return grid, meta


def sweep(
    sys: AssembledSystem,
    lambda_grid_values: Sequence[float],
    tol: float = 1e-6,
    max_iter: int = 500,
    seed: int = DEFAULT_SEED,
    jobs: int = 1,
) -> List[ResolventSample]:
    """One independent sample per lambda; output ordered by lambda ascending"""
    grid = [float(v) for v in lambda_grid_values]
    if len(grid) < MIN_SWEEP_POINTS:
        raise ValueError(f"sweep needs at least {MIN_SWEEP_POINTS} lambda values, got {len(grid)}")
    if any(b <= a for a, b in zip(grid[:-1], grid[1:])):
        raise ValueError("lambda grid must be sorted ascending")

    def sample(lam):
        try:
            return resolvent_norm(sys, lam, tol=tol, max_iter=max_iter, seed=seed)
        except NumericalError as e:
            logger.error(f"❌ Resolvent sample at lambda={lam:.4g} failed: {e}")
            return ResolventSample(lam=lam, norm=float("inf"), iterations=0, converged=False)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(sample, grid))
    else:
        samples = [sample(lam) for lam in grid]

    samples.sort(key=lambda s: s.lam)
    converged = sum(s.converged for s in samples)
    logger.info(f"Resolvent sweep: {converged}/{len(samples)} samples converged")
    return samples


def fit_gamma(samples: Sequence[ResolventSample]) -> GammaFit:
    """Least-squares slope of log ||R|| against log lambda over converged samples"""
    usable = [s for s in samples if s.converged and np.isfinite(s.norm) and s.norm > 0 and s.lam > 0]
    if len(usable) < MIN_FIT_SAMPLES:
        raise FitError(f"fit_gamma needs at least {MIN_FIT_SAMPLES} converged samples, got {len(usable)}")

    x = np.log([s.lam for s in usable])
    y = np.log([s.norm for s in usable])
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    if residual > TREND_RESIDUAL_LIMIT:
        logger.warning(
            f"⚠️ log-log residual {residual:.3f} exceeds {TREND_RESIDUAL_LIMIT}: "
            f"window [{usable[0].lam:.4g}, {usable[-1].lam:.4g}] shows no clean power law"
        )

    return GammaFit(
        gamma_num=float(slope),
        lambda_window=(float(usable[0].lam), float(usable[-1].lam)),
        residual=residual,
        n_samples=len(usable),
        intercept=float(intercept),
    )


def mesh_consistency(
    profile: DampingProfile,
    lam: float,
    n_list: Sequence[int],
    grading: float = 1.0,
    quad_tol: float = 1e-10,
    tol: float = 1e-6,
    seed: int = DEFAULT_SEED,
) -> Dict:
    """Resolvent norms at a fixed lambda over successive refinements"""
    norms = []
    for n in n_list:
        sys = assemble(build_mesh(n, grading), profile, quad_tol)
        norms.append(resolvent_norm(sys, lam, tol=tol, seed=seed).norm)

    differences = [abs(b - a) for a, b in zip(norms[:-1], norms[1:])]
    return {
        "lambda": lam,
        "n_elements": list(n_list),
        "norms": norms,
        "differences": differences,
        "decreasing": all(b <= a for a, b in zip(differences[:-1], differences[1:])),
    }


def samples_frame(samples: Sequence[ResolventSample]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "lambda": [s.lam for s in samples],
            "norm": [s.norm for s in samples],
            "iterations": [s.iterations for s in samples],
            "converged": [s.converged for s in samples],
        }
    )


def write_sweep_csv(samples: Sequence[ResolventSample], path: Union[str, Path]) -> Path:
    path = Path(path)
    samples_frame(samples).to_csv(path, index=False, float_format="%.17g")
    return path


def gamma_summary(fit: GammaFit, sys: AssembledSystem, grid_meta: Dict, seed: int) -> Dict:
    """JSON-ready summary of a sweep fit with mesh metadata"""
    return {
        **asdict(fit),
        "lambda_window": list(fit.lambda_window),
        "trend_flagged": fit.trend_flagged,
        "trend_residual_limit": TREND_RESIDUAL_LIMIT,
        "grid": grid_meta,
        "mesh": {
            "n_elements": sys.mesh.n_elements,
            "grading": sys.mesh.grading,
            "n_dof": sys.n_dof,
            "h_min": float(sys.mesh.lengths.min()),
            "h_max": float(sys.mesh.lengths.max()),
        },
        "profile": {"alpha": sys.profile.alpha, "kappa": sys.profile.kappa, "form": sys.profile.form.value},
        "seed": seed,
    }


def compare_with_rate(fit: GammaFit, gamma_target: float, slack: float = RATE_SLACK) -> Dict:
    """
    Set a fitted exponent against the closed-form one. The closed form bounds
    the growth from above, so a fit far below it is consistent but not sharp.
    """
    deviation = fit.gamma_num - gamma_target
    return {
        "gamma_closed": gamma_target,
        "deviation": deviation,
        "matches_closed_form": abs(deviation) <= slack and not fit.trend_flagged,
        "below_closed_form_bound": fit.gamma_num <= gamma_target + slack,
        "trend_flagged": fit.trend_flagged,
        "slack": slack,
    }


def default_lambda_window(n_elements: int, lambda_min: float = 1e2, lambda_max: float = 10 ** 3.5) -> Tuple[float, float]:
    """Configured window with the upper end clipped to lambda <= (N/10)^2 when that still leaves a window"""
    resolvable = (n_elements / 10.0) ** 2
    if lambda_min < resolvable < lambda_max:
        return lambda_min, resolvable
    return lambda_min, lambda_max
