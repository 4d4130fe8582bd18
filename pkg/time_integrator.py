"""
Implicit Midpoint Time Integration for the Kelvin-Voigt Beam
Advances U' = A_h U, tracks the energy against the dissipation law and fits
polynomial decay exponents to energy trajectories
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse.linalg as spla

from beam_fem import AssembledSystem, StateVector, dissipation_rate, energy, interpolate_state
from lab_errors import FitError, NumericalError, SimulationError

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 16
ENERGY_FLOOR = 1e-12


@dataclass
class Trajectory:
    """Energy history of one run; dissipation is v^T D v at each sample"""

    times: np.ndarray
    energies: np.ndarray
    dissipation: np.ndarray
    midpoint_dissipation: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dt: Optional[float] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.energies = np.asarray(self.energies, dtype=float)
        self.dissipation = np.asarray(self.dissipation, dtype=float)
        if not (len(self.times) == len(self.energies) == len(self.dissipation)):
            raise ValueError("times, energies and dissipation must have equal lengths")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def is_monotone(self, slack: float = 1e-10) -> bool:
        """E(t_{i+1}) <= E(t_i) * (1 + slack) for every consecutive pair"""
        return bool(np.all(self.energies[1:] <= self.energies[:-1] * (1.0 + slack)))

    def dissipation_identity_residuals(self) -> np.ndarray:
        """|E_{i+1} - E_i + dt * v_mid^T D v_mid| per step"""
        if self.dt is None or len(self.midpoint_dissipation) != len(self) - 1:
            raise ValueError("trajectory was not produced by simulate()")
        return np.abs(np.diff(self.energies) + self.dt * self.midpoint_dissipation)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "energy": self.energies, "dissipation": self.dissipation})


@dataclass
class DecayFit:
    """Least-squares fit E(t) ~ prefactor * (1 + t)**(-exponent)"""

    exponent: float
    prefactor: float
    window: Tuple[float, float]
    residual: float
    n_samples: int


class MidpointIntegrator:
    """
    Implicit midpoint rule for u' = v, M v' = -K u - D v.

    Eliminating u_{n+1} gives
        (M + dt/2 D + dt^2/4 K) v_{n+1} = (M - dt/2 D - dt^2/4 K) v_n - dt K u_n
        u_{n+1} = u_n + dt/2 (v_n + v_{n+1})
    and the system matrix is factored once.
    """

    def __init__(self, sys: AssembledSystem, dt: float):
        if not dt > 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        self.sys = sys
        self.dt = dt

        lhs = (sys.M + 0.5 * dt * sys.D + 0.25 * dt * dt * sys.K).tocsc()
        self.system_matrix = lhs.tocsr()
        self.rhs_matrix = (sys.M - 0.5 * dt * sys.D - 0.25 * dt * dt * sys.K).tocsr()
        self.stiffness = sys.K.tocsr()
        try:
            self.factor = spla.splu(lhs)
        except RuntimeError as e:
            # SPD M, PSD D and SPD K make this impossible for dt > 0
            raise NumericalError(f"midpoint matrix is singular for dt={dt}: {e}") from e

    def step(self, s: StateVector) -> StateVector:
        rhs = self.rhs_matrix @ s.v - self.dt * (self.stiffness @ s.u)
        v_next = self.factor.solve(rhs)
        # one step of iterative refinement
        v_next += self.factor.solve(rhs - self.system_matrix @ v_next)
        u_next = s.u + 0.5 * self.dt * (s.v + v_next)
        return StateVector(u_next, v_next)


def step(sys: AssembledSystem, s: StateVector, dt: float, integrator: Optional[MidpointIntegrator] = None) -> StateVector:
    """One implicit midpoint step; pass an integrator to reuse its factorization"""
    if integrator is None or integrator.sys is not sys or integrator.dt != dt:
        integrator = MidpointIntegrator(sys, dt)
    return integrator.step(s)


def default_initial_state(sys: AssembledSystem) -> StateVector:
    """u0 interpolating (1 - x^2)^2 (clamped compatible), v0 = 0"""
    u0 = interpolate_state(sys.mesh, lambda x: (1.0 - x ** 2) ** 2, lambda x: -4.0 * x * (1.0 - x ** 2))
    return StateVector(u0, np.zeros_like(u0))


def simulate(
    sys: AssembledSystem, u0: np.ndarray, v0: np.ndarray, T: float, dt: float
) -> Tuple[Trajectory, StateVector]:
    """Integrate to time T with ceil(T/dt) midpoint steps"""
    if not T > dt:
        raise ValueError(f"time horizon T={T} must exceed dt={dt}")

    n_steps = int(math.ceil(T / dt - 1e-9))
    integrator = MidpointIntegrator(sys, dt)
    state = StateVector(np.array(u0, dtype=float), np.array(v0, dtype=float))

    energies = np.empty(n_steps + 1)
    dissipation = np.empty(n_steps + 1)
    midpoint = np.empty(n_steps)
    energies[0] = energy(sys, state)
    dissipation[0] = dissipation_rate(sys, state)

    report_every = max(n_steps // 10, 1)
    for i in range(n_steps):
        nxt = integrator.step(state)
        if not (np.all(np.isfinite(nxt.u)) and np.all(np.isfinite(nxt.v))):
            raise SimulationError(f"non-finite state at step {i + 1} (t={(i + 1) * dt:.6g})", step_index=i + 1)

        midpoint[i] = dissipation_rate(sys, StateVector(nxt.u, 0.5 * (state.v + nxt.v)))
        state = nxt
        energies[i + 1] = energy(sys, state)
        dissipation[i + 1] = dissipation_rate(sys, state)

        if (i + 1) % report_every == 0:
            logger.debug(f"step {i + 1}/{n_steps}: E={energies[i + 1]:.6e}")

    times = dt * np.arange(n_steps + 1)
    trajectory = Trajectory(times, energies, dissipation, midpoint_dissipation=midpoint, dt=dt)

    if energies[0] > 0:
        logger.info(f"Simulated {n_steps} steps to t={times[-1]:.4g}: E(T)/E(0)={energies[-1] / energies[0]:.3e}")
    if not trajectory.is_monotone():
        logger.warning("⚠️ Energy increased beyond roundoff slack during the run")
    return trajectory, state


def fit_decay(traj: Trajectory, window: Tuple[float, float] = (0.1, 1.0)) -> DecayFit:
    """
    Fit log E against log(1 + t) over a window given as fractions of the
    final time. Samples below 1e-12 E(0) are dropped.
    """
    start_frac, end_frac = window
    if not 0 <= start_frac < end_frac <= 1:
        raise FitError(f"degenerate window fractions {window}")

    t_end_total = traj.times[-1]
    t_start, t_end = start_frac * t_end_total, end_frac * t_end_total
    inside = (traj.times >= t_start) & (traj.times <= t_end)
    if np.count_nonzero(inside) < MIN_FIT_SAMPLES:
        raise FitError(f"degenerate window [{t_start:.4g}, {t_end:.4g}]: fewer than {MIN_FIT_SAMPLES} samples")

    e0 = traj.energies[0]
    if not e0 > 0:
        raise FitError("initial energy must be positive")
    floor = max(ENERGY_FLOOR, 1e3 * np.finfo(float).eps) * e0
    usable = inside & (traj.energies > floor)
    if np.count_nonzero(usable) < MIN_FIT_SAMPLES:
        raise FitError(f"energy underflow: fewer than {MIN_FIT_SAMPLES} samples above {floor:.3e}")

    x = np.log1p(traj.times[usable])
    y = np.log(traj.energies[usable])
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))

    return DecayFit(
        exponent=float(-slope),
        prefactor=float(np.exp(intercept)),
        window=(float(t_start), float(t_end)),
        residual=residual,
        n_samples=int(np.count_nonzero(usable)),
    )


def richardson_ratio(sys: AssembledSystem, state: StateVector, T: float, dt: float) -> float:
    """(E_dt(T) - E_dt/2(T)) / (E_dt/2(T) - E_dt/4(T)); about 4 for a second-order scheme"""
    finals = []
    for step_size in (dt, dt / 2, dt / 4):
        traj, _ = simulate(sys, state.u, state.v, T, step_size)
        finals.append(traj.energies[-1])
    return (finals[0] - finals[1]) / (finals[1] - finals[2])


def write_trajectory_csv(traj: Trajectory, path: Union[str, Path]) -> Path:
    path = Path(path)
    traj.to_frame().to_csv(path, index=False, float_format="%.17g")
    return path

