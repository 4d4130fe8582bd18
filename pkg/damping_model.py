"""
Damping Model for the Kelvin-Voigt Beam Laboratory
Defines the degenerate damping coefficient b(x), the beam configuration and
the parameter admissibility checks
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from lab_errors import ConfigError

logger = logging.getLogger(__name__)

ALPHA_MIN = 0.0
ALPHA_MAX = 5.0
MAX_QUAD_TOL = 1e-6
MIN_ELEMENTS = 4


class DampingForm(str, Enum):
    """How a(x) is given on (0, 1)"""

    PURE_POWER = "pure_power"
    USER_TABLE = "user_table"


@dataclass(frozen=True)
class DampingProfile:
    """
    Damping coefficient b: zero on (-1, 0), a(x) on (0, 1).

    pure_power uses a(x) = kappa * x**alpha. user_table interpolates the
    samples (table_x, table_a) linearly; alpha then only names the
    degeneracy exponent the table is meant to represent.
    """

    alpha: float
    kappa: float = 1.0
    form: DampingForm = DampingForm.PURE_POWER
    table_x: Tuple[float, ...] = field(default_factory=tuple)
    table_a: Tuple[float, ...] = field(default_factory=tuple)

    @classmethod
    def from_table(cls, path: Union[str, Path], alpha: float, kappa: float = 1.0) -> "DampingProfile":
        """Load a user_table profile from a two-column CSV with headers x,a"""
        try:
            table = pd.read_csv(path)
        except FileNotFoundError as e:
            raise ConfigError(f"damping table not found: {path}") from e
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError, OSError) as e:
            raise ConfigError(f"damping table {path} could not be read: {e}") from e

        missing = {"x", "a"} - set(table.columns)
        if missing:
            raise ConfigError(f"damping table {path} lacks columns: {', '.join(sorted(missing))}")

        try:
            table = table[["x", "a"]].astype(float).sort_values("x")
        except (TypeError, ValueError) as e:
            raise ConfigError(f"damping table {path} has non-numeric entries: {e}") from e
        logger.info(f"Loaded damping table with {len(table)} samples from {path}")
        return cls(
            alpha=alpha,
            kappa=kappa,
            form=DampingForm.USER_TABLE,
            table_x=tuple(float(v) for v in table["x"]),
            table_a=tuple(float(v) for v in table["a"]),
        )

    def violations(self) -> List[str]:
        """Invariant violations of this profile (empty when valid)"""
        problems = []

        if not (ALPHA_MIN < self.alpha < ALPHA_MAX):
            problems.append(
                f"alpha must lie in open interval (0,5), got {self.alpha} "
                "(standing assumption: there exist alpha in (0,5) and kappa >= 0)"
            )
        if not math.isfinite(self.kappa):
            problems.append(f"kappa must be finite, got {self.kappa}")
        elif not self.kappa >= 0:
            problems.append(f"kappa must be >= 0, got {self.kappa}")

        if self.form == DampingForm.USER_TABLE:
            xs = np.asarray(self.table_x, dtype=float)
            ys = np.asarray(self.table_a, dtype=float)
            if len(xs) < 2 or len(xs) != len(ys):
                problems.append("user_table needs at least two (x, a) samples of equal length")
            elif not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
                problems.append("user_table samples must be finite numbers")
            else:
                if xs[0] != 0.0 or ys[0] != 0.0:
                    problems.append("user_table must start with the sample a(0) = 0")
                if np.any(np.diff(xs) <= 0):
                    problems.append("user_table abscissae must be strictly increasing")
                if np.any(ys < 0):
                    problems.append("user_table values must be nonnegative")
                if np.any(np.diff(ys) < 0):
                    problems.append("user_table values must be nondecreasing")
                if xs[-1] > 1.0 or xs[0] < 0.0:
                    problems.append("user_table abscissae must lie in [0, 1]")

        return problems


def eval_damping(profile: DampingProfile, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Evaluate b(x) on [-1, 1].

    Accepts a scalar or an array; returns 0 on [-1, 0] and a(x) on (0, 1].
    """
    values = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("eval_damping: x must be finite")
    if np.any(values < -1.0) or np.any(values > 1.0):
        raise ValueError("eval_damping: x must lie in [-1, 1]")

    clipped = np.maximum(values, 0.0)

    if profile.form == DampingForm.PURE_POWER:
        with np.errstate(divide="ignore", invalid="ignore"):
            body = profile.kappa * np.power(clipped, profile.alpha)
    else:
        body = np.interp(
            clipped,
            np.asarray(profile.table_x, dtype=float),
            np.asarray(profile.table_a, dtype=float),
        )
    result = np.where(values > 0.0, body, 0.0)

    if result.ndim == 0:
        return float(result)
    return result


def hardy_admissible(right_exponent: float, left_exponent: float) -> bool:
    """
    Side condition of the weighted Hardy inequality
        int x**left |y|**2 <= C int x**right |y'|**2,  y(1) = 0.

    Holds when left > -1 and, for right > 1, left >= right - 2. This is
    exactly the condition under which the bracket constant K is finite.
    """
    if not left_exponent > -1.0:
        return False
    if right_exponent > 1.0:
        return left_exponent >= right_exponent - 2.0 - 1e-12
    return True


@dataclass
class BeamConfig:
    """Problem configuration: damping profile, mesh and time stepping"""

    profile: DampingProfile
    n_elements: int = 64
    grading: float = 1.0
    quad_tol: float = 1e-10
    time_horizon: float = 10.0
    dt: float = 1e-2


def validate_config(cfg: BeamConfig) -> List[str]:
    """Check every BeamConfig invariant; an empty list means valid"""
    violations = list(cfg.profile.violations())

    if not isinstance(cfg.n_elements, (int, np.integer)) or cfg.n_elements < MIN_ELEMENTS:
        violations.append(f"n_elements must be an integer >= {MIN_ELEMENTS}, got {cfg.n_elements}")
    elif cfg.n_elements % 2 != 0:
        violations.append(f"n_elements must be even to split (-1,0) and (0,1), got {cfg.n_elements}")

    if not (math.isfinite(cfg.grading) and cfg.grading >= 1.0):
        violations.append(f"grading must be >= 1, got {cfg.grading}")

    if not (0.0 < cfg.quad_tol <= MAX_QUAD_TOL):
        violations.append(f"quad_tol must lie in (0, {MAX_QUAD_TOL:g}], got {cfg.quad_tol}")

    if not (math.isfinite(cfg.time_horizon) and cfg.time_horizon > 0):
        violations.append(f"time_horizon must be finite and > 0, got {cfg.time_horizon}")
    if not (math.isfinite(cfg.dt) and cfg.dt > 0):
        violations.append(f"dt must be finite and > 0, got {cfg.dt}")
    elif cfg.dt >= cfg.time_horizon:
        violations.append(f"dt ({cfg.dt}) must be smaller than time_horizon ({cfg.time_horizon})")

    if cfg.profile.kappa == 0 and not violations:
        logger.info("kappa = 0: undamped beam, no decay rate is claimed for this profile")

    return violations


def require_valid(cfg: BeamConfig) -> BeamConfig:
    """Raise ConfigError listing every violation, otherwise return cfg unchanged"""
    violations = validate_config(cfg)
    if violations:
        raise ConfigError("; ".join(violations))
    return cfg


def damping_ratio_to_power(profile: DampingProfile, x: float) -> Optional[float]:
    """b(x) / x**alpha for x in (0, 1]; tends to kappa as x -> 0+"""
    if not 0.0 < x <= 1.0:
        return None
    return eval_damping(profile, x) / x ** profile.alpha
