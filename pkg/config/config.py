"""
Configuration management for the Kelvin-Voigt Beam Laboratory
"""

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from dotenv import load_dotenv

from damping_model import BeamConfig, DampingForm, DampingProfile
from lab_errors import ConfigError

logger = logging.getLogger(__name__)

load_dotenv()

BEAM_KEYS = (
    "alpha",
    "kappa",
    "form",
    "table_path",
    "n_elements",
    "grading",
    "quad_tol",
    "time_horizon",
    "dt",
)
PROBE_KEYS = (
    "lambda_min",
    "lambda_max",
    "lambda_points",
    "power_tol",
    "power_max_iter",
    "seed",
    "fit_start",
    "fit_end",
)
LAB_KEYS = ("hardy_samples", "interp_samples")
KNOWN_KEYS = BEAM_KEYS + PROBE_KEYS + LAB_KEYS

INT_KEYS = {"n_elements", "lambda_points", "power_max_iter", "seed", "hardy_samples", "interp_samples"}
STR_KEYS = {"form", "table_path"}


@dataclass
class RunSettings:
    """Where a run writes and how much parallelism it may use"""

    output_dir: Optional[str] = None
    log_dir: Optional[str] = None
    log_level: Optional[str] = None
    jobs: Optional[int] = None
    run_db: Optional[str] = None

    def __post_init__(self):
        # Fill from environment variables
        self.output_dir = self.output_dir or os.getenv("BEAM_LAB_OUTPUT_DIR", "outputs")
        self.log_dir = self.log_dir or os.getenv("BEAM_LAB_LOG_DIR", "logs")
        self.log_level = self.log_level or os.getenv("BEAM_LAB_LOG_LEVEL", "INFO")
        if self.jobs is None:
            self.jobs = int(os.getenv("BEAM_LAB_JOBS", "1"))
        self.run_db = self.run_db or os.getenv(
            "BEAM_LAB_RUN_DB", str(Path(self.output_dir) / "beam_lab_runs.db")
        )


@dataclass
class ProbeSettings:
    """Resolvent sweep and decay-fit settings"""

    lambda_min: float = 1e2
    lambda_max: float = 10 ** 3.5
    lambda_points: int = 25
    power_tol: float = 1e-6
    power_max_iter: int = 500
    seed: int = 20240501
    fit_start: float = 0.1
    fit_end: float = 1.0


@dataclass
class LabSettings:
    """Inequality laboratory sample counts"""

    hardy_samples: int = 200
    interp_samples: int = 100


@dataclass
class Config:
    """Main configuration class"""

    alpha: float = 1.0
    kappa: float = 1.0
    form: str = DampingForm.PURE_POWER.value
    table_path: str = ""
    n_elements: int = 64
    grading: float = 1.0
    quad_tol: float = 1e-10
    time_horizon: float = 10.0
    dt: float = 1e-2
    probe: ProbeSettings = field(default_factory=ProbeSettings)
    lab: LabSettings = field(default_factory=LabSettings)

    def set_value(self, key: str, raw: str):
        """Apply one key=value pair; unknown keys are errors"""
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown configuration key: {key}")

        raw = str(raw).strip()
        try:
            if key in STR_KEYS:
                value = raw
            elif key in INT_KEYS:
                value = int(raw)
            else:
                value = float(raw)
        except ValueError as e:
            raise ConfigError(f"bad value for {key}: {raw!r}") from e

        if key in BEAM_KEYS:
            setattr(self, key, value)
        elif key in PROBE_KEYS:
            setattr(self.probe, key, value)
        else:
            setattr(self.lab, key, value)

    def load_from_file(self, config_file: str) -> "Config":
        """Load a flat key-value text file (key = value, # comments)"""
        try:
            with open(config_file, "r") as f:
                lines = f.readlines()
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {config_file}") from e

        for number, line in enumerate(lines, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{config_file}:{number}: expected key = value, got {text!r}")
            key, raw = text.split("=", 1)
            self.set_value(key, raw)

        logger.info(f"Configuration loaded from {config_file}")
        return self

    def apply_overrides(self, overrides: Iterable[str]) -> "Config":
        """Apply repeatable --set key=value overrides"""
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override must look like key=value, got {item!r}")
            key, raw = item.split("=", 1)
            self.set_value(key, raw)
        return self

    def damping_profile(self) -> DampingProfile:
        try:
            form = DampingForm(self.form)
        except ValueError as e:
            raise ConfigError(f"form must be one of {[f.value for f in DampingForm]}, got {self.form!r}") from e

        if form == DampingForm.USER_TABLE:
            if not self.table_path:
                raise ConfigError("form = user_table requires table_path")
            return DampingProfile.from_table(self.table_path, alpha=self.alpha, kappa=self.kappa)
        return DampingProfile(alpha=self.alpha, kappa=self.kappa)

    def beam_config(self) -> BeamConfig:
        return BeamConfig(
            profile=self.damping_profile(),
            n_elements=self.n_elements,
            grading=self.grading,
            quad_tol=self.quad_tol,
            time_horizon=self.time_horizon,
            dt=self.dt,
        )

    def validate_probe(self) -> List[str]:
        problems = []
        p = self.probe
        if not (0 < p.lambda_min < p.lambda_max and math.isfinite(p.lambda_max)):
            problems.append(f"need 0 < lambda_min < lambda_max, got [{p.lambda_min}, {p.lambda_max}]")
        if p.lambda_points < 8:
            problems.append(f"lambda_points must be >= 8, got {p.lambda_points}")
        if not 0 < p.power_tol <= 1e-4:
            problems.append(f"power_tol must lie in (0, 1e-4], got {p.power_tol}")
        if not 0 <= p.fit_start < p.fit_end <= 1:
            problems.append(f"need 0 <= fit_start < fit_end <= 1, got ({p.fit_start}, {p.fit_end})")
        return problems

    def to_dict(self) -> Dict:
        data = asdict(self)
        return data

    def save_to_file(self, config_file: str):
        """Write the flat key-value form of the current configuration"""
        flat = {key: getattr(self, key) for key in BEAM_KEYS}
        flat.update({key: getattr(self.probe, key) for key in PROBE_KEYS})
        flat.update({key: getattr(self.lab, key) for key in LAB_KEYS})
        with open(config_file, "w") as f:
            for key, value in flat.items():
                f.write(f"{key} = {value}\n")
        logger.info(f"Configuration saved to {config_file}")


def load_config(config_file: Optional[str] = None, overrides: Iterable[str] = ()) -> Config:
    """Defaults, then the config file, then --set overrides"""
    config = Config()
    if config_file:
        config.load_from_file(config_file)
    config.apply_overrides(overrides)
    logger.debug(f"Resolved configuration: {json.dumps(config.to_dict(), default=str)}")
    return config
