"""
Environment check for the Kelvin-Voigt Beam Laboratory
Prepares the output/log directories and the .env template, then verifies the
numerical stack, the run registry and a short end-to-end computation
"""

import argparse
import importlib
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence

from config.config import RunSettings

# import name -> requirements.txt name
REQUIRED_PACKAGES = {"numpy": "numpy", "scipy": "scipy", "pandas": "pandas", "dotenv": "python-dotenv"}

ENV_TEMPLATE = """# Kelvin-Voigt Beam Laboratory Environment Variables

# Where runs write artifacts and logs
BEAM_LAB_OUTPUT_DIR={output_dir}
BEAM_LAB_LOG_DIR={log_dir}
BEAM_LAB_LOG_LEVEL={log_level}

# Worker threads for resolvent sweeps and alpha grids
BEAM_LAB_JOBS={jobs}

# sqlite run log
BEAM_LAB_RUN_DB={run_db}

# Set to 1 to run the long tests (N=256/512 meshes)
BEAM_LAB_RUN_SLOW=0
"""


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def prepare_directories(settings: RunSettings) -> CheckResult:
    for directory in (settings.output_dir, settings.log_dir, str(Path(settings.run_db).parent)):
        Path(directory).mkdir(parents=True, exist_ok=True)
    return CheckResult("directories", True, f"{settings.output_dir}, {settings.log_dir}")


def write_env_template(settings: RunSettings, env_path: Path) -> CheckResult:
    """Write .env from the current settings unless one is already present"""
    if env_path.exists():
        return CheckResult("env file", True, f"{env_path} kept")
    env_path.write_text(
        ENV_TEMPLATE.format(
            output_dir=settings.output_dir,
            log_dir=settings.log_dir,
            log_level=settings.log_level,
            jobs=settings.jobs,
            run_db=settings.run_db,
        )
    )
    return CheckResult("env file", True, f"{env_path} written")


def missing_packages() -> List[str]:
    missing = []
    for module, requirement in REQUIRED_PACKAGES.items():
        try:
            importlib.import_module(module)
        except ImportError:
            missing.append(requirement)
    return missing


def check_packages() -> CheckResult:
    missing = missing_packages()
    if missing:
        return CheckResult("packages", False, f"missing {', '.join(missing)}; pip install -r requirements.txt")
    return CheckResult("packages", True, ", ".join(REQUIRED_PACKAGES.values()))


def check_registry(settings: RunSettings) -> CheckResult:
    from run_registry import RunRegistry

    stats = RunRegistry(settings.run_db).get_database_stats()
    return CheckResult("run registry", True, f"{settings.run_db} ({stats.get('runs_count', 0)} runs)")


def check_numerics() -> CheckResult:
    """Closed-form peak, an 8-element assembly and a few undamped midpoint steps"""
    from beam_fem import assemble, build_mesh, energy
    from damping_model import DampingProfile
    from decay_rate_calculator import tau_closed
    from time_integrator import default_initial_state, simulate

    if abs(tau_closed(5.0 / 3.0) - 2.5) > 1e-12:
        return CheckResult("numerics", False, f"tau(5/3) = {tau_closed(5.0 / 3.0)}, expected 2.5")

    system = assemble(build_mesh(8), DampingProfile(alpha=1.0, kappa=0.0))
    state = default_initial_state(system)
    trajectory, final = simulate(system, state.u, state.v, T=0.1, dt=1e-2)
    drift = abs(energy(system, final) - trajectory.energies[0]) / trajectory.energies[0]
    if drift > 1e-12:
        return CheckResult("numerics", False, f"undamped energy drift {drift:.2e}")
    return CheckResult("numerics", True, f"{system.n_dof} DOFs, drift {drift:.1e}")


def install_requirements(requirements: Path) -> CheckResult:
    completed = subprocess.run(
        [sys.executable, "-m", "pip", "install", "-r", str(requirements)], capture_output=True, text=True
    )
    if completed.returncode != 0:
        return CheckResult("install", False, completed.stderr.strip().splitlines()[-1] if completed.stderr else "pip failed")
    return CheckResult("install", True, str(requirements))


def run_checks(
    settings: RunSettings, env_path: Path, install: bool = False, requirements: Path = Path("requirements.txt")
) -> List[CheckResult]:
    steps: List[Callable[[], CheckResult]] = [lambda: prepare_directories(settings)]
    if install:
        steps.append(lambda: install_requirements(requirements))
    steps += [
        lambda: write_env_template(settings, env_path),
        check_packages,
        lambda: check_registry(settings),
        check_numerics,
    ]

    results = []
    for step in steps:
        try:
            result = step()
        except Exception as e:
            result = CheckResult(getattr(step, "__name__", "step"), False, f"{type(e).__name__}: {e}")
        results.append(result)
        # later steps import the stack
        if result.name == "packages" and not result.ok:
            break
    return results


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Prepare and verify the beam laboratory environment")
    parser.add_argument("--install", action="store_true", help="pip install -r requirements.txt first")
    parser.add_argument("--env-file", default=".env")
    args = parser.parse_args(argv)

    print("🔬 Kelvin-Voigt Beam Laboratory Setup")
    print("=" * 50)
    results = run_checks(RunSettings(), Path(args.env_file), install=args.install)
    for result in results:
        print(f"{'✅' if result.ok else '❌'} {result.name}: {result.detail}")

    failed = [r for r in results if not r.ok]
    print("=" * 50)
    if failed:
        print(f"⚠️ {len(failed)} check(s) failed")
        return 1
    print("🚀 Ready: python main_beam_pipeline.py figure1")
    return 0


if __name__ == "__main__":
    sys.exit(main())
