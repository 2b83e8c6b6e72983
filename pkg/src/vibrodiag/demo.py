"""Bundled demonstration scenarios and run configuration.

The demo scenario follows the classic monitored-machine timeline: a
normal period, mechanical looseness, a post-repair normal period at a
different ambient temperature, a fan imbalance, another normal period,
and finally the machine powered off. The three normal periods differ
only in ambient temperature, so six clusters are recoverable and
temperature is the factor that tells the normal periods apart.

Ambient temperatures are chosen so every segment occupies a distinct
range: the abnormal periods sit inside the span of the normal ones,
which keeps the temperature variance low and the normal-period gaps wide
after standardization. ``imbalance_hot_scenario`` is the variant used to
study the imbalance factor story: there the imbalance period runs hotter
than every other period, the way a stressed fan-motor assembly does, so
temperature becomes a leading explanation for that cluster.
"""

from __future__ import annotations

from pathlib import Path

from .signals import MachineState, ScenarioSegment, SyntheticScenario
from .storage import scenario_to_dict, write_json

DEMO_SCENARIO_SEED = 2026
DEMO_MASTER_SEED = 108

N_NORMAL = 60
N_ABNORMAL = 150


def demo_scenario(rng_seed: int = DEMO_SCENARIO_SEED) -> SyntheticScenario:
    """Six-state timeline with abnormal-period temperatures inside the normal span."""
    return SyntheticScenario(
        segments=(
            ScenarioSegment(MachineState.NORMAL, N_NORMAL, 25.0, 1.0),
            ScenarioSegment(MachineState.LOOSENESS, N_ABNORMAL, 67.0, 1.0),
            ScenarioSegment(MachineState.NORMAL, N_NORMAL, 75.0, 1.0),
            ScenarioSegment(MachineState.IMBALANCE, N_ABNORMAL, 68.0, 1.0),
            ScenarioSegment(MachineState.NORMAL, N_NORMAL, 125.0, 1.0),
            ScenarioSegment(MachineState.POWER_OFF, N_ABNORMAL, 85.5, 0.0),
        ),
        rng_seed=rng_seed,
    )


def imbalance_hot_scenario(rng_seed: int = DEMO_SCENARIO_SEED) -> SyntheticScenario:
    """Variant where the imbalance period is the hottest the machine ever runs."""
    return SyntheticScenario(
        segments=(
            ScenarioSegment(MachineState.NORMAL, N_NORMAL, 25.0, 1.0),
            ScenarioSegment(MachineState.LOOSENESS, N_ABNORMAL, 67.0, 1.0),
            ScenarioSegment(MachineState.NORMAL, N_NORMAL, 75.0, 1.0),
            ScenarioSegment(MachineState.IMBALANCE, N_ABNORMAL, 121.0, 1.0),
            ScenarioSegment(MachineState.NORMAL, N_NORMAL, 125.0, 1.0),
            ScenarioSegment(MachineState.POWER_OFF, N_ABNORMAL, 85.5, 0.0),
        ),
        rng_seed=rng_seed,
    )


def demo_config(out_dir: str, scenario_path: str, seed: int = DEMO_MASTER_SEED) -> dict:
    """Run configuration driving the full pipeline on the demo scenario."""
    return {
        "schema_version": 1,
        "input": {"scenario_json": str(scenario_path)},
        "band_hz": [0.0, 27.5],
        "standardize": True,
        "k_min": 2,
        "k_max": 10,
        "em": {"n_restarts": 5, "max_iter": 500, "rel_tol": 1e-8, "reg_epsilon": 1e-6},
        "sample_cap": 50,
        "train_fraction": 0.7,
        "n_tree": 500,
        "mtry_grid": None,
        "tuning_repeats": 5,
        "n_jobs": 1,
        "diagnosis": {
            "operating_freq_hz": 26.1,
            "baseline_windows": [0, 19],
            "imbalance_ratio": 2.0,
            "looseness_energy_ratio": 0.35,
            "looseness_1x_drop": 0.6,
            "poweroff_rms_fraction": 0.1,
        },
        "seed": seed,
        "out_dir": str(out_dir),
    }


def write_demo_files(directory: str | Path) -> tuple[Path, Path]:
    """Write demo_scenario.json and demo.json into ``directory``."""
    directory = Path(directory)
    scenario_path = directory / "demo_scenario.json"
    config_path = directory / "demo.json"
    write_json(scenario_path, scenario_to_dict(demo_scenario()))
    write_json(config_path, demo_config(out_dir="out/demo", scenario_path=str(scenario_path)))
    return scenario_path, config_path
