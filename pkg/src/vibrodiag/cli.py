"""Command-line pipeline: gen, features, cluster, diagnose, factor, pipeline.

Every command reads one JSON run configuration (see ``CONFIG_FIELDS`` in
--help) and writes fixed-name artifacts into the output directory. A
single master seed fans out to per-stage seeds by XOR with a stable hash
of the stage name, so any stage can be reproduced in isolation; the data
generator is seeded by the scenario's own rng_seed, which identifies the
dataset. Artifacts are written atomically and recorded in
run_manifest.json with their SHA-256 digests, sizes, and stage timings.

On failure the process exits nonzero with a one-line JSON error object on
stderr: {"code": CONFIG|IO|PARSE|NUMERIC|CONTRACT, "message": ...}.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import storage
from .clustering import select_k
from .diagnosis import (
    ClusterStateMap,
    DiagnosisThresholds,
    classify_state,
    indicators,
    map_clusters,
    mean_indicators,
)
from .errors import ConfigError, ParseError, VibrodiagError
from .features import apply_standardizer, extract_matrix, fit_standardizer
from .forest import fit_forest, permutation_importance, sample_per_cluster, tune_mtry
from .seeds import derive_seed
from .signals import fft_magnitude, generate_scenario
from .storage import read_json

WINDOWS_CSV = "windows.csv"
TRUTH_CSV = "truth.csv"
FEATURES_CSV = "features.csv"
STANDARDIZER_JSON = "standardizer.json"
GMM_JSON = "gmm_model.json"
ASSIGNMENTS_CSV = "assignments.csv"
SELECTION_CSV = "selection_report.csv"
SELECTION_JSON = "selection_summary.json"
CLUSTER_PLOT_CSV = "cluster_plot.csv"
DIAGNOSIS_CSV = "diagnosis_report.csv"
CLUSTER_MAP_JSON = "cluster_state_map.json"
TUNING_CSV = "tuning_report.csv"
FOREST_JSON = "forest.json"
IMPORTANCE_CSV = "importance.csv"
MANIFEST_JSON = "run_manifest.json"

OUT_DIR_ENV = "VIBRODIAG_OUT"

CONFIG_FIELDS = """\
Run configuration fields (JSON object):
  input.scenario_json   path to a scenario document (generator input), or
  input.windows_csv     path to an existing windows CSV (exactly one of the two)
  band_hz               [lo, hi] spectrum band for frequency features (default [0.0, 27.5])
  standardize           z-score features before clustering (default true)
  k_min, k_max          cluster-count scan range (default 2..10), or
  k_fixed               fixed cluster count (>= 2, skips the scan rule)
  em.n_restarts         EM restarts per k (default 5)
  em.max_iter           EM iteration cap (default 500)
  em.rel_tol            relative log-likelihood tolerance (default 1e-8)
  em.reg_epsilon        covariance ridge scale (default 1e-6)
  sample_cap            per-cluster row cap before factor analysis (default 100)
  train_fraction        stratified holdout train share (default 0.7)
  n_tree                trees per forest (default 500)
  mtry_grid             list of m_try values (default {2, (d+1)/2, d})
  tuning_repeats        holdout repeats per grid value (default 5)
  n_jobs                worker threads for tree building (default 1)
  diagnosis.operating_freq_hz    shaft frequency in Hz (default 26.1)
  diagnosis.baseline_windows     [first, last] window indices of the known-normal baseline
  diagnosis.imbalance_ratio      1x-vs-baseline trigger (default 2.0)
  diagnosis.looseness_energy_ratio  mid-band energy trigger (default 0.35)
  diagnosis.looseness_1x_drop    1x drop trigger as a baseline fraction (default 0.6)
  diagnosis.poweroff_rms_fraction   broadband RMS trigger (default 0.1)
  seed                  master seed, 64-bit unsigned (default 0)
  out_dir               artifact directory

Flags --seed and --out override the config; the environment variable
VIBRODIAG_OUT overrides out_dir when --out is absent.
"""


@dataclass
class RunConfig:
    """Validated run configuration shared by all commands."""

    scenario_json: str | None
    windows_csv: str | None
    band_hz: tuple[float, float]
    standardize: bool
    k_min: int
    k_max: int
    k_fixed: int | None
    em_n_restarts: int
    em_max_iter: int
    em_rel_tol: float
    em_reg_epsilon: float
    sample_cap: int
    train_fraction: float
    n_tree: int
    mtry_grid: tuple[int, ...] | None
    tuning_repeats: int
    n_jobs: int
    operating_freq_hz: float
    baseline_windows: tuple[int, int]
    thresholds: DiagnosisThresholds
    seed: int
    out_dir: Path
    config_echo: dict = field(default_factory=dict)

    def stage_seed(self, stage: str) -> int:
        return derive_seed(self.seed, stage)


def _get(d: dict, key: str, default):
    value = d.get(key, default)
    if value is None and default is not None:
        return default
    return value


def load_config(path: str | Path, seed_override: int | None = None, out_override: str | None = None) -> RunConfig:
    raw = read_json(Path(path))
    if not isinstance(raw, dict):
        raise ConfigError("run configuration must be a JSON object")
    try:
        inp = raw.get("input", {})
        scenario_json = inp.get("scenario_json")
        windows_csv = inp.get("windows_csv")
        if (scenario_json is None) == (windows_csv is None):
            raise ConfigError("input must name exactly one of scenario_json or windows_csv")

        band = raw.get("band_hz", [0.0, 27.5])
        band_hz = (float(band[0]), float(band[1]))
        if band_hz[0] >= band_hz[1]:
            raise ConfigError("band_hz must be [lo, hi] with lo < hi")

        k_fixed = raw.get("k_fixed")
        k_min = int(_get(raw, "k_min", 2))
        k_max = int(_get(raw, "k_max", 10))
        if k_fixed is not None:
            k_fixed = int(k_fixed)
            if k_fixed < 2:
                raise ConfigError("k_fixed must be at least 2")
            k_min = k_max = k_fixed
        if not 2 <= k_min <= k_max:
            raise ConfigError("need 2 <= k_min <= k_max")

        em = raw.get("em", {})
        em_n_restarts = int(_get(em, "n_restarts", 5))
        em_max_iter = int(_get(em, "max_iter", 500))
        em_rel_tol = float(_get(em, "rel_tol", 1e-8))
        em_reg_epsilon = float(_get(em, "reg_epsilon", 1e-6))
        if em_n_restarts < 1 or em_max_iter < 1 or em_rel_tol <= 0 or em_reg_epsilon < 0:
            raise ConfigError("EM parameters out of range")

        sample_cap = int(_get(raw, "sample_cap", 100))
        train_fraction = float(_get(raw, "train_fraction", 0.7))
        n_tree = int(_get(raw, "n_tree", 500))
        tuning_repeats = int(_get(raw, "tuning_repeats", 5))
        n_jobs = int(_get(raw, "n_jobs", 1))
        if sample_cap < 1 or not 0 < train_fraction < 1 or n_tree < 1 or tuning_repeats < 1 or n_jobs < 1:
            raise ConfigError("sampling/forest parameters out of range")
        grid = raw.get("mtry_grid")
        mtry_grid = tuple(int(g) for g in grid) if grid is not None else None

        diag = raw.get("diagnosis", {})
        operating_freq_hz = float(_get(diag, "operating_freq_hz", 26.1))
        if operating_freq_hz <= 0:
            raise ConfigError("diagnosis.operating_freq_hz must be positive")
        baseline = diag.get("baseline_windows", [0, 9])
        baseline_windows = (int(baseline[0]), int(baseline[1]))
        if baseline_windows[0] < 0 or baseline_windows[0] > baseline_windows[1]:
            raise ConfigError("diagnosis.baseline_windows must be [first, last] with first <= last")
        thresholds = DiagnosisThresholds(
            imbalance_ratio=float(_get(diag, "imbalance_ratio", 2.0)),
            looseness_energy_ratio=float(_get(diag, "looseness_energy_ratio", 0.35)),
            looseness_1x_drop=float(_get(diag, "looseness_1x_drop", 0.6)),
            poweroff_rms_fraction=float(_get(diag, "poweroff_rms_fraction", 0.1)),
        )

        seed = int(_get(raw, "seed", 0))
        if seed_override is not None:
            seed = int(seed_override)
        if not 0 <= seed < (1 << 64):
            raise ConfigError("seed must fit in 64 unsigned bits")

        out_dir = raw.get("out_dir")
        if out_override is not None:
            out_dir = out_override
        elif os.environ.get(OUT_DIR_ENV):
            out_dir = os.environ[OUT_DIR_ENV]
        if not out_dir:
            raise ConfigError("out_dir is required (config, --out, or VIBRODIAG_OUT)")

        echo = dict(raw)
        echo["seed"] = seed
        echo["out_dir"] = str(out_dir)
        return RunConfig(
            scenario_json=scenario_json,
            windows_csv=windows_csv,
            band_hz=band_hz,
            standardize=bool(_get(raw, "standardize", True)),
            k_min=k_min,
            k_max=k_max,
            k_fixed=k_fixed,
            em_n_restarts=em_n_restarts,
            em_max_iter=em_max_iter,
            em_rel_tol=em_rel_tol,
            em_reg_epsilon=em_reg_epsilon,
            sample_cap=sample_cap,
            train_fraction=train_fraction,
            n_tree=n_tree,
            mtry_grid=mtry_grid,
            tuning_repeats=tuning_repeats,
            n_jobs=n_jobs,
            operating_freq_hz=operating_freq_hz,
            baseline_windows=baseline_windows,
            thresholds=thresholds,
            seed=seed,
            out_dir=Path(out_dir),
            config_echo=echo,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid run configuration: {exc}") from exc


class Manifest:
    """run_manifest.json: config echo, versions, stage timings, artifact digests."""

    def __init__(self, cfg: RunConfig):
        self.path = cfg.out_dir / MANIFEST_JSON
        if self.path.exists():
            payload = read_json(self.path)
        else:
            payload = {}
        self.payload = {
            "schema_version": storage.SCHEMA_VERSION,
            "config": cfg.config_echo,
            "versions": {
                "vibrodiag": __version__,
                "python": ".".join(str(v) for v in sys.version_info[:3]),
                "numpy": np.__version__,
            },
            "stages": payload.get("stages", {}),
            "artifacts": payload.get("artifacts", {}),
        }

    def record_stage(self, name: str, seconds: float, artifacts: list[Path]) -> None:
        self.payload["stages"][name] = {"wall_seconds": round(seconds, 3)}
        for path in artifacts:
            self.payload["artifacts"][path.name] = {
                "sha256": storage.sha256_file(path),
                "bytes": path.stat().st_size,
            }
        storage.write_json(self.path, self.payload)


def _stage(cfg: RunConfig, name: str, produce) -> list[Path]:
    """Run one stage, then record its timing and artifact digests."""
    manifest = Manifest(cfg)
    start = time.perf_counter()
    artifacts = produce()
    manifest.record_stage(name, time.perf_counter() - start, artifacts)
    return artifacts


def _windows_path(cfg: RunConfig) -> Path:
    if cfg.windows_csv is not None:
        return Path(cfg.windows_csv)
    return cfg.out_dir / WINDOWS_CSV


def cmd_gen(cfg: RunConfig) -> list[Path]:
    """Scenario JSON -> windows.csv + truth.csv."""
    if cfg.scenario_json is None:
        raise ConfigError("gen requires input.scenario_json")

    def produce() -> list[Path]:
        scenario = storage.scenario_from_dict(read_json(Path(cfg.scenario_json)))
        pairs = generate_scenario(scenario)
        windows_path = cfg.out_dir / WINDOWS_CSV
        truth_path = cfg.out_dir / TRUTH_CSV
        storage.write_windows_csv(windows_path, [w for w, _ in pairs])
        storage.write_truth_csv(truth_path, [(w.timestamp, s) for w, s in pairs])
        return [windows_path, truth_path]

    return _stage(cfg, "gen", produce)


def cmd_features(cfg: RunConfig) -> list[Path]:
    """windows.csv -> features.csv."""

    def produce() -> list[Path]:
        windows = storage.read_windows_csv(_windows_path(cfg))
        matrix = extract_matrix(windows, band=cfg.band_hz)
        features_path = cfg.out_dir / FEATURES_CSV
        storage.write_features_csv(features_path, matrix)
        return [features_path]

    return _stage(cfg, "features", produce)


def _pca_coords(values: np.ndarray) -> np.ndarray:
    """Scores on the first two principal directions, with a fixed sign convention."""
    centered = values - values.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[: min(2, vt.shape[0])]
    fixed = []
    for comp in comps:
        pivot = int(np.argmax(np.abs(comp)))
        fixed.append(-comp if comp[pivot] < 0 else comp)
    while len(fixed) < 2:
        fixed.append(np.zeros(values.shape[1]))
    return centered @ np.stack(fixed).T


def cmd_cluster(cfg: RunConfig) -> list[Path]:
    """features.csv -> gmm_model.json + assignments.csv + selection report + plot data."""

    def produce() -> list[Path]:
        matrix = storage.read_features_csv(cfg.out_dir / FEATURES_CSV)
        out: list[Path] = []
        if cfg.standardize:
            standardizer = fit_standardizer(matrix)
            work = apply_standardizer(standardizer, matrix)
            std_path = cfg.out_dir / STANDARDIZER_JSON
            storage.write_json(std_path, storage.standardizer_to_dict(standardizer))
            out.append(std_path)
        else:
            work = matrix

        model, report = select_k(
            work,
            k_min=cfg.k_min,
            k_max=cfg.k_max,
            n_restarts=cfg.em_n_restarts,
            max_iter=cfg.em_max_iter,
            rel_tol=cfg.em_rel_tol,
            reg_epsilon=cfg.em_reg_epsilon,
            seed=cfg.stage_seed("cluster"),
            override_k=cfg.k_fixed,
        )
        from .clustering import hard_assign

        labels = hard_assign(model, work)

        gmm_path = cfg.out_dir / GMM_JSON
        storage.write_json(
            gmm_path,
            storage.gmm_to_dict(model, feature_names=matrix.feature_names, standardized=cfg.standardize),
        )
        assign_path = cfg.out_dir / ASSIGNMENTS_CSV
        storage.write_assignments_csv(assign_path, matrix.timestamps, labels)
        sel_csv = cfg.out_dir / SELECTION_CSV
        storage.write_selection_csv(sel_csv, report)
        sel_json = cfg.out_dir / SELECTION_JSON
        storage.write_json(sel_json, storage.selection_to_dict(report))
        plot_path = cfg.out_dir / CLUSTER_PLOT_CSV
        storage.write_cluster_plot_csv(plot_path, matrix.timestamps, _pca_coords(work.values), labels)
        return out + [gmm_path, assign_path, sel_csv, sel_json, plot_path]

    return _stage(cfg, "cluster", produce)


def cmd_diagnose(cfg: RunConfig) -> list[Path]:
    """windows.csv + assignments.csv -> diagnosis_report.csv + cluster_state_map.json."""

    def produce() -> list[Path]:
        windows = storage.read_windows_csv(_windows_path(cfg))
        assignments = storage.read_assignments_csv(cfg.out_dir / ASSIGNMENTS_CSV)
        if len(assignments) != len(windows):
            raise ParseError(
                f"assignments cover {len(assignments)} windows but {len(windows)} were read"
            )
        by_ts = dict(assignments)
        labels = []
        for w in windows:
            if w.timestamp not in by_ts:
                raise ParseError(f"no cluster assignment for window at t={w.timestamp}")
            labels.append(by_ts[w.timestamp])

        # Diagnosis reads the radial (Y) spectrum: every signature used by
        # the rules is visible there, including the radial-only imbalance.
        per_window = [
            indicators(fft_magnitude(w.y_samples, w.sample_rate_hz, axis="Y"), cfg.operating_freq_hz)
            for w in windows
        ]
        first, last = cfg.baseline_windows
        if last >= len(windows):
            raise ConfigError(
                f"baseline_windows {cfg.baseline_windows} out of range for {len(windows)} windows"
            )
        baseline = mean_indicators(per_window[first : last + 1])
        states = [classify_state(ind, baseline, cfg.thresholds) for ind in per_window]
        cmap = map_clusters(labels, states)

        diag_path = cfg.out_dir / DIAGNOSIS_CSV
        storage.write_diagnosis_csv(
            diag_path, [w.timestamp for w in windows], labels, per_window, states
        )
        map_path = cfg.out_dir / CLUSTER_MAP_JSON
        storage.write_json(map_path, storage.cluster_map_to_dict(cmap))
        return [diag_path, map_path]

    return _stage(cfg, "diagnose", produce)


def cmd_factor(cfg: RunConfig) -> list[Path]:
    """features.csv + assignments.csv -> tuning_report.csv + forest.json + importance.csv."""

    def produce() -> list[Path]:
        matrix = storage.read_features_csv(cfg.out_dir / FEATURES_CSV)
        assignments = storage.read_assignments_csv(cfg.out_dir / ASSIGNMENTS_CSV)
        by_ts = dict(assignments)
        try:
            labels = [by_ts[int(ts)] for ts in matrix.timestamps]
        except KeyError as exc:
            raise ParseError(f"no cluster assignment for window at t={exc.args[0]}") from exc

        factor_seed = cfg.stage_seed("factor")
        sampled, sampled_labels = sample_per_cluster(
            matrix, labels, cap=cfg.sample_cap, seed=derive_seed(factor_seed, "sample")
        )
        tuning = tune_mtry(
            sampled,
            sampled_labels,
            grid=cfg.mtry_grid,
            n_repeats=cfg.tuning_repeats,
            train_fraction=cfg.train_fraction,
            seed=derive_seed(factor_seed, "tune"),
            n_tree=cfg.n_tree,
        )
        forest = fit_forest(
            sampled,
            sampled_labels,
            n_tree=cfg.n_tree,
            m_try=tuning.best_m_try,
            seed=derive_seed(factor_seed, "forest"),
            n_jobs=cfg.n_jobs,
        )
        importance = permutation_importance(
            forest, sampled, sampled_labels, seed=derive_seed(factor_seed, "importance")
        )

        tuning_path = cfg.out_dir / TUNING_CSV
        storage.write_tuning_csv(tuning_path, tuning)
        forest_path = cfg.out_dir / FOREST_JSON
        storage.write_json(forest_path, storage.forest_to_dict(forest))
        imp_path = cfg.out_dir / IMPORTANCE_CSV
        storage.write_importance_csv(imp_path, importance)
        return [tuning_path, forest_path, imp_path]

    return _stage(cfg, "factor", produce)


def cmd_pipeline(cfg: RunConfig) -> list[Path]:
    """All stages in order; equivalent to running the five commands by hand."""
    artifacts: list[Path] = []
    if cfg.scenario_json is not None:
        artifacts += cmd_gen(cfg)
    artifacts += cmd_features(cfg)
    artifacts += cmd_cluster(cfg)
    artifacts += cmd_diagnose(cfg)
    artifacts += cmd_factor(cfg)
    return artifacts


COMMANDS = {
    "gen": cmd_gen,
    "features": cmd_features,
    "cluster": cmd_cluster,
    "diagnose": cmd_diagnose,
    "factor": cmd_factor,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vibrodiag",
        description="Unsupervised machine-state diagnostics pipeline.",
        epilog=CONFIG_FIELDS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__, description=fn.__doc__)
        p.add_argument("--config", required=True, help="path to the run configuration JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config master seed")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
        COMMANDS[args.command](cfg)
        return 0
    except VibrodiagError as exc:
        print(json.dumps({"code": exc.cli_code, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"code": "IO", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
