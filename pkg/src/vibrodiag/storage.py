"""Artifact readers and writers.

All files are UTF-8 with LF line endings; floats are written with
``repr`` so they round-trip exactly. Writers are atomic (temp file in the
target directory, then rename), so a failed run never leaves a partial
artifact behind. JSON artifacts carry a ``schema_version`` field; CSV
schemas are fixed by their documented header rows.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .clustering import ClusterSelectionReport, GmmModel
from .diagnosis import ClusterStateMap, SpectrumIndicators
from .errors import ParseError
from .features import FeatureMatrix, Standardizer
from .forest import ImportanceReport, RandomForest, TuningReport
from .signals import MachineState, ScenarioSegment, SignalWindow, SyntheticScenario

SCHEMA_VERSION = 1

WINDOWS_HEADER = "timestamp,sample_rate_hz,ambient_temp_c,axis,sample_index,value"
TRUTH_HEADER = "timestamp,state"
ASSIGNMENTS_HEADER = "timestamp,cluster"
SELECTION_HEADER = "k,wss,mean_silhouette"
TUNING_HEADER = "mtry,accuracy,kappa"
DIAGNOSIS_HEADER = "timestamp,cluster,one_x_amplitude,midband_ratio,broadband_rms,state"


def fmt(value: float) -> str:
    """Shortest decimal string that round-trips to the same float."""
    return repr(float(value))


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path: Path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=1) + "\n")


def read_json(path: Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# -- windows ---------------------------------------------------------------


def write_windows_csv(path: Path, windows: Sequence[SignalWindow]) -> None:
    lines = [WINDOWS_HEADER]
    for w in windows:
        prefix = f"{w.timestamp},{fmt(w.sample_rate_hz)},{fmt(w.ambient_temp_c)}"
        for axis in ("X", "Y"):
            for i, v in enumerate(w.samples(axis)):
                lines.append(f"{prefix},{axis},{i},{fmt(v)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_windows_csv(path: Path) -> list[SignalWindow]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError:
        raise
    if not lines or lines[0] != WINDOWS_HEADER:
        raise ParseError(f"{path}: expected header {WINDOWS_HEADER!r}")
    seen: dict[int, dict] = {}
    order: list[int] = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ParseError(f"{path}:{ln}: expected 6 fields, got {len(parts)}")
        try:
            ts = int(parts[0])
            rate = float(parts[1])
            temp = float(parts[2])
            axis = parts[3]
            idx = int(parts[4])
            value = float(parts[5])
        except ValueError as exc:
            raise ParseError(f"{path}:{ln}: {exc}") from exc
        if axis not in ("X", "Y"):
            raise ParseError(f"{path}:{ln}: axis must be X or Y")
        if ts not in seen:
            seen[ts] = {"rate": rate, "temp": temp, "X": [], "Y": []}
            order.append(ts)
        entry = seen[ts]
        if entry["rate"] != rate or entry["temp"] != temp:
            raise ParseError(f"{path}:{ln}: inconsistent rate/temperature within window {ts}")
        if idx != len(entry[axis]):
            raise ParseError(f"{path}:{ln}: sample_index out of order for window {ts}")
        entry[axis].append(value)
    if not order:
        raise ParseError(f"{path}: no window rows found")
    windows = []
    for ts in order:
        entry = seen[ts]
        if len(entry["X"]) != len(entry["Y"]):
            raise ParseError(f"{path}: window {ts} has unequal axis lengths")
        windows.append(
            SignalWindow(
                timestamp=ts,
                sample_rate_hz=entry["rate"],
                x_samples=np.array(entry["X"]),
                y_samples=np.array(entry["Y"]),
                ambient_temp_c=entry["temp"],
            )
        )
    return windows


def write_truth_csv(path: Path, pairs: Iterable[tuple[int, MachineState]]) -> None:
    lines = [TRUTH_HEADER]
    lines += [f"{ts},{state.value}" for ts, state in pairs]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_truth_csv(path: Path) -> list[tuple[int, MachineState]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != TRUTH_HEADER:
        raise ParseError(f"{path}: expected header {TRUTH_HEADER!r}")
    out = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"{path}:{ln}: expected 2 fields")
        try:
            out.append((int(parts[0]), MachineState.from_name(parts[1])))
        except Exception as exc:
            raise ParseError(f"{path}:{ln}: {exc}") from exc
    return out


# -- scenario --------------------------------------------------------------


def scenario_to_dict(scenario: SyntheticScenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "segments": [
            {
                "state": seg.state.value,
                "n_windows": seg.n_windows,
                "base_temp_c": seg.base_temp_c,
                "temp_drift_c": seg.temp_drift_c,
            }
            for seg in scenario.segments
        ],
        "operating_freq_hz": scenario.operating_freq_hz,
        "window_len": scenario.window_len,
        "sample_rate_hz": scenario.sample_rate_hz,
        "noise_sd": scenario.noise_sd,
        "rng_seed": scenario.rng_seed,
    }


def scenario_from_dict(payload: dict) -> SyntheticScenario:
    try:
        segments = tuple(
            ScenarioSegment(
                state=MachineState.from_name(seg["state"]),
                n_windows=int(seg["n_windows"]),
                base_temp_c=float(seg["base_temp_c"]),
                temp_drift_c=float(seg.get("temp_drift_c", 0.0)),
            )
            for seg in payload["segments"]
        )
        return SyntheticScenario(
            segments=segments,
            operating_freq_hz=float(payload.get("operating_freq_hz", 26.1)),
            window_len=int(payload.get("window_len", 1600)),
            sample_rate_hz=float(payload.get("sample_rate_hz", 2048.0)),
            noise_sd=float(payload.get("noise_sd", 0.05)),
            rng_seed=int(payload.get("rng_seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"scenario document is malformed: {exc}") from exc


# -- features --------------------------------------------------------------


def write_features_csv(path: Path, matrix: FeatureMatrix) -> None:
    header = ",".join(list(matrix.feature_names) + ["timestamp"])
    lines = [header]
    for row, ts in zip(matrix.values, matrix.timestamps):
        lines.append(",".join(fmt(v) for v in row) + f",{int(ts)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_features_csv(path: Path) -> FeatureMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[-1] != "timestamp" or len(header) < 2:
        raise ParseError(f"{path}: last column must be 'timestamp'")
    names = tuple(header[:-1])
    values: list[list[float]] = []
    timestamps: list[int] = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise ParseError(f"{path}:{ln}: expected {len(header)} fields")
        try:
            values.append([float(v) for v in parts[:-1]])
            timestamps.append(int(parts[-1]))
        except ValueError as exc:
            raise ParseError(f"{path}:{ln}: {exc}") from exc
    if not values:
        raise ParseError(f"{path}: no feature rows found")
    return FeatureMatrix(np.array(values), np.array(timestamps), names)


def standardizer_to_dict(standardizer: Standardizer) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "feature_names": list(standardizer.feature_names),
        "means": [float(v) for v in standardizer.means],
        "sds": [float(v) for v in standardizer.sds],
    }


def standardizer_from_dict(payload: dict) -> Standardizer:
    try:
        return Standardizer(
            feature_names=tuple(payload["feature_names"]),
            means=np.array(payload["means"], dtype=float),
            sds=np.array(payload["sds"], dtype=float),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"standardizer document is malformed: {exc}") from exc


# -- clustering ------------------------------------------------------------


def gmm_to_dict(model: GmmModel, feature_names: Sequence[str] | None = None, standardized: bool = True) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "k": model.k,
        "weights": [float(w) for w in model.weights],
        "centers": [[float(v) for v in row] for row in model.centers],
        "covariances_row_major": [[float(v) for v in cov.ravel()] for cov in model.covariances],
        "log_likelihood_trace": list(model.log_likelihood_trace),
        "converged": model.converged,
        "n_iter": model.n_iter,
        "reg_epsilon": model.reg_epsilon,
        "standardized": standardized,
        "feature_names": list(feature_names) if feature_names is not None else None,
    }


def write_selection_csv(path: Path, report: ClusterSelectionReport) -> None:
    lines = [SELECTION_HEADER]
    for row in report.rows:
        lines.append(f"{row.k},{fmt(row.wss)},{fmt(row.mean_silhouette)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def selection_to_dict(report: ClusterSelectionReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "chosen_k": report.chosen_k,
        "rule_used": report.rule_used,
        "rows": [
            {"k": row.k, "wss": row.wss, "mean_silhouette": row.mean_silhouette}
            for row in report.rows
        ],
        "failures": [{"k": k, "error": msg} for k, msg in report.failures],
    }


def write_assignments_csv(path: Path, timestamps: Sequence[int], labels: Sequence[int]) -> None:
    lines = [ASSIGNMENTS_HEADER]
    lines += [f"{int(ts)},{int(lab)}" for ts, lab in zip(timestamps, labels)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_assignments_csv(path: Path) -> list[tuple[int, int]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != ASSIGNMENTS_HEADER:
        raise ParseError(f"{path}: expected header {ASSIGNMENTS_HEADER!r}")
    out = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"{path}:{ln}: expected 2 fields")
        try:
            out.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise ParseError(f"{path}:{ln}: {exc}") from exc
    if not out:
        raise ParseError(f"{path}: no assignment rows found")
    return out


def write_cluster_plot_csv(path: Path, timestamps, coords: np.ndarray, labels) -> None:
    lines = ["timestamp,pc1,pc2,cluster"]
    for ts, (p1, p2), lab in zip(timestamps, coords, labels):
        lines.append(f"{int(ts)},{fmt(p1)},{fmt(p2)},{int(lab)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- forest ----------------------------------------------------------------


def _tree_to_nodes(tree) -> list:
    nodes = []
    for i in range(tree.n_nodes):
        if tree.feature[i] >= 0:
            nodes.append(
                {
                    "f": int(tree.feature[i]),
                    "t": float(tree.threshold[i]),
                    "l": int(tree.left[i]),
                    "r": int(tree.right[i]),
                }
            )
        else:
            nodes.append({"counts": [int(c) for c in tree.leaf_counts[i]]})
    return nodes


def forest_to_dict(forest: RandomForest) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "n_tree": forest.n_tree,
        "m_try": forest.m_try,
        "seed": forest.seed,
        "class_labels": [int(c) if isinstance(c, (int, np.integer)) else c for c in forest.class_labels],
        "feature_names": list(forest.feature_names),
        "oob_error": float(forest.oob_error),
        "n_oob_uncovered": int(forest.n_oob_uncovered),
        "trees": [_tree_to_nodes(tree) for tree in forest.trees],
    }


def write_tuning_csv(path: Path, report: TuningReport) -> None:
    lines = [TUNING_HEADER]
    for row in report.rows:
        lines.append(f"{row.m_try},{fmt(row.mean_accuracy)},{fmt(row.mean_kappa)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_importance_csv(path: Path, report: ImportanceReport) -> None:
    class_cols = [str(c) for c in report.class_labels]
    lines = [",".join(["feature"] + class_cols + ["overall"])]
    for i, name in enumerate(report.feature_names):
        row = report.values[i]
        lines.append(name + "," + ",".join(fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- diagnosis -------------------------------------------------------------


def write_diagnosis_csv(
    path: Path,
    timestamps: Sequence[int],
    clusters: Sequence[int],
    per_window: Sequence[SpectrumIndicators],
    states: Sequence[MachineState],
) -> None:
    lines = [DIAGNOSIS_HEADER]
    for ts, cluster, ind, state in zip(timestamps, clusters, per_window, states):
        lines.append(
            f"{int(ts)},{int(cluster)},{fmt(ind.one_x_amplitude)},"
            f"{fmt(ind.midband_nonsync_energy_ratio)},{fmt(ind.broadband_rms)},{state.value}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def cluster_map_to_dict(cmap: ClusterStateMap) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "clusters": {
            str(cluster): {
                "state": diag.state.value,
                "purity": diag.purity,
                "n_windows": diag.n_windows,
                "state_counts": diag.state_counts,
            }
            for cluster, diag in sorted(cmap.clusters.items())
        },
    }
