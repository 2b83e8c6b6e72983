"""Numeric spectrum indicators, the rule-based state classifier, and cluster-state mapping.

The analyst's visual spectrum reading is codified into three indicators:

* one_x_amplitude            - peak magnitude within +-1.5 Hz of the operating frequency
* midband_nonsync_energy_ratio - energy between 2.5x and 10x the operating
  frequency, excluding +-1.5 Hz around every integer harmonic, over the
  total energy up to 10x
* broadband_rms              - RMS over all spectrum bins

Rules fire in a fixed order against a known-normal baseline: power-off
(broadband RMS collapsed), then looseness (mid-band energy up, 1x down),
then imbalance (1x up), else normal. All comparisons are ratios, so the
decision is invariant to a common amplitude rescaling.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BandOutOfRange, InvalidParam, LengthMismatch
from .signals import DEFAULT_OPERATING_FREQ_HZ, MachineState, Spectrum

HARMONIC_TOLERANCE_HZ = 1.5
MIDBAND_MULTIPLES = (2.5, 10.0)


@dataclass(frozen=True)
class SpectrumIndicators:
    """The three diagnosis indicators of one spectrum."""

    one_x_amplitude: float
    midband_nonsync_energy_ratio: float
    broadband_rms: float
    operating_freq_hz: float

    def __post_init__(self) -> None:
        if self.one_x_amplitude < 0 or self.broadband_rms < 0:
            raise InvalidParam("amplitudes must be non-negative")
        if not 0.0 <= self.midband_nonsync_energy_ratio <= 1.0:
            raise InvalidParam("energy ratio must lie in [0, 1]")
        if self.operating_freq_hz <= 0:
            raise InvalidParam("operating_freq_hz must be positive")


@dataclass(frozen=True)
class DiagnosisThresholds:
    """Threshold knobs for the rule engine (defaults tuned on the synthetic generator)."""

    imbalance_ratio: float = 2.0
    looseness_energy_ratio: float = 0.35
    looseness_1x_drop: float = 0.6
    poweroff_rms_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.imbalance_ratio <= 1.0:
            raise InvalidParam("imbalance_ratio must exceed 1")
        for name in ("looseness_energy_ratio", "looseness_1x_drop", "poweroff_rms_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InvalidParam(f"{name} must lie in (0, 1)")


def indicators(
    spectrum: Spectrum, operating_freq_hz: float = DEFAULT_OPERATING_FREQ_HZ
) -> SpectrumIndicators:
    """Compute the three indicators; the spectrum must reach 10x the operating frequency."""
    if operating_freq_hz <= 0:
        raise InvalidParam("operating_freq_hz must be positive")
    freqs = spectrum.frequencies
    mags = spectrum.magnitudes
    top = MIDBAND_MULTIPLES[1] * operating_freq_hz
    if spectrum.max_frequency_hz < top:
        raise BandOutOfRange(
            f"spectrum reaches {spectrum.max_frequency_hz:.1f} Hz but "
            f"{top:.1f} Hz is needed for the mid-band indicator"
        )

    near_1x = np.abs(freqs - operating_freq_hz) <= HARMONIC_TOLERANCE_HZ
    one_x = float(mags[near_1x].max()) if near_1x.any() else 0.0

    total_mask = freqs <= top
    total_energy = float(np.sum(mags[total_mask] ** 2))
    mid_mask = (freqs > MIDBAND_MULTIPLES[0] * operating_freq_hz) & (freqs < top)
    harmonics = np.zeros_like(mid_mask)
    for mult in range(1, int(MIDBAND_MULTIPLES[1]) + 1):
        harmonics |= np.abs(freqs - mult * operating_freq_hz) <= HARMONIC_TOLERANCE_HZ
    nonsync_energy = float(np.sum(mags[mid_mask & ~harmonics] ** 2))
    ratio = nonsync_energy / total_energy if total_energy > 0 else 0.0

    return SpectrumIndicators(
        one_x_amplitude=one_x,
        midband_nonsync_energy_ratio=ratio,
        broadband_rms=float(np.sqrt(np.mean(mags**2))),
        operating_freq_hz=float(operating_freq_hz),
    )


def classify_state(
    ind: SpectrumIndicators,
    baseline: SpectrumIndicators,
    thresholds: DiagnosisThresholds | None = None,
) -> MachineState:
    """First matching rule wins: power-off, looseness, imbalance, else normal."""
    th = thresholds or DiagnosisThresholds()
    if ind.broadband_rms < th.poweroff_rms_fraction * baseline.broadband_rms:
        return MachineState.POWER_OFF
    if (
        ind.midband_nonsync_energy_ratio >= th.looseness_energy_ratio
        and ind.one_x_amplitude < th.looseness_1x_drop * baseline.one_x_amplitude
    ):
        return MachineState.LOOSENESS
    if ind.one_x_amplitude >= th.imbalance_ratio * baseline.one_x_amplitude:
        return MachineState.IMBALANCE
    return MachineState.NORMAL


def mean_indicators(items: Sequence[SpectrumIndicators]) -> SpectrumIndicators:
    """Component-wise mean, used to pool a known-normal window range into a baseline."""
    if not items:
        raise InvalidParam("need at least one indicator set")
    freqs = {ind.operating_freq_hz for ind in items}
    if len(freqs) != 1:
        raise InvalidParam("indicators were computed at different operating frequencies")
    return SpectrumIndicators(
        one_x_amplitude=float(np.mean([i.one_x_amplitude for i in items])),
        midband_nonsync_energy_ratio=float(np.mean([i.midband_nonsync_energy_ratio for i in items])),
        broadband_rms=float(np.mean([i.broadband_rms for i in items])),
        operating_freq_hz=freqs.pop(),
    )


@dataclass(frozen=True)
class ClusterDiagnosis:
    """Modal state of one cluster with its purity and vote tally."""

    state: MachineState
    purity: float
    n_windows: int
    state_counts: dict[str, int]


@dataclass(frozen=True)
class ClusterStateMap:
    """Every cluster label mapped to its modal machine state."""

    clusters: dict[int, ClusterDiagnosis]

    def state_of(self, cluster: int) -> MachineState:
        return self.clusters[cluster].state


def map_clusters(labels: Sequence[int], states: Sequence[MachineState]) -> ClusterStateMap:
    """Assign each cluster its modal state; ties break by state declaration order."""
    labels = list(labels)
    states = list(states)
    if len(labels) != len(states):
        raise LengthMismatch("labels and states must have equal length")
    if not labels:
        raise InvalidParam("need at least one labelled window")
    order = {state: i for i, state in enumerate(MachineState)}
    clusters: dict[int, ClusterDiagnosis] = {}
    for cluster in sorted(set(labels)):
        votes = Counter(state for lab, state in zip(labels, states) if lab == cluster)
        n = sum(votes.values())
        modal = min(votes, key=lambda s: (-votes[s], order[s]))
        clusters[int(cluster)] = ClusterDiagnosis(
            state=modal,
            purity=votes[modal] / n,
            n_windows=n,
            state_counts={s.value: votes[s] for s in MachineState if votes[s]},
        )
    return ClusterStateMap(clusters=clusters)
