"""Sensor windows, one-sided magnitude spectra, and the synthetic machine-state generator.

A capture is a short two-axis acceleration window (X axial, Y radial)
sampled at 2048 Hz together with an ambient temperature reading, taken
every five minutes. Spectra are one-sided amplitude spectra of the
zero-padded window (next power of two, rectangular window), scaled so a
unit-amplitude on-bin sinusoid appears as a bin magnitude of 1.0.

The synthetic generator stands in for plant data. Each machine state has
a fixed spectral signature around the shaft operating frequency:

* normal    - 1x tone on both axes plus 2x/3x harmonics at a quarter amplitude
* imbalance - radial 1x tone raised to three times the base amplitude
* looseness - 1x tone dropped to 0.4x plus five non-synchronous mid-band tones
* poweroff  - sensor noise only, at a tenth of the configured level

Tone phases are deterministic: repeated windows of one state differ only
through the Gaussian sensor noise drawn from the caller's seeded
generator, which keeps same-state windows tightly grouped in feature
space. Ambient temperature is the segment temperature plus a fixed
state offset (imbalance +10 C, looseness +5 C, power-off -15 C).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import EmptySignal, InvalidParam, NonFinite

DEFAULT_SAMPLE_RATE_HZ = 2048.0
DEFAULT_OPERATING_FREQ_HZ = 26.1
DEFAULT_WINDOW_LEN = 1600
DEFAULT_NOISE_SD = 0.05
WINDOW_SPACING_S = 300

BASE_AMPLITUDE = 1.0
HARMONIC_AMPLITUDE = BASE_AMPLITUDE / 4.0
IMBALANCE_RADIAL_GAIN = 3.0
LOOSENESS_1X_FACTOR = 0.4
LOOSENESS_TONE_AMPLITUDE = 0.55 * BASE_AMPLITUDE
# Non-integer multiples of the operating frequency, all inside [3x, 10x]
# and at least 1.5 Hz away from any integer harmonic at 26.1 Hz.
LOOSENESS_MULTIPLES = (3.4, 4.6, 5.8, 7.2, 8.6)
POWER_OFF_NOISE_FACTOR = 0.1


class MachineState(Enum):
    """Machine operating states distinguishable from the spectrum."""

    NORMAL = "normal"
    IMBALANCE = "imbalance"
    LOOSENESS = "looseness"
    POWER_OFF = "poweroff"

    @classmethod
    def from_name(cls, name: str) -> "MachineState":
        for state in cls:
            if state.value == name:
                return state
        raise InvalidParam(f"unknown machine state {name!r}")


TEMP_OFFSET_C = {
    MachineState.NORMAL: 0.0,
    MachineState.IMBALANCE: 10.0,
    MachineState.LOOSENESS: 5.0,
    MachineState.POWER_OFF: -15.0,
}


@dataclass(frozen=True)
class SignalWindow:
    """One five-minute capture: two axis traces plus ambient temperature."""

    timestamp: int
    sample_rate_hz: float
    x_samples: np.ndarray
    y_samples: np.ndarray
    ambient_temp_c: float

    def __post_init__(self) -> None:
        x = np.asarray(self.x_samples, dtype=float)
        y = np.asarray(self.y_samples, dtype=float)
        object.__setattr__(self, "x_samples", x)
        object.__setattr__(self, "y_samples", y)
        if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
            raise InvalidParam("x_samples and y_samples must be 1-D and of equal length")
        if x.size < 2:
            raise EmptySignal("a window needs at least 2 samples per axis")
        if self.sample_rate_hz <= 0:
            raise InvalidParam("sample_rate_hz must be positive")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise NonFinite("window samples must be finite")
        if not np.isfinite(self.ambient_temp_c):
            raise NonFinite("ambient_temp_c must be finite")

    @property
    def n_samples(self) -> int:
        return int(self.x_samples.size)

    def samples(self, axis: str) -> np.ndarray:
        if axis == "X":
            return self.x_samples
        if axis == "Y":
            return self.y_samples
        raise InvalidParam(f"axis must be 'X' or 'Y', got {axis!r}")


@dataclass(frozen=True)
class Spectrum:
    """One-sided amplitude spectrum of a zero-padded window."""

    freq_resolution_hz: float
    magnitudes: np.ndarray
    source_axis: str
    n_time_samples: int

    def __post_init__(self) -> None:
        mags = np.asarray(self.magnitudes, dtype=float)
        object.__setattr__(self, "magnitudes", mags)
        if self.freq_resolution_hz <= 0:
            raise InvalidParam("freq_resolution_hz must be positive")
        if self.source_axis not in ("X", "Y"):
            raise InvalidParam("source_axis must be 'X' or 'Y'")
        if self.n_time_samples < 2:
            raise InvalidParam("n_time_samples must be at least 2")
        if mags.ndim != 1 or mags.size < 2:
            raise InvalidParam("magnitudes must be a 1-D array of at least 2 bins")
        if not np.isfinite(mags).all():
            raise NonFinite("spectrum magnitudes must be finite")
        if (mags < 0).any():
            raise InvalidParam("spectrum magnitudes must be non-negative")

    @property
    def n_padded(self) -> int:
        return 2 * (self.magnitudes.size - 1)

    @property
    def frequencies(self) -> np.ndarray:
        """Bin center frequencies in Hz."""
        return self.freq_resolution_hz * np.arange(self.magnitudes.size)

    @property
    def max_frequency_hz(self) -> float:
        return float(self.freq_resolution_hz * (self.magnitudes.size - 1))


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def fft_magnitude(samples: Sequence[float], sample_rate_hz: float, axis: str = "X") -> Spectrum:
    """One-sided amplitude spectrum of ``samples`` zero-padded to the next power of two.

    Rectangular window, no taper. Interior bins are scaled 2/N, the DC and
    Nyquist bins 1/N, so a unit on-bin sine reads 1.0 at its bin.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise EmptySignal("fft_magnitude needs at least 2 samples")
    if not np.isfinite(x).all():
        raise NonFinite("fft_magnitude input must be finite")
    if sample_rate_hz <= 0:
        raise InvalidParam("sample_rate_hz must be positive")
    if axis not in ("X", "Y"):
        raise InvalidParam("axis must be 'X' or 'Y'")
    n = x.size
    n_padded = _next_pow2(n)
    padded = np.zeros(n_padded)
    padded[:n] = x
    bins = np.fft.rfft(padded)
    mags = np.abs(bins) * (2.0 / n_padded)
    mags[0] = np.abs(bins[0]) / n_padded
    # n_padded is a power of two >= 2, so the last bin is always Nyquist.
    mags[-1] = np.abs(bins[-1]) / n_padded
    return Spectrum(
        freq_resolution_hz=sample_rate_hz / n_padded,
        magnitudes=mags,
        source_axis=axis,
        n_time_samples=n,
    )


def spectrum_energy(spectrum: Spectrum) -> float:
    """Time-domain energy implied by the one-sided magnitudes (Parseval)."""
    m = spectrum.magnitudes
    n = spectrum.n_padded
    interior = float(np.sum(m[1:-1] ** 2))
    return n * (float(m[0]) ** 2 + float(m[-1]) ** 2 + 0.5 * interior)


# The second harmonic leads by a quarter cycle, which skews the waveform
# the way a real rotor with combined 1x/2x content does; a symmetric
# waveform would leave the time-domain shape statistics carrying nothing
# but sampling noise.
HARMONIC_2X_PHASE = np.pi / 2.0


def _tone_bank(
    state: MachineState, operating_freq_hz: float
) -> tuple[list[tuple[float, float, float]], list[tuple[float, float, float]]]:
    """(frequency, amplitude, phase) triples per axis for a machine state."""
    f0 = operating_freq_hz
    harmonics = [
        (2.0 * f0, HARMONIC_AMPLITUDE, HARMONIC_2X_PHASE),
        (3.0 * f0, HARMONIC_AMPLITUDE, 0.0),
    ]
    if state is MachineState.NORMAL:
        tones = [(f0, BASE_AMPLITUDE, 0.0)] + harmonics
        return tones, list(tones)
    if state is MachineState.IMBALANCE:
        x_tones = [(f0, BASE_AMPLITUDE, 0.0)] + harmonics
        y_tones = [(f0, IMBALANCE_RADIAL_GAIN * BASE_AMPLITUDE, 0.0)] + harmonics
        return x_tones, y_tones
    if state is MachineState.LOOSENESS:
        tones = [(f0, LOOSENESS_1X_FACTOR * BASE_AMPLITUDE, 0.0)]
        tones += [(m * f0, LOOSENESS_TONE_AMPLITUDE, 0.0) for m in LOOSENESS_MULTIPLES]
        return tones, list(tones)
    if state is MachineState.POWER_OFF:
        return [], []
    raise InvalidParam(f"unknown machine state {state!r}")


def generate_window(
    state: MachineState,
    operating_freq_hz: float = DEFAULT_OPERATING_FREQ_HZ,
    window_len: int = DEFAULT_WINDOW_LEN,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    noise_sd: float = DEFAULT_NOISE_SD,
    temp_c: float = 70.0,
    rng: np.random.Generator | None = None,
    timestamp: int = 0,
) -> SignalWindow:
    """Synthesize one window for ``state``.

    The rng is consumed in a fixed order (X noise, then Y noise) so a
    given seed always produces the same window.
    """
    if window_len < 2:
        raise InvalidParam("window_len must be at least 2")
    if sample_rate_hz <= 0 or operating_freq_hz <= 0:
        raise InvalidParam("rates and frequencies must be positive")
    if noise_sd <= 0:
        raise InvalidParam("noise_sd must be positive")
    if rng is None:
        rng = np.random.default_rng(0)

    t = np.arange(window_len) / sample_rate_hz
    x_tones, y_tones = _tone_bank(state, operating_freq_hz)
    x = np.zeros(window_len)
    y = np.zeros(window_len)
    for freq, amp, phase in x_tones:
        x += amp * np.sin(2.0 * np.pi * freq * t + phase)
    for freq, amp, phase in y_tones:
        y += amp * np.sin(2.0 * np.pi * freq * t + phase)

    sd = noise_sd * POWER_OFF_NOISE_FACTOR if state is MachineState.POWER_OFF else noise_sd
    x = x + rng.normal(0.0, sd, window_len)
    y = y + rng.normal(0.0, sd, window_len)

    return SignalWindow(
        timestamp=int(timestamp),
        sample_rate_hz=float(sample_rate_hz),
        x_samples=x,
        y_samples=y,
        ambient_temp_c=float(temp_c) + TEMP_OFFSET_C[state],
    )


@dataclass(frozen=True)
class ScenarioSegment:
    """A run of consecutive windows in one machine state."""

    state: MachineState
    n_windows: int
    base_temp_c: float
    temp_drift_c: float = 0.0

    def __post_init__(self) -> None:
        if self.n_windows < 1:
            raise InvalidParam("n_windows must be at least 1")


@dataclass(frozen=True)
class SyntheticScenario:
    """Ordered state segments plus the shared generator parameters."""

    segments: tuple[ScenarioSegment, ...]
    operating_freq_hz: float = DEFAULT_OPERATING_FREQ_HZ
    window_len: int = DEFAULT_WINDOW_LEN
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    noise_sd: float = DEFAULT_NOISE_SD
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise InvalidParam("scenario needs at least one segment")
        if self.operating_freq_hz <= 0 or self.sample_rate_hz <= 0:
            raise InvalidParam("frequencies must be positive")
        if self.window_len < 2:
            raise InvalidParam("window_len must be at least 2")
        if self.noise_sd <= 0:
            raise InvalidParam("noise_sd must be positive")
        if not 0 <= int(self.rng_seed) < (1 << 64):
            raise InvalidParam("rng_seed must fit in 64 unsigned bits")

    @property
    def n_windows(self) -> int:
        return sum(seg.n_windows for seg in self.segments)


def generate_scenario(scenario: SyntheticScenario) -> list[tuple[SignalWindow, MachineState]]:
    """Generate the scenario's windows in timestamp order (300 s spacing from t=0).

    Each window gets its own child stream spawned from the scenario seed,
    so output is bit-identical for a fixed seed and windows could be
    generated in any order.
    """
    children = np.random.SeedSequence(scenario.rng_seed).spawn(scenario.n_windows)
    out: list[tuple[SignalWindow, MachineState]] = []
    timestamp = 0
    index = 0
    for seg in scenario.segments:
        for j in range(seg.n_windows):
            frac = j / (seg.n_windows - 1) if seg.n_windows > 1 else 0.0
            temp = seg.base_temp_c + seg.temp_drift_c * frac
            window = generate_window(
                seg.state,
                operating_freq_hz=scenario.operating_freq_hz,
                window_len=scenario.window_len,
                sample_rate_hz=scenario.sample_rate_hz,
                noise_sd=scenario.noise_sd,
                temp_c=temp,
                rng=np.random.default_rng(children[index]),
                timestamp=timestamp,
            )
            out.append((window, seg.state))
            timestamp += WINDOW_SPACING_S
            index += 1
    return out
