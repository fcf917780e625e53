"""Time-frequency analysis of sampled signals with the Wannier basis.

Time plays the role of ``x`` (seconds) and angular frequency the role of
``k`` (rad/s).  On the default lattice one Planck cell is 1 s by 1 Hz, so
band ``j_k`` is centred on ``j_k`` Hz.  STFT and Morlet-wavelet maps are
provided as baselines.

Noise for the synthetic test signal comes from PCG64 (XSL-RR 128/64) seeded
with the reference ``setseq`` procedure: ``state = 0``, ``inc = 2*S + 1``,
one LCG step, ``state += seed``, one more step, with stream constant
``S = PCG_STREAM``.  Each raw 64-bit output ``r`` becomes the uniform
``((r >> 11) + 0.5) * 2**-53`` and consecutive uniforms ``(u1, u2)`` give two
normals by Box-Muller, ``sqrt(-2 ln u1) * (cos 2 pi u2, sin 2 pi u2)``.
"""

from __future__ import annotations

import csv
import math
import wave
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .basis import WannierBasis
from .export import write_dense_csv
from .lattice import LatticeParams
from .projection import CoefficientMap, project
from .states import StateX

PCG_MULT = 0x2360ED051FC65DA44385DF649FCCF645
PCG_STREAM = 0xDA3E39CB94B95BDB
MORLET_OMEGA0 = 6.0
STORAGE_FRACTION = 0.01
_MASK128 = (1 << 128) - 1


@dataclass(frozen=True, eq=False)
class Signal:
    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("signal samples must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise ValueError("signal samples must be finite")
        if not (math.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise ValueError("sample rate must be positive")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.sample_rate

    @property
    def energy(self) -> float:
        return float(np.sum(self.samples**2)) / self.sample_rate


@dataclass(frozen=True)
class Component:
    """One deterministic ingredient of a test signal.

    ``tone`` uses ``f0``; ``chirp`` sweeps linearly from ``f0`` to ``f1`` over
    its window; ``burst`` is a Gaussian envelope of width ``width`` seconds
    centred in its window, carrying ``f0``.
    """

    kind: str
    amplitude: float
    f0: float
    t_start: float
    t_stop: float
    f1: float | None = None
    width: float = 0.5

    def __post_init__(self):
        if self.kind not in ("tone", "chirp", "burst"):
            raise ValueError(f"unknown component kind {self.kind!r}")
        if self.t_stop <= self.t_start:
            raise ValueError("component window must have t_stop > t_start")
        if self.kind == "chirp" and self.f1 is None:
            raise ValueError("chirp needs an end frequency f1")
        if self.kind == "burst" and self.width <= 0:
            raise ValueError("burst width must be positive")

    def render(self, t: np.ndarray) -> np.ndarray:
        inside = (t >= self.t_start) & (t < self.t_stop)
        tau = t - self.t_start
        if self.kind == "tone":
            wave_ = np.sin(2 * np.pi * self.f0 * tau)
        elif self.kind == "chirp":
            rate = (self.f1 - self.f0) / (self.t_stop - self.t_start)
            wave_ = np.sin(2 * np.pi * (self.f0 * tau + 0.5 * rate * tau**2))
        else:
            centre = 0.5 * (self.t_start + self.t_stop)
            wave_ = np.exp(-0.5 * ((t - centre) / self.width) ** 2) * np.sin(2 * np.pi * self.f0 * (t - centre))
        return np.where(inside, self.amplitude * wave_, 0.0)


@dataclass(frozen=True)
class SignalSpec:
    components: tuple[Component, ...]
    noise_amplitude: float = 0.0
    rng_seed: int = 0
    sample_rate: float = 50.0
    duration: float = 64.0

    def tones(self) -> list[Component]:
        return [c for c in self.components if c.kind == "tone"]


def default_signal_spec(noise_amplitude: float = 0.1, seed: int = 7) -> SignalSpec:
    """Reproducible stand-in signal: two tones, a chirp and a burst in noise.

    At 50 Hz every component stays below 25 Hz, well inside the bands of the
    default lattice.
    """
    return SignalSpec(
        components=(
            Component("tone", 1.0, 5.0, 4.0, 18.0),
            Component("chirp", 0.8, 2.0, 20.0, 34.0, f1=20.0),
            Component("tone", 1.0, 12.0, 36.0, 50.0),
            Component("burst", 1.5, 8.0, 53.0, 59.0, width=0.5),
        ),
        noise_amplitude=noise_amplitude,
        rng_seed=seed,
    )


def _pcg_seed_state(seed: int) -> tuple[int, int]:
    inc = ((PCG_STREAM << 1) | 1) & _MASK128
    state = inc  # one step from state 0
    state = (state + (seed & _MASK128)) & _MASK128
    state = (state * PCG_MULT + inc) & _MASK128
    return state, inc


def pcg64_raw(seed: int, count: int) -> np.ndarray:
    """``count`` raw 64-bit outputs of the documented PCG64 stream."""
    state, inc = _pcg_seed_state(int(seed))
    bitgen = np.random.PCG64()
    bitgen.state = {"bit_generator": "PCG64", "state": {"state": state, "inc": inc},
                    "has_uint32": 0, "uinteger": 0}
    return bitgen.random_raw(count)


def gaussian_noise(seed: int, count: int) -> np.ndarray:
    """Standard normals by Box-Muller on the PCG64 stream."""
    pairs = (count + 1) // 2
    raw = pcg64_raw(seed, 2 * pairs)
    u = ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53
    u1, u2 = u[0::2], u[1::2]
    radius = np.sqrt(-2 * np.log(u1))
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(2 * np.pi * u2)
    out[1::2] = radius * np.sin(2 * np.pi * u2)
    return out[:count]


def make_test_signal(spec: SignalSpec | None = None) -> Signal:
    spec = default_signal_spec() if spec is None else spec
    if not spec.components and spec.noise_amplitude == 0:
        raise ValueError("signal spec has no components and no noise")
    n = int(round(spec.sample_rate * spec.duration))
    if n < 1:
        raise ValueError("signal spec yields no samples")
    t = np.arange(n) / spec.sample_rate
    samples = np.zeros(n)
    for comp in spec.components:
        samples += comp.render(t)
    if spec.noise_amplitude:
        samples += spec.noise_amplitude * gaussian_noise(spec.rng_seed, n)
    return Signal(spec.sample_rate, samples)


@dataclass(frozen=True, eq=False)
class TFMap:
    """``magnitudes[i, j]`` at ``freq_axis[i]`` (Hz) and ``time_axis[j]`` (s)."""

    time_axis: np.ndarray
    freq_axis: np.ndarray
    magnitudes: np.ndarray
    kind: str = ""
    parseval_defect: float | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.magnitudes.shape != (len(self.freq_axis), len(self.time_axis)):
            raise ValueError("magnitude matrix does not match the axes")
        if np.any(self.magnitudes < 0):
            raise ValueError("magnitudes must be nonnegative")

    @property
    def size(self) -> int:
        return int(self.magnitudes.size)

    def nonzero_cells(self, fraction: float = STORAGE_FRACTION) -> int:
        """Entries above ``fraction`` of the largest magnitude."""
        peak = self.magnitudes.max(initial=0.0)
        return int(np.count_nonzero(self.magnitudes > fraction * peak)) if peak > 0 else 0

    def to_dense_csv(self, path) -> None:
        write_dense_csv(path, self.freq_axis, self.time_axis, self.magnitudes, corner="f_hz\\t_s")


def embed_signal(signal: Signal, params: LatticeParams, grid=None) -> StateX:
    """Band-limited resampling of ``signal`` onto the canonical x-grid.

    Time zero sits at the first grid sample.  The record is zero-padded to the
    domain length and then resampled by FFT, so an integer-second shift of the
    input moves the embedded signal by exactly one cell.
    """
    from .lattice import make_grid

    grid = make_grid(params) if grid is None else grid
    span = params.nk * params.x0
    n_pad = int(round(span * signal.sample_rate))
    if abs(span * signal.sample_rate - n_pad) > 1e-9 * n_pad:
        raise ValueError(f"domain of {span} s is not a whole number of samples at {signal.sample_rate} Hz")
    if len(signal.samples) > n_pad:
        raise ValueError(f"signal of {signal.duration:.3f} s is longer than the {span} s domain")
    padded = np.zeros(n_pad)
    padded[:len(signal.samples)] = signal.samples
    if n_pad == grid.n_samples:
        resampled = padded
    else:
        resampled = scipy.signal.resample(padded, grid.n_samples)
    return StateX(grid, resampled)


def wannier_coefficients(signal: Signal, basis: WannierBasis) -> tuple[CoefficientMap, StateX]:
    state = embed_signal(signal, basis.params, basis.grid)
    return project(basis, state), state


def wannier_tfa(signal: Signal, basis: WannierBasis) -> TFMap:
    """Cell magnitudes ``|<w_j|s>|`` folded onto nonnegative bands.

    For a real signal ``|c_{j_x,-j_k}| = |c_{j_x,j_k}|``; band ``j_k > 0``
    reports ``sqrt(|c_{j_x,j_k}|^2 + |c_{j_x,-j_k}|^2)`` so the squared map
    still sums to the captured energy.
    """
    coeffs, state = wannier_coefficients(signal, basis)
    p = basis.params
    power = np.abs(coeffs.values) ** 2  # [j_x, j_k]
    J = p.jk_cutoff
    folded = power[:, J:].copy()
    folded[:, 1:] += power[:, J - 1::-1]
    dt = basis.grid.dx
    time_axis = (p.jx_values - p.jx_values[0]) * p.x0 + 0.5 * p.x0 - 0.5 * dt
    freq_axis = np.arange(J + 1) * p.k0 / (2 * math.pi)
    energy = state.norm**2
    return TFMap(time_axis, freq_axis, np.sqrt(folded.T), kind="wannier",
                 parseval_defect=coeffs.completeness_defect,
                 extras={"energy": energy, "captured": float(power.sum())})


def stft(signal: Signal, window_length: int | None = None, hop: int | None = None) -> TFMap:
    """Hann-window magnitude spectrogram; the hop defaults to half a window."""
    n = len(signal.samples)
    if window_length is None:
        window_length = min(n, int(round(4 * signal.sample_rate)))
    window_length = int(window_length)
    if window_length < 2 or window_length > n:
        raise ValueError(f"window length {window_length} must lie in [2, {n}]")
    hop = window_length // 2 if hop is None else int(hop)
    if hop < 1 or hop > window_length:
        raise ValueError(f"hop {hop} must lie in [1, window length {window_length}]")
    freqs, times, Z = scipy.signal.stft(signal.samples, fs=signal.sample_rate, window="hann",
                                        nperseg=window_length, noverlap=window_length - hop)
    return TFMap(times, freqs, np.abs(Z), kind="stft")


def default_scales(signal: Signal, count: int = 64, f_min: float = 0.5) -> np.ndarray:
    f_max = 0.45 * signal.sample_rate
    freqs = np.geomspace(f_min, f_max, count)
    return MORLET_OMEGA0 / (2 * np.pi * freqs)


def cwt_morlet(signal: Signal, scales=None, omega0: float = MORLET_OMEGA0) -> TFMap:
    """Morlet scalogram by FFT filtering.

    Scale ``s`` (seconds) passes ``2 exp(-(s w - omega0)^2 / 2)`` on positive
    angular frequencies ``w``, so a unit-amplitude tone at ``w`` gives a ridge
    of height one at ``s = omega0/w``.  The record is zero-padded to twice its
    length to keep circular wrap out of the map.
    """
    scales = default_scales(signal) if scales is None else np.atleast_1d(np.asarray(scales, dtype=float))
    if np.any(~np.isfinite(scales)) or np.any(scales <= 0):
        raise ValueError("wavelet scales must be positive")
    n = len(signal.samples)
    n_fft = 1 << max(1, (2 * n - 1).bit_length())
    spectrum = np.fft.fft(signal.samples, n_fft)
    omega = 2 * np.pi * np.fft.fftfreq(n_fft, d=1 / signal.sample_rate)
    positive = omega > 0
    out = np.empty((len(scales), n))
    for i, s in enumerate(scales):
        response = np.where(positive, 2 * np.exp(-0.5 * (s * omega - omega0) ** 2), 0.0)
        out[i] = np.abs(np.fft.ifft(spectrum * response)[:n])
    freqs = omega0 / (2 * np.pi * scales)
    return TFMap(signal.times, freqs, out, kind="cwt", extras={"scales": scales})


def tone_band_energy(tf: TFMap, tone: Component) -> float:
    """Mean squared magnitude on the map row nearest the tone, inside its window."""
    row = int(np.argmin(np.abs(tf.freq_axis - tone.f0)))
    cols = (tf.time_axis >= tone.t_start) & (tf.time_axis <= tone.t_stop)
    if not np.any(cols):
        raise ValueError("tone window does not overlap the map's time axis")
    return float(np.mean(tf.magnitudes[row, cols] ** 2))


def detection_ratios(tf: TFMap, spec: SignalSpec) -> list[float]:
    """Tone band energy over the median cell energy, one entry per planted tone."""
    median = float(np.median(tf.magnitudes**2))
    ratios = []
    for tone in spec.tones():
        energy = tone_band_energy(tf, tone)
        ratios.append(math.inf if median == 0 else energy / median)
    return ratios


def load_signal_csv(path) -> Signal:
    """Read ``t, value`` rows; the time column must be uniformly spaced."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    if len(rows) < 2:
        raise ValueError("signal CSV needs at least two samples")
    data = np.array([[float(r[0]), float(r[1])] for r in rows])
    steps = np.diff(data[:, 0])
    dt = float(np.median(steps))
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise ValueError("signal CSV time column is not uniformly spaced")
    return Signal(1.0 / dt, data[:, 1])


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def save_signal_csv(signal: Signal, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "value"])
        for t, v in zip(signal.times, signal.samples):
            writer.writerow([repr(float(t)), repr(float(v))])


def load_signal_wav(path) -> Signal:
    """16-bit PCM mono WAV, scaled to ``[-1, 1)``."""
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
                raise ValueError("WAV input must be 16-bit PCM mono")
            rate = fh.getframerate()
            frames = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise ValueError(f"malformed WAV file {path}: {exc or type(exc).__name__}") from exc
    data = np.frombuffer(frames, dtype="<i2").astype(float) / 32768.0
    return Signal(float(rate), data)


def load_signal(path) -> Signal:
    path = str(path)
    return load_signal_wav(path) if path.lower().endswith(".wav") else load_signal_csv(path)
