"""Band-pass preprocessing and the three domain transforms.

Time view: the raw normalized signal matrix (fed to the 1D encoder).
Frequency view: standardized FFT magnitude features.
Time-frequency view: Morlet scalograms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .imageops import bilinear_resize
from .ingest import LabeledDataset, Signal1D

TIME = "Time"
FREQUENCY = "Frequency"
TIME_FREQUENCY = "TimeFrequency"
DEEP = "Deep"

_DOMAINS = (TIME, FREQUENCY, TIME_FREQUENCY, DEEP)

MORLET_OMEGA0 = 6.0
# Morlet center frequency in cycles per unit scale.
MORLET_FC = MORLET_OMEGA0 / (2.0 * np.pi)


@dataclass
class BandpassSpec:
    low_hz: float = 0.5
    high_hz: float = 45.0
    transition_hz: float = 0.25

    def validate(self, sample_rate: float) -> None:
        if not (0.0 < self.low_hz < self.high_hz):
            raise InvalidInput("require 0 < low_hz < high_hz")
        if self.high_hz >= sample_rate / 2.0:
            raise InvalidInput(
                f"band edge {self.high_hz} Hz exceeds Nyquist {sample_rate / 2.0} Hz"
            )
        if self.transition_hz <= 0:
            raise InvalidInput("transition_hz must be positive")


@dataclass
class FeatureMatrix:
    """n x d feature matrix tagged with its domain of origin."""

    data: np.ndarray
    domain: str
    feature_names: list[str] | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise InvalidInput(f"feature matrix must be n x d with n,d >= 1, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise InvalidInput("feature matrix contains non-finite entries")
        if self.domain not in _DOMAINS:
            raise InvalidInput(f"unknown domain tag {self.domain!r}")
        if self.feature_names is not None and len(self.feature_names) != self.data.shape[1]:
            raise InvalidInput("feature_names length must equal the number of columns")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass
class Scalogram:
    """Scale x time magnitude grid with the pseudo-frequency axis."""

    power: np.ndarray
    scales_hz: np.ndarray
    signal_ref: str = ""

    def __post_init__(self):
        self.power = np.asarray(self.power, dtype=float)
        self.scales_hz = np.asarray(self.scales_hz, dtype=float)
        if self.power.ndim != 2 or min(self.power.shape) < 2:
            raise InvalidInput("scalogram must be at least 2 x 2")
        if np.any(self.power < 0):
            raise InvalidInput("scalogram power must be nonnegative")
        diffs = np.diff(self.scales_hz)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise InvalidInput("scales_hz must be strictly monotone")


def bandpass(signal: Signal1D, spec: BandpassSpec) -> Signal1D:
    """Zero-phase FFT-mask band-pass with raised-cosine edges; DC removed."""
    spec.validate(signal.sample_rate)
    x = signal.samples
    n = x.size
    freqs = np.fft.rfftfreq(n, d=1.0 / signal.sample_rate)

    t = spec.transition_hz
    gain = np.ones_like(freqs)
    # Rising edge over [low - t, low], falling edge over [high, high + t].
    lo, hi = spec.low_hz, spec.high_hz
    below = freqs <= lo - t
    rising = (freqs > lo - t) & (freqs < lo)
    gain[below] = 0.0
    gain[rising] = 0.5 * (1.0 - np.cos(np.pi * (freqs[rising] - (lo - t)) / t))
    above = freqs >= hi + t
    falling = (freqs > hi) & (freqs < hi + t)
    gain[above] = 0.0
    gain[falling] = 0.5 * (1.0 + np.cos(np.pi * (freqs[falling] - hi) / t))
    gain[0] = 0.0  # DC always removed

    y = np.fft.irfft(np.fft.rfft(x) * gain, n=n)
    return Signal1D(y, signal.sample_rate, signal.label, signal.patient_id, signal.source_id)


def fft_features(signal: Signal1D, fft_bins: int) -> np.ndarray:
    """Magnitude spectrum at ``fft_bins`` points; first ceil(bins/2)+1 values.

    The signal is zero-padded or truncated to ``fft_bins`` samples.
    """
    if fft_bins < 2:
        raise InvalidInput("fft_bins must be >= 2")
    spectrum = np.fft.fft(signal.samples, n=fft_bins)
    keep = min(fft_bins, int(np.ceil(fft_bins / 2)) + 1)
    return np.abs(spectrum[:keep])


def next_pow2(n: int) -> int:
    return 1 << max(0, int(np.ceil(np.log2(max(1, n)))))


def standardize(m: FeatureMatrix, *, means=None, sds=None) -> tuple[FeatureMatrix, np.ndarray, np.ndarray]:
    """Column z-scores (population sd). Near-constant columns are centered
    only and their sd is recorded as 0.

    Pass precomputed ``means``/``sds`` to apply a previously fitted scaling
    (e.g. train statistics applied to validation/test rows).
    """
    x = m.data
    if means is None:
        if x.shape[0] < 2:
            raise InvalidInput("standardize requires n >= 2 to fit")
        means = x.mean(axis=0)
        sds = x.std(axis=0)
        sds = np.where(sds < 1e-12, 0.0, sds)
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    denom = np.where(sds == 0.0, 1.0, sds)
    out = (x - means) / denom
    return FeatureMatrix(out, m.domain, m.feature_names), means, sds


def _window_moments(w: np.ndarray) -> list[float]:
    mean = float(w.mean())
    var = float(w.var())
    ptp = float(w.max() - w.min())
    if var < 1e-24:
        # Zero-variance convention: both higher moments defined as 0.
        return [mean, var, ptp, 0.0, 0.0]
    sd = np.sqrt(var)
    centered = w - mean
    skew = float(np.mean(centered**3) / sd**3)
    kurt = float(np.mean(centered**4) / var**2 - 3.0)
    return [mean, var, ptp, skew, kurt]


TIME_FEATURE_NAMES = ["mean", "variance", "ptp", "skewness", "kurtosis"]


def time_features(signal: Signal1D, window_len: int, hop: int) -> np.ndarray:
    """Windowed [mean, variance, peak-to-peak, skewness, excess kurtosis].

    Windows start at 0, hop, 2*hop, ...; a trailing partial window is dropped.
    """
    n = signal.samples.size
    if window_len > n:
        raise InvalidInput(f"window_len {window_len} exceeds signal length {n}")
    if window_len < 1 or hop < 1:
        raise InvalidInput("window_len and hop must be >= 1")
    feats: list[float] = []
    start = 0
    while start + window_len <= n:
        feats.extend(_window_moments(signal.samples[start : start + window_len]))
        start += hop
    return np.array(feats)


def _morlet_cwt_fft(x: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Complex Morlet CWT magnitudes via per-scale spectral multiplication.

    ``scales`` are in samples. Returns |W| of shape (len(scales), len(x)).
    """
    n = x.size
    nfft = next_pow2(2 * n)  # pad to damp wrap-around
    xhat = np.fft.fft(x, n=nfft)
    omega = 2.0 * np.pi * np.fft.fftfreq(nfft)  # rad/sample
    out = np.empty((scales.size, n))
    for i, s in enumerate(scales):
        # Analytic Morlet: support only on positive frequencies.
        psi_hat = np.zeros(nfft)
        pos = omega > 0
        psi_hat[pos] = (np.pi**-0.25) * np.exp(-0.5 * (s * omega[pos] - MORLET_OMEGA0) ** 2)
        psi_hat *= np.sqrt(2.0 * np.pi * s)
        w = np.fft.ifft(xhat * psi_hat)[:n]
        out[i] = np.abs(w)
    return out


def scalogram(
    signal: Signal1D,
    n_scales: int,
    out_size: tuple[int, int] = (32, 32),
    *,
    freq_range_hz: tuple[float, float] = (0.5, 45.0),
    normalize: bool = True,
) -> Scalogram:
    """Morlet scalogram over log-spaced pseudo-frequencies, resized to ``out_size``.

    Rows run from the highest to the lowest pseudo-frequency. The magnitude
    grid is max-normalized to [0, 1] unless ``normalize`` is False. An
    all-zero signal yields an all-zero scalogram.
    """
    if n_scales < 2:
        raise InvalidInput("n_scales must be >= 2")
    if signal.samples.size < 8:
        raise InvalidInput("signal too short for a scalogram (need >= 8 samples)")
    s_rows, t_cols = out_size
    if s_rows < 2 or t_cols < 2:
        raise InvalidInput("out_size must be at least 2 x 2")

    nyq = signal.sample_rate / 2.0
    f_lo = max(freq_range_hz[0], 1e-6)
    f_hi = min(freq_range_hz[1], nyq)
    if f_hi <= f_lo:
        raise InvalidInput(f"frequency range [{f_lo}, {f_hi}] Hz is empty at fs={signal.sample_rate}")
    freqs = np.geomspace(f_hi, f_lo, n_scales)  # descending
    scales = MORLET_FC * signal.sample_rate / freqs  # samples, ascending

    mag = _morlet_cwt_fft(signal.samples, scales)
    grid = bilinear_resize(mag, s_rows, t_cols)
    grid = np.maximum(grid, 0.0)
    if normalize:
        peak = grid.max()
        if peak > 0:
            grid = grid / peak
    row_freqs = bilinear_resize(freqs[:, None], s_rows, 1)[:, 0]
    return Scalogram(grid, row_freqs, signal_ref=signal.source_id)


@dataclass
class DomainViewConfig:
    fft_bins: int | None = None  # default: next power of two >= signal length
    n_scales: int = 24
    scalogram_size: tuple[int, int] = (32, 32)
    freq_range_hz: tuple[float, float] = (0.5, 45.0)


@dataclass
class DomainViews:
    time: FeatureMatrix
    frequency: FeatureMatrix
    scalograms: list[Scalogram]
    freq_means: np.ndarray = field(default=None, repr=False)
    freq_sds: np.ndarray = field(default=None, repr=False)

    def scalogram_tensor(self) -> np.ndarray:
        """Stack scalograms into (n, S, T, 1) for the 2D encoder."""
        return np.stack([s.power for s in self.scalograms])[..., None]


def build_domain_views(
    dataset: LabeledDataset,
    cfg: DomainViewConfig | None = None,
    *,
    freq_scaler: tuple[np.ndarray, np.ndarray] | None = None,
) -> DomainViews:
    """Build the three aligned domain views; row order matches ``dataset.signals``.

    ``freq_scaler`` is the (means, sds) pair fitted on a training partition;
    when given it is applied instead of refitting, so validation/test rows
    never influence the scaling.
    """
    cfg = cfg or DomainViewConfig()
    if not dataset.signals:
        raise InvalidInput("dataset is empty")
    sig_matrix = dataset.signal_matrix()
    length = sig_matrix.shape[1]
    bins = cfg.fft_bins or next_pow2(length)

    time_view = FeatureMatrix(sig_matrix, TIME)

    fft_rows = np.stack([fft_features(s, bins) for s in dataset.signals])
    raw_freq = FeatureMatrix(fft_rows, FREQUENCY,
                             feature_names=[f"fft_mag_{i}" for i in range(fft_rows.shape[1])])
    if freq_scaler is not None:
        freq_view, means, sds = standardize(raw_freq, means=freq_scaler[0], sds=freq_scaler[1])
    else:
        freq_view, means, sds = standardize(raw_freq)

    grams = [
        scalogram(s, cfg.n_scales, cfg.scalogram_size, freq_range_hz=cfg.freq_range_hz)
        for s in dataset.signals
    ]
    return DomainViews(time_view, freq_view, grams, means, sds)


def feature_matrix_to_csv(m: FeatureMatrix, path) -> None:
    """Write a FeatureMatrix as CSV: header of feature names, then rows."""
    names = m.feature_names or [f"f{i}" for i in range(m.d)]
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in m.data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def scalogram_to_csv(s: Scalogram, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(repr(float(v)) for v in s.scales_hz) + "\n")
        for row in s.power:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
