"""Signal-processing primitives and the McAdams-coefficient anonymizer.

Conventions used throughout the package:

* STFT frames are centred: the signal is reflect-padded by ``n_fft // 2`` on
  both sides, so frame ``t`` is centred on sample ``t * hop``.
* The window is a periodic Hann of length ``win``, zero-padded to ``n_fft``.
* The mel filterbank uses the HTK mel scale, unnormalised triangles, and is
  applied to the STFT *magnitude*.
* LPC coefficients use the predictor sign convention
  ``x[n] ~ sum_k a_k x[n - k]``; the analysis polynomial is
  ``A(z) = 1 - sum_k a_k z^-k``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import lfilter

logger = logging.getLogger(__name__)

# Root-polishing target for LPC pole finding.
ROOT_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class Waveform:
    """Mono audio samples with their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class MelConfig:
    n_fft: int = 1024
    hop: int = 256
    win: int = 1024
    n_mels: int = 80
    f_min: float = 0.0
    f_max: float = 8000.0

    def __post_init__(self):
        if not 0 < self.hop <= self.win <= self.n_fft:
            raise ValueError(
                f"need 0 < hop <= win <= n_fft, got hop={self.hop} win={self.win} n_fft={self.n_fft}"
            )
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if not 0 <= self.f_min < self.f_max:
            raise ValueError(f"need 0 <= f_min < f_max, got {self.f_min}, {self.f_max}")

    def check_rate(self, sample_rate: int) -> None:
        if self.f_max > sample_rate / 2:
            raise ValueError(f"f_max={self.f_max} exceeds Nyquist for sample rate {sample_rate}")


@dataclass(frozen=True)
class LpcFrame:
    """Result of LPC analysis on one frame.

    ``degenerate`` is set for zero-energy frames, where the coefficients are
    all zero and the gain is zero.
    """

    coeffs: np.ndarray
    gain: float
    degenerate: bool = False

    @property
    def order(self) -> int:
        return len(self.coeffs)

    @property
    def polynomial(self) -> np.ndarray:
        """Analysis polynomial ``[1, -a_1, ..., -a_p]``."""
        return np.concatenate(([1.0], -self.coeffs))


@dataclass(frozen=True)
class McAdamsConfig:
    frame_len: int = 400
    hop: int = 160
    order: int = 20
    max_pole_radius: float = 0.998

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_len:
            raise ValueError("need 0 < hop <= frame_len")
        if not 1 <= self.order < self.frame_len:
            raise ValueError("need 1 <= order < frame_len")
        if not 0 < self.max_pole_radius < 1:
            raise ValueError("max_pole_radius must lie in (0, 1)")


def frame_signal(x, frame_len: int, hop: int) -> np.ndarray:
    """Slice ``x`` into overlapping frames (one per row).

    Returns an array of shape ``(n_frames, frame_len)`` with
    ``n_frames = (len(x) - frame_len) // hop + 1``, or zero rows when the
    input is shorter than one frame.
    """
    if isinstance(x, Waveform):
        x = x.samples
    x = np.asarray(x, dtype=np.float64)
    if frame_len < 1 or hop < 1:
        raise ValueError(f"frame_len and hop must be >= 1, got {frame_len}, {hop}")
    if len(x) < frame_len:
        return np.empty((0, frame_len))
    return np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop].copy()


def periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft_magnitude(w: Waveform, cfg: MelConfig) -> np.ndarray:
    """Centred STFT magnitude, shape ``(n_fft // 2 + 1, n_frames)``."""
    if len(w) == 0:
        raise ValueError("cannot analyse an empty waveform")
    pad = cfg.n_fft // 2
    mode = "reflect" if len(w) > 1 else "constant"
    x = np.pad(w.samples, pad, mode=mode)
    window = np.zeros(cfg.n_fft)
    left = (cfg.n_fft - cfg.win) // 2
    window[left:left + cfg.win] = periodic_hann(cfg.win)
    frames = frame_signal(x, cfg.n_fft, cfg.hop)
    return np.abs(np.fft.rfft(frames * window, axis=1)).T


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(cfg: MelConfig) -> np.ndarray:
    """The ``n_mels + 2`` band edge frequencies (Hz); band ``i`` peaks at edge ``i + 1``."""
    return mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2))


def mel_band_centers(cfg: MelConfig) -> np.ndarray:
    return mel_band_edges(cfg)[1:-1]


@lru_cache(maxsize=16)
def _mel_filterbank(cfg: MelConfig, sample_rate: int) -> np.ndarray:
    edges = mel_band_edges(cfg)
    freqs = np.arange(cfg.n_fft // 2 + 1) * sample_rate / cfg.n_fft
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.flags.writeable = False
    return fb


def mel_filterbank(cfg: MelConfig, sample_rate: int) -> np.ndarray:
    """Triangular HTK filterbank, shape ``(n_mels, n_fft // 2 + 1)``."""
    cfg.check_rate(sample_rate)
    return _mel_filterbank(cfg, sample_rate)


def mel_spectrogram(w: Waveform, cfg: MelConfig | None = None) -> np.ndarray:
    """Linear-amplitude mel spectrogram, shape ``(n_mels, n_frames)``.

    No log compression is applied; callers that want log-mel take the log
    themselves.
    """
    cfg = cfg or MelConfig()
    fb = mel_filterbank(cfg, w.sample_rate)
    return fb @ stft_magnitude(w, cfg)


def autocorrelation(frame, max_lag: int) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    n = len(frame)
    return np.array([frame[: n - k] @ frame[k:] for k in range(max_lag + 1)])


def levinson(r, order: int) -> LpcFrame:
    """Levinson-Durbin recursion on autocorrelation values ``r[0..order]``."""
    r = np.asarray(r, dtype=np.float64)
    if len(r) < order + 1:
        raise ValueError(f"need {order + 1} autocorrelation values, got {len(r)}")
    if r[0] <= 0.0:
        return LpcFrame(np.zeros(order), 0.0, degenerate=True)
    a = np.zeros(order)
    err = r[0]
    for i in range(order):
        k = (r[i + 1] - a[:i] @ r[i:0:-1]) / err
        a[:i] = a[:i] - k * a[:i][::-1]
        a[i] = k
        err *= 1.0 - k * k
        if err <= r[0] * 1e-15:
            # Perfectly predictable; higher orders add nothing.
            err = max(err, 0.0)
            break
    return LpcFrame(a, float(err))


def lpc_coeffs(frame, order: int) -> LpcFrame:
    """Autocorrelation-method LPC of ``frame``."""
    frame = np.asarray(frame, dtype=np.float64)
    if order < 1 or len(frame) <= order:
        raise ValueError(f"need len(frame) > order >= 1, got len={len(frame)}, order={order}")
    r = autocorrelation(frame, order)
    if r[0] == 0.0:
        logger.debug("zero-energy frame in LPC analysis")
    return levinson(r, order)


def polynomial_roots(poly) -> np.ndarray:
    """Roots via companion-matrix eigenvalues, Newton-polished when needed."""
    poly = np.asarray(poly, dtype=np.float64)
    roots = np.roots(poly)
    deriv = np.polyder(poly)
    scale = np.sum(np.abs(poly))
    for _ in range(8):
        resid = np.polyval(poly, roots)
        if np.max(np.abs(resid), initial=0.0) <= ROOT_RESIDUAL_TOL * scale:
            break
        d = np.polyval(deriv, roots)
        safe = np.abs(d) > 0
        roots[safe] = roots[safe] - resid[safe] / d[safe]
    return roots


def clamp_pole_radius(poles, max_radius: float) -> np.ndarray:
    poles = np.asarray(poles, dtype=np.complex128)
    radius = np.abs(poles)
    scale = np.where(radius > max_radius, max_radius / np.maximum(radius, 1e-300), 1.0)
    return poles * scale


def shift_pole_angles(poles, alpha: float, max_radius: float = 0.998) -> np.ndarray:
    """Map each complex pole angle ``theta`` (upper half plane) to ``theta ** alpha``.

    Real poles keep their angle. Every pole magnitude is clamped to
    ``max_radius``. Conjugate partners are rebuilt as exact conjugates of the
    transformed upper-half-plane poles.
    """
    poles = np.asarray(poles, dtype=np.complex128)
    tol = 1e-12 * np.maximum(1.0, np.abs(poles))
    is_real = np.abs(poles.imag) <= tol
    real = poles[is_real].real
    upper = poles[~is_real & (poles.imag > 0)]
    lower_count = np.count_nonzero(~is_real & (poles.imag < 0))
    if lower_count != len(upper):
        raise ValueError("complex poles do not come in conjugate pairs")
    radius = np.minimum(np.abs(upper), max_radius)
    shifted = radius * np.exp(1j * np.angle(upper) ** alpha)
    real = np.clip(real, -max_radius, max_radius)
    return np.concatenate((real.astype(np.complex128), shifted, np.conj(shifted)))


def mcadams_anonymize(w: Waveform, alpha: float = 0.8, cfg: McAdamsConfig | None = None) -> Waveform:
    """Formant shifting by raising LPC pole angles to the power ``alpha``.

    Each Hann-windowed analysis frame is inverse filtered with its own LPC
    polynomial; the residual is re-filtered through the pole-shifted
    all-pole filter and the frames are overlap-added with window-sum
    normalisation. Pole radii are clamped to ``cfg.max_pole_radius`` before
    both filtering steps, so ``alpha = 1`` reproduces the input up to
    round-off.
    """
    cfg = cfg or McAdamsConfig()
    if not (np.isfinite(alpha) and alpha > 0):
        raise ValueError(f"alpha must be a positive finite number, got {alpha}")
    n = len(w)
    if n == 0:
        return w
    L, hop = cfg.frame_len, cfg.hop
    x = np.pad(w.samples, (L, L + hop))
    window = periodic_hann(L)
    out = np.zeros_like(x)
    norm = np.zeros_like(x)
    for start in range(0, len(x) - L + 1, hop):
        seg = x[start:start + L]
        norm[start:start + L] += window
        if not np.any(seg):
            continue
        lpc = lpc_coeffs(seg * window, cfg.order)
        if lpc.degenerate:
            y = seg
        else:
            # Clamping before inverse filtering keeps alpha=1 an exact identity.
            poles = clamp_pole_radius(polynomial_roots(lpc.polynomial), cfg.max_pole_radius)
            a = np.real(np.poly(poles))
            a_new = np.real(np.poly(shift_pole_angles(poles, alpha, cfg.max_pole_radius)))
            y = lfilter([1.0], a_new, lfilter(a, [1.0], seg))
        out[start:start + L] += y * window
    body = slice(L, L + n)
    return Waveform(out[body] / norm[body], w.sample_rate)
