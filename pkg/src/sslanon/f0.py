"""NCCF pitch candidates with Viterbi smoothing.

Frame ``t`` is centred on sample ``t * hop + hop // 2``, which gives exactly
``len(x) // hop`` frames. Each frame correlates a ``frame_len`` window
starting ``frame_len // 2`` samples before the centre against the same
window shifted by every candidate lag; samples outside the signal are zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import Waveform

ENERGY_FLOOR = 1e-12

# Relative lag penalty applied to candidate scores; favours the shortest
# period among near-equal correlation peaks (octave-down protection).
LAG_WEIGHT = 0.3


@dataclass(frozen=True)
class F0Config:
    f_min: float = 60.0
    f_max: float = 400.0
    frame_len: int = 400
    hop: int = 160
    nccf_threshold: float = 0.3
    dp_transition_cost: float = 1.0
    max_candidates: int = 6
    sample_rate: int = 16000

    def __post_init__(self):
        if not 0 < self.f_min < self.f_max <= self.sample_rate / 2:
            raise ValueError(f"need 0 < f_min < f_max <= Nyquist, got {self.f_min}, {self.f_max}")
        if self.frame_len < 1 or self.hop < 1:
            raise ValueError("frame_len and hop must be positive")
        if not 0 < self.nccf_threshold < 1:
            raise ValueError("nccf_threshold must lie in (0, 1)")
        if self.dp_transition_cost < 0:
            raise ValueError("dp_transition_cost must be >= 0")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")

    @property
    def min_lag(self) -> int:
        return int(np.floor(self.sample_rate / self.f_max))

    @property
    def max_lag(self) -> int:
        return int(np.ceil(self.sample_rate / self.f_min))


@dataclass(frozen=True)
class F0Track:
    f0_hz: np.ndarray
    voiced: np.ndarray
    hop: int = 160

    def __post_init__(self):
        f0 = np.asarray(self.f0_hz, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        if f0.shape != voiced.shape or f0.ndim != 1:
            raise ValueError("f0_hz and voiced must be 1-D arrays of equal length")
        if np.any((f0 == 0) == voiced):
            raise ValueError("f0 must be 0 exactly on unvoiced frames")
        object.__setattr__(self, "f0_hz", f0)
        object.__setattr__(self, "voiced", voiced)

    def __len__(self):
        return len(self.f0_hz)


def nccf(frame, lags) -> np.ndarray:
    """Normalised cross-correlation of ``frame`` at each lag in ``lags``.

    The correlation window is the first ``len(frame) - max(lags)`` samples;
    at lag ``k`` it is compared with the window shifted by ``k``. Frames with
    no energy give all zeros.
    """
    frame = np.asarray(frame, dtype=np.float64)
    lags = np.atleast_1d(np.asarray(lags, dtype=int))
    if lags.size == 0 or lags.min() < 0:
        raise ValueError("lags must be non-negative")
    n = len(frame) - int(lags.max())
    if n < 1:
        raise ValueError(f"frame of length {len(frame)} is too short for lag {lags.max()}")
    return _nccf_rows(frame[None, :], lags, n)[0]


def _nccf_rows(segments: np.ndarray, lags: np.ndarray, n: int) -> np.ndarray:
    ref = segments[:, :n]
    e0 = np.einsum("ij,ij->i", ref, ref)
    # Running energy of every length-n window, for all shifts at once.
    csum = np.concatenate((np.zeros((segments.shape[0], 1)), np.cumsum(segments**2, axis=1)), axis=1)
    out = np.empty((segments.shape[0], len(lags)))
    for j, k in enumerate(lags):
        shifted = segments[:, k:k + n]
        ek = csum[:, k + n] - csum[:, k]
        num = np.einsum("ij,ij->i", ref, shifted)
        den = np.sqrt(e0 * ek)
        ok = (e0 > ENERGY_FLOOR) & (ek > ENERGY_FLOOR)
        out[:, j] = np.where(ok, num / np.where(ok, den, 1.0), 0.0)
    return np.clip(out, -1.0, 1.0)


def frame_count(n_samples: int, hop: int = 160) -> int:
    return n_samples // hop


def _candidates(corr: np.ndarray, lags: np.ndarray, cfg: F0Config):
    """Peak lags (parabolically refined) and their correlation values."""
    out = []
    for t in range(corr.shape[0]):
        c = corr[t]
        inner = np.arange(1, len(c) - 1)
        peaks = inner[(c[inner] >= c[inner - 1]) & (c[inner] > c[inner + 1]) & (c[inner] >= cfg.nccf_threshold)]
        cands = []
        for p in peaks:
            y0, y1, y2 = c[p - 1], c[p], c[p + 1]
            denom = y0 - 2 * y1 + y2
            delta = 0.5 * (y0 - y2) / denom if denom < 0 else 0.0
            lag = lags[p] + delta
            f0 = float(np.clip(cfg.sample_rate / lag, cfg.f_min, cfg.f_max))
            cands.append((f0, float(y1), lag))
        cands.sort(key=lambda c_: -c_[1])
        out.append(cands[: cfg.max_candidates])
    return out


def _viterbi(cands, cfg: F0Config) -> list[float]:
    """Lowest-cost path through one run of frames that all have candidates."""
    max_lag = cfg.max_lag
    local = [np.array([1.0 - v * (1.0 - LAG_WEIGHT * lag / max_lag) for _, v, lag in c]) for c in cands]
    logf = [np.log([f for f, _, _ in c]) for c in cands]
    cost = local[0]
    back = []
    for t in range(1, len(cands)):
        trans = cfg.dp_transition_cost * np.abs(logf[t][:, None] - logf[t - 1][None, :])
        total = cost[None, :] + trans
        # argmin returns the first minimum, which is the stronger candidate.
        best = np.argmin(total, axis=1)
        back.append(best)
        cost = total[np.arange(len(best)), best] + local[t]
    path = [int(np.argmin(cost))]
    for best in reversed(back):
        path.append(int(best[path[-1]]))
    path.reverse()
    return [cands[t][i][0] for t, i in enumerate(path)]


def frame_nccf(w: Waveform, cfg: F0Config):
    """NCCF matrix ``(n_frames, n_lags)`` and the lag grid used."""
    # One extra lag each side so peaks at the range edges can be detected.
    lags = np.arange(max(cfg.min_lag - 1, 1), cfg.max_lag + 2)
    n_frames = frame_count(len(w), cfg.hop)
    if n_frames == 0:
        return np.zeros((0, len(lags))), lags
    half = cfg.frame_len // 2
    span = cfg.frame_len + int(lags[-1])
    centers = np.arange(n_frames) * cfg.hop + cfg.hop // 2
    x = np.pad(w.samples, (half, span))
    idx = centers[:, None] + np.arange(span)[None, :]
    return _nccf_rows(x[idx], lags, cfg.frame_len), lags


def extract_f0(w: Waveform, cfg: F0Config | None = None) -> F0Track:
    """Pitch track at one frame per ``cfg.hop`` samples.

    Frames with no NCCF peak above ``cfg.nccf_threshold`` are unvoiced.
    Voiced runs are smoothed independently by dynamic programming over
    candidate peaks, with local cost ``1 - nccf`` (lag-weighted) and a
    transition cost proportional to the absolute log-frequency jump.
    """
    cfg = cfg or F0Config()
    if w.sample_rate != cfg.sample_rate:
        raise ValueError(f"expected {cfg.sample_rate} Hz audio, got {w.sample_rate} Hz")
    if len(w) == 0:
        raise ValueError("cannot track pitch of an empty waveform")
    corr, lags = frame_nccf(w, cfg)
    cands = _candidates(corr, lags, cfg)
    f0 = np.zeros(len(cands))
    t = 0
    while t < len(cands):
        if not cands[t]:
            t += 1
            continue
        end = t
        while end < len(cands) and cands[end]:
            end += 1
        f0[t:end] = _viterbi(cands[t:end], cfg)
        t = end
    return F0Track(f0, f0 > 0, cfg.hop)
