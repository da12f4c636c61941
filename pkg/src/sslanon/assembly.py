"""Frame-rate alignment and concatenation of content, F0 and speaker streams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .f0 import F0Track
from .pool import SpeakerEmbedding

CONTENT_TO_F0_FACTOR = 2  # 320-sample content frames vs 160-sample F0 frames


@dataclass(frozen=True)
class AssembledFrames:
    """Rows are ``[content (K) | log1p(f0), voiced | speaker (D)]`` at the F0 frame rate."""

    frames: np.ndarray
    content_dim: int
    speaker_dim: int
    frame_rate: float = 100.0

    @property
    def f0_block(self) -> np.ndarray:
        return self.frames[:, self.content_dim:self.content_dim + 2]

    @property
    def content_block(self) -> np.ndarray:
        return self.frames[:, : self.content_dim]

    @property
    def speaker_block(self) -> np.ndarray:
        return self.frames[:, self.content_dim + 2:]

    def __len__(self):
        return self.frames.shape[0]


def upsample_frames(seq, factor: int, mode: str = "repeat") -> np.ndarray:
    """Raise the frame rate of ``seq`` (rows are frames) by an integer factor.

    ``repeat`` duplicates each row; ``linear`` interpolates between
    consecutive rows and replicates the last row at the end.
    """
    x = np.asarray(seq, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    if x.shape[0] == 0:
        raise ValueError("cannot upsample an empty sequence")
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if mode == "repeat":
        out = np.repeat(x, factor, axis=0)
    elif mode == "linear":
        nxt = np.concatenate((x[1:], x[-1:]), axis=0)
        frac = np.arange(factor)[None, :, None] / factor
        out = (x[:, None, :] * (1 - frac) + nxt[:, None, :] * frac).reshape(-1, x.shape[1])
    else:
        raise ValueError(f"unknown upsampling mode {mode!r}")
    return out[:, 0] if squeeze else out


def encode_f0(track: F0Track) -> np.ndarray:
    """``(log1p(f0_hz), voiced)`` per frame; unvoiced frames are ``(0, 0)``."""
    return np.column_stack((np.log1p(track.f0_hz), track.voiced.astype(np.float64)))


def assemble(content, f0: F0Track, spk: SpeakerEmbedding, mode: str = "repeat", tolerance: int = 2) -> AssembledFrames:
    """Upsample content x2 to the F0 rate, truncate to the shorter stream and
    append the speaker vector to every frame."""
    c = np.asarray(content, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] == 0:
        raise ValueError(f"content must be a non-empty T' x K matrix, got shape {c.shape}")
    n_f0 = len(f0)
    up_len = CONTENT_TO_F0_FACTOR * c.shape[0]
    if abs(up_len - n_f0) > tolerance:
        raise ValueError(
            f"content ({c.shape[0]} frames -> {up_len}) and F0 ({n_f0} frames) differ by more than {tolerance}"
        )
    up = upsample_frames(c, CONTENT_TO_F0_FACTOR, mode)
    n = min(up_len, n_f0)
    spk_block = np.broadcast_to(spk.vector, (n, spk.dim))
    frames = np.hstack((up[:n], encode_f0(f0)[:n], spk_block))
    return AssembledFrames(frames, c.shape[1], spk.dim)
