"""16-bit PCM mono WAV reading and writing."""
from __future__ import annotations

import io
import wave
from pathlib import Path

import numpy as np

from .dsp import Waveform
from .errors import FormatError

REQUIRED_RATE = 16000


def read_wav(path, sample_rate: int = REQUIRED_RATE) -> Waveform:
    """Read a 16-bit PCM mono WAV file as floats in [-1, 1)."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            comptype = fh.getcomptype()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: not a readable PCM WAV file ({exc})") from exc
    if comptype != "NONE":
        raise FormatError(f"{path}: compressed WAV ({comptype}) is not supported")
    if width != 2:
        raise FormatError(f"{path}: expected 16-bit samples, got {8 * width}-bit")
    if channels != 1:
        raise FormatError(f"{path}: expected mono audio, got {channels} channels")
    if sample_rate is not None and rate != sample_rate:
        raise FormatError(f"{path}: expected {sample_rate} Hz, got {rate} Hz")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, rate)


def encode_pcm16(w: Waveform) -> bytes:
    clipped = np.clip(np.round(w.samples * 32768.0), -32768, 32767)
    return clipped.astype("<i2").tobytes()


def wav_bytes(w: Waveform) -> bytes:
    buf = io.BytesIO()
    with wave.open(buf, "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(encode_pcm16(w))
    return buf.getvalue()


def write_wav(path, w: Waveform) -> None:
    Path(path).write_bytes(wav_bytes(w))
