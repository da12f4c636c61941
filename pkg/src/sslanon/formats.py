"""Binary containers and line-oriented text formats.

Binary layouts (all little-endian):

``EMBD``  magic, u32 version (1), u32 count, u32 dim, then per record:
          u16 id byte length, UTF-8 id, u8 gender (0 female, 1 male),
          dim x f32.
``FEAT``  magic, u32 version (1), u32 rows, u32 cols, rows x cols f32
          row-major.
``SUCB``  soft-unit codebook: magic, u32 version (1), u32 F, u32 E, u32 K,
          f64 temperature, F x E f64 projection, K x E f64 unit embeddings.
"""
from __future__ import annotations

import csv
import io
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError
from .pool import Gender, SpeakerEmbedding

VERSION = 1
_HEADER = struct.Struct("<4sIII")


def atomic_write(path, data: bytes | str) -> None:
    """Write ``data`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc


def _check_header(buf: bytes, path, magic: bytes):
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a {magic.decode()} header")
    got, version, a, b = _HEADER.unpack_from(buf)
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported {magic.decode()} version {version}")
    return a, b


# -- embeddings ---------------------------------------------------------------


def encode_embeddings(entries) -> bytes:
    entries = list(entries)
    dim = entries[0].dim if entries else 0
    out = io.BytesIO()
    out.write(_HEADER.pack(b"EMBD", VERSION, len(entries), dim))
    for e in entries:
        if e.dim != dim:
            raise ValueError(f"{e.speaker_id}: dim {e.dim} differs from {dim}")
        raw_id = e.speaker_id.encode("utf-8")
        if len(raw_id) > 0xFFFF:
            raise ValueError(f"id too long: {e.speaker_id[:40]}...")
        out.write(struct.pack("<H", len(raw_id)))
        out.write(raw_id)
        out.write(struct.pack("<B", int(e.gender)))
        out.write(e.vector.astype("<f4").tobytes())
    return out.getvalue()


def decode_embeddings(buf: bytes, path="<bytes>") -> list[SpeakerEmbedding]:
    count, dim = _check_header(buf, path, b"EMBD")
    pos = _HEADER.size
    entries = []
    for i in range(count):
        try:
            (n,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            raw_id = buf[pos:pos + n]
            if len(raw_id) != n:
                raise struct.error("truncated id")
            pos += n
            (g,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            vec = np.frombuffer(buf, dtype="<f4", count=dim, offset=pos).astype(np.float64)
            pos += 4 * dim
        except (struct.error, ValueError) as exc:
            raise FormatError(f"{path}: record {i} is truncated") from exc
        if g not in (0, 1):
            raise FormatError(f"{path}: record {i} has invalid gender byte {g}")
        try:
            entries.append(SpeakerEmbedding(vec, raw_id.decode("utf-8"), Gender(g)))
        except (UnicodeDecodeError, ValueError) as exc:
            raise FormatError(f"{path}: record {i}: {exc}") from exc
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes after {count} records")
    return entries


def read_embeddings(path) -> list[SpeakerEmbedding]:
    return decode_embeddings(_read_bytes(path), path)


def write_embeddings(path, entries) -> None:
    atomic_write(path, encode_embeddings(entries))


def embeddings_to_csv(entries) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    for e in entries:
        writer.writerow([e.speaker_id, e.gender.label, *(repr(float(v)) for v in e.vector)])
    return out.getvalue()


def embeddings_from_csv(text: str, path="<csv>") -> list[SpeakerEmbedding]:
    entries = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), 1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) < 3:
            raise FormatError(f"{path}:{lineno}: expected id, gender, v0..vD-1")
        try:
            entries.append(SpeakerEmbedding(np.array([float(v) for v in row[2:]]), row[0], Gender.parse(row[1])))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if entries and len({e.dim for e in entries}) != 1:
        raise FormatError(f"{path}: rows have inconsistent dimensions")
    return entries


def load_embeddings(path) -> list[SpeakerEmbedding]:
    """Read an ``EMBD`` store, or CSV when the suffix is ``.csv``."""
    if str(path).lower().endswith(".csv"):
        return embeddings_from_csv(_read_bytes(path).decode("utf-8"), path)
    return read_embeddings(path)


def save_embeddings(path, entries) -> None:
    if str(path).lower().endswith(".csv"):
        atomic_write(path, embeddings_to_csv(entries))
    else:
        write_embeddings(path, entries)


# -- feature matrices -----------------------------------------------------------


def encode_features(matrix) -> bytes:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {m.shape}")
    return _HEADER.pack(b"FEAT", VERSION, m.shape[0], m.shape[1]) + m.astype("<f4").tobytes()


def decode_features(buf: bytes, path="<bytes>") -> np.ndarray:
    rows, cols = _check_header(buf, path, b"FEAT")
    expected = _HEADER.size + 4 * rows * cols
    if len(buf) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {rows}x{cols}, got {len(buf)}")
    m = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).astype(np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(m)):
        raise FormatError(f"{path}: non-finite feature values")
    return m


def read_features(path) -> np.ndarray:
    return decode_features(_read_bytes(path), path)


def write_features(path, matrix) -> None:
    atomic_write(path, encode_features(matrix))


# -- codebook -------------------------------------------------------------------

_CB_HEADER = struct.Struct("<4sIIIId")


def encode_codebook(projection, embeddings, temperature: float) -> bytes:
    projection = np.asarray(projection, dtype="<f8")
    embeddings = np.asarray(embeddings, dtype="<f8")
    f, e = projection.shape
    k, e2 = embeddings.shape
    if e != e2:
        raise ValueError("projection and unit embeddings disagree on the projected dimension")
    head = _CB_HEADER.pack(b"SUCB", VERSION, f, e, k, float(temperature))
    return head + projection.tobytes() + embeddings.tobytes()


def decode_codebook(buf: bytes, path="<bytes>"):
    if len(buf) < _CB_HEADER.size:
        raise FormatError(f"{path}: file too short for a codebook header")
    magic, version, f, e, k, tau = _CB_HEADER.unpack_from(buf)
    if magic != b"SUCB":
        raise FormatError(f"{path}: bad magic {magic!r}, expected b'SUCB'")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported codebook version {version}")
    expected = _CB_HEADER.size + 8 * (f * e + k * e)
    if len(buf) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(buf)}")
    off = _CB_HEADER.size
    proj = np.frombuffer(buf, dtype="<f8", count=f * e, offset=off).reshape(f, e).copy()
    emb = np.frombuffer(buf, dtype="<f8", count=k * e, offset=off + 8 * f * e).reshape(k, e).copy()
    return proj, emb, tau


# -- text formats ---------------------------------------------------------------


def _read_lines(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not UTF-8 text") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.strip() and not line.lstrip().startswith("#"):
            yield lineno, line


def format_f0_track(track) -> str:
    return "".join(
        f"{i} {f:.4f} {int(v)}\n" for i, (f, v) in enumerate(zip(track.f0_hz, track.voiced))
    )


def parse_f0_track(text: str, path="<text>", hop: int = 160):
    from .f0 import F0Track

    f0, voiced = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 'frame_index f0_hz voiced_flag'")
        try:
            idx, hz, flag = int(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        if idx != len(f0):
            raise FormatError(f"{path}:{lineno}: frame index {idx} out of sequence")
        if flag not in (0, 1) or not math.isfinite(hz) or hz < 0:
            raise FormatError(f"{path}:{lineno}: invalid f0/voicing values")
        f0.append(hz)
        voiced.append(bool(flag))
    try:
        return F0Track(np.array(f0), np.array(voiced, dtype=bool), hop)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def read_f0_track(path, hop: int = 160):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    return parse_f0_track(text, path, hop)


def format_units(units) -> str:
    return "".join(f"{int(u)}\n" for u in units)


def read_units(path) -> np.ndarray:
    units = []
    for lineno, line in _read_lines(path):
        try:
            units.append(int(line.strip()))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: expected one integer per line") from exc
    return np.array(units, dtype=np.int64)


def read_trials(path):
    """Trial list lines ``enroll_id test_id target|nontarget``."""
    trials = []
    for lineno, line in _read_lines(path):
        parts = line.split()
        if len(parts) != 3 or parts[2] not in ("target", "nontarget"):
            raise FormatError(f"{path}:{lineno}: expected 'enroll_id test_id target|nontarget'")
        trials.append((parts[0], parts[1], parts[2] == "target"))
    return trials


def format_trials(trials) -> str:
    return "".join(f"{e} {t} {'target' if tgt else 'nontarget'}\n" for e, t, tgt in trials)


def format_scores(scores) -> str:
    return "".join(f"{s.enroll_id} {s.test_id} {s.score:.8f}\n" for s in scores)


def read_scores(path):
    out = []
    for lineno, line in _read_lines(path):
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 'enroll_id test_id score'")
        try:
            out.append((parts[0], parts[1], float(parts[2])))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return out


def read_transcripts(path) -> dict[str, str]:
    """``utt_id<TAB>text`` lines."""
    out = {}
    for lineno, line in _read_lines(path):
        if "\t" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'utt_id<TAB>text'")
        utt, text = line.split("\t", 1)
        if utt in out:
            raise FormatError(f"{path}:{lineno}: duplicate utterance id {utt}")
        out[utt] = text.strip()
    return out


def read_utt2spk(path) -> dict[str, str]:
    out = {}
    for lineno, line in _read_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'utt_id speaker_id'")
        out[parts[0]] = parts[1]
    return out
