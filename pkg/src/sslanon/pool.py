"""Speaker-embedding pools and pseudo-speaker generation.

A pseudo speaker for a source embedding is built from the ``n_far``
same-gender pool entries farthest from it (cosine distance), by averaging
``n_avg`` of them drawn without replacement and projecting the mean back to
unit length.
"""
from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class Gender(enum.IntEnum):
    FEMALE = 0
    MALE = 1

    @classmethod
    def parse(cls, value) -> "Gender":
        if isinstance(value, Gender):
            return value
        text = str(value).strip().lower()
        if text in ("f", "female", "0"):
            return cls.FEMALE
        if text in ("m", "male", "1"):
            return cls.MALE
        raise ValueError(f"unknown gender {value!r}")

    @property
    def label(self) -> str:
        return self.name.lower()


class Distance(enum.Enum):
    COSINE = "cosine"


@dataclass(frozen=True)
class SpeakerEmbedding:
    vector: np.ndarray
    speaker_id: str
    gender: Gender

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError(f"{self.speaker_id}: embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"{self.speaker_id}: embedding has non-finite entries")
        if not np.any(vec):
            raise ValueError(f"{self.speaker_id}: embedding is the zero vector")
        object.__setattr__(self, "vector", vec)
        object.__setattr__(self, "gender", Gender.parse(self.gender))

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class AnonymizationParams:
    n_far: int = 200
    n_avg: int = 100
    distance: Distance = Distance.COSINE
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_avg <= self.n_far:
            raise ValueError(f"need 1 <= n_avg <= n_far, got n_avg={self.n_avg}, n_far={self.n_far}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        object.__setattr__(self, "distance", Distance(self.distance))


class EmbeddingPool:
    """Immutable collection of embeddings sharing one dimension.

    Speaker ids need not be unique; several utterances of one speaker may be
    present.
    """

    def __init__(self, entries: Iterable[SpeakerEmbedding]):
        entries = tuple(entries)
        if not entries:
            raise ValueError("embedding pool is empty")
        dims = {e.dim for e in entries}
        if len(dims) != 1:
            raise ValueError(f"pool mixes embedding dimensions {sorted(dims)}")
        self.entries = entries
        self.dim = dims.pop()
        self._matrix = np.stack([e.vector for e in entries])
        self._matrix.flags.writeable = False
        self._genders = np.array([int(e.gender) for e in entries])

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i) -> SpeakerEmbedding:
        return self.entries[i]

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def indices_of_gender(self, gender) -> np.ndarray:
        return np.flatnonzero(self._genders == int(Gender.parse(gender)))


def cosine_distance(a, b) -> float:
    """``1 - cos(a, b)``, in [0, 2]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine distance is undefined for a zero vector")
    return float(np.clip(1.0 - (a @ b) / (na * nb), 0.0, 2.0))


def cosine_distances(matrix: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise cosine distance between ``matrix`` and ``v``."""
    v = np.asarray(v, dtype=np.float64)
    if matrix.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: {matrix.shape[1]} vs {v.shape[0]}")
    sims = (matrix @ v) / (np.linalg.norm(matrix, axis=1) * np.linalg.norm(v))
    return np.clip(1.0 - sims, 0.0, 2.0)


def select_far_candidates(pool: EmbeddingPool, src: SpeakerEmbedding, params: AnonymizationParams) -> np.ndarray:
    """Pool indices of the ``n_far`` same-gender entries farthest from ``src``.

    Sorted by descending distance; equal distances keep ascending pool order.
    """
    same = pool.indices_of_gender(src.gender)
    if len(same) < params.n_far:
        raise ValueError(
            f"pool has {len(same)} {src.gender.label} entries, need n_far={params.n_far}"
        )
    dist = cosine_distances(pool.matrix[same], src.vector)
    order = np.lexsort((same, -dist))
    return same[order[: params.n_far]]


def generate_pseudo_embedding(
    pool: EmbeddingPool,
    src: SpeakerEmbedding,
    params: AnonymizationParams,
    rng: np.random.Generator | None = None,
) -> SpeakerEmbedding:
    """Average ``n_avg`` random far candidates and renormalise.

    ``rng`` defaults to a generator seeded with ``params.seed``.
    """
    picked = sampled_candidates(pool, src, params, rng)
    mean = pool.matrix[picked].mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0:
        raise ValueError(f"{src.speaker_id}: sampled candidates average to the zero vector")
    return SpeakerEmbedding(mean / norm, f"pseudo:{src.speaker_id}:{params.seed}", src.gender)


def sampled_candidates(pool, src, params, rng=None) -> np.ndarray:
    """The pool indices :func:`generate_pseudo_embedding` would average."""
    if rng is None:
        rng = np.random.default_rng(params.seed)
    far = select_far_candidates(pool, src, params)
    return far[rng.choice(len(far), size=params.n_avg, replace=False)]


def derive_seed(base_seed: int, *keys: str | int) -> int:
    """Stable 32-bit seed from a base seed and string/int keys."""
    words = [int(base_seed) & 0xFFFFFFFF]
    for key in keys:
        words.append(zlib.crc32(str(key).encode("utf-8")))
    return int(np.random.SeedSequence(words).generate_state(1)[0])


class PseudoSpeakerAnonymizer:
    """Replaces embeddings by pseudo speakers drawn from an external pool.

    ``mode="per-utterance"`` draws a fresh pseudo speaker for every call;
    ``mode="per-speaker"`` derives the seed from the speaker key alone, so
    all utterances of one speaker map to the same pseudo speaker.
    """

    MODES = ("per-utterance", "per-speaker")

    def __init__(self, pool: EmbeddingPool, params: AnonymizationParams, mode: str = "per-utterance"):
        if mode not in self.MODES:
            raise ValueError(f"mode must be one of {self.MODES}, got {mode!r}")
        self.pool = pool
        self.params = params
        self.mode = mode

    def seed_for(self, utt_id: str, speaker: str | None = None, salt: str = "") -> int:
        key = utt_id if self.mode == "per-utterance" or speaker is None else f"spk:{speaker}"
        return derive_seed(self.params.seed, salt, key)

    def __call__(self, emb: SpeakerEmbedding, utt_id: str, speaker: str | None = None, salt: str = "") -> SpeakerEmbedding:
        seed = self.seed_for(utt_id, speaker, salt)
        p = AnonymizationParams(self.params.n_far, self.params.n_avg, self.params.distance, seed)
        return generate_pseudo_embedding(self.pool, emb, p)


def anonymize_all(
    anonymizer: PseudoSpeakerAnonymizer,
    sources: Sequence[SpeakerEmbedding],
    utt_ids: Sequence[str] | None = None,
    speakers: Sequence[str] | None = None,
    workers: int = 1,
    salt: str = "",
) -> list[SpeakerEmbedding]:
    """Anonymize many embeddings; output order follows the input order."""
    utt_ids = list(utt_ids) if utt_ids is not None else [s.speaker_id for s in sources]
    speakers = list(speakers) if speakers is not None else [None] * len(sources)

    def one(i):
        return anonymizer(sources[i], utt_ids[i], speakers[i], salt)

    if workers <= 1:
        return [one(i) for i in range(len(sources))]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(one, range(len(sources))))
