"""Synthetic speaker corpora for demos and tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pool import EmbeddingPool, Gender, SpeakerEmbedding


@dataclass
class ToyCorpus:
    enroll: list
    test: list
    trials: list
    pool: EmbeddingPool
    utt2spk: dict


def _unit_rows(m):
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def make_toy_corpus(
    n_speakers: int = 20,
    dim: int = 32,
    enroll_per_speaker: int = 2,
    test_per_speaker: int = 3,
    pool_size: int = 200,
    spread: float = 0.05,
    seed: int = 0,
) -> ToyCorpus:
    """Clustered unit-norm embeddings, half female and half male.

    Each speaker has a random unit centre; utterances add Gaussian noise of
    standard deviation ``spread`` per coordinate. The external pool holds
    ``pool_size`` further speakers (one embedding each), split evenly by
    gender. Trials pair every test utterance with every same-gender
    enrollment model.
    """
    rng = np.random.default_rng(seed)
    centres = _unit_rows(rng.standard_normal((n_speakers, dim)))
    genders = [Gender.FEMALE if i < n_speakers // 2 else Gender.MALE for i in range(n_speakers)]
    names = [f"spk{i:03d}" for i in range(n_speakers)]

    def utt(c):
        v = c + spread * rng.standard_normal(dim)
        return v / np.linalg.norm(v)

    enroll, test, utt2spk = [], [], {}
    for name, c, g in zip(names, centres, genders):
        for _ in range(enroll_per_speaker):
            enroll.append(SpeakerEmbedding(utt(c), name, g))
        for j in range(test_per_speaker):
            uid = f"{name}-t{j}"
            test.append(SpeakerEmbedding(utt(c), uid, g))
            utt2spk[uid] = name
    trials = []
    for t in test:
        spk = utt2spk[t.speaker_id]
        for name, g in zip(names, genders):
            if g == t.gender:
                trials.append((name, t.speaker_id, name == spk))
    pool_vecs = _unit_rows(rng.standard_normal((pool_size, dim)))
    pool = EmbeddingPool(
        SpeakerEmbedding(v, f"pool{i:04d}", Gender.FEMALE if i % 2 == 0 else Gender.MALE)
        for i, v in enumerate(pool_vecs)
    )
    return ToyCorpus(enroll, test, trials, pool, utt2spk)


def synthetic_pool(n: int = 1000, dim: int = 192, seed: int = 0) -> EmbeddingPool:
    """Random unit embeddings with alternating genders."""
    rng = np.random.default_rng(seed)
    vecs = _unit_rows(rng.standard_normal((n, dim)))
    return EmbeddingPool(
        SpeakerEmbedding(v, f"p{i:05d}", Gender.FEMALE if i % 2 == 0 else Gender.MALE)
        for i, v in enumerate(vecs)
    )


def speech_like(duration: float = 1.0, sample_rate: int = 16000, f0: float = 120.0, seed: int = 0) -> np.ndarray:
    """Vibrato harmonic source through two formant resonators, with noise and
    slow amplitude modulation; peak amplitude 0.5."""
    from scipy.signal import lfilter

    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    inst = f0 * (1 + 0.1 * np.sin(2 * np.pi * 3 * t))
    phase = 2 * np.pi * np.cumsum(inst) / sample_rate
    n_harm = int(sample_rate / 2 / (f0 * 1.1))
    src = sum(np.sin(k * phase) / k for k in range(1, n_harm))
    poles = []
    for fc, r in ((500.0, 0.97), (1500.0, 0.95), (2500.0, 0.93)):
        p = r * np.exp(2j * np.pi * fc / sample_rate)
        poles += [p, np.conj(p)]
    x = lfilter([1.0], np.real(np.poly(poles)), src) + 0.01 * rng.standard_normal(n)
    x *= 0.6 + 0.4 * np.sin(2 * np.pi * 2 * t)
    return 0.5 * x / np.max(np.abs(x))
