"""GAN vocoder objectives over abstract discriminator outputs.

Discriminator outputs are passed in as plain arrays, so the losses do not
depend on any particular network. :class:`LinearDiscriminators` is a small
seeded stand-in with closed-form gradients, used for checks and fixtures.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields

import numpy as np

from .dsp import MelConfig, Waveform, mel_spectrogram


class AdversarialForm(enum.Enum):
    LEAST_SQUARES = "least_squares"


@dataclass(frozen=True)
class VocLossConfig:
    lambda_fm: float = 2.0
    lambda_mel: float = 45.0
    mel: MelConfig = field(default_factory=MelConfig)
    adversarial_form: AdversarialForm = AdversarialForm.LEAST_SQUARES
    n_sub_discriminators: int = 8

    def __post_init__(self):
        if self.lambda_fm < 0 or self.lambda_mel < 0:
            raise ValueError("loss weights must be non-negative")
        if self.n_sub_discriminators < 1:
            raise ValueError("need at least one sub-discriminator")
        object.__setattr__(self, "adversarial_form", AdversarialForm(self.adversarial_form))

    @classmethod
    def from_mapping(cls, values: dict) -> "VocLossConfig":
        """Build from flat string values; ``mel_*`` keys configure the mel operator."""
        mel_types = {f.name: f.type for f in fields(MelConfig)}
        mel_kwargs, kwargs = {}, {}
        for key, raw in values.items():
            if key.startswith("mel_") and key[4:] in mel_types:
                name = key[4:]
                mel_kwargs[name] = float(raw) if name.startswith("f_") else int(raw)
            elif key in ("lambda_fm", "lambda_mel"):
                kwargs[key] = float(raw)
            elif key == "n_sub_discriminators":
                kwargs[key] = int(raw)
            elif key == "adversarial_form":
                kwargs[key] = AdversarialForm(raw)
        return cls(mel=MelConfig(**mel_kwargs), **kwargs)


@dataclass
class DiscriminatorFeatures:
    """Final scores and intermediate feature maps, one entry per sub-discriminator."""

    scores: list
    feature_maps: list

    def __post_init__(self):
        self.scores = [np.asarray(s, dtype=np.float64) for s in self.scores]
        self.feature_maps = [[np.asarray(m, dtype=np.float64) for m in layers] for layers in self.feature_maps]
        if len(self.scores) != len(self.feature_maps):
            raise ValueError("scores and feature maps disagree on the number of sub-discriminators")
        if not self.scores:
            raise ValueError("need at least one sub-discriminator")

    def __len__(self):
        return len(self.scores)


def mel_loss(x: Waveform, x_hat: Waveform, cfg: VocLossConfig | MelConfig | None = None) -> float:
    """Mean absolute difference between the two mel spectrograms."""
    if isinstance(cfg, VocLossConfig):
        cfg = cfg.mel
    if len(x) != len(x_hat):
        raise ValueError(f"length mismatch: {len(x)} vs {len(x_hat)}")
    if x.sample_rate != x_hat.sample_rate:
        raise ValueError("sample rate mismatch")
    return float(np.mean(np.abs(mel_spectrogram(x, cfg) - mel_spectrogram(x_hat, cfg))))


def _check_pair(real: DiscriminatorFeatures, fake: DiscriminatorFeatures):
    if len(real) != len(fake):
        raise ValueError(f"{len(real)} real vs {len(fake)} fake sub-discriminators")
    for k, (lr, lf) in enumerate(zip(real.feature_maps, fake.feature_maps)):
        if len(lr) != len(lf):
            raise ValueError(f"sub-discriminator {k}: {len(lr)} vs {len(lf)} layers")
        for i, (a, b) in enumerate(zip(lr, lf)):
            if a.shape != b.shape:
                raise ValueError(f"sub-discriminator {k} layer {i}: shape {a.shape} vs {b.shape}")


def feature_matching_terms(real: DiscriminatorFeatures, fake: DiscriminatorFeatures) -> list[float]:
    """Per-sub-discriminator sum over layers of mean absolute feature difference."""
    _check_pair(real, fake)
    return [
        float(sum(np.abs(a - b).sum() / a.size for a, b in zip(lr, lf)))
        for lr, lf in zip(real.feature_maps, fake.feature_maps)
    ]


def feature_matching_loss(real: DiscriminatorFeatures, fake: DiscriminatorFeatures) -> float:
    return float(sum(feature_matching_terms(real, fake)))


def adversarial_terms(real_scores, fake_scores):
    """Least-squares per-sub-discriminator terms ``(gen_k, disc_k)``."""
    real_scores = [np.asarray(s, dtype=np.float64) for s in real_scores]
    fake_scores = [np.asarray(s, dtype=np.float64) for s in fake_scores]
    if not real_scores or not fake_scores:
        raise ValueError("score lists must be non-empty")
    if len(real_scores) != len(fake_scores):
        raise ValueError(f"{len(real_scores)} real vs {len(fake_scores)} fake score sets")
    gen = [float(np.mean((f - 1.0) ** 2)) for f in fake_scores]
    disc = [float(np.mean((r - 1.0) ** 2) + np.mean(f**2)) for r, f in zip(real_scores, fake_scores)]
    return gen, disc


def adversarial_losses(real_scores, fake_scores) -> tuple[float, float]:
    """``(generator, discriminator)`` least-squares adversarial losses."""
    gen, disc = adversarial_terms(real_scores, fake_scores)
    return float(sum(gen)), float(sum(disc))


def discriminator_loss(real: DiscriminatorFeatures, fake: DiscriminatorFeatures) -> float:
    return adversarial_losses(real.scores, fake.scores)[1]


@dataclass(frozen=True)
class GeneratorLossBreakdown:
    adversarial: float
    feature_matching: float
    mel: float
    total: float


def generator_loss_terms(x, x_hat, real_feats, fake_feats, cfg: VocLossConfig | None = None) -> GeneratorLossBreakdown:
    cfg = cfg or VocLossConfig()
    gen, _ = adversarial_terms(real_feats.scores, fake_feats.scores)
    fm = feature_matching_terms(real_feats, fake_feats)
    mel = mel_loss(x, x_hat, cfg.mel)
    total = sum(g + cfg.lambda_fm * f for g, f in zip(gen, fm)) + cfg.lambda_mel * mel
    return GeneratorLossBreakdown(float(sum(gen)), float(sum(fm)), mel, float(total))


def generator_loss(x, x_hat, real_feats, fake_feats, cfg: VocLossConfig | None = None) -> float:
    """Sum over sub-discriminators of adversarial + weighted feature-matching
    terms, plus the weighted mel loss."""
    return generator_loss_terms(x, x_hat, real_feats, fake_feats, cfg).total


class LinearDiscriminators:
    """Seeded stack of linear maps standing in for a set of sub-discriminators.

    Sub-discriminator ``k`` computes ``h_1 = A_1 x``, ``h_i = A_i h_{i-1}``
    and a score vector ``s = B h_L``; every ``h_i`` is reported as a feature
    map.
    """

    def __init__(self, n_samples: int, n_sub: int = 8, widths=(16, 8), score_dim: int = 4, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.n_samples = n_samples
        self.layers = []
        self.heads = []
        for _ in range(n_sub):
            dims = [n_samples, *widths]
            self.layers.append([rng.standard_normal((dims[i + 1], dims[i])) / np.sqrt(dims[i]) for i in range(len(widths))])
            self.heads.append(rng.standard_normal((score_dim, dims[-1])) / np.sqrt(dims[-1]))

    def __call__(self, x) -> DiscriminatorFeatures:
        x = x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_samples,):
            raise ValueError(f"expected {self.n_samples} samples, got shape {x.shape}")
        scores, maps = [], []
        for layers, head in zip(self.layers, self.heads):
            h, hs = x, []
            for a in layers:
                h = a @ h
                hs.append(h)
            maps.append(hs)
            scores.append(head @ h)
        return DiscriminatorFeatures(scores, maps)

    def generator_objective(self, x, x_hat, lambda_fm: float = 2.0):
        """Adversarial + ``lambda_fm`` * feature-matching loss and its gradient in ``x_hat``."""
        x = x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)
        x_hat = x_hat.samples if isinstance(x_hat, Waveform) else np.asarray(x_hat, dtype=np.float64)
        real, fake = self(x), self(x_hat)
        value = adversarial_losses(real.scores, fake.scores)[0] + lambda_fm * feature_matching_loss(real, fake)
        grad = np.zeros_like(x_hat)
        for k, (layers, head) in enumerate(zip(self.layers, self.heads)):
            s = fake.scores[k]
            # Back-propagate from the score through the head.
            g = head.T @ (2.0 * (s - 1.0) / s.size)
            for i in range(len(layers) - 1, -1, -1):
                hr, hf = real.feature_maps[k][i], fake.feature_maps[k][i]
                g = g + lambda_fm * np.sign(hf - hr) / hf.size
                g = layers[i].T @ g
            grad += g
        return float(value), grad
