"""Discrete speech units and the soft content head.

The head maps backbone frames ``x`` (dim F) to ``z = x @ projection`` (dim
E) and scores ``z`` against ``K`` unit embeddings by temperature-scaled
cosine similarity followed by a softmax over units. It is trained with
cross-entropy against k-means unit indices.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

FRAME_RATIO = 320  # waveform samples per backbone frame


@dataclass
class KMeansResult:
    centroids: np.ndarray
    inertia: float
    history: list = field(default_factory=list)
    n_iter: int = 0


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [int(rng.integers(n))]
    closest = _sq_dists(x, x[centers]).ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # Remaining points coincide with chosen centres.
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers.append(idx)
        closest = np.minimum(closest, _sq_dists(x, x[idx:idx + 1]).ravel())
    return x[centers].copy()


def kmeans_fit(features, k: int, max_iters: int = 100, seed: int = 0, tol: float = 1e-6) -> KMeansResult:
    """Lloyd's algorithm with seeded k-means++ initialisation.

    Empty clusters are re-seeded with the points farthest from their
    current centroid. Stops after ``max_iters`` or when the relative inertia
    change drops below ``tol``.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(x, k, rng)
    history = []
    prev = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        d = _sq_dists(x, centroids)
        labels = d.argmin(1)
        point_cost = d[np.arange(n), labels]
        inertia = float(point_cost.sum())
        history.append(inertia)
        new = np.zeros_like(centroids)
        counts = np.bincount(labels, minlength=k)
        np.add.at(new, labels, x)
        empty = np.flatnonzero(counts == 0)
        if len(empty):
            far = np.argsort(-point_cost, kind="stable")[: len(empty)]
            new[empty] = x[far]
            counts[empty] = 1
        centroids = new / counts[:, None]
        if prev < np.inf and (prev - inertia) <= tol * max(prev, 1e-300):
            break
        prev = inertia
    final = float(_sq_dists(x, centroids).min(1).sum())
    return KMeansResult(centroids, final, history, it)


def quantize(features, centroids) -> np.ndarray:
    """Index of the nearest centroid per row; ties go to the lowest index."""
    x = np.asarray(features, dtype=np.float64)
    c = np.asarray(centroids, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if c.ndim == 1:
        c = c[:, None]
    if x.shape[1] != c.shape[1]:
        raise ValueError(f"feature dim {x.shape[1]} does not match centroid dim {c.shape[1]}")
    # Exact differences, not the expanded form, so exact ties stay ties.
    d = ((x[:, None, :] - c[None, :, :]) ** 2).sum(-1)
    return d.argmin(1)


@dataclass
class SoftUnitCodebook:
    """Projection ``F x E``, unit embeddings ``K x E`` and temperature."""

    projection: np.ndarray
    embeddings: np.ndarray
    temperature: float = 0.1

    def __post_init__(self):
        self.projection = np.asarray(self.projection, dtype=np.float64)
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] < 2:
            raise ValueError("need at least 2 unit embeddings")
        if self.projection.ndim != 2 or self.projection.shape[1] != self.embeddings.shape[1]:
            raise ValueError("projection output dim must match unit embedding dim")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if np.any(np.linalg.norm(self.embeddings, axis=1) == 0):
            raise ValueError("unit embeddings must be non-zero")

    @property
    def n_units(self) -> int:
        return self.embeddings.shape[0]

    @property
    def input_dim(self) -> int:
        return self.projection.shape[0]

    def copy(self) -> "SoftUnitCodebook":
        return SoftUnitCodebook(self.projection.copy(), self.embeddings.copy(), self.temperature)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cosine_logits(z: np.ndarray, embeddings: np.ndarray, temperature: float) -> np.ndarray:
    z = np.atleast_2d(z)
    zn = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(zn == 0):
        raise ValueError("projected content vector is zero; cosine similarity undefined")
    wn = np.linalg.norm(embeddings, axis=1)
    return (z / zn) @ (embeddings / wn[:, None]).T / temperature


def soft_distribution(z, embeddings, temperature: float = 0.1) -> np.ndarray:
    """Softmax over units of ``cos(z, w_i) / temperature``.

    ``z`` may be one vector (returns ``K`` probabilities) or a ``T x E``
    matrix (returns ``T x K``).
    """
    if isinstance(embeddings, SoftUnitCodebook):
        temperature = embeddings.temperature
        embeddings = embeddings.embeddings
    z = np.asarray(z, dtype=np.float64)
    p = _softmax_rows(cosine_logits(z, np.asarray(embeddings, dtype=np.float64), temperature))
    return p[0] if z.ndim == 1 else p


def ce_loss(z, embeddings, target, temperature: float = 0.1):
    """Cross-entropy of the soft distribution against unit indices.

    Returns ``(loss, grad_z, grad_w)``. For a single vector ``z`` the loss is
    ``-log p_target``; for a ``T x E`` batch with ``T`` targets it is the mean
    over rows, and ``grad_z`` has one row per frame.
    """
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(embeddings, dtype=np.float64)
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    t = np.atleast_1d(np.asarray(target))
    k = w.shape[0]
    if t.shape[0] != z2.shape[0]:
        raise ValueError(f"{z2.shape[0]} frames but {t.shape[0]} targets")
    if np.any((t < 0) | (t >= k)):
        raise ValueError(f"target outside [0, {k})")
    n = z2.shape[0]
    zn = np.linalg.norm(z2, axis=1, keepdims=True)
    wn = np.linalg.norm(w, axis=1, keepdims=True)
    if np.any(zn == 0):
        raise ValueError("projected content vector is zero; cosine similarity undefined")
    zu, wu = z2 / zn, w / wn
    sim = zu @ wu.T
    p = _softmax_rows(sim / temperature)
    rows = np.arange(n)
    loss = float(-np.log(np.maximum(p[rows, t], 1e-300)).mean())
    g = p.copy()
    g[rows, t] -= 1.0
    g /= temperature * n  # dL/dsim, mean reduction
    # d cos(z, w) / dz = (w_hat - cos * z_hat) / |z|, symmetric in w.
    grad_z = (g @ wu - (g * sim).sum(1, keepdims=True) * zu) / zn
    grad_w = (g.T @ zu - (g * sim).sum(0)[:, None] * wu) / wn
    if single:
        grad_z = grad_z[0]
    return loss, grad_z, grad_w


@dataclass
class SoftTrainConfig:
    lr: float = 0.05
    epochs: int = 50
    batch_size: int = 64
    seed: int = 0
    proj_dim: int = 256
    temperature: float = 0.1


def init_codebook(input_dim: int, n_units: int, cfg: SoftTrainConfig, centroids=None) -> SoftUnitCodebook:
    """Seeded uniform projection; unit rows from projected centroids when given."""
    rng = np.random.default_rng(cfg.seed)
    bound = 1.0 / np.sqrt(input_dim)
    projection = rng.uniform(-bound, bound, size=(input_dim, cfg.proj_dim))
    emb = None
    if centroids is not None:
        centroids = np.asarray(centroids, dtype=np.float64)
        if centroids.shape != (n_units, input_dim):
            raise ValueError(f"centroids must have shape ({n_units}, {input_dim}), got {centroids.shape}")
        emb = centroids @ projection
        if np.any(np.linalg.norm(emb, axis=1) < 1e-12):
            logger.info("projected centroid is zero; falling back to Gaussian unit embeddings")
            emb = None
    if emb is None:
        emb = rng.standard_normal((n_units, cfg.proj_dim))
    return SoftUnitCodebook(projection, emb, cfg.temperature)


def mean_ce(codebook: SoftUnitCodebook, x: np.ndarray, targets: np.ndarray) -> float:
    z = x @ codebook.projection
    return ce_loss(z, codebook.embeddings, targets, codebook.temperature)[0]


def train_soft_head(features, targets, n_units: int, cfg: SoftTrainConfig | None = None, centroids=None):
    """Mini-batch gradient descent on mean cross-entropy.

    ``features`` and ``targets`` are either single arrays or equal-length
    lists of per-utterance arrays. Returns ``(codebook, history)`` where
    ``history[e]`` is the mean loss over all frames after epoch ``e``.
    """
    cfg = cfg or SoftTrainConfig()
    if isinstance(features, (list, tuple)):
        if len(features) != len(targets):
            raise ValueError(f"{len(features)} feature sets but {len(targets)} unit sequences")
        for i, (f, t) in enumerate(zip(features, targets)):
            if len(f) != len(t):
                raise ValueError(f"utterance {i}: {len(f)} frames but {len(t)} units")
        x = np.concatenate([np.asarray(f, dtype=np.float64) for f in features])
        y = np.concatenate([np.asarray(t) for t in targets]).astype(np.int64)
    else:
        x = np.asarray(features, dtype=np.float64)
        y = np.asarray(targets).astype(np.int64)
        if len(x) != len(y):
            raise ValueError(f"{len(x)} frames but {len(y)} units")
    if len(x) == 0:
        raise ValueError("no training frames")
    if n_units < 2:
        raise ValueError("need at least 2 units")
    if y.min() < 0 or y.max() >= n_units:
        raise ValueError(f"unit targets must lie in [0, {n_units})")
    codebook = init_codebook(x.shape[1], n_units, cfg, centroids)
    rng = np.random.default_rng([cfg.seed, 1])
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = x[idx]
            z = xb @ codebook.projection
            _, gz, gw = ce_loss(z, codebook.embeddings, y[idx], codebook.temperature)
            codebook.projection -= cfg.lr * (xb.T @ gz)
            codebook.embeddings -= cfg.lr * gw
        history.append(mean_ce(codebook, x, y))
        logger.debug("epoch %d mean CE %.6f", epoch + 1, history[-1])
    return codebook, history


def extract_content(features, codebook: SoftUnitCodebook, raw: bool = False) -> np.ndarray:
    """Per-frame soft unit distributions (``T x K``), or projected vectors when ``raw``."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != codebook.input_dim:
        raise ValueError(f"features must be T x {codebook.input_dim}, got shape {x.shape}")
    z = x @ codebook.projection
    if raw:
        return z
    return soft_distribution(z, codebook.embeddings, codebook.temperature)
