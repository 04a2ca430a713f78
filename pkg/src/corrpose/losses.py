"""Pair sampling and the contrastive training objective.

The full objective combines three terms: a distance-penalized InfoNCE over
pixel-to-surface-point pairs, a binary cross-entropy on the mask channel,
and a pairwise geometric-embedding consistency regularizer evaluated on the
batch's surface points. With the penalty strength and consistency weight
both zero, the objective reduces bit-for-bit to the plain InfoNCE + mask
BCE baseline.

All 3D coordinates entering these losses are normalized (unit-diameter
model frame), which bounds pairwise distances by 1 and keeps the penalty
factors strictly positive at the default strength alpha=1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import autodiff as ad
from .nn.autodiff import Tensor

LOGIT_CLAMP = 30.0
NORM_TOL = 1e-6


@dataclass(frozen=True)
class LossWeights:
    """alpha: hard-negative strength, beta: consistency weight, lam/min_weight: Eq. of w_ij."""

    alpha: float = 1.0
    beta: float = 1.0
    lam: float = 10.0
    min_weight: float = 0.01

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if not (0 < self.min_weight <= 1):
            raise ValueError("min_weight must lie in (0, 1]")
        # distances are bounded by 1 under the unit-diameter normalization,
        # so positivity of the penalty needs alpha * ln(2) < 1
        if self.alpha * np.log(2.0) >= 1.0:
            raise ValueError("alpha too large: penalty can reach zero at distance 1")


@dataclass(eq=False)
class PairBatch:
    """Sampled positives (mask pixels with their surface coordinates) and negatives."""

    query_pixels: np.ndarray       # (N, 2) int (row, col) inside the mask
    query_coords: np.ndarray       # (N, 3) normalized surface coordinates c_i
    negative_coords: np.ndarray    # (M, 3) area-uniform surface samples c_j
    mask: np.ndarray               # (H, W) bool ground-truth mask of the crop

    def __post_init__(self):
        for arr in (self.query_coords, self.negative_coords):
            if len(arr) and np.linalg.norm(arr, axis=1).max() > 0.5 + NORM_TOL:
                raise ValueError("coordinates exceed the unit-diameter bound")


def sample_pairs_arrays(mask, coord_map, model, n_pos: int, n_neg: int, rng_seed) -> PairBatch:
    """Sample a PairBatch from a mask/coordinate-map pair (with replacement)."""
    mask = np.asarray(mask, dtype=bool)
    rng = np.random.default_rng(rng_seed)
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        raise ValueError("mask is empty; cannot sample positive pairs")
    pick = rng.integers(0, len(ys), size=n_pos)
    pixels = np.stack([ys[pick], xs[pick]], axis=1)
    coords = coord_map[pixels[:, 0], pixels[:, 1]]
    negatives = model.sample_surface(n_neg, rng, normalized=True) if n_neg else np.zeros((0, 3))
    return PairBatch(query_pixels=pixels, query_coords=coords,
                     negative_coords=negatives, mask=mask)


def sample_pairs(frame, model, n_pos: int = 1024, n_neg: int = 1024, rng_seed=0,
                 part: str = "wrist") -> PairBatch:
    """PairBatch from a rendered FrameRecord for one target part."""
    return sample_pairs_arrays(frame.masks[part], frame.coord_map, model, n_pos, n_neg, rng_seed)


def penalty(c_i, c_j, alpha: float):
    """Distance-dependent negative weight p = 1 - alpha * ln(|c_j - c_i| + 1).

    Accepts single points or broadcastable arrays; natural logarithm.
    """
    d = np.linalg.norm(np.asarray(c_j, dtype=np.float64) - np.asarray(c_i, dtype=np.float64),
                       axis=-1)
    return 1.0 - alpha * np.log1p(d)


def _nce_mean(query: Tensor, positive: Tensor, negatives: Tensor, penalties) -> Tensor:
    """Mean over queries of -log( e^{<q,p>} / (e^{<q,p>} + sum_j w_j e^{<q,n_j>}) ).

    Dot products of unit vectors are bounded by 1, so no log-sum-exp shift is
    needed; `penalties` is an (N, M) constant array or None for plain InfoNCE.
    """
    logit_pos = ad.tsum(ad.mul(query, positive), axis=1)           # (N,)
    logits_neg = ad.matmul(query, ad.transpose2d(negatives))       # (N, M)
    exp_neg = ad.exp(logits_neg)
    if penalties is not None:
        exp_neg = ad.mul(exp_neg, Tensor(penalties))
    exp_pos = ad.exp(logit_pos)
    denom = ad.add(exp_pos, ad.tsum(exp_neg, axis=1))
    return ad.tmean(ad.sub(ad.log(denom), logit_pos))


def info_nce(query, positive, negatives) -> Tensor:
    """Plain InfoNCE with the positive term included in the denominator."""
    return _nce_mean(_as_t(query), _as_t(positive), _as_t(negatives), None)


def penalized_info_nce(query, positive, negatives, query_coords, negative_coords,
                       alpha: float) -> Tensor:
    """InfoNCE with each negative weighted by the distance penalty p_ij(alpha).

    Reduces exactly (bit-for-bit) to info_nce at alpha = 0, where every
    penalty factor is exactly 1.
    """
    pen = penalty(np.asarray(query_coords)[:, None, :],
                  np.asarray(negative_coords)[None, :, :], alpha)
    if np.any(pen <= 0):
        raise ValueError("penalty reached zero; alpha violates the positivity bound")
    return _nce_mean(_as_t(query), _as_t(positive), _as_t(negatives), pen)


def mask_bce(logits, labels) -> Tensor:
    """Mean binary cross-entropy over all pixels, with logits clamped at +/-30."""
    z = ad.clip(_as_t(logits), -LOGIT_CLAMP, LOGIT_CLAMP)
    y = np.asarray(labels, dtype=z.data.dtype)
    # -[y log p + (1-y) log(1-p)] == softplus(z) - y z
    return ad.tmean(ad.sub(ad.softplus(z), ad.mul(z, Tensor(y))))


def consistency_weight(c_i, c_j, lam: float = 10.0, min_weight: float = 0.01):
    """w_ij = max(m, exp(-lam * |c_i - c_j|))."""
    d = np.linalg.norm(np.asarray(c_j, dtype=np.float64) - np.asarray(c_i, dtype=np.float64),
                       axis=-1)
    return np.maximum(min_weight, np.exp(-lam * d))


def consistency_loss(points, embeddings, lam: float = 10.0, min_weight: float = 0.01) -> Tensor:
    """Weighted pairwise match between geometric and embedding distances.

    (2 / (N(N-1))) * sum_{i<j} w_ij (|c_i - c_j| - |E_i - E_j|)^2, with the
    coordinates treated as constants.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n < 2:
        raise ValueError("need at least two points")
    emb = _as_t(embeddings)
    iu, ju = np.triu_indices(n, k=1)
    d_c = np.linalg.norm(pts[iu] - pts[ju], axis=1)
    w = np.maximum(min_weight, np.exp(-lam * d_c))
    diff = ad.sub(ad.take(emb, iu), ad.take(emb, ju))
    d_e = ad.sqrt(ad.tsum(ad.square(diff), axis=1), floor=1e-30)
    resid = ad.sub(Tensor(d_c.astype(emb.data.dtype)), d_e)
    weighted = ad.mul(ad.square(resid), Tensor(w.astype(emb.data.dtype)))
    return ad.mul(ad.tsum(weighted), 2.0 / (n * (n - 1)))


@dataclass
class LossBreakdown:
    total: Tensor
    nce: float
    mask: float
    consistency: float


def total_loss(batch: PairBatch, field, encoder_embeddings, encoder_logits,
               weights: LossWeights) -> LossBreakdown:
    """Full objective on one crop: penalized InfoNCE + mask BCE + beta * consistency.

    encoder_embeddings: (H, W, E) Tensor; encoder_logits: (H, W) Tensor.
    The consistency term runs on the batch's surface points (positives plus
    negatives, deduplicated) through the latent field.
    """
    query = ad.gather_pixels(encoder_embeddings, batch.query_pixels[:, 0],
                             batch.query_pixels[:, 1])
    pos_emb = field.forward(batch.query_coords)
    neg_emb = field.forward(batch.negative_coords)
    if weights.alpha == 0.0:
        nce = info_nce(query, pos_emb, neg_emb)
    else:
        nce = penalized_info_nce(query, pos_emb, neg_emb,
                                 batch.query_coords, batch.negative_coords, weights.alpha)
    bce = mask_bce(encoder_logits, batch.mask)
    total = ad.add(nce, bce)
    con_value = 0.0
    if weights.beta != 0.0:
        all_pts = np.concatenate([batch.query_coords, batch.negative_coords])
        all_emb = ad.concat([pos_emb, neg_emb], axis=0)
        _, first_idx = np.unique(np.round(all_pts, 12), axis=0, return_index=True)
        con = consistency_loss(all_pts[first_idx], ad.take(all_emb, first_idx),
                               lam=weights.lam, min_weight=weights.min_weight)
        total = ad.add(total, ad.mul(con, weights.beta))
        con_value = con.item()
    return LossBreakdown(total=total, nce=nce.item(), mask=bce.item(), consistency=con_value)


def _as_t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
