"""Supervision objectives: BCE-with-logits, focal loss, and an additive
angular margin (ArcFace-style) head adapted to the multi-label setting.

The angular margin is applied per positive class and the adjusted logits
are scored with BCE, since the task is multi-label; the original
formulation is single-label softmax.  Targets may be soft ([0,1]) for BCE
but must be binary for the focal and margin losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, DimensionError
from .nn import Module


def _target_array(y, z: Tensor) -> np.ndarray:
    arr = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=z.data.dtype)
    if arr.shape != z.shape:
        raise DimensionError(f"targets {arr.shape} != logits {z.shape}")
    return arr.astype(z.data.dtype)


def bce_with_logits(z: Tensor, y, reduction: str = "mean") -> Tensor:
    """Binary cross-entropy on logits, stable for |z| up to ~1e4.

    Uses max(z,0) - y*z + log(1+exp(-|z|)).  ``y`` may be soft (entries in
    [0,1]).  ``reduction`` is "mean" over all entries or "per_sample"
    (row means, for per-pair loss bookkeeping).
    """
    targets = _target_array(y, z)
    if targets.min() < 0.0 or targets.max() > 1.0:
        raise DimensionError("bce_with_logits: targets must lie in [0, 1]")
    elementwise = ad.add(ad.sub(ad.relu(z), ad.mul(z, targets)),
                         ad.softplus(ad.neg(ad.absolute(z))))
    if reduction == "mean":
        return ad.tmean(elementwise)
    if reduction == "per_sample":
        return ad.mean_rows(elementwise)
    raise ConfigurationError(f"unknown reduction {reduction!r}")


@dataclass
class FocalParams:
    """gamma focuses on hard examples; alpha weights the positive class.
    alpha == 1 disables class weighting entirely."""

    gamma: float = 2.0
    alpha: float = 0.25

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigurationError(f"focal gamma must be >= 0, got {self.gamma}")
        if not 0 < self.alpha <= 1:
            raise ConfigurationError(f"focal alpha must be in (0, 1], got {self.alpha}")


def focal_loss(z: Tensor, y, params: FocalParams | None = None,
               reduction: str = "mean") -> Tensor:
    """Focal loss against binary targets.

    Per entry, with p = sigmoid(z):
      y=1: -w_pos * (1-p)^gamma * log(p)
      y=0: -w_neg * p^gamma * log(1-p)
    computed via the stable identities (1-p) = sigmoid(-z) and
    -log(p) = softplus(-z).
    """
    params = params or FocalParams()
    targets = _target_array(y, z)
    if not np.isin(targets, (0.0, 1.0)).all():
        raise DimensionError("focal_loss: targets must be binary")
    if params.alpha == 1.0:
        w_pos = w_neg = 1.0
    else:
        w_pos, w_neg = params.alpha, 1.0 - params.alpha
    p_neg = ad.sigmoid(ad.neg(z))   # = 1 - p
    p_pos = ad.sigmoid(z)
    pos_term = ad.scale(ad.mul(ad.power(p_neg, params.gamma), ad.softplus(ad.neg(z))), w_pos)
    neg_term = ad.scale(ad.mul(ad.power(p_pos, params.gamma), ad.softplus(z)), w_neg)
    elementwise = ad.add(ad.mul(pos_term, targets), ad.mul(neg_term, 1.0 - targets))
    if reduction == "mean":
        return ad.tmean(elementwise)
    if reduction == "per_sample":
        return ad.mean_rows(elementwise)
    raise ConfigurationError(f"unknown reduction {reduction!r}")


class ArcMargin(Module):
    """Class-center matrix with additive angular margin on positive classes.

    Features and class centers are L2-normalized; for y=1 entries the
    cosine logit cos(theta) becomes cos(theta + m), computed through the
    angle-addition identity, with the standard monotonic fallback
    cos(theta) - m*sin(m) once theta + m would exceed pi.  Logits are
    scaled by s; score the result with ``bce_with_logits``.
    """

    def __init__(self, num_classes: int, feature_dim: int, rng,
                 s: float = 30.0, m: float = 0.5, dtype=np.float32):
        if not 0 <= m < math.pi / 2:
            raise ConfigurationError(f"margin must be in [0, pi/2), got {m}")
        if s <= 0:
            raise ConfigurationError(f"scale must be positive, got {s}")
        bound = 1.0 / np.sqrt(feature_dim)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(num_classes, feature_dim)),
                             requires_grad=True, dtype=dtype)
        self.s = float(s)
        self.m = float(m)

    def cosine(self, f: Tensor) -> Tensor:
        """Plain cosine similarity between features and class centers."""
        return ad.linear(ad.l2_normalize_rows(f), ad.l2_normalize_rows(self.weight))

    def forward(self, f: Tensor, y) -> Tensor:
        return arcface_logits(f, self, y)


def arcface_logits(f: Tensor, margin: ArcMargin, y) -> Tensor:
    """Margin-adjusted, scaled logits for a batch of features.

    y=1 entries receive s*cos(theta+m) (or the monotonic fallback); y=0
    entries receive s*cos(theta).
    """
    cos = margin.cosine(f)
    targets = _target_array(y, cos)
    if not np.isin(targets, (0.0, 1.0)).all():
        raise DimensionError("arcface_logits: targets must be binary")
    cos_m = math.cos(margin.m)
    sin_m = math.sin(margin.m)
    sin = ad.sqrt(ad.relu(ad.sub(1.0, ad.mul(cos, cos))))
    phi = ad.sub(ad.scale(cos, cos_m), ad.scale(sin, sin_m))
    # Past theta + m = pi the angle identity turns back upward; switch to
    # the linearized cos(theta) - m*sin(m) to stay monotonic in theta.
    fallback = ad.sub(cos, margin.m * sin_m)
    in_range = cos.data > math.cos(math.pi - margin.m)
    adjusted = ad.where_mask(in_range, phi, fallback)
    out = ad.where_mask(targets == 1.0, adjusted, cos)
    return ad.scale(out, margin.s)


LOSS_KINDS = ("bce", "focal", "arcface")
