"""Label softening, mixing and consensus, plus the segmentor loss functions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_THRESHOLD = 128 / 255
L1_WEIGHT = 100.0


def _same_shape(a, b, what="inputs"):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"{what} differ in shape: {np.shape(a)} vs {np.shape(b)}")


def soften_binary(soft: np.ndarray, binary: np.ndarray) -> np.ndarray:
    """Pixelwise max of a soft mask and a binary mask."""
    _same_shape(soft, binary)
    return np.maximum(np.asarray(soft, dtype=np.float64), np.asarray(binary, dtype=np.float64))


def binarize(soft: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    return np.asarray(soft) >= threshold


def consensus(masks, fraction: float = 0.5) -> np.ndarray:
    """Pixels marked by at least ceil(fraction * n_raters) masks."""
    masks = [np.asarray(m, dtype=bool) for m in masks]
    if not masks:
        raise ValueError("consensus needs at least one mask")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    _check_shapes(masks)
    need = math.ceil(fraction * len(masks) - 1e-12)
    return np.sum(masks, axis=0) >= need


def _check_shapes(masks):
    for m in masks[1:]:
        _same_shape(masks[0], m, "masks")


def uniform(n_classes: int) -> np.ndarray:
    return np.full(n_classes, 1.0 / n_classes)


def check_distribution(p, atol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > atol:
        raise ValueError("not a probability distribution")
    return p


def mix_labels(q, u=None, epsilon: float = 0.1) -> np.ndarray:
    """(1 - epsilon) q + epsilon u; u defaults to uniform over q's classes."""
    if not 0 <= epsilon <= 1:
        raise ValueError("epsilon must lie in [0, 1]")
    q = check_distribution(q)
    u = uniform(q.size) if u is None else check_distribution(u)
    _same_shape(q, u, "distributions")
    return (1.0 - epsilon) * q + epsilon * u


# ---------------------------------------------------------------- losses


def _check_scaled(pred, target, r, width, height):
    if r < 1:
        raise ValueError("upscale factor r must be >= 1")
    expected = (r * height, r * width)
    for name, a in (("pred", pred), ("target", target)):
        if np.shape(a) != expected:
            raise ValueError(f"{name} has shape {np.shape(a)}, expected {expected} for r={r}, W={width}, H={height}")


def mse_loss(pred, target, r: int, width: int, height: int) -> float:
    _check_scaled(pred, target, r, width, height)
    d = np.asarray(target, dtype=np.float64) - np.asarray(pred, dtype=np.float64)
    return float(np.sum(d * d) / (r * r * width * height))


def grad_mse(pred, target, r: int, width: int, height: int) -> np.ndarray:
    """Gradient of :func:`mse_loss` with respect to ``pred``."""
    _check_scaled(pred, target, r, width, height)
    d = np.asarray(target, dtype=np.float64) - np.asarray(pred, dtype=np.float64)
    return -2.0 * d / (r * r * width * height)


def l1_loss(pred, target) -> float:
    _same_shape(pred, target)
    return float(np.mean(np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64))))


def grad_l1(pred, target) -> np.ndarray:
    """Subgradient of :func:`l1_loss`; zero where pred equals target."""
    _same_shape(pred, target)
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return np.sign(d) / d.size


def adversarial_losses(d_on_fake, d_on_real) -> tuple[float, float]:
    """Least-squares GAN losses: (generator, discriminator)."""
    fake = np.asarray(d_on_fake, dtype=np.float64)
    real = np.asarray(d_on_real, dtype=np.float64)
    _same_shape(fake, real, "discriminator maps")
    for a in (fake, real):
        if a.size and (a.min() < 0 or a.max() > 1):
            raise ValueError("discriminator outputs must lie in [0, 1]")
    gen = float(np.mean((fake - 1.0) ** 2))
    disc = float(np.mean((real - 1.0) ** 2) + np.mean(fake**2))
    return gen, disc


def total_objective(adv_generator: float, l1: float, lam: float = L1_WEIGHT) -> float:
    if adv_generator < 0 or l1 < 0:
        raise ValueError("loss components must be non-negative")
    return adv_generator + lam * l1


def distill_combine(l_soft: float, l_hard: float, alpha: float) -> float:
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    if l_soft < 0 or l_hard < 0:
        raise ValueError("losses must be non-negative")
    return alpha * l_soft + (1.0 - alpha) * l_hard


@dataclass(frozen=True)
class LossBreakdown:
    mse: float
    l1: float
    adversarial: float
    total: float
    lam: float
    r: int

    @classmethod
    def compute(cls, pred, target, d_on_fake, r: int, width: int, height: int, lam: float = L1_WEIGHT):
        """MSE supervision is reported alongside, not inside, the adversarial + L1 total."""
        mse = mse_loss(pred, target, r, width, height)
        l1 = l1_loss(pred, target)
        adv = float(np.mean((np.asarray(d_on_fake, dtype=np.float64) - 1.0) ** 2))
        return cls(mse, l1, adv, total_objective(adv, l1, lam), lam, r)
