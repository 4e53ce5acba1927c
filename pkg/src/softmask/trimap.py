"""Trimap generation from RECIST axes, multi-rater masks, or a single binary mask."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grabcut import RecistAnnotation, grabcut, seeds_from_recist
from .imaging import StructuringElement, check_unit_image, dilate, erode
from .matting import BACKGROUND, FOREGROUND, UNKNOWN, TrimapError


@dataclass(frozen=True)
class GrabCutParams:
    k: int = 5
    gamma: float = 50.0
    iterations: int = 5
    band: int = 1
    frame: int | None = None  # None: max(1, 3% of the smaller image side)
    seed: int = 0
    backend: str = "auto"


def se_radius(mask: np.ndarray, se_scale: float) -> int:
    """max(1, round(se_scale * sqrt(area))), rounding halves up."""
    area = int(np.count_nonzero(mask))
    return max(1, int(math.floor(se_scale * math.sqrt(area) + 0.5)))


def compose(fg: np.ndarray, bg: np.ndarray) -> np.ndarray:
    if np.any(fg & bg):
        raise TrimapError("foreground and background overlap")
    out = np.full(fg.shape, UNKNOWN, dtype=np.uint8)
    out[fg] = FOREGROUND
    out[bg] = BACKGROUND
    return out


def _morph_trimap(mask: np.ndarray, se_scale: float, shape: str) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise TrimapError("mask is empty")
    r = se_radius(mask, se_scale)
    se = StructuringElement(shape, r)
    fg = erode(mask, se)
    if not fg.any():
        raise TrimapError(
            f"empty foreground after erosion with radius {r}; try a smaller se_scale (current {se_scale})"
        )
    bg = ~dilate(mask, se)
    if not bg.any():
        raise TrimapError(f"no background seed: dilation by radius {r} covers the whole image")
    return compose(fg, bg)


def trimap_from_binary(mask: np.ndarray, se_scale: float = 0.05, shape: str = "disk") -> np.ndarray:
    """Erode the mask for sure foreground, dilate it and complement for sure background."""
    return _morph_trimap(mask, se_scale, shape)


def trimap_from_multirater(masks, min_raters: int | None = None, union_min: int = 1) -> np.ndarray:
    """Foreground where at least ``min_raters`` agree (default: all of them);
    background where fewer than ``union_min`` raters marked the pixel
    (default 1, i.e. outside the union)."""
    masks = [np.asarray(m, dtype=bool) for m in masks]
    if len(masks) < 2:
        raise TrimapError("need at least two rater masks")
    if any(m.shape != masks[0].shape for m in masks):
        raise TrimapError("rater masks differ in shape")
    n = len(masks)
    if min_raters is None:
        min_raters = n
    if not 1 <= union_min <= min_raters <= n:
        raise ValueError(f"need 1 <= union_min <= min_raters <= {n}")
    votes = np.sum(masks, axis=0)
    fg = votes >= min_raters
    if not fg.any():
        raise TrimapError("raters share no common foreground pixel")
    bg = votes < union_min
    if not bg.any():
        raise TrimapError("no background seed: the rater union covers the whole image")
    return compose(fg, bg)


def trimap_from_recist(
    img: np.ndarray,
    annotation: RecistAnnotation,
    params: GrabCutParams = GrabCutParams(),
    se_scale: float = 0.05,
    shape: str = "disk",
    return_mask: bool = False,
):
    """Grabcut from RECIST seeds, then erode/dilate the result into a trimap."""
    img = check_unit_image(img)
    h, w = img.shape
    seeds = seeds_from_recist(annotation, w, h, params.band, params.frame)
    result = grabcut(img, seeds, params.k, params.gamma, params.iterations, params.seed, params.backend)
    if not result.mask.any():
        raise TrimapError("grabcut produced an empty foreground")
    tri = _morph_trimap(result.mask, se_scale, shape)
    return (tri, result.mask) if return_mask else tri


def unknown_fraction(trimap: np.ndarray) -> float:
    return float(np.mean(np.asarray(trimap) == UNKNOWN))


def encode(trimap: np.ndarray) -> np.ndarray:
    """Trimap codes as a [0,1] image for the image writers (0, 128/255, 1)."""
    return np.asarray(trimap, dtype=np.float64) / 255.0
