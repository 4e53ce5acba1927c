"""Synthetic lesion phantoms with analytic ground truth."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grabcut import RecistAnnotation
from .imaging import (
    DEFAULT_WINDOW,
    HU_OFFSET,
    RawCtSlice,
    StructuringElement,
    dilate,
    erode,
    save_image,
    save_raw_ct,
)


@dataclass(frozen=True)
class Phantom:
    image: np.ndarray  # noisy intensities in [0, 1]
    truth: np.ndarray  # bool, pixel centre inside the ellipse
    coverage: np.ndarray  # fractional area of each pixel inside the ellipse
    recist: RecistAnnotation


def _inside(x, y, cx, cy, a, b, theta):
    c, s = math.cos(theta), math.sin(theta)
    u = (x - cx) * c + (y - cy) * s
    v = -(x - cx) * s + (y - cy) * c
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def make_phantom(
    size: int = 64,
    radii: tuple[float, float] = (20.0, 20.0),
    center: tuple[float, float] | None = None,
    angle: float = 0.0,
    fg: float = 0.8,
    bg: float = 0.2,
    noise: float = 0.05,
    seed: int = 0,
    supersample: int = 4,
    inset: float = 1.5,
) -> Phantom:
    """Bright ellipse on a flat background with additive Gaussian noise.

    ``radii`` are (semi-major, semi-minor) in pixels, ``angle`` rotates the
    major axis (radians).  Edge pixels are rendered at their area coverage so
    the ideal matte is known.  RECIST endpoints are pulled ``inset`` pixels
    inside the boundary.
    """
    a, b = max(radii), min(radii)
    if center is None:
        center = ((size - 1) / 2.0, (size - 1) / 2.0)
    cx, cy = center
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    truth = _inside(xx, yy, cx, cy, a, b, angle)

    offs = (np.arange(supersample) + 0.5) / supersample - 0.5
    cov = np.zeros((size, size))
    for oy in offs:
        for ox in offs:
            cov += _inside(xx + ox, yy + oy, cx, cy, a, b, angle)
    cov /= supersample * supersample

    rng = np.random.default_rng(seed)
    img = bg + (fg - bg) * cov + rng.normal(0.0, noise, size=(size, size))
    img = np.clip(img, 0.0, 1.0)

    c, s = math.cos(angle), math.sin(angle)
    la, lb = a - inset, b - inset
    long_axis = ((cx - la * c, cy - la * s), (cx + la * c, cy + la * s))
    short_axis = ((cx + lb * s, cy - lb * c), (cx - lb * s, cy + lb * c))
    return Phantom(img, truth, cov, RecistAnnotation(long_axis, short_axis))


def random_phantom(size: int, seed: int, noise: float = 0.05) -> Phantom:
    """Phantom with a randomly sized, placed and oriented ellipse."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.18, 0.32) * size
    b = a * rng.uniform(0.6, 1.0)
    margin = a + 0.12 * size
    cx = rng.uniform(margin, size - 1 - margin)
    cy = rng.uniform(margin, size - 1 - margin)
    angle = rng.uniform(0, math.pi)
    return make_phantom(size, (a, b), (cx, cy), angle, noise=noise, seed=int(rng.integers(2**31)))


def rater_masks(truth: np.ndarray, rng: np.random.Generator, n: int = 4) -> list[np.ndarray]:
    """Disagreeing raters: the truth eroded or dilated by a random small radius."""
    out = []
    for _ in range(n):
        r = int(rng.integers(-2, 3))
        if r == 0:
            out.append(truth.copy())
        elif r < 0:
            out.append(erode(truth, StructuringElement("disk", -r)))
        else:
            out.append(dilate(truth, StructuringElement("disk", r)))
    return out


def write_phantom_set(
    out_dir,
    count: int = 10,
    size: int = 64,
    seed: int = 0,
    noise: float = 0.05,
    kind: str = "recist",
    raw16: bool = False,
    window: tuple[float, float] = DEFAULT_WINDOW,
) -> Path:
    """Write ``count`` random phantoms plus a manifest; returns the manifest path.

    With ``raw16`` the images are stored as 16-bit CT values that map back to
    the phantom intensities under ``window``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(count):
        case = f"phantom_{i:03d}"
        ph = random_phantom(size, seed * 100003 + i, noise)
        img_name = f"{case}.pgm"
        if raw16:
            level, width = window
            hu = level - width / 2.0 + ph.image * width
            save_raw_ct(RawCtSlice(np.round(hu + HU_OFFSET).astype(np.uint16)), out_dir / img_name)
        else:
            save_image(ph.image, out_dir / img_name)
        save_image(ph.truth, out_dir / f"{case}_gt.pgm")
        obj = {"case_id": case, "image": img_name, "ground_truth": f"{case}_gt.pgm"}
        if kind == "recist":
            obj["recist"] = [round(v, 3) for v in ph.recist.flat()]
        elif kind == "binary":
            obj["binary"] = f"{case}_gt.pgm"
        elif kind == "multirater":
            rng = np.random.default_rng(seed * 7919 + i)
            names = []
            for j, m in enumerate(rater_masks(ph.truth, rng)):
                names.append(f"{case}_rater{j}.pgm")
                save_image(m, out_dir / names[-1])
            obj["multirater"] = names
        else:
            raise ValueError(f"unknown annotation kind {kind!r}")
        if raw16:
            obj["window"] = list(window)
        lines.append(json.dumps(obj))
    manifest = out_dir / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest
