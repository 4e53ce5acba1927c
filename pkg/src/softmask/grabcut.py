"""GrabCut-style segmentation of grayscale images seeded from RECIST axes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flow import FlowNetwork, max_flow
from .gmm import GmmModel, fit_gmm
from .imaging import StructuringElement, check_unit_image, dilate

SURE_BG = 0
SURE_FG = 1
UNDECIDED = 2


class SeedError(ValueError):
    pass


def _length(seg) -> float:
    (x0, y0), (x1, y1) = seg
    return math.hypot(x1 - x0, y1 - y0)


@dataclass(frozen=True)
class RecistAnnotation:
    """Long and short lesion diameters as ``((x0, y0), (x1, y1))`` pixel segments."""

    long_axis: tuple
    short_axis: tuple

    def __post_init__(self):
        la = tuple(tuple(float(c) for c in p) for p in self.long_axis)
        sa = tuple(tuple(float(c) for c in p) for p in self.short_axis)
        object.__setattr__(self, "long_axis", la)
        object.__setattr__(self, "short_axis", sa)
        if _length(la) == 0 and _length(sa) == 0:
            raise SeedError("RECIST axes degenerate to a single point")
        if _length(sa) < 1 - 1e-9:
            raise SeedError("RECIST short axis must be at least 1 pixel long")
        if _length(la) < _length(sa) - 1e-9:
            raise SeedError("RECIST long axis is shorter than the short axis")

    @classmethod
    def from_flat(cls, coords) -> "RecistAnnotation":
        """Build from 8 numbers: long x0 y0 x1 y1, then short x0 y0 x1 y1."""
        c = [float(v) for v in coords]
        if len(c) != 8:
            raise ValueError(f"RECIST annotation needs 8 coordinates, got {len(c)}")
        return cls(((c[0], c[1]), (c[2], c[3])), ((c[4], c[5]), (c[6], c[7])))

    def flat(self) -> list[float]:
        return [v for seg in (self.long_axis, self.short_axis) for p in seg for v in p]

    def check_bounds(self, width: int, height: int) -> None:
        for seg in (self.long_axis, self.short_axis):
            for x, y in seg:
                if not (0 <= x <= width - 1 and 0 <= y <= height - 1):
                    raise SeedError(f"RECIST endpoint ({x}, {y}) outside {width}x{height} image")


def bresenham(p0, p1) -> list[tuple[int, int]]:
    """Integer raster of the segment p0-p1 as (x, y) pairs."""
    x0, y0 = (int(round(v)) for v in p0)
    x1, y1 = (int(round(v)) for v in p1)
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    out = []
    while True:
        out.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return out
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def default_frame(width: int, height: int) -> int:
    return max(1, int(round(0.03 * min(width, height))))


def rasterize_axes(annotation: RecistAnnotation, width: int, height: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    for seg in (annotation.long_axis, annotation.short_axis):
        for x, y in bresenham(*seg):
            mask[y, x] = True
    return mask


def seeds_from_recist(
    annotation: RecistAnnotation, width: int, height: int, band: int = 1, frame: int | None = None
) -> np.ndarray:
    """Seed map: dilated axes are sure foreground, a border frame is sure background."""
    if band < 0:
        raise ValueError("band must be >= 0")
    if frame is None:
        frame = default_frame(width, height)
    if frame < 1:
        raise ValueError("frame must be >= 1")
    annotation.check_bounds(width, height)
    fg = rasterize_axes(annotation, width, height)
    if band > 0:
        fg = dilate(fg, StructuringElement("disk", band))
    border = np.ones((height, width), dtype=bool)
    border[frame:-frame, frame:-frame] = False
    if np.any(fg & border):
        raise SeedError("seed conflict: RECIST foreground reaches the background frame")
    seeds = np.full((height, width), UNDECIDED, dtype=np.int8)
    seeds[border] = SURE_BG
    seeds[fg] = SURE_FG
    return seeds


def check_seeds(seeds: np.ndarray, shape=None) -> None:
    seeds = np.asarray(seeds)
    if shape is not None and seeds.shape != shape:
        raise SeedError(f"seed map shape {seeds.shape} does not match image {shape}")
    if not np.isin(seeds, (SURE_BG, SURE_FG, UNDECIDED)).all():
        raise SeedError("seed map contains unknown labels")
    if not (seeds == SURE_FG).any() or not (seeds == SURE_BG).any():
        raise SeedError("seed map needs at least one sure-foreground and one sure-background pixel")


# ---------------------------------------------------------------- energy


def smoothness_weights(img: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Contrast-sensitive 4-neighbour weights (right, down) = gamma * exp(-beta * d^2)."""
    dr = np.diff(img, axis=1) ** 2
    dd = np.diff(img, axis=0) ** 2
    n = dr.size + dd.size
    mean = (dr.sum() + dd.sum()) / n if n else 0.0
    beta = 1.0 / (2.0 * mean) if mean > 0 else 0.0
    return gamma * np.exp(-beta * dr), gamma * np.exp(-beta * dd)


def energy(fg: np.ndarray, d_fg: np.ndarray, d_bg: np.ndarray, w_right: np.ndarray, w_down: np.ndarray) -> float:
    data = d_fg[fg].sum() + d_bg[~fg].sum()
    smooth = w_right[fg[:, 1:] != fg[:, :-1]].sum() + w_down[fg[1:, :] != fg[:-1, :]].sum()
    return float(data + smooth)


def _terminal_caps(d_fg, d_bg, seeds, big):
    base = np.minimum(d_fg, d_bg)
    to_src = d_bg - base  # paid when the pixel lands on the background side
    to_snk = d_fg - base
    to_src = np.where(seeds == SURE_FG, big, np.where(seeds == SURE_BG, 0.0, to_src))
    to_snk = np.where(seeds == SURE_BG, big, np.where(seeds == SURE_FG, 0.0, to_snk))
    return to_src, to_snk


def _big(d_fg, d_bg, w_right, w_down) -> float:
    return 1.0 + float(np.abs(d_fg - d_bg).sum() + w_right.sum() + w_down.sum())


def min_cut_grid(d_fg, d_bg, w_right, w_down, seeds, backend: str = "auto") -> np.ndarray:
    """Minimise the grid energy subject to the seeds; returns the foreground mask."""
    big = _big(d_fg, d_bg, w_right, w_down)
    to_src, to_snk = _terminal_caps(d_fg, d_bg, seeds, big)
    h, w = d_fg.shape
    if backend == "auto":
        try:
            import maxflow  # noqa: F401

            backend = "pymaxflow"
        except ImportError:
            backend = "python"
    if backend == "pymaxflow":
        import maxflow

        g = maxflow.Graph[float]()
        nodes = g.add_grid_nodes((h, w))
        right = np.zeros((h, w))
        right[:, :-1] = w_right
        down = np.zeros((h, w))
        down[:-1, :] = w_down
        g.add_grid_edges(nodes, weights=right, structure=np.array([[0, 0, 0], [0, 0, 1], [0, 0, 0]]), symmetric=True)
        g.add_grid_edges(nodes, weights=down, structure=np.array([[0, 0, 0], [0, 0, 0], [0, 1, 0]]), symmetric=True)
        g.add_grid_tedges(nodes, to_src, to_snk)
        g.maxflow()
        return ~g.get_grid_segments(nodes)
    if backend == "python":
        n = h * w
        net = FlowNetwork(n + 2, source=n, sink=n + 1)
        idx = np.arange(n).reshape(h, w)
        for i, (a, b) in enumerate(zip(to_src.ravel(), to_snk.ravel())):
            if a > 0:
                net.add_edge(n, i, a)
            if b > 0:
                net.add_edge(i, n + 1, b)
        for (u, v), c in zip(zip(idx[:, :-1].ravel(), idx[:, 1:].ravel()), w_right.ravel()):
            net.add_edge(int(u), int(v), c)
            net.add_edge(int(v), int(u), c)
        for (u, v), c in zip(zip(idx[:-1, :].ravel(), idx[1:, :].ravel()), w_down.ravel()):
            net.add_edge(int(u), int(v), c)
            net.add_edge(int(v), int(u), c)
        _, side = max_flow(net)
        fg = np.zeros(n, dtype=bool)
        fg[[i for i in side if i < n]] = True
        return fg.reshape(h, w)
    raise ValueError(f"unknown max-flow backend {backend!r}")


@dataclass
class GrabCutResult:
    mask: np.ndarray
    energies: list = field(default_factory=list)
    fg_model: GmmModel | None = None
    bg_model: GmmModel | None = None

    @property
    def iterations(self) -> int:
        return len(self.energies)


def grabcut(
    img: np.ndarray,
    seeds: np.ndarray,
    k: int = 5,
    gamma: float = 50.0,
    iterations: int = 5,
    seed: int = 0,
    backend: str = "auto",
) -> GrabCutResult:
    """Alternate GMM fitting and exact min-cut for up to ``iterations`` rounds.

    Undecided pixels start on the background side.  The first round fits both
    GMMs from k-means++ seeding; later rounds continue EM from the previous
    models, which keeps the energy non-increasing.
    """
    img = check_unit_image(img)
    seeds = np.asarray(seeds)
    check_seeds(seeds, img.shape)
    w_right, w_down = smoothness_weights(img, gamma)
    fg = seeds == SURE_FG
    fg_model = bg_model = None
    energies: list[float] = []
    for _ in range(iterations):
        fg_model = fit_gmm(img[fg], k, seed, init=fg_model)
        bg_model = fit_gmm(img[~fg], k, seed + 1, init=bg_model)
        d_fg = -fg_model.log_pdf(img)
        d_bg = -bg_model.log_pdf(img)
        new_fg = min_cut_grid(d_fg, d_bg, w_right, w_down, seeds, backend)
        e = energy(new_fg, d_fg, d_bg, w_right, w_down)
        if energies:
            assert e <= energies[-1] + 1e-9 * max(1.0, abs(energies[-1])), (
                f"grabcut energy increased from {energies[-1]} to {e}"
            )
        energies.append(e)
        done = np.array_equal(new_fg, fg)
        fg = new_fg
        if done:
            break
    return GrabCutResult(fg, energies, fg_model, bg_model)


def grabcut_segment(img, seeds, k: int = 5, gamma: float = 50.0, iterations: int = 5, seed: int = 0, backend: str = "auto") -> np.ndarray:
    return grabcut(img, seeds, k, gamma, iterations, seed, backend).mask
