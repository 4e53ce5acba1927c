"""Closed-form alpha matting for single-channel images.

The matting Laplacian is built over every (2r+1)x(2r+1) window lying fully
inside the image and the trimap-constrained quadratic

    alpha^T L alpha + lambda_c (alpha - b)^T D (alpha - b)

is minimised by Jacobi-preconditioned conjugate gradient.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.lib.stride_tricks import sliding_window_view

from .imaging import check_unit_image

# trimap codes double as the 8-bit file encoding
BACKGROUND = 0
UNKNOWN = 128
FOREGROUND = 255


class TrimapError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual: float, tol: float):
        super().__init__(f"CG did not reach tol={tol:g} in {iterations} iterations (relative residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


def check_trimap(trimap: np.ndarray) -> np.ndarray:
    trimap = np.asarray(trimap)
    if trimap.ndim != 2:
        raise TrimapError("trimap must be 2D")
    if not np.isin(trimap, (BACKGROUND, UNKNOWN, FOREGROUND)).all():
        raise TrimapError("trimap values must be 0 (background), 128 (unknown) or 255 (foreground)")
    if not (trimap == FOREGROUND).any():
        raise TrimapError("trimap has no foreground pixel")
    if not (trimap == BACKGROUND).any():
        raise TrimapError("trimap has no background pixel")
    return trimap.astype(np.uint8)


def trimap_from_image(img: np.ndarray) -> np.ndarray:
    """Decode a loaded 8-bit trimap image (values in [0,1]) to trimap codes."""
    q = np.floor(np.asarray(img) * 255 + 0.5)
    out = np.full(q.shape, UNKNOWN, dtype=np.uint8)
    out[q <= 63] = BACKGROUND
    out[q >= 192] = FOREGROUND
    return out


def build_matting_laplacian(img: np.ndarray, window_radius: int = 1, eps: float = 1e-7) -> sp.csr_matrix:
    img = check_unit_image(img)
    if eps <= 0:
        raise ValueError("eps must be positive")
    r = window_radius
    side = 2 * r + 1
    h, w = img.shape
    if h < side or w < side:
        raise ValueError(f"image {w}x{h} is too small for one {side}x{side} window")
    nwin = side * side
    wins = sliding_window_view(img, (side, side))  # (h-2r, w-2r, side, side)
    vals = wins.reshape(h - 2 * r, w - 2 * r, nwin)
    mu = vals.mean(axis=2, keepdims=True)
    var = vals.var(axis=2, keepdims=True)
    dev = vals - mu
    scale = 1.0 / (var + eps / nwin)

    # every in-window pair (a, b) lands on the band with offset pos(b) - pos(a);
    # bands[(dy, dx)][y, x] holds L[(y, x), (y + dy, x + dx)]
    offsets = [(dy, dx) for dy in range(-2 * r, 2 * r + 1) for dx in range(-2 * r, 2 * r + 1)]
    bands = {o: np.zeros((h, w)) for o in offsets}
    for a in range(nwin):
        ay, ax = divmod(a, side)
        for b in range(nwin):
            by, bx = divmod(b, side)
            contrib = (float(a == b) - (1.0 + dev[:, :, a] * dev[:, :, b] * scale[:, :, 0]) / nwin)
            bands[(by - ay, bx - ax)][ay : ay + h - 2 * r, ax : ax + w - 2 * r] += contrib

    n = h * w
    # on narrow images two (dy, dx) offsets can share a flat offset; their supports are disjoint
    merged: dict[int, np.ndarray] = {}
    for (dy, dx), band in bands.items():
        k = dy * w + dx
        merged[k] = merged[k] + band.ravel() if k in merged else band.ravel()
    ks = sorted(merged)
    diagonals = [merged[k][: n - k] if k >= 0 else merged[k][-k:] for k in ks]
    return sp.diags(diagonals, ks, shape=(n, n), format="csr")


@dataclass
class SolveInfo:
    iterations: int
    residual: float


def conjugate_gradient(A, b, tol: float = 1e-6, max_iters: int = 2000, x0=None):
    """Jacobi-preconditioned CG; stops on ||b - Ax|| <= tol * ||b||."""
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise ValueError("Jacobi preconditioner needs a positive diagonal")
    inv_d = 1.0 / diag
    x = np.zeros_like(b) if x0 is None else x0.astype(np.float64).copy()
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), SolveInfo(0, 0.0)
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return x, SolveInfo(0, res)
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iters + 1):
        Ap = A @ p
        step = rz / (p @ Ap)
        x += step * p
        r -= step * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, SolveInfo(it, res)
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(max_iters, res, tol)


def constraint_system(L, trimap: np.ndarray, lambda_c: float):
    """Return (L + lambda_c D, lambda_c b) for the trimap constraints."""
    known = (trimap != UNKNOWN).ravel().astype(np.float64)
    b = (trimap == FOREGROUND).ravel().astype(np.float64)
    A = (L + sp.diags(lambda_c * known)).tocsr()
    return A, lambda_c * b


def solve_alpha(
    L, trimap: np.ndarray, lambda_c: float = 100.0, tol: float = 1e-6, max_iters: int = 2000, info: bool = False
):
    trimap = check_trimap(trimap)
    if L.shape != (trimap.size, trimap.size):
        raise ValueError(f"Laplacian of size {L.shape[0]} does not match {trimap.size} trimap pixels")
    if lambda_c <= 0:
        raise ValueError("lambda_c must be positive")
    A, rhs = constraint_system(L, trimap, lambda_c)
    x0 = (trimap == FOREGROUND).ravel().astype(np.float64)
    x0[(trimap == UNKNOWN).ravel()] = 0.5
    x, stats = conjugate_gradient(A, rhs, tol, max_iters, x0)
    alpha = np.clip(x, 0.0, 1.0).reshape(trimap.shape)
    return (alpha, stats) if info else alpha


@dataclass(frozen=True)
class MattingParams:
    window_radius: int = 1
    eps: float = 1e-7
    lambda_c: float = 100.0
    tol: float = 1e-6
    max_iters: int = 2000


@dataclass
class MatteResult:
    alpha: np.ndarray
    iterations: int
    residual: float
    laplacian_ms: float
    solve_ms: float

    @property
    def total_ms(self) -> float:
        return self.laplacian_ms + self.solve_ms


def matte(img: np.ndarray, trimap: np.ndarray, params: MattingParams = MattingParams()) -> MatteResult:
    """Laplacian construction followed by the constrained solve, with stage timings."""
    trimap = check_trimap(trimap)
    if trimap.shape != np.shape(img):
        raise TrimapError(f"trimap shape {trimap.shape} does not match image {np.shape(img)}")
    t0 = time.perf_counter()
    L = build_matting_laplacian(img, params.window_radius, params.eps)
    t1 = time.perf_counter()
    alpha, stats = solve_alpha(L, trimap, params.lambda_c, params.tol, params.max_iters, info=True)
    t2 = time.perf_counter()
    return MatteResult(alpha, stats.iterations, stats.residual, (t1 - t0) * 1e3, (t2 - t1) * 1e3)
