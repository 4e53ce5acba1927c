"""Grayscale image IO, CT windowing, binary morphology and bilinear resizing.

Images are plain 2D numpy arrays indexed ``[row, col]``:

* gray images and soft masks are ``float64`` with values in [0, 1],
* binary masks are ``bool``,
* raw 16-bit CT slices are wrapped in :class:`RawCtSlice` so they cannot be
  mistaken for display-ready intensities.
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

HU_OFFSET = 32768
DEFAULT_WINDOW = (-600.0, 1500.0)  # lung window (level, width)


class ImageFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RawCtSlice:
    """Un-windowed 16-bit CT slice; stored value = HU + 32768."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError("RawCtSlice data must be 2D")

    @property
    def hu(self) -> np.ndarray:
        return self.data.astype(np.float64) - HU_OFFSET

    def as_unit(self) -> np.ndarray:
        """Interpret the stored values as a plain 16-bit intensity image."""
        return self.data.astype(np.float64) / 65535.0


@dataclass(frozen=True)
class StructuringElement:
    shape: str = "disk"
    radius: int = 1

    def __post_init__(self):
        if self.shape not in ("disk", "square"):
            raise ValueError(f"unknown structuring element shape {self.shape!r}")
        if self.radius < 1:
            raise ValueError("structuring element radius must be >= 1")

    def footprint(self) -> np.ndarray:
        r = self.radius
        if self.shape == "square":
            return np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
        yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
        return xx * xx + yy * yy <= r * r


def check_unit_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {img.shape}")
    if img.size and (not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 1.0):
        raise ValueError(f"{name} values must lie in [0, 1]")
    return img


# ---------------------------------------------------------------- IO

def _read_pgm(raw: bytes) -> tuple[np.ndarray, int]:
    if not raw.startswith(b"P5"):
        raise ImageFormatError("malformed PGM header (only binary P5 is supported)")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.find(b"\n", pos)
            if pos < 0:
                break
            continue
        start = pos
        while pos < len(raw) and raw[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageFormatError("malformed PGM header")
        fields.append(int(raw[start:pos]))
    if len(fields) < 3 or pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise ImageFormatError("malformed PGM header")
    w, h, maxval = fields
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise ImageFormatError(f"malformed PGM header: {w}x{h} maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    body = raw[pos + 1 :]
    need = w * h * dtype.itemsize
    if len(body) < need:
        raise ImageFormatError(f"truncated PGM: expected {need} bytes of pixel data, got {len(body)}")
    data = np.frombuffer(body[:need], dtype=dtype).reshape(h, w)
    return data.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def _read_png(path: Path) -> tuple[np.ndarray, int]:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("L", "1"):
            return np.array(im.convert("L"), dtype=np.uint8), 255
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.array(im)
            if arr.min() < 0 or arr.max() > 65535:
                raise ImageFormatError("unsupported bit depth")
            return arr.astype(np.uint16), 65535
        raise ImageFormatError(f"unsupported color format: PNG mode {im.mode}")


def load_image(path, ct: bool = True):
    """Load an 8/16-bit grayscale PGM (P5) or PNG.

    8-bit files come back as a float image ``v / maxval``.  16-bit files come
    back as a :class:`RawCtSlice` when ``ct`` is true, otherwise as ``v / 65535``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(b"\x89PNG"):
        data, maxval = _read_png(path)
    elif head.startswith(b"P5"):
        data, maxval = _read_pgm(path.read_bytes())
    elif head[:2] in (b"P2", b"P3", b"P6"):
        raise ImageFormatError("unsupported color format" if head[:2] in (b"P3", b"P6") else "ASCII PGM is not supported")
    else:
        raise ImageFormatError(f"unrecognised image format: {path}")

    if maxval > 255 and ct:
        return RawCtSlice(data)
    return data.astype(np.float64) / maxval


def quantize(img: np.ndarray, depth: int = 8) -> np.ndarray:
    if depth not in (8, 16):
        raise ValueError("depth must be 8 or 16")
    img = np.asarray(img)
    if img.dtype == bool:
        img = img.astype(np.float64)
    img = check_unit_image(img)
    top = (1 << depth) - 1
    # round-half-up so that 0.5 -> 128 at 8 bit
    q = np.floor(img * top + 0.5)
    return q.astype(np.uint16 if depth == 16 else np.uint8)


def _atomic_write(path: Path, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_pgm(q: np.ndarray) -> bytes:
    h, w = q.shape
    if q.dtype == np.uint16:
        return b"P5\n%d %d\n65535\n" % (w, h) + q.astype(">u2").tobytes()
    return b"P5\n%d %d\n255\n" % (w, h) + q.astype(np.uint8).tobytes()


def save_image(img, path, depth: int = 8) -> None:
    """Write a [0,1] image, soft mask or bool mask; format is picked from the suffix.

    Values are quantized with ``round(v * (2**depth - 1))``.
    """
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"parent directory does not exist: {path.parent}")
    q = quantize(img, depth)
    if path.suffix.lower() == ".png":
        import io

        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(q).save(buf, format="PNG")
        _atomic_write(path, buf.getvalue())
    else:
        _atomic_write(path, encode_pgm(q))


def save_raw_ct(slice_: RawCtSlice, path) -> None:
    path = Path(path)
    _atomic_write(path, encode_pgm(np.asarray(slice_.data, dtype=np.uint16)))


def load_mask(path) -> np.ndarray:
    """Load a mask file as bool (any pixel at or above half scale is on)."""
    img = load_image(path, ct=False)
    return img >= 0.5


# ---------------------------------------------------------------- CT windowing


def hu_window(slice_: RawCtSlice, level: float = DEFAULT_WINDOW[0], width: float = DEFAULT_WINDOW[1]) -> np.ndarray:
    if width <= 0:
        raise ValueError(f"window width must be positive, got {width}")
    lo = level - width / 2.0
    return np.clip((slice_.hu - lo) / width, 0.0, 1.0)


def to_gray(img, window=DEFAULT_WINDOW) -> np.ndarray:
    """Window raw CT data; pass already-normalised images through."""
    if isinstance(img, RawCtSlice):
        return hu_window(img, *window)
    return check_unit_image(img)


# ---------------------------------------------------------------- morphology


def morphology(mask: np.ndarray, op: str, se: StructuringElement) -> np.ndarray:
    """Binary erosion/dilation; pixels outside the image count as background."""
    mask = np.asarray(mask, dtype=bool)
    fp = se.footprint()
    if op == "erode":
        return ndimage.binary_erosion(mask, structure=fp, border_value=0)
    if op == "dilate":
        return ndimage.binary_dilation(mask, structure=fp, border_value=0)
    raise ValueError(f"unknown morphology op {op!r}")


def erode(mask, se: StructuringElement) -> np.ndarray:
    return morphology(mask, "erode", se)


def dilate(mask, se: StructuringElement) -> np.ndarray:
    return morphology(mask, "dilate", se)


# ---------------------------------------------------------------- resizing


def _source_coords(n_src: int, n_dst: int) -> np.ndarray:
    if n_dst == 1:
        return np.zeros(1)
    return np.arange(n_dst) * ((n_src - 1) / (n_dst - 1))


def bilinear_resize(img: np.ndarray, new_width: int, new_height: int) -> np.ndarray:
    """Align-corners bilinear interpolation (corner pixels map onto corner pixels)."""
    img = np.asarray(img, dtype=np.float64)
    if new_width < 1 or new_height < 1:
        raise ValueError("target dimensions must be >= 1")
    h, w = img.shape
    if (h, w) == (new_height, new_width):
        return img.copy()
    ys = _source_coords(h, new_height)
    xs = _source_coords(w, new_width)
    y0 = np.minimum(np.floor(ys).astype(int), h - 1)
    x0 = np.minimum(np.floor(xs).astype(int), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    out = top * (1 - fy) + bot * fy
    # convex combinations can overshoot by an ulp
    return np.clip(out, img.min(), img.max())
