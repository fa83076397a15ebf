"""Raster containers and float-image file I/O.

All pixel data lives in row-major numpy arrays indexed ``data[y, x]`` (and
``data[y, x, c]`` for color).  Arrays are 32-bit floats, validated as finite
at construction and frozen afterwards, so instances can be shared freely
across threads and processes.

File formats:

* PFM (Portable Float Map) — ``Pf`` single channel / ``PF`` three channels,
  dimension line ``<w> <h>``, a negative scale line marking little-endian
  float32 payload, scanlines stored bottom-to-top.  Reading back a written
  file reproduces every finite float bit pattern exactly.
* PPM (binary ``P6``, maxval 255) — 8-bit color previews, values quantized
  linearly from [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PfmParseError(ValueError):
    """Raised for malformed PFM headers or payloads."""


class PpmParseError(ValueError):
    """Raised for malformed PPM headers or payloads."""


_MAX_PIXELS = 1 << 26  # dimension overflow guard for file headers


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")


@dataclass(frozen=True, eq=False)
class Image:
    """Color or gray observation, values in [0, 1].

    ``data`` has shape (height, width, channels) with channels 1 or 3.
    Values are clamped into [0, 1] at construction; non-finite input is
    rejected.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError("Image data must be HxWx1 or HxWx3")
        _check_finite(arr, "Image")
        arr = np.clip(arr, 0.0, 1.0)
        object.__setattr__(self, "data", _freeze(np.ascontiguousarray(arr)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def gray(self) -> np.ndarray:
        """Channel-mean intensity, shape (h, w), float64."""
        return self.data.astype(np.float64).mean(axis=2)


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel depth in millimetres, shape (height, width).

    Entries must be finite; positivity is required only where an
    accompanying :class:`Mask` marks a pixel valid, and is enforced by the
    operations that consume depth.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError("DepthMap data must be 2-D")
        _check_finite(arr, "DepthMap")
        object.__setattr__(self, "data", _freeze(np.ascontiguousarray(arr)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class UncMap:
    """Per-pixel uncertainty, either a standard deviation or a variance.

    The ``kind`` flag makes the unit explicit; conversions go through
    :meth:`to_std` / :meth:`to_variance` only.
    """

    data: np.ndarray
    kind: str = "std"

    def __post_init__(self):
        if self.kind not in ("std", "variance"):
            raise ValueError("UncMap kind must be 'std' or 'variance'")
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError("UncMap data must be 2-D")
        _check_finite(arr, "UncMap")
        if np.any(arr < 0):
            raise ValueError("UncMap entries must be >= 0")
        object.__setattr__(self, "data", _freeze(np.ascontiguousarray(arr)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def to_std(self) -> "UncMap":
        if self.kind == "std":
            return self
        return UncMap(np.sqrt(self.data.astype(np.float64)), "std")

    def to_variance(self) -> "UncMap":
        if self.kind == "variance":
            return self
        return UncMap(self.data.astype(np.float64) ** 2, "variance")


@dataclass(frozen=True, eq=False)
class Mask:
    """Per-pixel validity, shape (height, width), boolean."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=bool)
        if arr.ndim != 2:
            raise ValueError("Mask data must be 2-D")
        object.__setattr__(self, "data", _freeze(np.ascontiguousarray(arr)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @staticmethod
    def full(height: int, width: int, value: bool = True) -> "Mask":
        return Mask(np.full((height, width), value, dtype=bool))

    def __and__(self, other: "Mask") -> "Mask":
        return Mask(self.data & other.data)

    @property
    def count(self) -> int:
        return int(self.data.sum())


def same_shape(*maps) -> None:
    """Raise ValueError unless all given rasters share (height, width)."""
    shapes = {(m.height, m.width) for m in maps}
    if len(shapes) > 1:
        raise ValueError(f"raster dimensions disagree: {sorted(shapes)}")


# ---------------------------------------------------------------------------
# bilinear sampling


def bilinear_sample(img: Image, x: float, y: float) -> tuple[np.ndarray, bool]:
    """Sample ``img`` at continuous pixel coordinates (x, y).

    Pixel centers sit at integer coordinates; the sample is valid only when
    the full 2x2 interpolation footprint stays inside [0, w-1] x [0, h-1].
    Returns (per-channel color, valid).  Out-of-bounds samples return zeros
    with valid=False rather than clamping.
    """
    h, w = img.height, img.width
    c = img.channels
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        return np.zeros(c, dtype=np.float64), False
    x0 = min(int(np.floor(x)), w - 2) if w > 1 else 0
    y0 = min(int(np.floor(y)), h - 2) if h > 1 else 0
    fx = x - x0
    fy = y - y0
    d = img.data.astype(np.float64)
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    c00 = d[y0, x0]
    c10 = d[y0, x1]
    c01 = d[y1, x0]
    c11 = d[y1, x1]
    top = c00 * (1 - fx) + c10 * fx
    bot = c01 * (1 - fx) + c11 * fx
    return top * (1 - fy) + bot * fy, True


def bilinear_sample_map(
    img: Image, xs: np.ndarray, ys: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`bilinear_sample` over coordinate arrays.

    Returns (values with shape xs.shape + (channels,), valid bool array).
    Invalid locations hold zeros.
    """
    h, w = img.height, img.width
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    valid = (xs >= 0.0) & (xs <= w - 1) & (ys >= 0.0) & (ys <= h - 1)
    xc = np.clip(np.where(valid, xs, 0.0), 0.0, max(w - 1, 0))
    yc = np.clip(np.where(valid, ys, 0.0), 0.0, max(h - 1, 0))
    x0 = np.minimum(np.floor(xc).astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(np.floor(yc).astype(np.int64), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0)[..., None]
    fy = (yc - y0)[..., None]
    d = img.data.astype(np.float64)
    c00 = d[y0, x0]
    c10 = d[y0, x1]
    c01 = d[y1, x0]
    c11 = d[y1, x1]
    out = (c00 * (1 - fx) + c10 * fx) * (1 - fy) + (c01 * (1 - fx) + c11 * fx) * fy
    out[~valid] = 0.0
    return out, valid


# ---------------------------------------------------------------------------
# PFM


def write_pfm(map_or_image, path) -> None:
    """Write an Image (3-channel -> "PF") or single-channel map ("Pf")."""
    if isinstance(map_or_image, Image):
        arr = map_or_image.data
        if arr.shape[2] == 1:
            arr = arr[:, :, 0]
    elif isinstance(map_or_image, (DepthMap, UncMap)):
        arr = map_or_image.data
    else:
        raise TypeError("write_pfm expects Image, DepthMap or UncMap")
    header = b"PF\n" if arr.ndim == 3 else b"Pf\n"
    h, w = arr.shape[0], arr.shape[1]
    payload = np.flipud(arr).astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(payload)


def _read_token(f) -> bytes:
    # whitespace-delimited token, PFM/PPM header style
    tok = b""
    while True:
        ch = f.read(1)
        if ch == b"":
            raise PfmParseError("unexpected end of data in header")
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_pfm(path):
    """Read a PFM file; "PF" yields an :class:`Image`, "Pf" a :class:`DepthMap`.

    Single-channel maps are returned as DepthMap carriers regardless of
    semantics; callers loading uncertainty re-wrap the payload in an
    :class:`UncMap` with the right kind.
    """
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise PfmParseError(f"not a PFM file (magic {magic!r})")
        try:
            w = int(_read_token(f))
            h = int(_read_token(f))
            scale = float(_read_token(f))
        except ValueError as e:
            raise PfmParseError(f"malformed PFM header: {e}") from None
        if w <= 0 or h <= 0 or w * h * channels > _MAX_PIXELS:
            raise PfmParseError(f"bad PFM dimensions {w}x{h}")
        if scale >= 0:
            raise PfmParseError("big-endian PFM (positive scale) not supported")
        n = w * h * channels
        payload = f.read(4 * n)
        if len(payload) < 4 * n:
            raise PfmParseError("unexpected end of data")
        arr = np.frombuffer(payload, dtype="<f4").reshape(
            (h, w, channels) if channels == 3 else (h, w)
        )
        arr = np.flipud(arr).copy()
        if not np.all(np.isfinite(arr)):
            raise PfmParseError("non-finite PFM payload")
    if channels == 3:
        return Image(arr)
    return DepthMap(arr)


# ---------------------------------------------------------------------------
# PPM (binary P6 color previews)


def write_ppm(img: Image, path) -> None:
    """Write an 8-bit binary P6 preview; [0,1] maps linearly to [0,255]."""
    arr = img.data
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    q = np.rint(arr.astype(np.float64) * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        f.write(q.tobytes())


def read_ppm(path) -> Image:
    """Read a binary P6 file back into an :class:`Image` (values k/255)."""
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic != b"P6":
            raise PpmParseError(f"not a binary PPM (magic {magic!r})")
        try:
            w = int(_read_token(f))
            h = int(_read_token(f))
            maxval = int(_read_token(f))
        except ValueError as e:
            raise PpmParseError(f"malformed PPM header: {e}") from None
        if w <= 0 or h <= 0 or w * h * 3 > _MAX_PIXELS:
            raise PpmParseError(f"bad PPM dimensions {w}x{h}")
        if maxval != 255:
            raise PpmParseError("only maxval 255 supported")
        payload = f.read(w * h * 3)
        if len(payload) < w * h * 3:
            raise PpmParseError("unexpected end of data")
        arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return Image(arr.astype(np.float32) / 255.0)
