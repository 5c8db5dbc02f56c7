"""Image decoding and per-channel plane access.

Planes hold real values in the canonical [0, 255] range regardless of the
source bit depth; no resizing or color-space work beyond RGB extraction
ever happens here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptImageError, UnsupportedFormatError

_ALLOWED_FORMATS = {"PNG", "JPEG"}


@dataclass
class ImagePlane:
    """One channel as a 2-D float grid, values in [0, 255]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"plane must be 2-D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("plane contains non-finite values")
        if self.data.size and (self.data.min() < 0.0 or self.data.max() > 255.0):
            raise ValueError("plane values outside [0, 255]")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass
class RgbImage:
    """Three planes in R, G, B order plus the originating path."""

    planes: tuple[ImagePlane, ImagePlane, ImagePlane]
    source_path: str = ""

    def __post_init__(self):
        if len(self.planes) != 3:
            raise ValueError("RgbImage needs exactly 3 planes")
        shapes = {p.data.shape for p in self.planes}
        if len(shapes) != 1:
            raise ValueError(f"plane shapes differ: {shapes}")

    @property
    def width(self) -> int:
        return self.planes[0].width

    @property
    def height(self) -> int:
        return self.planes[0].height


def decode_image(path: str) -> RgbImage:
    """Decode a PNG or JPEG file into three [0, 255] float planes.

    Grayscale sources are replicated across the three channels, alpha is
    dropped, and 16-bit samples are rescaled to [0, 255].
    """
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise
    except UnidentifiedImageError as exc:
        raise CorruptImageError(f"{path}: cannot decode ({exc})") from exc
    except OSError as exc:
        raise CorruptImageError(f"{path}: truncated or unreadable ({exc})") from exc

    if img.format not in _ALLOWED_FORMATS:
        raise UnsupportedFormatError(
            f"{path}: format {img.format!r} not supported (PNG/JPEG only)")

    mode = img.mode
    if mode in ("I", "I;16", "I;16B", "I;16L"):
        arr = np.asarray(img, dtype=np.float64) * (255.0 / 65535.0)
        arr = np.clip(arr, 0.0, 255.0)
        r = g = b = arr
    elif mode in ("L", "1"):
        arr = np.asarray(img.convert("L"), dtype=np.float64)
        r = g = b = arr
    elif mode in ("LA", "RGB", "RGBA", "P", "PA", "CMYK", "YCbCr"):
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
        r, g, b = rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2]
    else:
        raise UnsupportedFormatError(f"{path}: pixel mode {mode!r} not supported")

    return RgbImage(
        planes=(ImagePlane(r), ImagePlane(g), ImagePlane(b)),
        source_path=str(path),
    )


def to_planes(img: RgbImage) -> tuple[ImagePlane, ImagePlane, ImagePlane]:
    """Return the R, G, B planes in order; values are shared, not copied."""
    return img.planes
