"""Signature image normalization.

Raw scans are 8-bit grayscale with dark ink on a light page. The pipeline
removes the page background with Otsu's threshold, inverts so the
background becomes 0, optionally centers the signature on a fixed canvas,
resizes to the network input size and divides by a corpus-wide pixel std.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from .errors import ConfigError, DegenerateImageError, ShapeError

Mode = Literal["resize-only", "canvas-then-resize"]

CANVAS_SIZE = (840, 1360)
TARGET_SIZE = (155, 220)


@dataclass(frozen=True)
class PrepConfig:
    mode: Mode = "canvas-then-resize"
    canvas_h: int = CANVAS_SIZE[0]
    canvas_w: int = CANVAS_SIZE[1]
    target_h: int = TARGET_SIZE[0]
    target_w: int = TARGET_SIZE[1]
    dataset_pixel_std: float = 1.0

    def __post_init__(self):
        if self.mode not in ("resize-only", "canvas-then-resize"):
            raise ConfigError(f"unknown preprocessing mode {self.mode!r}")
        if min(self.canvas_h, self.canvas_w, self.target_h, self.target_w) < 1:
            raise ConfigError("canvas and target sizes must be >= 1")
        if not self.dataset_pixel_std > 0:
            raise ConfigError(f"dataset_pixel_std must be > 0, got {self.dataset_pixel_std}")


def _as_raw(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeError(f"expected a non-empty 2-D grayscale image, got shape {img.shape}")
    if img.size and (img.min() < 0 or img.max() > 255):
        raise ConfigError("raw-stage intensities must lie in [0, 255]")
    return img


def otsu_threshold(img: np.ndarray) -> int:
    """Return the Otsu threshold of an 8-bit image.

    Pixels ``<= t`` form one class and pixels ``> t`` the other. The
    between-class variance is compared exactly in integer arithmetic, and
    the lowest maximizing threshold wins.
    """
    img = _as_raw(img)
    hist = np.bincount(np.asarray(img, dtype=np.int64).ravel(), minlength=256)[:256]
    total = int(hist.sum())
    total_sum = int(np.dot(hist, np.arange(256)))
    best_t, best_num, best_den = None, 0, 1
    n0 = s0 = 0
    for t in range(256):
        n0 += int(hist[t])
        s0 += t * int(hist[t])
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        # sigma_b^2 * total^2 == (total_sum*n0 - total*s0)^2 / (n0*n1)
        num = (total_sum * n0 - total * s0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    if best_t is None:
        raise DegenerateImageError("constant image has no foreground/background split")
    return best_t


def remove_background(img: np.ndarray, t: int) -> np.ndarray:
    """Set every pixel brighter than ``t`` to white (255)."""
    img = _as_raw(img)
    out = img.copy()
    out[img > t] = 255
    return out


def invert(img: np.ndarray) -> np.ndarray:
    img = _as_raw(img)
    return (255 - img).astype(img.dtype, copy=False)


def center_of_mass(img: np.ndarray) -> tuple[float, float]:
    img = np.asarray(img, dtype=np.float64)
    mass = img.sum()
    if mass <= 0:
        raise DegenerateImageError("all-zero image has no center of mass")
    rows = np.arange(img.shape[0], dtype=np.float64)
    cols = np.arange(img.shape[1], dtype=np.float64)
    return float(img.sum(axis=1) @ rows / mass), float(img.sum(axis=0) @ cols / mass)


def center_on_canvas(img: np.ndarray, canvas_h: int, canvas_w: int) -> np.ndarray:
    """Place an inverted image on a zero canvas with its center of mass at
    pixel ``(canvas_h // 2, canvas_w // 2)``.

    The translation is rounded to whole pixels; anything pushed outside the
    canvas is clipped.
    """
    img = np.asarray(img)
    h, w = img.shape
    if h > canvas_h or w > canvas_w:
        raise ShapeError(f"image {h}x{w} does not fit on canvas {canvas_h}x{canvas_w}")
    r, c = center_of_mass(img)
    dr = int(np.floor(canvas_h // 2 - r + 0.5))
    dc = int(np.floor(canvas_w // 2 - c + 0.5))
    canvas = np.zeros((canvas_h, canvas_w), dtype=img.dtype)
    r0, r1 = max(dr, 0), min(dr + h, canvas_h)
    c0, c1 = max(dc, 0), min(dc + w, canvas_w)
    if r0 < r1 and c0 < c1:
        canvas[r0:r1, c0:c1] = img[r0 - dr:r1 - dr, c0 - dc:c1 - dc]
    return canvas


def _bilinear_axis(n_out: int, offset: int, scale: float, n_in: int):
    # pixel-center alignment: out index i sits at (i + offset + 0.5) / scale - 0.5 in the input
    pos = (np.arange(n_out) + offset + 0.5) / scale - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_with_crop(img: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear resize that keeps the aspect ratio.

    The image is scaled just enough to cover the target, then the excess in
    the longer dimension is cropped symmetrically. Returns float64.
    """
    if target_h < 1 or target_w < 1:
        raise ConfigError("target dimensions must be >= 1")
    src = np.asarray(img, dtype=np.float64)
    h, w = src.shape
    scale = max(target_h / h, target_w / w)
    scaled_h = max(target_h, int(np.floor(h * scale + 0.5)))
    scaled_w = max(target_w, int(np.floor(w * scale + 0.5)))
    r_lo, r_hi, r_f = _bilinear_axis(target_h, (scaled_h - target_h) // 2, scale, h)
    c_lo, c_hi, c_f = _bilinear_axis(target_w, (scaled_w - target_w) // 2, scale, w)
    top = src[r_lo][:, c_lo] * (1 - c_f) + src[r_lo][:, c_hi] * c_f
    bottom = src[r_hi][:, c_lo] * (1 - c_f) + src[r_hi][:, c_hi] * c_f
    return top * (1 - r_f)[:, None] + bottom * r_f[:, None]


def normalize_std(img: np.ndarray, dataset_pixel_std: float) -> np.ndarray:
    if not dataset_pixel_std > 0:
        raise ConfigError(f"dataset_pixel_std must be > 0, got {dataset_pixel_std}")
    return np.asarray(img, dtype=np.float64) / dataset_pixel_std


def compute_dataset_std(images: Iterable[np.ndarray]) -> float:
    """Population std over the union of all pixels of ``images``."""
    count, total, total_sq = 0, 0.0, 0.0
    arrays = [np.asarray(im, dtype=np.float64) for im in images]
    if not arrays:
        raise ConfigError("cannot compute a pixel std over an empty collection")
    for a in arrays:
        count += a.size
        total += a.sum()
    mean = total / count
    for a in arrays:
        total_sq += np.square(a - mean).sum()
    return float(np.sqrt(total_sq / count))


def prepare_unscaled(img: np.ndarray, cfg: PrepConfig) -> np.ndarray:
    """Every preprocessing step except the final std division."""
    img = _as_raw(img)
    t = otsu_threshold(img)
    out = invert(remove_background(img, t))
    if cfg.mode == "canvas-then-resize":
        out = center_on_canvas(out, cfg.canvas_h, cfg.canvas_w)
    elif not np.any(out):
        raise DegenerateImageError("no foreground pixels after background removal")
    return resize_with_crop(out, cfg.target_h, cfg.target_w)


def preprocess(img: np.ndarray, cfg: PrepConfig) -> np.ndarray:
    return normalize_std(prepare_unscaled(img, cfg), cfg.dataset_pixel_std)
