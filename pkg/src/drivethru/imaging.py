"""Deterministic page-image preprocessing.

The chain applied before OCR: conditional bicubic upscaling to a minimum
width, grayscale conversion, Gaussian blur, inverse-binary Otsu threshold,
and a final inversion so text ends up dark on light. Everything is pure
numpy on uint8 buffers; results are bit-reproducible across runs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DriveThruError


class InvalidImage(DriveThruError):
    pass


class InvalidConfig(DriveThruError):
    pass


# Keys bicubic coefficient. -0.75 is the constant used by the mainstream
# resize implementations this pipeline mirrors.
BICUBIC_A = -0.75


@dataclass(frozen=True)
class PageImage:
    """Decoded raster page.

    pixels is a read-only uint8 array, shape (height, width) for grayscale
    or (height, width, 3) for interleaved R,G,B.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.dtype != np.uint8:
            raise InvalidImage(f"pixels must be uint8, got {arr.dtype}")
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim == 3 and arr.shape[2] != 3:
            raise InvalidImage(f"unsupported channel count {arr.shape[2]}")
        if arr.ndim not in (2, 3):
            raise InvalidImage(f"expected 2d or 3d buffer, got {arr.ndim}d")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidImage("image must be at least 1x1")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else self.pixels.shape[2]


@dataclass(frozen=True)
class PreprocessConfig:
    min_width: int = 1024
    blur_kernel: int = 3
    threshold_mode: str = "otsu"

    def __post_init__(self):
        if self.min_width <= 0:
            raise InvalidConfig("min_width must be positive")
        if self.blur_kernel < 1 or self.blur_kernel % 2 == 0:
            raise InvalidConfig("blur_kernel must be an odd integer >= 1")
        if self.threshold_mode != "otsu":
            raise InvalidConfig(f"unknown threshold_mode {self.threshold_mode!r}")


def decode_image(data: bytes) -> PageImage:
    """Decode a PNG or JPEG byte stream.

    Single-band images stay grayscale; everything else is converted to
    R,G,B interleaved, which is the package-internal channel order.
    """
    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as err:
        raise InvalidImage(f"cannot decode image: {err}") from err
    except OSError as err:
        raise InvalidImage(f"broken image stream: {err}") from err
    return PageImage(arr)


def encode_png(img: PageImage) -> bytes:
    """Encode to PNG, for debug dumps and engine handoff."""
    mode = "L" if img.channels == 1 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img.pixels), mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def _cubic_weights(t: np.ndarray) -> np.ndarray:
    """Keys kernel weights for the 4 taps around fractional position t,
    shape (n, 4). Weights sum to 1 for every t."""
    a = BICUBIC_A
    # tap distances: 1+t, t, 1-t, 2-t
    d = np.stack([1.0 + t, t, 1.0 - t, 2.0 - t], axis=1)
    ad = np.abs(d)
    near = (a + 2.0) * ad**3 - (a + 3.0) * ad**2 + 1.0
    far = a * ad**3 - 5.0 * a * ad**2 + 8.0 * a * ad - 4.0 * a
    return np.where(ad <= 1.0, near, far)


def _resize_axis(plane: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    """Bicubic resample of one float64 plane along one axis."""
    in_len = plane.shape[axis]
    dst = np.arange(out_len, dtype=np.float64)
    src = (dst + 0.5) * (in_len / out_len) - 0.5
    base = np.floor(src).astype(np.int64)
    weights = _cubic_weights(src - base)
    out = np.zeros(plane.shape[:axis] + (out_len,) + plane.shape[axis + 1:], dtype=np.float64)
    for tap in range(4):
        idx = np.clip(base - 1 + tap, 0, in_len - 1)
        taken = np.take(plane, idx, axis=axis)
        w = weights[:, tap]
        shape = [1] * plane.ndim
        shape[axis] = out_len
        out += taken * w.reshape(shape)
    return out


def _resize_bicubic(pixels: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    plane = pixels.astype(np.float64)
    plane = _resize_axis(plane, out_w, axis=1)
    plane = _resize_axis(plane, out_h, axis=0)
    return np.clip(_round_half_up(plane), 0, 255).astype(np.uint8)


def scale_if_small(img: PageImage, cfg: PreprocessConfig) -> PageImage:
    """Upscale by ratio = min_width / width (both axes, bicubic) when the
    width is strictly below the minimum; otherwise return the input as-is.
    """
    if img.width >= cfg.min_width:
        return img
    ratio = cfg.min_width / img.width
    out_w = int(_round_half_up(np.float64(img.width * ratio)))
    out_h = int(_round_half_up(np.float64(img.height * ratio)))
    return PageImage(_resize_bicubic(img.pixels, out_w, out_h))


def to_grayscale(img: PageImage) -> PageImage:
    """BT.601 luma: round(0.299 R + 0.587 G + 0.114 B). Identity on
    single-channel input."""
    if img.channels == 1:
        return img
    rgb = img.pixels.astype(np.float64)
    luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return PageImage(np.clip(_round_half_up(luma), 0, 255).astype(np.uint8))


def gaussian_sigma(kernel: int) -> float:
    """Sigma derived from the kernel size the way the reference resize
    library does in automatic mode; 0.8 for the default 3x3 kernel."""
    return 0.3 * ((kernel - 1) * 0.5 - 1) + 0.8


def gaussian_kernel_1d(kernel: int, sigma: float | None = None) -> np.ndarray:
    if sigma is None:
        sigma = gaussian_sigma(kernel)
    c = (kernel - 1) / 2
    xs = np.arange(kernel, dtype=np.float64) - c
    w = np.exp(-(xs**2) / (2.0 * sigma**2))
    return w / w.sum()


def gaussian_blur(img: PageImage, kernel: int) -> PageImage:
    """Separable k x k Gaussian blur on a grayscale image.

    Border handling mirrors the edge without repeating it. All arithmetic
    runs in float64; the result is rounded once at the end.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise InvalidConfig("blur kernel must be an odd integer >= 1")
    if img.channels != 1:
        raise InvalidImage("gaussian_blur expects a grayscale image")
    if kernel == 1:
        return img
    w = gaussian_kernel_1d(kernel)
    pad = kernel // 2
    plane = img.pixels.astype(np.float64)
    padded = np.pad(plane, ((pad, pad), (0, 0)), mode="reflect")
    plane = sum(w[k] * padded[k:k + img.height, :] for k in range(kernel))
    padded = np.pad(plane, ((0, 0), (pad, pad)), mode="reflect")
    plane = sum(w[k] * padded[:, k:k + img.width] for k in range(kernel))
    return PageImage(np.clip(_round_half_up(plane), 0, 255).astype(np.uint8))


def otsu_threshold(hist: np.ndarray) -> int:
    """Otsu's threshold over a 256-bin histogram.

    Maximizes the between-class variance of the split (<= T) vs (> T),
    using exact integer arithmetic over prefix sums so the argmax never
    depends on float rounding. Ties pick the smallest T; a histogram with
    a single occupied bin yields that bin (so an all-constant image lands
    entirely in the <= T class).
    """
    hist = np.asarray(hist, dtype=np.int64)
    if hist.shape != (256,):
        raise InvalidConfig("histogram must have 256 bins")
    total = int(hist.sum())
    if total == 0:
        raise InvalidImage("empty histogram")
    weighted_total = int(np.dot(hist, np.arange(256, dtype=np.int64)))
    best_t = int(np.flatnonzero(hist)[0])
    best_num = 0  # numerator^2 of the best variance, as exact int
    best_den = 1
    c0 = 0
    s0 = 0
    for t in range(256):
        c0 += int(hist[t])
        s0 += t * int(hist[t])
        c1 = total - c0
        if c0 == 0 or c1 == 0:
            continue
        # between-class variance ~ (s0*total - weighted_total*c0)^2 / (c0*c1)
        num = (s0 * total - weighted_total * c0) ** 2
        den = c0 * c1
        if num * best_den > best_num * den:
            best_num, best_den, best_t = num, den, t
    return best_t


def otsu_binarize_inverted(img: PageImage) -> PageImage:
    """Inverse-binary Otsu threshold: pixels <= T become 255, the rest 0.

    Dense dark strokes end up white so downstream stages can treat them
    as foreground.
    """
    if img.channels != 1:
        raise InvalidImage("otsu_binarize_inverted expects a grayscale image")
    hist = np.bincount(img.pixels.ravel(), minlength=256)
    t = otsu_threshold(hist)
    return PageImage(np.where(img.pixels <= t, 255, 0).astype(np.uint8))


def invert(img: PageImage) -> PageImage:
    """255 - b for every byte; applying it twice is the identity."""
    return PageImage((255 - img.pixels.astype(np.int16)).astype(np.uint8))


def preprocess(img: PageImage, cfg: PreprocessConfig | None = None) -> PageImage:
    """Full chain: scale_if_small -> grayscale -> blur -> inverted Otsu ->
    invert. Output is single-channel with values in {0, 255}."""
    cfg = cfg or PreprocessConfig()
    out = scale_if_small(img, cfg)
    out = to_grayscale(out)
    out = gaussian_blur(out, cfg.blur_kernel)
    out = otsu_binarize_inverted(out)
    return invert(out)
