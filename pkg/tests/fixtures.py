"""Shared test fixtures: synthetic images and the hyphen-repair strings.

The three Javanese passages reproduce a published qualitative comparison
of raw OCR output, its human transcription, and an LLM correction; the
correction resolves line-break hyphenation ("ndu- weni" -> "nduweni")
that the raw OCR output retains.
"""

import io

import numpy as np
from PIL import Image

from drivethru.imaging import PageImage

# Raw OCR output for the sample page (hyphen splits and trailing noise).
TABLE_OCR = (
    "Sing unik maneh, Bekecot pranyata ndu- weni untu kang uakeehhh banget lo. "
    "Adhik- adhik ngerti pira jumlahe? Pranyata untune Bekecot ana 14.175. "
    "Untu iki cilik-cilik ba- nget lan wujude kaya parut. "
    "Untu iki bisa ma- mah gegodhongan kang akeh banget jroning sewengi. : :"
)

# Human transcription written exactly as the page appears, hyphen splits
# included.
TABLE_HUMAN = (
    "Sing unik maneh, Bekecot pranyata ndu- weni untu kang akeh banget lo. "
    "Adhik- adhik ngerti pira jumlahé? Pranyata untune Bekecot ana 14.175. "
    "Untu iki cilik-cilik ba- nget lan wujude kaya parut. "
    "Untu iki bisa ma- mah gegodhongan kang akeh banget jroning sewengi."
)

# LLM correction of the OCR output: hyphen splits repaired, noise removed.
TABLE_CORRECTED = (
    "Sing unik maneh, Bekicot pranyata nduweni untu kang uakeh banget lo. "
    "Adhik-adhik ngerti pira jumlahe? Pranyata untune Bekicot ana 14.175. "
    "Untu iki cilik-cilik banget lan wujude kaya parut. "
    "Untu iki bisa mah gegodhongan kang akeh banget jroning sewengi."
)

# The transcription with hyphen splits resolved: the reading a correction
# is supposed to recover. Fixture ground truth for the repair check.
TABLE_GT_DEHYPHENATED = (
    "Sing unik maneh, Bekecot pranyata nduweni untu kang akeh banget lo. "
    "Adhik-adhik ngerti pira jumlahé? Pranyata untune Bekecot ana 14.175. "
    "Untu iki cilik-cilik banget lan wujude kaya parut. "
    "Untu iki bisa mamah gegodhongan kang akeh banget jroning sewengi."
)

# A second sample page's raw OCR line, used as a canned fake-engine value.
SAMPLE_OCR_LINE = "Terekel Salim naek kena kai"


def random_image(width: int, height: int, channels: int = 3, seed: int = 0) -> PageImage:
    rng = np.random.default_rng(seed)
    shape = (height, width) if channels == 1 else (height, width, channels)
    return PageImage(rng.integers(0, 256, shape, dtype=np.uint8))


def text_page(width: int = 800, height: int = 600, seed: int = 0) -> PageImage:
    """White page with black text-like strokes."""
    rng = np.random.default_rng(seed)
    arr = np.full((height, width, 3), 255, dtype=np.uint8)
    for row in range(40, height - 40, 30):
        x = 40
        while x < width - 60:
            w = int(rng.integers(15, 50))
            arr[row : row + 12, x : x + w] = 0
            x += w + int(rng.integers(8, 20))
    return PageImage(arr)


def png_bytes(img: PageImage) -> bytes:
    mode = "L" if img.channels == 1 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img.pixels), mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def jpeg_bytes(img: PageImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img.pixels), mode="RGB").save(buf, format="JPEG", quality=92)
    return buf.getvalue()


def tiny_png(value: int = 255, seed: int | None = None) -> bytes:
    """Small-payload PNG that is already wide enough to skip upscaling."""
    if seed is None:
        arr = np.full((12, 1100, 3), value, dtype=np.uint8)
    else:
        arr = np.random.default_rng(seed).integers(0, 256, (12, 1100, 3), dtype=np.uint8)
    return png_bytes(PageImage(arr))
