"""Adapter around an external OCR engine.

The real engine is invoked as a child process per page (image path in,
UTF-8 text on stdout), which isolates crashes and keeps the package free
of native bindings. A deterministic fake engine with the same surface
backs tests and mock deployments.
"""

from __future__ import annotations

import hashlib
import os
import shutil
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .errors import DriveThruError
from .imaging import PageImage, encode_png

OCR_BIN_ENV = "DRIVETHRU_OCR_BIN"
DEFAULT_TIMEOUT_S = 120.0


class OcrEngineError(DriveThruError):
    pass


class EngineNotFound(OcrEngineError):
    pass


class EngineFailed(OcrEngineError):
    def __init__(self, message: str, stderr: str = ""):
        super().__init__(message)
        self.stderr = stderr


class OcrTimeout(OcrEngineError):
    pass


@dataclass(frozen=True)
class OcrConfig:
    """Engine invocation settings.

    language=None keeps the engine's own default model; the flag is then
    omitted entirely from the command line.
    """

    engine_mode: int = 3
    page_seg_mode: int = 6
    language: Optional[str] = None
    engine_path: str = "tesseract"
    timeout_s: float = DEFAULT_TIMEOUT_S

    def __post_init__(self):
        if not 0 <= self.engine_mode <= 3:
            raise ValueError("engine_mode must be in 0..3")
        if not 0 <= self.page_seg_mode <= 13:
            raise ValueError("page_seg_mode must be in 0..13")

    def cli_args(self) -> list[str]:
        """Flags handed to the engine; reconstructible from any snapshot."""
        args = ["--oem", str(self.engine_mode), "--psm", str(self.page_seg_mode)]
        if self.language:
            args += ["-l", self.language]
        return args


@dataclass(frozen=True)
class OcrOutput:
    text: str
    source_image_id: str
    config_used: OcrConfig
    duration_ms: float


def image_content_id(img: PageImage) -> str:
    """Stable opaque id for a page: hash of dimensions plus pixel bytes."""
    h = hashlib.sha256()
    h.update(f"{img.width}x{img.height}x{img.channels}:".encode())
    h.update(img.pixels.tobytes())
    return h.hexdigest()


class OcrEngine(Protocol):
    def recognize(self, img: PageImage, cfg: OcrConfig) -> OcrOutput: ...

    def available(self) -> bool: ...


def resolve_engine_path(engine_path: str) -> str:
    """Honor the DRIVETHRU_OCR_BIN override, falling back to the config."""
    return os.environ.get(OCR_BIN_ENV) or engine_path


class TesseractEngine:
    """Child-process adapter: writes the page to a temp PNG and runs
    ``<engine> <path> stdout <flags>``. Nonzero exit means EngineFailed."""

    def __init__(self, engine_path: str = "tesseract"):
        self.engine_path = engine_path

    def recognize(self, img: PageImage, cfg: OcrConfig) -> OcrOutput:
        binary = resolve_engine_path(cfg.engine_path)
        start = time.monotonic()
        with tempfile.TemporaryDirectory(prefix="drivethru-ocr-") as tmp:
            page = Path(tmp) / "page.png"
            page.write_bytes(encode_png(img))
            cmd = [binary, str(page), "stdout", *cfg.cli_args()]
            try:
                proc = subprocess.run(
                    cmd, capture_output=True, timeout=cfg.timeout_s
                )
            except FileNotFoundError as err:
                raise EngineNotFound(f"OCR engine not found: {binary}") from err
            except subprocess.TimeoutExpired as err:
                raise OcrTimeout(f"OCR engine exceeded {cfg.timeout_s}s") from err
        if proc.returncode != 0:
            stderr = proc.stderr.decode("utf-8", errors="replace")
            raise EngineFailed(
                f"OCR engine exited with {proc.returncode}", stderr=stderr
            )
        text = proc.stdout.decode("utf-8", errors="replace").rstrip()
        return OcrOutput(
            text=text,
            source_image_id=image_content_id(img),
            config_used=cfg,
            duration_ms=(time.monotonic() - start) * 1000.0,
        )

    def available(self) -> bool:
        binary = resolve_engine_path(self.engine_path)
        return shutil.which(binary) is not None or os.access(binary, os.X_OK)


class FakeOcrEngine:
    """Table-driven stub keyed by image content hash.

    Unknown pages fall back to ``default_text`` (a blank page reads as
    empty). An optional per-image delay map lets tests randomize
    completion order.
    """

    def __init__(
        self,
        mapping: Optional[dict[str, str]] = None,
        default_text: str = "",
        delays: Optional[dict[str, float]] = None,
    ):
        self.mapping = dict(mapping or {})
        self.default_text = default_text
        self.delays = dict(delays or {})

    @staticmethod
    def key_for(img: PageImage) -> str:
        return image_content_id(img)

    def add(self, img: PageImage, text: str) -> str:
        key = self.key_for(img)
        self.mapping[key] = text
        return key

    def recognize(self, img: PageImage, cfg: OcrConfig) -> OcrOutput:
        start = time.monotonic()
        key = self.key_for(img)
        delay = self.delays.get(key)
        if delay:
            time.sleep(delay)
        text = self.mapping.get(key, self.default_text)
        return OcrOutput(
            text=text.rstrip(),
            source_image_id=key,
            config_used=cfg,
            duration_ms=(time.monotonic() - start) * 1000.0,
        )

    def available(self) -> bool:
        return True


def recognize_batch(
    engine: OcrEngine,
    imgs: Sequence[PageImage],
    cfg: OcrConfig,
    parallelism: int = 1,
) -> list[OcrOutput | OcrEngineError]:
    """Recognize pages concurrently, preserving input order.

    At most ``parallelism`` engine invocations run at once. A failing page
    leaves its typed error in the corresponding slot instead of aborting
    the batch.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if not imgs:
        return []
    results: list[OcrOutput | OcrEngineError] = [None] * len(imgs)  # type: ignore[list-item]

    def work(img: PageImage) -> OcrOutput:
        return engine.recognize(img, cfg)

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(work, img) for img in imgs]
        for i, fut in enumerate(futures):
            try:
                results[i] = fut.result()
            except OcrEngineError as err:
                results[i] = err
    return results
