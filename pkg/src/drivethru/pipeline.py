"""Job orchestration: preprocess, recognize, and optionally post-correct a
cycle of uploaded images.

A job carries at most five images. Images fail independently: one corrupt
upload leaves the others intact and the job ends ``partial``. Jobs persist
as one JSON file each, atomically replaced on every status change; the
serialized form contains no clocks, so a job run with fixed seed and mock
engines is byte-reproducible.
"""

from __future__ import annotations

import json
import os
import random
import tempfile
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import corrector, imaging, lexicon, ocr
from .errors import DriveThruError

DATA_DIR_ENV = "DRIVETHRU_DATA_DIR"

ACCEPTED_EXTENSIONS = {".png", ".jpg", ".jpeg"}
MAX_IMAGES_PER_JOB = 5

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8\xff"

MODES = ("none", "zero_shot", "few_shot")


class UploadError(DriveThruError):
    pass


class TooManyFiles(UploadError):
    def __init__(self, count: int):
        super().__init__(f"got {count} files, the limit per cycle is {MAX_IMAGES_PER_JOB}")
        self.count = count


class EmptyUpload(UploadError):
    pass


class UnsupportedFormat(UploadError):
    def __init__(self, name: str):
        super().__init__(f"{name}: only .png, .jpg and .jpeg are accepted")
        self.name = name


class MagicMismatch(UploadError):
    def __init__(self, name: str):
        super().__init__(f"{name}: file content does not match its extension")
        self.name = name


@dataclass
class UploadFile:
    name: str
    data: bytes

    @property
    def format(self) -> str:
        ext = Path(self.name).suffix.lower()
        return "jpeg" if ext in (".jpg", ".jpeg") else ext.lstrip(".")


def validate_upload(files: list[UploadFile]) -> list[UploadFile]:
    """Accept a batch only if every file is a PNG or JPEG whose magic
    bytes agree with its extension and the batch has 1..5 files."""
    if not files:
        raise EmptyUpload("no files in upload")
    if len(files) > MAX_IMAGES_PER_JOB:
        raise TooManyFiles(len(files))
    for f in files:
        ext = Path(f.name).suffix.lower()
        if ext not in ACCEPTED_EXTENSIONS:
            raise UnsupportedFormat(f.name)
        if ext == ".png":
            if not f.data.startswith(_PNG_MAGIC):
                raise MagicMismatch(f.name)
        elif not f.data.startswith(_JPEG_MAGIC):
            raise MagicMismatch(f.name)
    return files


@dataclass
class JobOptions:
    language: str = ""
    mode: str = "none"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class ImageResult:
    name: str
    ocr_text: Optional[str] = None
    corrected_text: Optional[str] = None
    error: Optional[dict] = None


@dataclass
class CorrectionJob:
    job_id: str
    images: list[UploadFile]
    options: JobOptions
    status: str = "queued"
    results: list[ImageResult] = field(default_factory=list)

    @classmethod
    def create(cls, files: list[UploadFile], options: JobOptions, job_id: Optional[str] = None) -> "CorrectionJob":
        validate_upload(files)
        return cls(job_id=job_id or uuid.uuid4().hex, images=list(files), options=options)

    def to_dict(self) -> dict:
        """Serializable snapshot. Deliberately clock-free: identical runs
        produce identical documents."""
        return {
            "job_id": self.job_id,
            "status": self.status,
            "options": {
                "language": self.options.language,
                "mode": self.options.mode,
                "seed": self.options.seed,
            },
            "images": [
                {"name": f.name, "format": f.format, "size": len(f.data)}
                for f in self.images
            ],
            "results": [
                {
                    "name": r.name,
                    "ocr_text": r.ocr_text,
                    "corrected_text": r.corrected_text,
                    "error": r.error,
                }
                for r in self.results
            ],
        }


@dataclass
class JobDeps:
    """Everything run_job needs injected: engines, configs, resources."""

    ocr_engine: ocr.OcrEngine
    ocr_config: ocr.OcrConfig = ocr.OcrConfig()
    preprocess_config: imaging.PreprocessConfig = imaging.PreprocessConfig()
    dictionary: Optional[lexicon.Dictionary] = None
    backend: Optional[corrector.LlmBackend] = None
    selection: lexicon.SelectionConfig = lexicon.SelectionConfig()
    template: corrector.PromptTemplate = corrector.PromptTemplate()
    generation: corrector.GenerationParams = corrector.GenerationParams()
    parallelism: int = 2


def _error_dict(err: Exception) -> dict:
    return {"code": type(err).__name__, "message": str(err)}


def _process_image(
    upload: UploadFile, index: int, job: CorrectionJob, deps: JobDeps
) -> ImageResult:
    page = imaging.decode_image(upload.data)
    prepped = imaging.preprocess(page, deps.preprocess_config)
    out = deps.ocr_engine.recognize(prepped, deps.ocr_config)
    result = ImageResult(name=upload.name, ocr_text=out.text)
    mode = job.options.mode
    if mode == "none":
        return result
    if not out.text.strip():
        # nothing to correct on a blank page; skip the backend round-trip
        result.corrected_text = out.text
        return result
    pairs: tuple[lexicon.SimilarPair, ...] = ()
    if mode == "few_shot":
        if deps.dictionary is None:
            raise DriveThruError("few_shot correction requires a dictionary")
        selection = lexicon.SelectionConfig(
            sim_threshold=deps.selection.sim_threshold,
            k_max_matches=deps.selection.k_max_matches,
            pair_cap=deps.selection.pair_cap,
            rng_seed=(job.options.seed or 0) + index,
            match_mode=deps.selection.match_mode,
        )
        pairs = tuple(lexicon.select_pairs(out.text.split(), deps.dictionary, selection))
    if deps.backend is None:
        raise DriveThruError(f"{mode} correction requires a backend")
    req = corrector.CorrectionRequest(
        ocr_text=out.text,
        mode=mode,
        language=job.options.language,
        pairs=pairs,
        template=deps.template,
    )
    corrected = corrector.correct(req, deps.backend, deps.generation)
    result.corrected_text = corrected.corrected_text
    return result


def run_job(
    job: CorrectionJob,
    deps: JobDeps,
    on_update: Optional[Callable[[CorrectionJob], None]] = None,
) -> CorrectionJob:
    """Execute a job in place: queued -> running -> done/partial/failed.

    Results keep upload order. Image-level failures are recorded in their
    slot; the job only fails outright when every image fails.
    """
    if job.options.mode != "none" and job.options.seed is None:
        job.options.seed = random.SystemRandom().getrandbits(63)
    job.status = "running"
    if on_update:
        on_update(job)
    results: list[ImageResult] = []
    failures = 0
    for index, upload in enumerate(job.images):
        try:
            results.append(_process_image(upload, index, job, deps))
        except (DriveThruError, ValueError) as err:
            failures += 1
            results.append(ImageResult(name=upload.name, error=_error_dict(err)))
    job.results = results
    if failures == 0:
        job.status = "done"
    elif failures == len(job.images):
        job.status = "failed"
    else:
        job.status = "partial"
    if on_update:
        on_update(job)
    return job


class JobStore:
    """One JSON file per job under a data directory, written atomically."""

    def __init__(self, data_dir: str | Path | None = None):
        root = data_dir or os.environ.get(DATA_DIR_ENV) or "./drivethru-data"
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, job_id: str) -> Path:
        return self.root / f"{job_id}.json"

    def save(self, job: CorrectionJob) -> None:
        self.save_dict(job.job_id, job.to_dict())

    def save_dict(self, job_id: str, doc: dict) -> None:
        payload = json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2)
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=f".{job_id}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload)
            os.replace(tmp, self.path_for(job_id))
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def load(self, job_id: str) -> Optional[dict]:
        path = self.path_for(job_id)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
