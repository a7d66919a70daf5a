"""HTTP facade for the correction pipeline.

No accounts, no sessions: POST a cycle of up to five images, poll the job,
collect the text. The job store on disk is the only state, so a restarted
service keeps serving previously completed jobs.

Error responses all share one JSON shape: ``{"code": ..., "message": ...}``
with ``code`` drawn from a closed set: too_many_files, empty_upload,
unsupported_format, magic_mismatch, payload_too_large, unknown_language,
invalid_mode, dictionary_unavailable, backend_unavailable, not_found.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, File, Form
from fastapi import UploadFile as MultipartFile
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import corrector, imaging, lexicon, ocr, pipeline


class Utf8JsonResponse(JSONResponse):
    media_type = "application/json; charset=utf-8"

MAX_PAYLOAD_BYTES = 25 * 1024 * 1024

# Languages the deployment targets even when no dictionary is mounted.
KNOWN_LANGUAGES = {"jav", "sun", "min", "ban"}


@dataclass
class ServiceSettings:
    data_dir: Optional[str | Path] = None
    dict_dir: Optional[str | Path] = None
    ocr_engine: Optional[ocr.OcrEngine] = None
    ocr_config: ocr.OcrConfig = ocr.OcrConfig()
    backend: Optional[corrector.LlmBackend] = None
    mode_default: str = "none"
    preprocess_config: imaging.PreprocessConfig = imaging.PreprocessConfig()
    selection: lexicon.SelectionConfig = lexicon.SelectionConfig()
    template: corrector.PromptTemplate = corrector.PromptTemplate()
    generation: corrector.GenerationParams = corrector.GenerationParams()
    static_dir: Optional[str | Path] = None
    cors_origins: list[str] = field(default_factory=list)
    workers: int = 2
    extra_languages: set[str] = field(default_factory=set)


def _api_error(status: int, code: str, message: str) -> JSONResponse:
    return Utf8JsonResponse(status_code=status, content={"code": code, "message": message})


class _DictionaryCache:
    """Lazily loads ``<lang>.tsv`` files from the dictionary directory."""

    def __init__(self, dict_dir: Optional[str | Path]):
        self.dict_dir = Path(dict_dir) if dict_dir else None
        self._cache: dict[str, lexicon.Dictionary] = {}

    def languages(self) -> set[str]:
        if not self.dict_dir or not self.dict_dir.is_dir():
            return set()
        return {p.stem for p in self.dict_dir.glob("*.tsv")}

    def get(self, language: str) -> Optional[lexicon.Dictionary]:
        if language in self._cache:
            return self._cache[language]
        if not self.dict_dir:
            return None
        path = self.dict_dir / f"{language}.tsv"
        if not path.exists():
            return None
        loaded = lexicon.load_dictionary(path, language)
        self._cache[language] = loaded
        return loaded


def create_app(settings: Optional[ServiceSettings] = None) -> FastAPI:
    settings = settings or ServiceSettings()
    app = FastAPI(
        title="drivethru",
        docs_url=None,
        redoc_url=None,
        default_response_class=Utf8JsonResponse,
    )
    store = pipeline.JobStore(settings.data_dir)
    engine = settings.ocr_engine or ocr.TesseractEngine(settings.ocr_config.engine_path)
    dictionaries = _DictionaryCache(settings.dict_dir)
    executor = ThreadPoolExecutor(max_workers=settings.workers)
    app.state.store = store
    app.state.executor = executor

    if settings.cors_origins:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=settings.cors_origins,
            allow_methods=["*"],
            allow_headers=["*"],
        )

    def allowed_languages() -> set[str]:
        return KNOWN_LANGUAGES | dictionaries.languages() | settings.extra_languages

    def execute(job: pipeline.CorrectionJob) -> None:
        deps = pipeline.JobDeps(
            ocr_engine=engine,
            ocr_config=settings.ocr_config,
            preprocess_config=settings.preprocess_config,
            dictionary=dictionaries.get(job.options.language),
            backend=settings.backend,
            selection=settings.selection,
            template=settings.template,
            generation=settings.generation,
        )
        pipeline.run_job(job, deps, on_update=store.save)

    @app.post("/api/jobs", status_code=202)
    async def create_job(
        files: list[MultipartFile] = File(default=[]),
        language: str = Form(""),
        mode: str = Form(""),
    ):
        uploads = []
        total = 0
        for f in files:
            data = await f.read()
            total += len(data)
            uploads.append(pipeline.UploadFile(name=f.filename or "upload", data=data))
        if len(uploads) > pipeline.MAX_IMAGES_PER_JOB:
            return _api_error(400, "too_many_files", f"got {len(uploads)} files, limit is {pipeline.MAX_IMAGES_PER_JOB}")
        if not uploads:
            return _api_error(400, "empty_upload", "no files in upload")
        if total > MAX_PAYLOAD_BYTES:
            return _api_error(413, "payload_too_large", f"total upload is {total} bytes, limit is {MAX_PAYLOAD_BYTES}")
        mode_value = mode or settings.mode_default
        if mode_value not in pipeline.MODES:
            return _api_error(400, "invalid_mode", f"mode must be one of {', '.join(pipeline.MODES)}")
        if not language or language not in allowed_languages():
            return _api_error(422, "unknown_language", f"unknown language code {language!r}")
        try:
            pipeline.validate_upload(uploads)
        except pipeline.UnsupportedFormat as err:
            return _api_error(400, "unsupported_format", str(err))
        except pipeline.MagicMismatch as err:
            return _api_error(400, "magic_mismatch", str(err))
        except pipeline.UploadError as err:
            return _api_error(400, "empty_upload", str(err))
        if mode_value == "few_shot" and dictionaries.get(language) is None:
            return _api_error(422, "dictionary_unavailable", f"no dictionary mounted for {language!r}")
        if mode_value != "none" and settings.backend is None:
            return _api_error(422, "backend_unavailable", "no correction backend configured")
        job = pipeline.CorrectionJob.create(
            uploads, pipeline.JobOptions(language=language, mode=mode_value)
        )
        store.save(job)
        executor.submit(execute, job)
        return Utf8JsonResponse(
            status_code=202,
            content={"job_id": job.job_id},
            headers={"Location": f"/api/jobs/{job.job_id}"},
        )

    @app.get("/api/jobs/{job_id}")
    async def get_job(job_id: str):
        doc = store.load(job_id)
        if doc is None:
            return _api_error(404, "not_found", f"no job {job_id!r}")
        return Utf8JsonResponse(content=doc)

    @app.get("/api/healthz")
    async def healthz():
        backend_ok = settings.backend.ping() if settings.backend else False
        return {"ocr_engine": engine.available(), "backend": backend_ok}

    static_dir = Path(settings.static_dir) if settings.static_dir else None
    if static_dir and static_dir.is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="webui")

    return app
