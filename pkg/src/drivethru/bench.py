"""Benchmark harness: run the pipeline over a manifest of scanned pages
with ground-truth transcriptions and report per-language accuracy.

The manifest is JSON: ``{"entries": [{doc_id, language, title, genre,
pages: [{image, gt}]}]}`` with paths relative to the manifest file. Page
texts of a document are joined with a newline before evaluation;
per-page records are kept for diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import corrector, imaging, lexicon, metrics
from .errors import DriveThruError
from .pipeline import JobDeps


class SchemaError(DriveThruError):
    pass


class MissingFile(DriveThruError):
    def __init__(self, path: str):
        super().__init__(f"manifest references missing file: {path}")
        self.path = path


@dataclass(frozen=True)
class BenchmarkEntry:
    doc_id: str
    language: str
    title: str
    genre: str
    image_paths: tuple[Path, ...]
    gt_paths: tuple[Path, ...]


@dataclass(frozen=True)
class System:
    """One column of the report: raw OCR or a correction mode+backend."""

    label: str
    mode: str  # none | zero_shot | few_shot

    @classmethod
    def parse(cls, spec: str) -> "System":
        name = spec.strip().lower()
        aliases = {
            "ots": "none",
            "zs": "zero_shot",
            "llm-zs": "zero_shot",
            "zero_shot": "zero_shot",
            "fs": "few_shot",
            "llm-fs": "few_shot",
            "few_shot": "few_shot",
        }
        if name not in aliases:
            raise SchemaError(f"unknown system {spec!r} (expected ots, llm-zs or llm-fs)")
        return cls(label=name, mode=aliases[name])


def _require(doc: dict, key: str, kind: type, where: str):
    if key not in doc:
        raise SchemaError(f"{where}: missing field {key!r}")
    if not isinstance(doc[key], kind):
        raise SchemaError(f"{where}: field {key!r} must be {kind.__name__}")
    return doc[key]


def load_manifest(path: str | Path) -> list[BenchmarkEntry]:
    """Parse and validate a manifest; every referenced file must exist."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise SchemaError(f"{path}: not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    entries_raw = _require(doc, "entries", list, str(path))
    base = path.parent
    entries = []
    for i, raw in enumerate(entries_raw):
        where = f"{path} entries[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError(f"{where}: must be an object")
        doc_id = _require(raw, "doc_id", str, where)
        language = _require(raw, "language", str, where)
        title = _require(raw, "title", str, where)
        genre = _require(raw, "genre", str, where)
        pages = _require(raw, "pages", list, where)
        if not pages:
            raise SchemaError(f"{where}: needs at least one page")
        image_paths = []
        gt_paths = []
        for j, page in enumerate(pages):
            pwhere = f"{where}.pages[{j}]"
            if not isinstance(page, dict):
                raise SchemaError(f"{pwhere}: must be an object")
            image = base / _require(page, "image", str, pwhere)
            gt = base / _require(page, "gt", str, pwhere)
            for p in (image, gt):
                if not p.exists():
                    raise MissingFile(str(p))
            image_paths.append(image)
            gt_paths.append(gt)
        entries.append(
            BenchmarkEntry(
                doc_id=doc_id,
                language=language,
                title=title,
                genre=genre,
                image_paths=tuple(image_paths),
                gt_paths=tuple(gt_paths),
            )
        )
    return entries


@dataclass
class BenchmarkReport:
    """Aggregated rows plus the per-document records they came from."""

    languages: list[str] = field(default_factory=list)
    systems: list[str] = field(default_factory=list)
    records: list[tuple[str, metrics.EvalRecord]] = field(default_factory=list)
    page_records: list[dict] = field(default_factory=list)
    incomplete: set = field(default_factory=set)  # (language, system) cells

    @classmethod
    def from_records(
        cls,
        records: Sequence[tuple[str, metrics.EvalRecord]],
        incomplete: Optional[set] = None,
    ) -> "BenchmarkReport":
        report = cls(records=list(records), incomplete=incomplete or set())
        for system, rec in records:
            if rec.language not in report.languages:
                report.languages.append(rec.language)
            if system not in report.systems:
                report.systems.append(system)
        report.systems.sort(key=_system_order)
        return report

    def _cell_records(self, language: str, system: str) -> list[metrics.EvalRecord]:
        return [r for s, r in self.records if s == system and r.language == language]

    def car_cell(self, language: str, system: str) -> Optional[float]:
        recs = self._cell_records(language, system)
        return sum(r.car for r in recs) / len(recs) if recs else None

    def war_cell(self, language: str, system: str) -> Optional[float]:
        recs = self._cell_records(language, system)
        return sum(r.war for r in recs) / len(recs) if recs else None

    def avg_row(self, metric: str, system: str) -> Optional[float]:
        cell = self.car_cell if metric == "car" else self.war_cell
        values = [cell(lang, system) for lang in self.languages]
        values = [v for v in values if v is not None]
        return sum(values) / len(values) if values else None

    def gt_token_total(self, language: Optional[str] = None) -> int:
        """Ground-truth token sum; per document the GT is counted once,
        using the first system that evaluated it."""
        seen: dict[str, int] = {}
        for _, rec in self.records:
            if language is not None and rec.language != language:
                continue
            seen.setdefault(rec.doc_id, rec.gt_tokens)
        return sum(seen.values())

    def hyp_token_total(self, system: str, language: Optional[str] = None) -> int:
        return sum(
            rec.hyp_tokens
            for s, rec in self.records
            if s == system and (language is None or rec.language == language)
        )

    def token_difference(self, system: str) -> int:
        """Hypothesis tokens minus ground-truth tokens over all languages."""
        return self.hyp_token_total(system) - self.gt_token_total()


def _system_order(label: str) -> tuple:
    mode = System.parse(label).mode
    rank = {"none": 0, "zero_shot": 1, "few_shot": 2}[mode]
    return (rank, label)


def run_benchmark(
    entries: Sequence[BenchmarkEntry],
    systems: Sequence[System | str],
    deps: JobDeps,
    seed: int = 0,
) -> BenchmarkReport:
    """Evaluate every entry under every system.

    Per page: preprocess, recognize, and for correction systems run the
    prompt round-trip; pages of a document are then joined with a newline
    and scored against the joined ground truth. Page-level failures leave
    the cell flagged incomplete instead of aborting the run.
    """
    systems = [System.parse(s) if isinstance(s, str) else s for s in systems]
    records: list[tuple[str, metrics.EvalRecord]] = []
    page_records: list[dict] = []
    incomplete: set = set()
    for entry in entries:
        gt_text = "\n".join(
            p.read_text(encoding="utf-8").rstrip("\n") for p in entry.gt_paths
        )
        pages = []
        page_errors = []
        for image_path in entry.image_paths:
            try:
                page = imaging.decode_image(image_path.read_bytes())
                prepped = imaging.preprocess(page, deps.preprocess_config)
                out = deps.ocr_engine.recognize(prepped, deps.ocr_config)
                pages.append(out.text)
                page_errors.append(None)
            except DriveThruError as err:
                pages.append(None)
                page_errors.append(f"{type(err).__name__}: {err}")
        for system in systems:
            texts = []
            failed = any(p is None for p in pages)
            for page_index, page_text in enumerate(pages):
                if page_text is None:
                    continue
                try:
                    texts.append(
                        _system_text(
                            page_text, system, entry, deps, seed + page_index
                        )
                    )
                except DriveThruError as err:
                    failed = True
                    page_errors[page_index] = f"{type(err).__name__}: {err}"
            hyp = "\n".join(texts)
            try:
                rec = metrics.evaluate(entry.doc_id, entry.language, gt_text, hyp)
            except metrics.EmptyGroundTruth as err:
                incomplete.add((entry.language, system.label))
                page_records.append(
                    {"doc_id": entry.doc_id, "system": system.label, "error": str(err)}
                )
                continue
            records.append((system.label, rec))
            if failed:
                incomplete.add((entry.language, system.label))
            for image_path, page_text, page_err in zip(
                entry.image_paths, pages, page_errors
            ):
                page_records.append(
                    {
                        "doc_id": entry.doc_id,
                        "system": system.label,
                        "image": str(image_path),
                        "ocr_text": page_text,
                        "error": page_err,
                    }
                )
    report = BenchmarkReport.from_records(records, incomplete)
    report.page_records = page_records
    return report


def _system_text(
    page_text: str,
    system: System,
    entry: BenchmarkEntry,
    deps: JobDeps,
    seed: int,
) -> str:
    if system.mode == "none":
        return page_text
    if not page_text.strip():
        return page_text
    pairs: tuple[lexicon.SimilarPair, ...] = ()
    if system.mode == "few_shot":
        if deps.dictionary is None:
            raise DriveThruError("few_shot benchmark requires a dictionary")
        selection = lexicon.SelectionConfig(
            sim_threshold=deps.selection.sim_threshold,
            k_max_matches=deps.selection.k_max_matches,
            pair_cap=deps.selection.pair_cap,
            rng_seed=seed,
            match_mode=deps.selection.match_mode,
        )
        pairs = tuple(lexicon.select_pairs(page_text.split(), deps.dictionary, selection))
    if deps.backend is None:
        raise DriveThruError(f"{system.mode} benchmark requires a backend")
    req = corrector.CorrectionRequest(
        ocr_text=page_text,
        mode=system.mode,
        language=entry.language,
        pairs=pairs,
        template=deps.template,
    )
    return corrector.correct(req, deps.backend, deps.generation).corrected_text


def render_report(report: BenchmarkReport, format: str = "table") -> str:
    """Render CAR/WAR tables plus token sums.

    Column order is stable: Language first, then systems (raw OCR before
    zero-shot before few-shot); the unweighted average row comes last.
    """
    if format == "json":
        return json.dumps(_report_dict(report), ensure_ascii=False, sort_keys=True, indent=2)
    if format == "csv":
        return _render_csv(report)
    if format == "table":
        return _render_table(report)
    raise ValueError(f"unknown report format {format!r}")


def _fmt(value, width: int = 0) -> str:
    if value is None:
        text = "-"
    elif isinstance(value, float):
        text = f"{value:.4f}"
    else:
        text = str(value)
    return text.rjust(width) if width else text


def _render_table(report: BenchmarkReport) -> str:
    lines = []
    for metric in ("car", "war"):
        cell = report.car_cell if metric == "car" else report.war_cell
        header = ["Language"] + report.systems
        rows = [header]
        for lang in report.languages:
            row = [lang]
            for system in report.systems:
                flag = "*" if (lang, system) in report.incomplete else ""
                row.append(_fmt(cell(lang, system)) + flag)
            rows.append(row)
        avg = ["avg"] + [_fmt(report.avg_row(metric, s)) for s in report.systems]
        rows.append(avg)
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines.append(metric.upper())
        for row in rows:
            lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
        lines.append("")
    lines.append("Tokens")
    token_rows = [["system"] + report.languages + ["total", "diff_vs_gt"]]
    gt_row = (
        ["gt"]
        + [_fmt(report.gt_token_total(lang)) for lang in report.languages]
        + [_fmt(report.gt_token_total()), "-"]
    )
    token_rows.append(gt_row)
    for system in report.systems:
        token_rows.append(
            [system]
            + [_fmt(report.hyp_token_total(system, lang)) for lang in report.languages]
            + [_fmt(report.hyp_token_total(system)), _fmt(report.token_difference(system))]
        )
    widths = [max(len(r[i]) for r in token_rows) for i in range(len(token_rows[0]))]
    for row in token_rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def _render_csv(report: BenchmarkReport) -> str:
    lines = ["language,system,car,war,gt_tokens,hyp_tokens,incomplete"]
    for lang in report.languages:
        for system in report.systems:
            car = report.car_cell(lang, system)
            war = report.war_cell(lang, system)
            lines.append(
                ",".join(
                    [
                        lang,
                        system,
                        "" if car is None else f"{car:.6f}",
                        "" if war is None else f"{war:.6f}",
                        str(report.gt_token_total(lang)),
                        str(report.hyp_token_total(system, lang)),
                        "true" if (lang, system) in report.incomplete else "false",
                    ]
                )
            )
    for system in report.systems:
        lines.append(f"avg,{system},{report.avg_row('car', system):.6f},{report.avg_row('war', system):.6f},,,")
    return "\n".join(lines) + "\n"


def _report_dict(report: BenchmarkReport) -> dict:
    return {
        "languages": report.languages,
        "systems": report.systems,
        "car": {
            lang: {s: report.car_cell(lang, s) for s in report.systems}
            for lang in report.languages
        },
        "war": {
            lang: {s: report.war_cell(lang, s) for s in report.systems}
            for lang in report.languages
        },
        "avg": {
            "car": {s: report.avg_row("car", s) for s in report.systems},
            "war": {s: report.avg_row("war", s) for s in report.systems},
        },
        "tokens": {
            "gt": {lang: report.gt_token_total(lang) for lang in report.languages},
            "gt_total": report.gt_token_total(),
            "systems": {
                s: {
                    "per_language": {
                        lang: report.hyp_token_total(s, lang) for lang in report.languages
                    },
                    "total": report.hyp_token_total(s),
                    "diff_vs_gt": report.token_difference(s),
                }
                for s in report.systems
            },
        },
        "incomplete": sorted([list(cell) for cell in report.incomplete]),
        "documents": [
            {
                "system": s,
                "doc_id": r.doc_id,
                "language": r.language,
                "car": r.car,
                "war": r.war,
                "gt_tokens": r.gt_tokens,
                "hyp_tokens": r.hyp_tokens,
            }
            for s, r in report.records
        ],
    }
