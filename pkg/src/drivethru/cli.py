"""Command-line access to every pipeline stage.

Exit codes: 0 success, 1 usage or configuration error, 2 partial failure
(some inputs processed, some not). Every data-producing subcommand takes
``--json`` to emit machine-readable output on stdout and nothing else.

Unlike the HTTP service, batch commands accept more than five images: the
five-image cap is an upload-cycle rule, not a research-tooling one.

A config file (key=value lines, ``#`` comments) can preload defaults;
flags always win. Keys are option names, optionally prefixed with the
subcommand (``extract.lang=jav``). Path via --config or DRIVETHRU_CONFIG.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path
from typing import Optional

import click

from . import bench as bench_mod
from . import corrector, imaging, lexicon, metrics, ocr, pipeline
from .errors import DriveThruError

CONFIG_ENV = "DRIVETHRU_CONFIG"


def _load_config_file(path: Optional[str]) -> dict[str, str]:
    location = path or os.environ.get(CONFIG_ENV)
    if not location:
        return {}
    cfg: dict[str, str] = {}
    try:
        text = Path(location).read_text(encoding="utf-8")
    except OSError as err:
        raise click.ClickException(f"cannot read config file {location}: {err}")
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise click.ClickException(f"{location}:{line_no}: expected key=value")
        key, _, value = line.partition("=")
        cfg[key.strip()] = value.strip()
    return cfg


def _coerce(value: str, like) -> object:
    if isinstance(like, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def _merge_config(ctx: click.Context, values: dict) -> dict:
    """Flags override config-file values override declared defaults."""
    cfg = _load_config_file(ctx.obj.get("config_path") if ctx.obj else None)
    if not cfg:
        return values
    merged = dict(values)
    command = ctx.command.name or ""
    for name, value in values.items():
        source = ctx.get_parameter_source(name)
        if source is not None and source.name != "DEFAULT":
            continue
        for key in (f"{command}.{name}", name):
            if key in cfg:
                merged[name] = _coerce(cfg[key], value)
                break
    return merged


def _build_engine(ocr_bin: Optional[str], ocr_fake: Optional[str]) -> ocr.OcrEngine:
    if ocr_fake:
        try:
            mapping = json.loads(Path(ocr_fake).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise click.ClickException(f"cannot load fake OCR map {ocr_fake}: {err}")
        return ocr.FakeOcrEngine(mapping)
    return ocr.TesseractEngine(ocr_bin or "tesseract")


def _build_backend(llm_mock: Optional[str], llm_echo: bool) -> Optional[corrector.LlmBackend]:
    if llm_mock:
        try:
            return corrector.MockBackend.from_file(llm_mock)
        except (OSError, json.JSONDecodeError) as err:
            raise click.ClickException(f"cannot load LLM mock {llm_mock}: {err}")
    if llm_echo:
        return corrector.EchoBackend()
    if os.environ.get(corrector.BASE_URL_ENV):
        return corrector.HttpChatBackend()
    return None


@click.group()
@click.option("--config", "config_path", default=None, help="Config file (key=value lines).")
@click.pass_context
def cli(ctx, config_path):
    """DriveThru document digitization toolbox."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


@cli.command()
@click.argument("images", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--lang", default="", help="Language code carried into correction prompts.")
@click.option("--mode", default="none", type=click.Choice(pipeline.MODES), show_default=True)
@click.option("--dict", "dict_path", default=None, type=click.Path(exists=True, dir_okay=False), help="Vocabulary TSV for few-shot hints.")
@click.option("--out", "out_dir", default=".", type=click.Path(file_okay=False), show_default=True)
@click.option("--ocr-bin", default=None, help="OCR engine executable (or DRIVETHRU_OCR_BIN).")
@click.option("--ocr-fake", default=None, type=click.Path(exists=True, dir_okay=False), help="JSON map of image content ids to canned text (offline runs).")
@click.option("--oem", default=3, show_default=True, help="OCR engine mode.")
@click.option("--psm", default=6, show_default=True, help="Page segmentation mode.")
@click.option("--ocr-lang", default=None, help="Engine language pack; omitted by default.")
@click.option("--llm-mock", default=None, type=click.Path(exists=True, dir_okay=False), help="JSON map of prompt hashes to completions.")
@click.option("--llm-echo", is_flag=True, default=False, help="Echo backend (debugging).")
@click.option("--seed", default=None, type=int, help="Seed for few-shot hint sampling.")
@click.option("--dump-preprocessed", default=None, type=click.Path(file_okay=False), help="Write the preprocessed PNGs here for inspection.")
@click.pass_context
def extract(ctx, images, lang, mode, dict_path, out_dir, ocr_bin, ocr_fake, oem, psm, ocr_lang, llm_mock, llm_echo, seed, dump_preprocessed):
    """Run preprocess + OCR (+ optional correction) over image files.

    Writes one .txt per image, plus .corrected.txt when a correction mode
    is selected.
    """
    opts = _merge_config(ctx, {
        "lang": lang, "mode": mode, "dict_path": dict_path, "out_dir": out_dir,
        "ocr_bin": ocr_bin, "ocr_fake": ocr_fake, "oem": oem, "psm": psm,
        "ocr_lang": ocr_lang, "llm_mock": llm_mock, "llm_echo": llm_echo,
        "seed": seed, "dump_preprocessed": dump_preprocessed,
    })
    engine = _build_engine(opts["ocr_bin"], opts["ocr_fake"])
    ocr_cfg = ocr.OcrConfig(
        engine_mode=opts["oem"], page_seg_mode=opts["psm"],
        language=opts["ocr_lang"], engine_path=opts["ocr_bin"] or "tesseract",
    )
    mode = opts["mode"]
    dictionary = None
    if mode == "few_shot":
        if not opts["dict_path"]:
            raise click.ClickException("dictionary required for few_shot mode (--dict)")
        dictionary = lexicon.load_dictionary(opts["dict_path"], opts["lang"] or "und")
    backend = _build_backend(opts["llm_mock"], opts["llm_echo"])
    if mode != "none" and backend is None:
        raise click.ClickException(
            f"correction backend required for {mode} mode "
            f"(set {corrector.BASE_URL_ENV} or use --llm-mock/--llm-echo)"
        )
    out_root = Path(opts["out_dir"])
    out_root.mkdir(parents=True, exist_ok=True)
    dump_dir = Path(opts["dump_preprocessed"]) if opts["dump_preprocessed"] else None
    if dump_dir:
        dump_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    for index, image_path in enumerate(images):
        stem = Path(image_path).stem
        try:
            page = imaging.decode_image(Path(image_path).read_bytes())
            prepped = imaging.preprocess(page)
            if dump_dir:
                (dump_dir / f"{stem}.png").write_bytes(imaging.encode_png(prepped))
            out = engine.recognize(prepped, ocr_cfg)
            (out_root / f"{stem}.txt").write_text(out.text + "\n", encoding="utf-8")
            if mode != "none" and out.text.strip():
                pairs = ()
                if mode == "few_shot":
                    selection = lexicon.SelectionConfig(
                        rng_seed=None if opts["seed"] is None else opts["seed"] + index
                    )
                    pairs = tuple(lexicon.select_pairs(out.text.split(), dictionary, selection))
                req = corrector.CorrectionRequest(
                    ocr_text=out.text, mode=mode, language=opts["lang"], pairs=pairs
                )
                result = corrector.correct(req, backend)
                (out_root / f"{stem}.corrected.txt").write_text(
                    result.corrected_text + "\n", encoding="utf-8"
                )
        except DriveThruError as err:
            failures += 1
            click.echo(f"error: {image_path}: {err}", err=True)
    return 2 if failures else 0


@cli.command(name="eval")
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--hyp", "hyp_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True, default=False)
def eval_cmd(gt_path, hyp_path, as_json):
    """Score a hypothesis text file against ground truth."""
    gt = Path(gt_path).read_text(encoding="utf-8")
    hyp = Path(hyp_path).read_text(encoding="utf-8")
    try:
        car = metrics.car(gt, hyp)
        war = metrics.war(gt, hyp)
    except metrics.EmptyGroundTruth as err:
        raise click.ClickException(str(err))
    gt_tokens = metrics.token_count(gt)
    hyp_tokens = metrics.token_count(hyp)
    if as_json:
        click.echo(json.dumps({
            "car": car, "war": war, "gt_tokens": gt_tokens, "hyp_tokens": hyp_tokens,
        }))
    else:
        click.echo(f"car={car:.6f} war={war:.6f} gt_tokens={gt_tokens} hyp_tokens={hyp_tokens}")
    return 0


@cli.group(name="dict")
def dict_group():
    """Vocabulary dictionary tools."""


@dict_group.command(name="validate")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True, default=False)
def dict_validate(file, as_json):
    """Check a TSV dictionary file; reports line errors and pair count."""
    pairs: dict = {}
    errors = []
    for line_no, item in lexicon.iter_dictionary_lines(file):
        if isinstance(item, lexicon.MalformedLine):
            errors.append({"line": line_no, "message": item.reason})
        else:
            pairs[item] = None
    if as_json:
        click.echo(json.dumps({"ok": not errors, "pairs": len(pairs), "errors": errors}))
    else:
        for err in errors:
            click.echo(f"line {err['line']}: {err['message']}")
        click.echo(f"{'invalid' if errors else 'ok'}: {len(pairs)} pairs")
    return 1 if errors else 0


@cli.group(name="bench")
def bench_group():
    """Benchmark harness."""


@bench_group.command(name="run")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--systems", default="ots", show_default=True, help="Comma-separated: ots, llm-zs, llm-fs.")
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False), help="Write the JSON report here.")
@click.option("--format", "fmt", default="table", type=click.Choice(["table", "json", "csv"]), show_default=True)
@click.option("--dict-dir", default=None, type=click.Path(file_okay=False), help="Directory of <lang>.tsv dictionaries.")
@click.option("--ocr-bin", default=None)
@click.option("--ocr-fake", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--llm-mock", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--llm-echo", is_flag=True, default=False)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--json", "as_json", is_flag=True, default=False, help="Print the JSON report to stdout.")
@click.pass_context
def bench_run(ctx, manifest, systems, out_path, fmt, dict_dir, ocr_bin, ocr_fake, llm_mock, llm_echo, seed, as_json):
    """Run the pipeline over a benchmark manifest and report CAR/WAR."""
    opts = _merge_config(ctx, {
        "systems": systems, "out_path": out_path, "fmt": fmt, "dict_dir": dict_dir,
        "ocr_bin": ocr_bin, "ocr_fake": ocr_fake, "llm_mock": llm_mock,
        "llm_echo": llm_echo, "seed": seed,
    })
    try:
        entries = bench_mod.load_manifest(manifest)
        system_list = [bench_mod.System.parse(s) for s in opts["systems"].split(",") if s.strip()]
    except DriveThruError as err:
        raise click.ClickException(str(err))
    engine = _build_engine(opts["ocr_bin"], opts["ocr_fake"])
    backend = _build_backend(opts["llm_mock"], opts["llm_echo"])
    needs_correction = any(s.mode != "none" for s in system_list)
    if needs_correction and backend is None:
        raise click.ClickException("correction systems need a backend (--llm-mock/--llm-echo or env)")
    dictionary = None
    if any(s.mode == "few_shot" for s in system_list):
        if not opts["dict_dir"]:
            raise click.ClickException("dictionary required for few-shot systems (--dict-dir)")
        languages = {e.language for e in entries}
        if len(languages) == 1:
            lang = languages.pop()
            dictionary = lexicon.load_dictionary(Path(opts["dict_dir"]) / f"{lang}.tsv", lang)
        else:
            raise click.ClickException(
                "few-shot benchmarking over mixed-language manifests is not wired yet; "
                "split the manifest per language"
            )
    deps = pipeline.JobDeps(
        ocr_engine=engine,
        ocr_config=ocr.OcrConfig(engine_path=opts["ocr_bin"] or "tesseract"),
        dictionary=dictionary,
        backend=backend,
    )
    report = bench_mod.run_benchmark(entries, system_list, deps, seed=opts["seed"])
    if opts["out_path"]:
        Path(opts["out_path"]).write_text(
            bench_mod.render_report(report, "json"), encoding="utf-8"
        )
    if as_json:
        click.echo(bench_mod.render_report(report, "json"))
    else:
        click.echo(bench_mod.render_report(report, opts["fmt"]), nl=False)
    return 2 if report.incomplete else 0


@cli.command()
@click.option("--listen", default="127.0.0.1:8000", show_default=True, help="host:port")
@click.option("--data-dir", default=None, type=click.Path(file_okay=False))
@click.option("--ocr-bin", default=None)
@click.option("--dict-dir", default=None, type=click.Path(file_okay=False))
@click.option("--mode-default", default="none", type=click.Choice(pipeline.MODES), show_default=True)
@click.option("--static-dir", default=None, type=click.Path(file_okay=False), help="Web UI assets served under /.")
@click.option("--cors-origin", "cors_origins", multiple=True, help="Allowed CORS origin (repeatable).")
@click.option("--llm-mock", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--llm-echo", is_flag=True, default=False)
@click.pass_context
def serve(ctx, listen, data_dir, ocr_bin, dict_dir, mode_default, static_dir, cors_origins, llm_mock, llm_echo):
    """Start the HTTP service."""
    import uvicorn

    from .service import ServiceSettings, create_app

    opts = _merge_config(ctx, {
        "listen": listen, "data_dir": data_dir, "ocr_bin": ocr_bin,
        "dict_dir": dict_dir, "mode_default": mode_default,
        "static_dir": static_dir, "llm_mock": llm_mock, "llm_echo": llm_echo,
    })
    host, _, port = opts["listen"].rpartition(":")
    if not host or not port.isdigit():
        raise click.UsageError("--listen expects host:port")
    settings = ServiceSettings(
        data_dir=opts["data_dir"],
        dict_dir=opts["dict_dir"],
        ocr_config=ocr.OcrConfig(engine_path=opts["ocr_bin"] or "tesseract"),
        backend=_build_backend(opts["llm_mock"], opts["llm_echo"]),
        mode_default=opts["mode_default"],
        static_dir=opts["static_dir"],
        cors_origins=list(cors_origins),
    )
    uvicorn.run(create_app(settings), host=host, port=int(port))
    return 0


def main(argv: Optional[list[str]] = None) -> None:
    try:
        rv = cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as err:
        sys.exit(err.exit_code)
    except click.UsageError as err:
        err.show()
        sys.exit(1)
    except click.ClickException as err:
        err.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    sys.exit(rv if isinstance(rv, int) else 0)


if __name__ == "__main__":
    main()
