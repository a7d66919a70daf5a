import random
import stat
import threading
import time

import pytest

from drivethru.ocr import (
    EngineFailed,
    EngineNotFound,
    FakeOcrEngine,
    OcrConfig,
    OcrTimeout,
    TesseractEngine,
    image_content_id,
    recognize_batch,
)
from fixtures import SAMPLE_OCR_LINE, random_image


def make_script(tmp_path, name, body):
    path = tmp_path / name
    path.write_text("#!/usr/bin/env python3\n" + body, encoding="utf-8")
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return str(path)


# ----------------------------------------------------------------- config

def test_config_validation():
    with pytest.raises(ValueError):
        OcrConfig(engine_mode=4)
    with pytest.raises(ValueError):
        OcrConfig(page_seg_mode=14)


def test_cli_args_defaults():
    assert OcrConfig().cli_args() == ["--oem", "3", "--psm", "6"]


def test_cli_args_round_trip_from_snapshot():
    cfg = OcrConfig(engine_mode=1, page_seg_mode=11, language="eng")
    out = FakeOcrEngine().recognize(random_image(4, 4, channels=1), cfg)
    assert out.config_used == cfg
    assert out.config_used.cli_args() == ["--oem", "1", "--psm", "11", "-l", "eng"]


# ------------------------------------------------------------ fake engine

def test_fake_engine_canned_mapping():
    img = random_image(10, 10, channels=1, seed=1)
    engine = FakeOcrEngine({image_content_id(img): SAMPLE_OCR_LINE})
    out = engine.recognize(img, OcrConfig())
    assert out.text == "Terekel Salim naek kena kai"
    assert out.source_image_id == image_content_id(img)


def test_fake_engine_blank_page_defaults_empty():
    out = FakeOcrEngine().recognize(random_image(6, 6, channels=1), OcrConfig())
    assert out.text == ""


def test_content_id_stable_and_distinct():
    a = random_image(10, 10, channels=1, seed=1)
    b = random_image(10, 10, channels=1, seed=2)
    assert image_content_id(a) == image_content_id(a)
    assert image_content_id(a) != image_content_id(b)


# ------------------------------------------------------- child process

def test_missing_executable():
    cfg = OcrConfig(engine_path="/nonexistent/ocr-binary")
    with pytest.raises(EngineNotFound):
        TesseractEngine().recognize(random_image(4, 4, channels=1), cfg)


def test_child_process_success(tmp_path):
    script = make_script(
        tmp_path,
        "fake-ocr",
        "import sys\n"
        "assert sys.argv[2] == 'stdout'\n"
        "assert sys.argv[3:] == ['--oem', '3', '--psm', '6']\n"
        "print('baris siji')\n"
        "print('baris loro')\n",
    )
    cfg = OcrConfig(engine_path=script)
    out = TesseractEngine(script).recognize(random_image(8, 8, channels=1), cfg)
    assert out.text == "baris siji\nbaris loro"
    assert out.duration_ms >= 0


def test_child_process_failure_captures_stderr(tmp_path):
    script = make_script(
        tmp_path, "broken-ocr", "import sys\nprint('boom', file=sys.stderr)\nsys.exit(3)\n"
    )
    cfg = OcrConfig(engine_path=script)
    with pytest.raises(EngineFailed) as exc:
        TesseractEngine(script).recognize(random_image(4, 4, channels=1), cfg)
    assert "boom" in exc.value.stderr


def test_child_process_timeout(tmp_path):
    script = make_script(tmp_path, "slow-ocr", "import time\ntime.sleep(5)\n")
    cfg = OcrConfig(engine_path=script, timeout_s=0.4)
    with pytest.raises(OcrTimeout):
        TesseractEngine(script).recognize(random_image(4, 4, channels=1), cfg)


def test_env_override_resolves_engine(tmp_path, monkeypatch):
    script = make_script(tmp_path, "env-ocr", "print('from env')\n")
    monkeypatch.setenv("DRIVETHRU_OCR_BIN", script)
    cfg = OcrConfig(engine_path="/nonexistent/ignored")
    out = TesseractEngine().recognize(random_image(4, 4, channels=1), cfg)
    assert out.text == "from env"
    assert TesseractEngine("/nonexistent/ignored").available()


def test_available_probe():
    assert not TesseractEngine("/nonexistent/ocr-binary").available()
    assert FakeOcrEngine().available()


# ------------------------------------------------------------------ batch

class FlakyEngine(FakeOcrEngine):
    """Fails for images marked bad."""

    def __init__(self, bad_keys, **kwargs):
        super().__init__(**kwargs)
        self.bad_keys = set(bad_keys)

    def recognize(self, img, cfg):
        if self.key_for(img) in self.bad_keys:
            raise EngineFailed("corrupt page")
        return super().recognize(img, cfg)


def test_batch_sequential_order():
    imgs = [random_image(6, 6, channels=1, seed=s) for s in range(3)]
    engine = FakeOcrEngine({image_content_id(im): f"text-{i}" for i, im in enumerate(imgs)})
    outs = recognize_batch(engine, imgs, OcrConfig(), parallelism=1)
    assert [o.text for o in outs] == ["text-0", "text-1", "text-2"]


def test_batch_partial_failure_keeps_slots():
    imgs = [random_image(6, 6, channels=1, seed=s) for s in range(5)]
    mapping = {image_content_id(im): f"text-{i}" for i, im in enumerate(imgs)}
    engine = FlakyEngine([image_content_id(imgs[2])], mapping=mapping)
    outs = recognize_batch(engine, imgs, OcrConfig(), parallelism=2)
    assert [getattr(o, "text", None) for o in outs] == ["text-0", "text-1", None, "text-3", "text-4"]
    assert isinstance(outs[2], EngineFailed)


def test_batch_empty():
    assert recognize_batch(FakeOcrEngine(), [], OcrConfig(), parallelism=3) == []


def test_batch_order_with_random_delays():
    rng = random.Random(0)
    imgs = [random_image(6, 6, channels=1, seed=s) for s in range(8)]
    mapping = {}
    delays = {}
    for i, im in enumerate(imgs):
        key = image_content_id(im)
        mapping[key] = f"page-{i}"
        delays[key] = rng.uniform(0.0, 0.05)
    engine = FakeOcrEngine(mapping, delays=delays)
    for parallelism in (1, 2, 4, 8):
        outs = recognize_batch(engine, imgs, OcrConfig(), parallelism=parallelism)
        assert [o.text for o in outs] == [f"page-{i}" for i in range(8)]


def test_batch_parallelism_bound():
    active = []
    peak = []
    lock = threading.Lock()

    class CountingEngine(FakeOcrEngine):
        def recognize(self, img, cfg):
            with lock:
                active.append(1)
                peak.append(len(active))
            time.sleep(0.02)
            with lock:
                active.pop()
            return super().recognize(img, cfg)

    imgs = [random_image(5, 5, channels=1, seed=s) for s in range(10)]
    recognize_batch(CountingEngine(), imgs, OcrConfig(), parallelism=3)
    assert max(peak) <= 3


def test_batch_rejects_bad_parallelism():
    with pytest.raises(ValueError):
        recognize_batch(FakeOcrEngine(), [], OcrConfig(), parallelism=0)
