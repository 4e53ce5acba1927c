import json

import numpy as np
import pytest

from softmask.config import Config, config_from_dict, load_config
from softmask.imaging import load_image, load_mask
from softmask.metrics import confusion, dice
from softmask.phantom import write_phantom_set
from softmask.pipeline import ManifestError, QualityReport, entry_to_json, load_manifest, run_pipeline

RECIST = [10, 32, 54, 32, 32, 14, 32, 50]


def write_lines(path, lines):
    path.write_text("\n".join(json.dumps(x) if not isinstance(x, str) else x for x in lines) + "\n")
    return path


def test_empty_manifest(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("")
    assert load_manifest(p) == []


def test_manifest_order_and_paths(tmp_path):
    p = write_lines(
        tmp_path / "m.jsonl",
        [
            {"case_id": "c", "image": "c.pgm", "recist": RECIST},
            "",
            {"case_id": "a", "image": "a.pgm", "multirater": ["r1.pgm", "r2.pgm"], "ground_truth": "g.pgm"},
            {"case_id": "b", "image": "sub/b.pgm", "binary": "m.pgm", "window": [-600, 1500]},
        ],
    )
    entries = load_manifest(p)
    assert [e.case_id for e in entries] == ["c", "a", "b"]
    assert [e.kind for e in entries] == ["recist", "multirater", "binary"]
    assert entries[2].image == tmp_path / "sub/b.pgm"
    assert entries[2].window == (-600.0, 1500.0)
    assert entries[0].recist.flat() == [float(v) for v in RECIST]
    for e in entries:
        again = json.loads(entry_to_json(e, tmp_path))
        assert again["case_id"] == e.case_id


@pytest.mark.parametrize(
    "bad, match",
    [
        ({"case_id": "x", "image": "x.pgm", "recist": RECIST, "binary": "m.pgm"}, "exactly one"),
        ({"case_id": "x", "image": "x.pgm"}, "exactly one"),
        ({"case_id": "x", "image": "x.pgm", "binary": "m.pgm", "extra": 1}, "unknown field"),
        ({"image": "x.pgm", "binary": "m.pgm"}, "case_id"),
        ({"case_id": "x", "image": "x.pgm", "recist": [1, 2, 3]}, "line 2"),
        ({"case_id": "x", "image": "x.pgm", "multirater": ["a.pgm"]}, "at least two"),
        ({"case_id": "x", "image": "x.pgm", "binary": "m.pgm", "window": [0, -5]}, "width"),
        ("{not json", "invalid JSON"),
    ],
)
def test_manifest_errors_carry_line(tmp_path, bad, match):
    p = write_lines(tmp_path / "m.jsonl", [{"case_id": "ok", "image": "o.pgm", "binary": "m.pgm"}, bad])
    with pytest.raises(ManifestError, match=match) as info:
        load_manifest(p)
    assert info.value.lineno == 2


def test_duplicate_case_ids(tmp_path):
    e = {"case_id": "x", "image": "x.pgm", "binary": "m.pgm"}
    p = write_lines(tmp_path / "m.jsonl", [e, e])
    with pytest.raises(ManifestError, match="duplicate"):
        load_manifest(p)


def test_config_overlay(tmp_path):
    cfg = config_from_dict({"seed": 4, "matting": {"eps": 1e-6}, "trimap": {"se_scale": 0.1}})
    assert cfg.seed == 4 and cfg.matting.eps == 1e-6 and cfg.matting.lambda_c == 100
    assert cfg.grabcut_params().seed == 4
    with pytest.raises(ValueError, match="unknown"):
        config_from_dict({"matting": {"nope": 1}})
    with pytest.raises(ValueError):
        config_from_dict({"depth": 12})
    p = tmp_path / "c.json"
    p.write_text(cfg.to_json())
    assert load_config(p) == cfg


@pytest.fixture(scope="module")
def phantoms(tmp_path_factory):
    d = tmp_path_factory.mktemp("ph")
    return write_phantom_set(d, count=3, size=48, seed=5)


def test_run_phantoms_and_determinism(phantoms, tmp_path):
    cfg = Config(seed=5)
    s1 = run_pipeline(load_manifest(phantoms), cfg, tmp_path / "a")
    s2 = run_pipeline(load_manifest(phantoms), cfg, tmp_path / "b", workers=2)
    assert s1["processed"] == s1["succeeded"] == 3 and s1["failed"] == 0
    assert s2["succeeded"] == 3
    for e in load_manifest(phantoms):
        a, b = tmp_path / "a" / e.case_id, tmp_path / "b" / e.case_id
        for name in ("soft_mask.pgm", "trimap.pgm"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        ra, rb = (json.loads((x / "report.json").read_text()) for x in (a, b))
        for k in QualityReport.TIMING_FIELDS:
            assert ra.pop(k) >= 0 and rb.pop(k) >= 0
        assert ra == rb
        assert 0 <= ra["unknown_fraction"] <= 1
        assert ra["fg_deviation"] >= 0 and ra["bg_deviation"] >= 0
        soft = load_image(a / "soft_mask.pgm")
        gt = load_mask(e.ground_truth)
        assert dice(confusion(soft >= 0.5, gt)) >= 0.95
        assert ra["metrics"]["dice"] >= 0.95
    assert json.loads((tmp_path / "a" / "summary.json").read_text())["succeeded"] == 3


def test_failure_isolation(phantoms, tmp_path):
    lines = phantoms.read_text().splitlines()
    broken = json.loads(lines[1])
    broken.pop("recist")
    broken["binary"] = "does_not_exist.pgm"
    lines[1] = json.dumps(broken)
    m = tmp_path / "m.jsonl"
    m.write_text("\n".join(lines) + "\n")
    # manifest paths are relative to the manifest directory
    for f in phantoms.parent.iterdir():
        if f.suffix == ".pgm":
            (tmp_path / f.name).write_bytes(f.read_bytes())
    out = tmp_path / "out"
    summary = run_pipeline(load_manifest(m), Config(seed=5), out)
    assert summary["processed"] == 3 == summary["succeeded"] + summary["failed"]
    assert summary["failed"] == 1
    assert summary["failures"][0]["case_id"] == broken["case_id"]
    assert not (out / broken["case_id"]).exists()
    assert sorted(p.name for p in out.iterdir() if p.is_dir()) == sorted(
        json.loads(l)["case_id"] for i, l in enumerate(lines) if i != 1
    )


@pytest.mark.parametrize("kind", ["binary", "multirater"])
def test_other_strategies(tmp_path, kind):
    m = write_phantom_set(tmp_path / "ph", count=2, size=48, seed=1, kind=kind, raw16=(kind == "binary"))
    summary = run_pipeline(load_manifest(m), Config(seed=1), tmp_path / "out")
    assert summary["succeeded"] == 2
    rep = json.loads((tmp_path / "out" / "phantom_000" / "report.json").read_text())
    assert rep["strategy"] == kind
    assert np.isfinite(rep["cg_residual"])
