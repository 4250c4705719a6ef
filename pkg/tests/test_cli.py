"""End-to-end runs of the command-line interface."""

import json

import pandas as pd
import pytest
from typer.testing import CliRunner

from scenemc.cli.main import app
from scenemc.io.formats import load_prior_set, load_scene

runner = CliRunner()

SPEC = {"objects": [{"class_label": "chair"}, {"class_label": "table"}], "seed": 1}
FAST_CONFIG = "schedule.phase1.iters = 20\nschedule.phase3.iters = 20\n"


@pytest.fixture
def synth_dir(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SPEC))
    data = tmp_path / "data"
    result = runner.invoke(app, ["synth", str(spec), str(data), "--n", "2", "--seed", "7"])
    assert result.exit_code == 0, result.output
    return data


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.conf"
    path.write_text(FAST_CONFIG)
    return path


def test_dump_defaults():
    result = runner.invoke(app, ["--dump-defaults"])
    assert result.exit_code == 0
    assert "schedule.phase1.iters = 3000" in result.output


def test_fit_hoi(tmp_path):
    samples = tmp_path / "offsets.csv"
    rows = [("hold", x, 0.0, 0.1) for x in (0.0, 0.1, 0.2, 0.3, 0.4)]
    pd.DataFrame(rows, columns=["action", "dx", "dy", "dz"]).to_csv(samples, index=False)
    out = tmp_path / "priors.json"
    result = runner.invoke(app, ["fit-hoi", str(samples), str(out)])
    assert result.exit_code == 0, result.output
    assert load_prior_set(out).get("hold").mean[0] == pytest.approx(0.2)


def test_fit_hoi_too_few_samples(tmp_path):
    samples = tmp_path / "offsets.csv"
    samples.write_text("action,dx,dy,dz\nhold,0,0,0\nhold,1,0,0\n")
    result = runner.invoke(app, ["fit-hoi", str(samples), str(tmp_path / "priors.json")])
    assert result.exit_code == 3
    assert "Error" in result.output


def test_synth_writes_manifest(synth_dir):
    manifest = json.loads((synth_dir / "manifest.json").read_text())
    assert manifest["$schema"] == "synth-manifest/v1"
    assert manifest["seed"] == 7
    assert [e["name"] for e in manifest["scenes"]] == ["scene_000", "scene_001"]
    for entry in manifest["scenes"]:
        assert (synth_dir / entry["scene"]).exists()
        assert (synth_dir / entry["observations"]).exists()


def test_synth_is_reproducible(synth_dir, tmp_path):
    again = tmp_path / "again"
    runner.invoke(app, ["synth", str(tmp_path / "spec.json"), str(again), "--n", "2", "--seed", "7"])
    for name in ("scene_000.gt.json", "scene_001.obs.json", "manifest.json"):
        assert (synth_dir / name).read_bytes() == (again / name).read_bytes()


def test_synth_bad_spec(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"objects": [{"class_label": "chair", "count": -1}]}))
    result = runner.invoke(app, ["synth", str(spec), str(tmp_path / "data")])
    assert result.exit_code == 2


def test_infer_then_eval(synth_dir, fast_config, tmp_path):
    est = tmp_path / "results" / "scene_000.est.json"
    result = runner.invoke(app, ["infer", str(synth_dir / "scene_000.obs.json"), str(est),
                                 "--config", str(fast_config), "--seed", "3"])
    assert result.exit_code == 0, result.output
    assert len(load_scene(est).objects) == len(load_scene(synth_dir / "scene_000.gt.json").objects)
    trace = est.with_suffix(".trace.jsonl").read_text().splitlines()
    assert len(trace) == 40

    metrics = tmp_path / "metrics.json"
    result = runner.invoke(app, ["eval", str(est), str(synth_dir / "scene_000.gt.json"),
                                 "--obs", str(synth_dir / "scene_000.obs.json"), "--out", str(metrics)])
    assert result.exit_code == 0, result.output
    document = json.loads(metrics.read_text())
    assert document["$schema"] == "metrics/v1"
    assert 0.0 <= document["summary"]["iou_3d"] <= 100.0
    assert document["summary"]["n_scenes"] == 1


def test_infer_is_deterministic(synth_dir, fast_config, tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        runner.invoke(app, ["infer", str(synth_dir / "scene_001.obs.json"), str(out), "--config", str(fast_config)])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_eval_directories(synth_dir, fast_config, tmp_path):
    results = tmp_path / "results"
    for name in ("scene_000", "scene_001"):
        runner.invoke(app, ["infer", str(synth_dir / f"{name}.obs.json"), str(results / f"{name}.est.json"),
                            "--config", str(fast_config), "--phases", "1"])
    table = tmp_path / "metrics.csv"
    result = runner.invoke(app, ["eval", str(results), str(synth_dir), "--out", str(tmp_path / "m.json"),
                                 "--csv", str(table)])
    assert result.exit_code == 0, result.output
    assert list(pd.read_csv(table)["scene"]) == ["scene_000", "scene_001"]


def test_eval_against_itself_is_perfect(synth_dir, tmp_path):
    gt = synth_dir / "scene_000.gt.json"
    out = tmp_path / "m.json"
    runner.invoke(app, ["eval", str(gt), str(gt), "--out", str(out)])
    summary = json.loads(out.read_text())["summary"]
    assert summary["iou_3d"] == pytest.approx(100.0)
    assert summary["depth_error"] == pytest.approx(0.0)


@pytest.mark.parametrize("args, code", [
    (["infer", "absent.obs.json", "out.json"], 2),
    (["infer", "{obs}", "out.json", "--phases", "5"], 2),
    (["infer", "{obs}", "out.json", "--ablation", "no-likelihood"], 2),
    (["infer", "{obs}", "out.json", "--prior", "absent.json"], 2),
])
def test_infer_errors(synth_dir, tmp_path, monkeypatch, args, code):
    monkeypatch.chdir(tmp_path)
    args = [a.format(obs=synth_dir / "scene_000.obs.json") for a in args]
    result = runner.invoke(app, args)
    assert result.exit_code == code
    assert "Error" in result.output


def test_render(synth_dir, tmp_path):
    out = tmp_path / "overlay.svg"
    result = runner.invoke(app, ["render", str(synth_dir / "scene_000.gt.json"),
                                 str(synth_dir / "scene_000.obs.json"), str(out)])
    assert result.exit_code == 0, result.output
    text = out.read_text()
    assert text.lstrip().startswith("<svg")
    assert 'id="hull-obj_0"' in text
