import csv
import json
import math
import os

import numpy as np
import pytest

from gswgan.config import EvalConfig, TrainConfig
from gswgan.errors import ConfigError
from gswgan.experiments import (RunRecord, SweepResult, SweepSpec, load_sweep_result, plot_curves,
                                plot_directory, run_sweep, sweep_spec_from_dict)


def tiny_base(**kw):
    base = dict(n_train=200, batch_size=20, total_iterations=4, critic_steps=2,
                eval=EvalConfig(every=2, samples=40, keep_checkpoints=False))
    base.update(kw)
    return TrainConfig(**base)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec(tiny_base(), "W_x", [1])
    with pytest.raises(ConfigError):
        SweepSpec(tiny_base(), "W_g", [30, 30])
    with pytest.raises(ConfigError):
        SweepSpec(tiny_base(), "W_g", [30], repeats=0)
    with pytest.raises(ConfigError, match="W_f=31"):
        SweepSpec(tiny_base(), "W_f", [30, 31])
    with pytest.raises(ConfigError, match="n_train=10"):
        SweepSpec(tiny_base(), "n_train", [10, 200])


def test_cell_config_sets_axis_and_seed():
    spec = SweepSpec(tiny_base(seed=7), "D_f", [2, 4], repeats=3)
    cfg = spec.cell_config(4, 9)
    assert cfg.discriminator.depth == 4 and cfg.seed == 9
    assert spec.seeds() == [7, 8, 9]
    assert spec.base.discriminator.depth == 2


def test_single_run_sweep_and_idempotent_rerun(tmp_path):
    spec = SweepSpec(tiny_base(), "W_g", [30], repeats=1, out_dir=str(tmp_path / "s"))
    calls = []
    res = run_sweep(spec, workers=1, progress=calls.append)
    assert len(res.runs) == 1 and res.runs[0].status == "completed"
    stats = res.stats()
    assert stats[0]["mean_w1"] == res.runs[0].w1 and stats[0]["stderr"] == 0.0
    cell = tmp_path / "s" / "W_g=30" / "seed=0"
    assert (cell / "log.csv").exists() and (cell / "config.json").exists()
    mtime = os.path.getmtime(cell / "log.csv")
    again = run_sweep(spec, workers=1)
    assert os.path.getmtime(cell / "log.csv") == mtime  # no retraining
    assert again.runs[0].w1 == res.runs[0].w1
    loaded = load_sweep_result(tmp_path / "s")
    assert loaded.runs == again.runs


def test_cell_reproducible_from_its_config(tmp_path):
    from gswgan.config import load_train_config
    from gswgan.training import train_from_config

    spec = SweepSpec(tiny_base(), "n_train", [100, 200], repeats=2, out_dir=str(tmp_path))
    res = run_sweep(spec, workers=1)
    rec = res.runs[3]
    cfg = load_train_config(tmp_path / f"n_train={rec.value}" / f"seed={rec.seed}" / "config.json")
    assert train_from_config(cfg).final.value == rec.w1


def test_aggregate_equals_mean_of_stored_values(tmp_path):
    spec = SweepSpec(tiny_base(), "D_g", [2, 3], repeats=3, out_dir=str(tmp_path))
    res = run_sweep(spec, workers=1)
    assert len(res.runs) == 6
    with open(tmp_path / "aggregate.csv") as fh:
        agg = list(csv.DictReader(fh))
    with open(tmp_path / "runs.csv") as fh:
        runs = list(csv.DictReader(fh))
    for row in agg:
        vals = [float(r["w1"]) for r in runs if r["value"] == row["value"]]
        assert abs(float(row["mean_w1"]) - sum(vals) / len(vals)) <= 1e-12
        assert float(row["stderr"]) == pytest.approx(np.std(vals, ddof=1) / math.sqrt(3), rel=1e-12)


def test_failed_runs_are_recorded_and_flag_degraded(tmp_path):
    # a divergent generator learning rate makes every run fail with a numeric error
    base = tiny_base()
    base.generator_optimizer.kind = "sgd"
    base.generator_optimizer.lr = 1e300
    spec = SweepSpec(base, "W_g", [30, 40], repeats=2, out_dir=str(tmp_path))
    with np.errstate(all="ignore"):
        res = run_sweep(spec, workers=1)
    assert [r.status for r in res.runs] == ["failed"] * 4
    assert res.degraded
    status = json.loads((tmp_path / "W_g=30" / "seed=0" / "status.json").read_text())
    assert "NumericError" in status["error"]


def test_degraded_threshold():
    runs = [RunRecord(1, 0, "completed", 0.1), RunRecord(1, 1, "failed", math.nan),
            RunRecord(2, 0, "completed", 0.2), RunRecord(2, 1, "completed", 0.3),
            RunRecord(2, 2, "failed", math.nan)]
    res = SweepResult("W_g", [1, 2], runs)
    assert [s["degraded"] for s in res.stats()] == [True, False]


def test_process_pool_matches_inline(tmp_path):
    spec_a = SweepSpec(tiny_base(), "W_g", [30, 40], repeats=2, out_dir=str(tmp_path / "a"))
    spec_b = SweepSpec(tiny_base(), "W_g", [30, 40], repeats=2, out_dir=str(tmp_path / "b"))
    inline = run_sweep(spec_a, workers=1)
    pooled = run_sweep(spec_b, workers=2)
    assert [r.w1 for r in inline.runs] == [r.w1 for r in pooled.runs]


def test_sweep_spec_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="axes"):
        sweep_spec_from_dict({"axes": "W_g", "axis": "W_g", "values": [30]})
    with pytest.raises(ConfigError, match=r"base\.seeds"):
        sweep_spec_from_dict({"axis": "W_g", "values": [30], "base": {"seeds": 1}})


def _result(label, points):
    runs = [RunRecord(v, s, "completed", w) for v, ws in points for s, w in enumerate(ws)]
    return SweepResult("W_g", [v for v, _ in points], runs, label)


def test_plot_single_point_has_one_marker(tmp_path):
    svg = plot_curves(_result("a", [(30, [0.2])]), tmp_path / "p.svg")
    assert svg.count('class="marker"') == 1
    assert svg.startswith("<svg") and "generator width" in svg


def test_plot_two_series_polylines_and_legend(tmp_path):
    weak = _result("weak", [(30, [0.2, 0.22]), (200, [0.3, 0.33])])
    strong = _result("strong", [(30, [0.18, 0.2]), (200, [0.19, 0.2])])
    svg = plot_curves([weak, strong], tmp_path / "p.svg")
    assert svg.count("<polyline") == 2
    assert 'class="legend"' in svg and "weak" in svg and "strong" in svg
    assert svg.count('class="errbar"') == 4


def test_plot_is_byte_deterministic(tmp_path):
    r = _result("x", [(30, [0.2, 0.25]), (50, [0.1, 0.3])])
    plot_curves(r, tmp_path / "a.svg")
    plot_curves(r, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_plot_directory_overlays_sweeps(tmp_path):
    for label, width in (("weak", 30), ("strong", 50)):
        base = tiny_base()
        base.discriminator.width = width
        run_sweep(SweepSpec(base, "W_g", [20, 30], repeats=1, out_dir=str(tmp_path / label), label=label),
                  workers=1)
    paths = plot_directory(tmp_path)
    assert paths == [str(tmp_path / "W_g.svg")]
    svg = (tmp_path / "W_g.svg").read_text()
    assert svg.count("<polyline") == 2 and "weak" in svg
