"""Seed-averaged sweeps over one architecture or sample-size axis, plus SVG curves.

Layout of a sweep directory::

    sweep.json                  the SweepSpec (base config inlined)
    runs.csv                    one row per (value, seed)
    aggregate.csv               mean and standard error per value
    <axis>=<value>/seed=<s>/    config.json, log.csv, checkpoints, status.json

Only the parent process writes runs.csv and aggregate.csv; workers write
inside their own cell directory.
"""

import copy
import csv
import json
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig, load_json, train_config_from_dict
from .errors import ConfigError

AXES = {
    "n_train": (None, "n_train"),
    "W_g": ("generator", "width"),
    "D_g": ("generator", "depth"),
    "W_f": ("discriminator", "width"),
    "D_f": ("discriminator", "depth"),
}

RUN_FIELDS = ("axis", "value", "seed", "status", "w1", "elapsed_s", "error")
AGG_FIELDS = ("axis", "value", "mean_w1", "stderr", "n_ok", "n_failed", "degraded")


@dataclass
class SweepSpec:
    base: TrainConfig
    axis: str
    values: list
    repeats: int = 6
    out_dir: str = "sweep"
    label: str = ""
    workers: int | None = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis: must be one of {sorted(AXES)}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("values: must be a nonempty list")
        if any(isinstance(v, bool) or not isinstance(v, int) for v in self.values):
            raise ConfigError("values: must be integers")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigError(f"values: must be strictly increasing, got {self.values}")
        if self.repeats < 1:
            raise ConfigError("repeats: must be >= 1")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        for v in self.values:
            self.cell_config(v, self.base.seed)  # surface bad values now

    def cell_config(self, value: int, seed: int) -> TrainConfig:
        cfg = copy.deepcopy(self.base)
        section, name = AXES[self.axis]
        setattr(cfg if section is None else getattr(cfg, section), name, value)
        cfg.seed = seed
        try:
            cfg.validate()
        except ConfigError as exc:
            raise ConfigError(f"values: {self.axis}={value}: {exc}") from None
        return cfg

    def seeds(self) -> list[int]:
        return [self.base.seed + r for r in range(self.repeats)]

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "axis": self.axis, "values": list(self.values),
                "repeats": self.repeats, "out_dir": self.out_dir, "label": self.label,
                "workers": self.workers}


def sweep_spec_from_dict(data: dict, path: str = "") -> SweepSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    known = {"base", "axis", "values", "repeats", "out_dir", "label", "workers"}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path + '.' if path else ''}{key}: unknown key")
    for key in ("axis", "values"):
        if key not in data:
            raise ConfigError(f"{path + '.' if path else ''}{key}: required")
    base = train_config_from_dict(data.get("base", {}), f"{path + '.' if path else ''}base")
    if not isinstance(data["values"], list):
        raise ConfigError(f"{path + '.' if path else ''}values: expected a list")
    return SweepSpec(base, data["axis"], data["values"], data.get("repeats", 6),
                     data.get("out_dir", "sweep"), data.get("label", ""), data.get("workers"))


def load_sweep_specs(path) -> list[SweepSpec]:
    """A sweep file holds one spec, or ``{"sweeps": [...]}`` for overlaid series."""
    data = load_json(path)
    if isinstance(data, dict) and "sweeps" in data:
        if set(data) != {"sweeps"} or not isinstance(data["sweeps"], list):
            raise ConfigError("sweeps: expected {\"sweeps\": [spec, ...]} and nothing else")
        return [sweep_spec_from_dict(d, f"sweeps[{i}]") for i, d in enumerate(data["sweeps"])]
    return [sweep_spec_from_dict(data)]


@dataclass
class RunRecord:
    value: int
    seed: int
    status: str
    w1: float
    elapsed: float = 0.0
    error: str = ""


@dataclass
class SweepResult:
    axis: str
    values: list
    runs: list = field(default_factory=list)
    label: str = ""

    def stats(self) -> list[dict]:
        out = []
        for v in self.values:
            cell = [r for r in self.runs if r.value == v]
            ok = [r.w1 for r in cell if r.status == "completed" and math.isfinite(r.w1)]
            k = len(ok)
            mean = float(np.mean(ok)) if k else math.nan
            se = float(np.std(ok, ddof=1) / math.sqrt(k)) if k > 1 else 0.0 if k else math.nan
            failed = len(cell) - k
            out.append({"axis": self.axis, "value": v, "mean_w1": mean, "stderr": se, "n_ok": k,
                        "n_failed": failed, "degraded": bool(cell) and failed * 2 >= len(cell)})
        return out

    def means(self) -> dict:
        return {s["value"]: s["mean_w1"] for s in self.stats()}

    @property
    def degraded(self) -> bool:
        return any(s["degraded"] for s in self.stats())


def cell_dir(spec: SweepSpec, value: int, seed: int) -> str:
    return os.path.join(spec.out_dir, f"{spec.axis}={value}", f"seed={seed}")


def _read_status(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError):
        return None


def _run_cell(config_dict: dict, out_dir: str, data_dir) -> dict:
    # runs in a worker process; everything it touches lives under out_dir
    from .training import train_from_config

    cfg = train_config_from_dict(config_dict)
    status_path = os.path.join(out_dir, "status.json")
    try:
        res = train_from_config(cfg, data_dir=data_dir, out_dir=out_dir)
        status = {"status": "completed", "w1": res.final.value, "elapsed_s": res.final.elapsed,
                  "error": ""}
    except Exception as exc:  # a failed run must not stop the sweep
        status = {"status": "failed", "w1": math.nan, "elapsed_s": 0.0,
                  "error": f"{type(exc).__name__}: {exc}",
                  "traceback": traceback.format_exc()}
    os.makedirs(out_dir, exist_ok=True)
    with open(status_path, "w") as fh:
        json.dump(status, fh, indent=2)
    return status


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1) - 1)


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items() if k in fields})


def write_result(spec: SweepSpec, result: SweepResult) -> None:
    runs = sorted(result.runs, key=lambda r: (r.value, r.seed))
    _write_csv(os.path.join(spec.out_dir, "runs.csv"), RUN_FIELDS,
               [{"axis": spec.axis, "value": r.value, "seed": r.seed, "status": r.status, "w1": r.w1,
                 "elapsed_s": r.elapsed, "error": r.error} for r in runs])
    _write_csv(os.path.join(spec.out_dir, "aggregate.csv"), AGG_FIELDS, result.stats())


def run_sweep(spec: SweepSpec, data_dir=None, workers: int | None = None, progress=None) -> SweepResult:
    """Train every (value, seed) cell not already completed, then aggregate.

    ``progress`` is called with a RunRecord as each cell finishes (or is
    found complete). Returns the SweepResult; ``result.degraded`` flags values
    where at least half the runs failed.
    """
    os.makedirs(spec.out_dir, exist_ok=True)
    with open(os.path.join(spec.out_dir, "sweep.json"), "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)

    records = {}
    todo = []
    for v in spec.values:
        for s in spec.seeds():
            cfg = spec.cell_config(v, s)
            d = cell_dir(spec, v, s)
            st = _read_status(os.path.join(d, "status.json"))
            stored = _read_status(os.path.join(d, "config.json"))
            if st and st.get("status") == "completed" and stored == cfg.to_dict():
                rec = RunRecord(v, s, "completed", float(st["w1"]), float(st.get("elapsed_s", 0.0)))
                records[(v, s)] = rec
                if progress:
                    progress(rec)
            else:
                todo.append((v, s, cfg.to_dict(), d))

    def finish(v, s, st):
        rec = RunRecord(v, s, st["status"], float(st["w1"]), float(st["elapsed_s"]), st["error"])
        records[(v, s)] = rec
        if progress:
            progress(rec)

    n = workers or spec.workers or default_workers()
    if n <= 1 or len(todo) <= 1:
        for v, s, cfg, d in todo:
            finish(v, s, _run_cell(cfg, d, data_dir))
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            futures = [(v, s, pool.submit(_run_cell, cfg, d, data_dir)) for v, s, cfg, d in todo]
            for v, s, fut in futures:
                try:
                    st = fut.result()
                except Exception as exc:  # worker crashed outright
                    st = {"status": "failed", "w1": math.nan, "elapsed_s": 0.0,
                          "error": f"{type(exc).__name__}: {exc}"}
                finish(v, s, st)

    result = SweepResult(spec.axis, list(spec.values),
                         [records[(v, s)] for v in spec.values for s in spec.seeds()],
                         spec.label)
    write_result(spec, result)
    return result


def load_sweep_result(directory) -> SweepResult:
    with open(os.path.join(directory, "sweep.json")) as fh:
        meta = json.load(fh)
    runs = []
    with open(os.path.join(directory, "runs.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            runs.append(RunRecord(int(row["value"]), int(row["seed"]), row["status"], float(row["w1"]),
                                  float(row["elapsed_s"]), row["error"]))
    return SweepResult(meta["axis"], meta["values"], runs, meta.get("label", ""))


def find_sweeps(root) -> list[str]:
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        if "sweep.json" in filenames and "runs.csv" in filenames:
            found.append(dirpath)
            dirnames[:] = []  # cells below a sweep are not sweeps
    return found


AXIS_LABELS = {"n_train": "number of training samples n", "W_g": "generator width W_g",
               "D_g": "generator depth D_g", "W_f": "discriminator width W_f",
               "D_f": "discriminator depth D_f"}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, k: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (k - 1) for i in range(k)]


def plot_curves(results, out, title: str = "") -> str:
    """Write an SVG of mean final W1 (with standard-error bars) against the axis.

    ``results`` is a SweepResult or a list of them sharing one axis; several
    series get one polyline each and a legend. Output bytes depend only on
    the input values.
    """
    if isinstance(results, SweepResult):
        results = [results]
    if not results or not any(r.values for r in results):
        raise ValueError("nothing to plot")
    axis = results[0].axis
    if any(r.axis != axis for r in results):
        raise ValueError("all series must share one axis")
    series = []
    for r in results:
        pts = [(s["value"], s["mean_w1"], s["stderr"]) for s in r.stats() if math.isfinite(s["mean_w1"])]
        series.append((r.label or f"series {len(series) + 1}", pts))
    xs = [p[0] for _, pts in series for p in pts]
    lo_y = [p[1] - p[2] for _, pts in series for p in pts]
    hi_y = [p[1] + p[2] for _, pts in series for p in pts]
    if not xs:
        raise ValueError("no completed runs to plot")

    W, H, L, R, T, B = 640, 420, 80, 30, 40, 60
    x0, x1 = min(xs), max(xs)
    if x0 == x1:
        x0, x1 = x0 - 1, x1 + 1
    y0, y1 = min(0.0, min(lo_y)), max(hi_y)
    if y1 <= y0:
        y1 = y0 + 1.0
    y1 += 0.05 * (y1 - y0)

    def px(x):
        return L + (x - x0) / (x1 - x0) * (W - L - R)

    def py(y):
        return H - B - (y - y0) / (y1 - y0) * (H - T - B)

    out_lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
        f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>',
    ]
    for x in sorted(set(xs)):
        out_lines.append(f'<text x="{_fmt(px(x))}" y="{H - B + 18}" font-size="11" '
                         f'text-anchor="middle">{x}</text>')
    for y in _ticks(y0, y1):
        out_lines.append(f'<text x="{L - 6}" y="{_fmt(py(y) + 4)}" font-size="11" '
                         f'text-anchor="end">{y:.3g}</text>')
    out_lines.append(f'<text x="{(L + W - R) / 2:.1f}" y="{H - 15}" font-size="13" '
                     f'text-anchor="middle">{AXIS_LABELS.get(axis, axis)}</text>')
    out_lines.append(f'<text x="18" y="{(T + H - B) / 2:.1f}" font-size="13" text-anchor="middle" '
                     f'transform="rotate(-90 18 {(T + H - B) / 2:.1f})">mean final W1</text>')
    if title:
        out_lines.append(f'<text x="{W / 2:.1f}" y="22" font-size="14" text-anchor="middle">{title}</text>')
    for i, (label, pts) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        if len(pts) > 1:
            coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y, _ in pts)
            out_lines.append(f'<polyline class="curve" points="{coords}" fill="none" '
                             f'stroke="{color}" stroke-width="1.5"/>')
        for x, y, se in pts:
            if se > 0:
                out_lines.append(f'<line class="errbar" x1="{_fmt(px(x))}" y1="{_fmt(py(y - se))}" '
                                 f'x2="{_fmt(px(x))}" y2="{_fmt(py(y + se))}" stroke="{color}"/>')
            out_lines.append(f'<circle class="marker" cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="3.5" '
                             f'fill="{color}"/>')
    if len(series) > 1:
        out_lines.append('<g class="legend">')
        for i, (label, _) in enumerate(series):
            color = COLORS[i % len(COLORS)]
            y = T + 10 + 18 * i
            out_lines.append(f'<line x1="{W - R - 150}" y1="{y}" x2="{W - R - 125}" y2="{y}" '
                             f'stroke="{color}" stroke-width="2"/>')
            out_lines.append(f'<text x="{W - R - 118}" y="{y + 4}" font-size="12">{label}</text>')
        out_lines.append("</g>")
    out_lines.append("</svg>")
    text = "\n".join(out_lines) + "\n"
    with open(out, "w") as fh:
        fh.write(text)
    return text


def plot_directory(root) -> list[str]:
    """One SVG per axis found under ``root``, overlaying every sweep on that axis."""
    by_axis = {}
    for d in find_sweeps(root):
        res = load_sweep_result(d)
        if not res.label:
            res.label = os.path.relpath(d, root)
        by_axis.setdefault(res.axis, []).append(res)
    if not by_axis:
        raise FileNotFoundError(f"no completed sweeps under {root}")
    written = []
    for axis in sorted(by_axis):
        path = os.path.join(root, f"{axis}.svg")
        plot_curves(by_axis[axis], path)
        written.append(path)
    return written
