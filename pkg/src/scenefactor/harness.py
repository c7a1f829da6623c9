"""Seeded experiment runner: sweeps, trials, per-trial CSV and summaries.

Every trial derives its random streams from ``(seed, pairing key, trial)``
so results do not depend on execution order or worker count. Inside a trial
the draw order is: horizontal base, vertical base, basis codebook, objects
and their placement, then one resonator initialization per encoding.
Sparse and pixel encodings of a trial see the same scene.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import containers
from . import datasets as ds
from .encoder import PIXEL, SPARSE, build_codebooks, encode_pixel, encode_sparse, make_context
from .encoder import make_object_template
from .errors import ConfigError
from .multi import factorize_multi, graded_accuracy
from .resonator import CONFIDENCE, FIXED_POINT, StoppingCriterion, run
from .sparse import SparseConfig, check_dictionary, infer_maps
from .whitening import fit_whitening

EXPERIMENTS = ("bars_scaling", "mnist_scaling", "letters", "multi_object", "confidence", "whitening")

DATA_DIR = Path(__file__).resolve().parents[2] / "data"
MNIST_IMAGES = "mnist/mnist5k-images-idx3-ubyte.gz"
MNIST_LABELS = "mnist/mnist5k-labels-idx1-ubyte.gz"
MNIST_DICT = "mnist_dict_16x12.cscd"
LETTERS_DIR = "letters"

# per-experiment defaults; the numbers follow the published protocols, with
# trial counts and some dimensions reduced to desk scale
_DEFAULTS = {
    "bars_scaling": dict(dim=2500, sweep=(5, 15, 30, 50), side=100, max_iters=100, epsilon=0.01),
    "multi_object": dict(dim=2500, sweep=(1, 2, 3, 4, 5), side=100, max_iters=100, epsilon=0.01),
    "mnist_scaling": dict(dim=5000, sweep=(60, 120), max_iters=20, epsilon=0.05),
    "letters": dict(dim=5000, sweep=(60, 120), max_iters=20, epsilon=0.05),
    "confidence": dict(dim=5000, sweep=(120,), max_iters=20, epsilon=0.05),
    "whitening": dict(dim=2500, sweep=(60,), max_iters=20, epsilon=0.05),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; ``None`` fields take experiment defaults.

    ``sweep`` holds codebook sizes K (bars_scaling), scene sides L
    (mnist_scaling, letters, confidence, whitening) or object counts m
    (multi_object).
    """

    experiment: str
    dim: int | None = None
    sweep: tuple[int, ...] | None = None
    side: int | None = None
    objects: int = 10
    dataset: str | None = None
    lam: float | None = None
    trials: int = 200
    seed: int = 0
    max_iters: int | None = None
    epsilon: float | None = None
    stopping: str = FIXED_POINT
    conf_sparse: float = 0.6
    conf_pixel: float = 0.3
    encodings: tuple[str, ...] = (SPARSE, PIXEL)
    output: str = "results.csv"
    dict_path: str | None = None
    mnist_images: str | None = None
    mnist_labels: str | None = None
    letters_dir: str | None = None
    template_indices: tuple[int, ...] | None = None
    bars_per_shape: int = 2
    sparse_iters: int = 200
    sparse_tol: float = 1e-6
    cleaned: bool = False
    tolerance: int = 0
    whitening_epsilon: float | None = None
    whitening_center: bool = False
    workers: int = 1

    def resolved(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        cfg = self
        for key, val in _DEFAULTS[self.experiment].items():
            if getattr(cfg, key) is None:
                cfg = replace(cfg, **{key: val})
        dataset = cfg.dataset
        if dataset is None:
            dataset = {"bars_scaling": "bars", "multi_object": "bars", "letters": "letters"}.get(
                cfg.experiment, "mnist"
            )
        cfg = replace(cfg, dataset=dataset)
        if cfg.lam is None:
            cfg = replace(cfg, lam=0.1 if dataset == "bars" else 0.2)
        data = DATA_DIR
        cfg = replace(
            cfg,
            dict_path=cfg.dict_path or str(data / MNIST_DICT),
            mnist_images=cfg.mnist_images or str(data / MNIST_IMAGES),
            mnist_labels=cfg.mnist_labels or str(data / MNIST_LABELS),
            letters_dir=cfg.letters_dir or str(data / LETTERS_DIR),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.dataset not in ("bars", "mnist", "letters"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        for name in ("dim", "trials", "objects", "sparse_iters", "workers"):
            if getattr(self, name) is None or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not self.sweep or any(v < 1 for v in self.sweep):
            raise ConfigError("sweep must list positive integers")
        if self.max_iters < 1 or self.epsilon <= 0 or self.lam < 0 or self.sparse_tol <= 0:
            raise ConfigError("max_iters, epsilon and sparse_tol must be positive, lam >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.side is not None and self.side < 1:
            raise ConfigError("side must be positive")
        if not self.encodings or any(e not in (SPARSE, PIXEL) for e in self.encodings):
            raise ConfigError(f"encodings must be a subset of {(SPARSE, PIXEL)}")
        if self.stopping not in (FIXED_POINT, CONFIDENCE):
            raise ConfigError(f"stopping must be {FIXED_POINT} or {CONFIDENCE}")
        for name in ("conf_sparse", "conf_pixel"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.dataset == "bars" and self.experiment not in ("bars_scaling", "multi_object"):
            raise ConfigError(f"{self.experiment} does not run on the bars dataset")
        if self.experiment == "bars_scaling" and self.dataset != "bars":
            raise ConfigError("bars_scaling requires the bars dataset")
        if self.dataset != "bars" and self.experiment == "multi_object" and self.side is None:
            raise ConfigError("multi_object on digits or letters needs an explicit side")
        if not 1 <= self.bars_per_shape <= 3:
            raise ConfigError("bars_per_shape must be in 1..3")


# -- config files -------------------------------------------------------------

_TUPLE_INT = {"sweep", "template_indices"}
_TUPLE_STR = {"encodings"}


def _convert(name: str, raw: str):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    if name not in types:
        raise ConfigError(f"unknown config key {name!r}")
    raw = raw.strip()
    try:
        if name in _TUPLE_INT:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if name in _TUPLE_STR:
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        t = str(types[name])
        if raw.lower() in ("", "none") and "None" in t:
            return None
        if t.startswith("bool"):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if t.startswith("int"):
            return int(raw)
        if t.startswith("float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str, overrides: dict | None = None, env=None) -> ExperimentConfig:
    """Parse a flat ``key=value`` file. ``RESONATOR_SEED`` overrides ``seed``."""
    values: dict = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {n}: expected key=value, got {line!r}")
        values[key.strip()] = _convert(key.strip(), val)
    for key, val in (overrides or {}).items():
        values[key] = _convert(key, val) if isinstance(val, str) else val
    env = os.environ if env is None else env
    if env.get("RESONATOR_SEED"):
        values["seed"] = _convert("seed", env["RESONATOR_SEED"])
    if "experiment" not in values:
        raise ConfigError("config needs an 'experiment' key")
    return ExperimentConfig(**values)


def config_to_text(cfg: ExperimentConfig) -> str:
    lines = []
    for key, val in asdict(cfg).items():
        if isinstance(val, (tuple, list)):
            val = ",".join(str(v) for v in val)
        lines.append(f"{key}={'none' if val is None else val}")
    return "\n".join(lines) + "\n"


# -- records ------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    point: str
    trial: int
    encoding: str
    correct: float
    iterations: int
    converged: bool
    confidences: tuple[float, float, float]
    wall_time: float = field(default=0.0, compare=False)

    @property
    def mean_confidence(self) -> float:
        return float(np.mean(self.confidences))


def nearest_rank(values: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile: the ceil(pct/100 * N)-th smallest value."""
    if len(values) == 0:
        raise ValueError("percentile of an empty sequence")
    ordered = sorted(values)
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[rank - 1]


@dataclass(frozen=True)
class SummaryRow:
    point: str
    encoding: str
    trials: int
    accuracy: float
    iter_mean: float
    iter_median: float
    iter_q25: float
    iter_q75: float
    converged_rate: float
    conf_correct: float
    conf_incorrect: float


def summarize(records: Sequence[TrialRecord]) -> list[SummaryRow]:
    """Per (sweep point, encoding) statistics, in first-seen order.

    Confidence means average the three per-factor confidences and are split
    into fully correct and other trials (NaN when a class is empty).
    """
    if not records:
        raise ValueError("nothing to summarize")
    groups: dict[tuple[str, str], list[TrialRecord]] = {}
    for r in records:
        groups.setdefault((r.point, r.encoding), []).append(r)
    rows = []
    for (point, enc), rs in groups.items():
        its = [r.iterations for r in rs]
        good = [r.mean_confidence for r in rs if r.correct >= 1.0]
        bad = [r.mean_confidence for r in rs if r.correct < 1.0]
        rows.append(
            SummaryRow(
                point,
                enc,
                len(rs),
                float(np.mean([r.correct for r in rs])),
                float(np.mean(its)),
                nearest_rank(its, 50),
                nearest_rank(its, 25),
                nearest_rank(its, 75),
                float(np.mean([r.converged for r in rs])),
                float(np.mean(good)) if good else float("nan"),
                float(np.mean(bad)) if bad else float("nan"),
            )
        )
    return rows


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10g}"
    return str(v)


TRIAL_COLUMNS = ("point", "trial", "encoding", "correct", "iterations", "converged",
                 "conf_h", "conf_v", "conf_o")


def records_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for r in records:
        w.writerow([_fmt(v) for v in (r.point, r.trial, r.encoding, r.correct, r.iterations,
                                      r.converged, *r.confidences)])
    return buf.getvalue()


def summary_csv(rows: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = [f.name for f in fields(SummaryRow)]
    w.writerow(names)
    for row in rows:
        w.writerow([_fmt(getattr(row, n)) for n in names])
    return buf.getvalue()


def read_records(path) -> list[TrialRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                TrialRecord(
                    row["point"], int(row["trial"]), row["encoding"], float(row["correct"]),
                    int(row["iterations"]), row["converged"] == "1",
                    (float(row["conf_h"]), float(row["conf_v"]), float(row["conf_o"])),
                )
            )
    return out


# -- resources ----------------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    label: str
    side: int
    codebook_size: int | None = None
    m: int = 1
    stopping: str = FIXED_POINT
    whiten: bool = False
    pair_key: int = 0


def sweep_points(cfg: ExperimentConfig) -> list[SweepPoint]:
    e = cfg.experiment
    if e == "bars_scaling":
        return [SweepPoint(f"K={k}", cfg.side, k, pair_key=i) for i, k in enumerate(cfg.sweep)]
    if e == "multi_object":
        return [SweepPoint(f"m={m}", cfg.side, cfg.objects, m=m, pair_key=i)
                for i, m in enumerate(cfg.sweep)]
    if e in ("mnist_scaling", "letters"):
        return [SweepPoint(f"L={s}", s, stopping=cfg.stopping, pair_key=i)
                for i, s in enumerate(cfg.sweep)]
    if e == "confidence":
        return [SweepPoint(f"L={s}/{stop}", s, stopping=stop, pair_key=i)
                for i, s in enumerate(cfg.sweep) for stop in (FIXED_POINT, CONFIDENCE)]
    if e == "whitening":
        return [SweepPoint(f"L={s}/{'whitened' if w else 'raw'}", s, stopping=cfg.stopping,
                           whiten=w, pair_key=i)
                for i, s in enumerate(cfg.sweep) for w in (False, True)]
    raise ConfigError(f"unknown experiment {e!r}")


class Resources:
    """Dataset, dictionary and per-side caches shared by all trials."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.sparse_cfg = SparseConfig(lam=cfg.lam, max_iters=cfg.sparse_iters, tol=cfg.sparse_tol)
        self._maps: dict[bytes, np.ndarray] = {}
        self._whiteners: dict = {}
        if cfg.dataset == "bars":
            self.filters = ds.bars_dictionary()
            self.rasters = None
            return
        self.rasters = self._load_rasters()
        self.filters = None
        if SPARSE in cfg.encodings:
            try:
                self.filters = check_dictionary(
                    containers.dictionary_from_bytes(containers.read_bytes(cfg.dict_path))
                )
            except FileNotFoundError:
                raise ConfigError(
                    f"dictionary {cfg.dict_path} not found; create it with 'scenefactor train-dict'"
                ) from None

    def _load_rasters(self) -> list[np.ndarray]:
        cfg = self.cfg
        try:
            if cfg.dataset == "letters":
                rasters = [img for _, img in ds.load_letter_assets(cfg.letters_dir)]
            else:
                images = ds.load_idx(cfg.mnist_images)
                idx = cfg.template_indices
                if idx is None:
                    idx = ds.first_of_each_class(ds.load_idx_labels(cfg.mnist_labels))
                rasters = [images[i] for i in idx]
        except FileNotFoundError as exc:
            raise ConfigError(str(exc)) from None
        if cfg.template_indices is not None and cfg.dataset == "letters":
            rasters = [rasters[i] for i in cfg.template_indices]
        return rasters

    def maps_for(self, image: np.ndarray) -> np.ndarray:
        key = hashlib.sha1(image.tobytes() + str(image.shape).encode()).digest()
        hit = self._maps.get(key)
        if hit is None:
            if len(self._maps) > 4096:
                self._maps.clear()
            hit = infer_maps(image, self.filters, self.sparse_cfg)
            self._maps[key] = hit
        return hit

    def whitener(self, side: int, encoding: str, frames: Sequence[np.ndarray]):
        key = (side, encoding)
        if key not in self._whiteners:
            data = frames if encoding == PIXEL else [self.maps_for(f) for f in frames]
            self._whiteners[key] = fit_whitening(
                data, self.cfg.whitening_epsilon, self.cfg.whitening_center
            )
        return self._whiteners[key]


def _rng(cfg: ExperimentConfig, point: SweepPoint, trial: int, *stream: int):
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(point.pair_key, trial, *stream))
    return np.random.default_rng(ss)


def _criterion(cfg: ExperimentConfig, point: SweepPoint, encoding: str) -> StoppingCriterion:
    thr = cfg.conf_sparse if encoding == SPARSE else cfg.conf_pixel
    return StoppingCriterion(point.stopping, cfg.epsilon, thr, cfg.max_iters)


def run_trial(res: Resources, point: SweepPoint, trial: int) -> list[TrialRecord]:
    """All encodings of one trial at one sweep point."""
    cfg = res.cfg
    side = point.side
    rng = _rng(cfg, point, trial, 0)
    n_filters = 1 if res.filters is None else res.filters.shape[0]
    ctx = make_context(cfg.dim, side, n_filters, rng)
    if res.rasters is None:
        shapes = ds.gen_bars_shapes(point.codebook_size, rng, cfg.bars_per_shape)
        rasters = [s.grid for s in shapes]
    else:
        rasters = res.rasters
    n_obj = len(rasters)
    if point.m > n_obj:
        raise ConfigError(f"m={point.m} exceeds the {n_obj} available objects")
    ks = rng.choice(n_obj, size=point.m, replace=False)
    pos = rng.integers(0, side, size=(point.m, 2))
    scene = ds.place_scene(
        [(rasters[k], x, y) for k, (x, y) in zip(ks, pos)], side, ids=[int(k) for k in ks]
    )
    frames = [ds.canonical_frame(r, side) for r in rasters]
    out = []
    for ei, enc in enumerate(cfg.encodings):
        start = time.perf_counter()
        wt = res.whitener(side, enc, frames) if point.whiten else None
        templates = [
            make_object_template(
                f, res.filters, ctx, res.sparse_cfg, enc, id=i,
                maps=res.maps_for(f) if enc == SPARSE else None, whitening=wt,
            )
            for i, f in enumerate(frames)
        ]
        books = build_codebooks(ctx, templates)
        if enc == SPARSE:
            z = encode_sparse(res.maps_for(scene.image), ctx)
        else:
            z = encode_pixel(scene.image, ctx)
        crit = _criterion(cfg, point, enc)
        init = _rng(cfg, point, trial, 1, ei)
        if point.m == 1:
            r = run(z, books, crit, init)
            correct = float((r.k_index, r.x_index, r.y_index) == scene.placements[0])
            iters, conv, conf = r.iterations, r.converged, r.final_confidences
        else:
            results = factorize_multi(z, books, point.m, crit, init, cleaned=cfg.cleaned)
            correct = graded_accuracy(results, scene.truth, cfg.tolerance, side)
            iters = sum(r.iterations for r in results)
            conv = all(r.converged for r in results)
            conf = tuple(float(np.mean(c)) for c in zip(*(r.final_confidences for r in results)))
        out.append(
            TrialRecord(point.label, trial, enc, correct, iters, conv, conf,
                        time.perf_counter() - start)
        )
    return out


_WORKER: Resources | None = None


def _init_worker(cfg):
    global _WORKER
    _WORKER = Resources(cfg)


def _worker_trial(args):
    point, trial = args
    return run_trial(_WORKER, point, trial)


def iter_trials(cfg: ExperimentConfig):
    """Yield ``(point, trial, records)`` in (point, trial) order."""
    cfg = cfg.resolved()
    jobs = [(p, t) for p in sweep_points(cfg) for t in range(cfg.trials)]
    if cfg.workers == 1:
        res = Resources(cfg)
        for p, t in jobs:
            yield p, t, run_trial(res, p, t)
        return
    with ProcessPoolExecutor(cfg.workers, initializer=_init_worker, initargs=(cfg,)) as pool:
        for (p, t), recs in zip(jobs, pool.map(_worker_trial, jobs, chunksize=4)):
            yield p, t, recs


def run_experiment(cfg: ExperimentConfig, write: bool = True, progress=None):
    """Execute every sweep point; returns ``(records, summary)``.

    With ``write`` the trial CSV goes to ``cfg.output``, the summary next to
    it as ``*.summary.csv`` and wall-clock timings as ``*.timing.csv`` (kept
    apart so the first two are byte-identical across replays).
    """
    cfg = cfg.resolved()
    records: list[TrialRecord] = []
    for p, t, recs in iter_trials(cfg):
        records.extend(recs)
        if progress is not None:
            progress(p, t, recs)
    rows = summarize(records)
    if write:
        out = Path(cfg.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(records_csv(records))
        stem = out.with_suffix("")
        Path(f"{stem}.summary.csv").write_text(summary_csv(rows))
        timing = "point,trial,encoding,wall_time\n" + "".join(
            f"{r.point},{r.trial},{r.encoding},{r.wall_time:.6f}\n" for r in records
        )
        Path(f"{stem}.timing.csv").write_text(timing)
    return records, rows


def format_summary(rows: Sequence[SummaryRow]) -> str:
    head = f"{'point':<22}{'enc':<8}{'n':>5}{'acc':>8}{'it_med':>8}{'it_q25':>8}{'it_q75':>8}" \
           f"{'conv':>7}{'conf+':>8}{'conf-':>8}"
    lines = [head]
    for r in rows:
        lines.append(
            f"{r.point:<22}{r.encoding:<8}{r.trials:>5}{r.accuracy:>8.3f}{r.iter_median:>8g}"
            f"{r.iter_q25:>8g}{r.iter_q75:>8g}{r.converged_rate:>7.2f}"
            f"{r.conf_correct:>8.3f}{r.conf_incorrect:>8.3f}"
        )
    return "\n".join(lines)
