"""Experiment driver: configuration, the study runners, and result
persistence.

Each runner writes, under the configured output directory:

* ``results.csv``    one value row per (instance, method, metric), with a
  schema-versioned comment line on top; byte-identical across re-runs of
  the same config and seed,
* ``summary.csv``    mean/std over repeats per sweep coordinate,
* ``timings.csv``    informational per-method runtimes (never asserted),
* ``manifest.json``  config echo plus per-run notes,

and any experiment-specific artifacts (completed tensors, bound reports).
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .baselines import HalrtcParams, gtvm_inpaint, halrtc_complete, stack_acquisitions
from .bounds import evaluate_bounds
from .datagen import (
    OverlapSpec,
    SynthSpec,
    generate_acquisitions,
    partial_overlap_masks,
    sample_observation_sets,
    smooth_raster_pair,
    two_block_graph,
)
from .errors import ConfigError, DataError, InfeasibleFraction, NoMissingEntries
from .graph import ObservationSet, build_graph, knn_edges, load_edge_list, union_edges
from .metrics import MPSNR_VARIANTS, ErrorField, accuracy, mae, mpsnr, mse, rmse
from .propagation import classify_by_median, graphprop, median_threshold, solve_steady_state
from .tensor import DenseTensor, FiberMatrix, load_tensor, matricize, refold, save_tensor

log = logging.getLogger("graphprop")

SCHEMA_VERSION = "graphprop.results.v1"

EXPERIMENT_KINDS = (
    "rank-sweep",
    "missing-sweep",
    "overlap-sim",
    "blogs",
    "complete",
    "bound-report",
)

_KIND_TAGS = {kind: i for i, kind in enumerate(EXPERIMENT_KINDS, start=1)}

# Applied on top of the defaults when full_scale is set, for keys the user
# did not set explicitly.
FULL_SCALE_PRESET = {
    "i1": 200,
    "i2": 200,
    "height": 500,
    "width": 500,
    "bands": 7,
    "repeats": 10,
    "blogs_repeats": 30,
}


@dataclass(frozen=True)
class SolverSettings:
    method: str = "cg"
    tol: float = 1e-10
    max_iters: int | None = None


@dataclass(frozen=True)
class HalrtcSettings:
    rho: float = 1e-3
    rho_growth: float = 1.05
    rho_cap: float = 1e3
    max_iters: int = 300
    tol: float = 1e-5

    def to_params(self, order: int) -> HalrtcParams:
        return HalrtcParams.uniform(
            order,
            rho=self.rho,
            rho_growth=self.rho_growth,
            rho_cap=self.rho_cap,
            max_iters=self.max_iters,
            tol=self.tol,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int = 0
    k: int = 10
    repeats: int = 3
    workers: int = 1
    out_dir: str = "out"
    full_scale: bool = False
    # synthetic sweep dimensions
    i1: int = 60
    i2: int = 60
    i3: int = 3
    rank: int = 5
    rank_grid: tuple[int, ...] = (5, 20, 40, 60)
    missing_frac: float = 0.4
    missing_grid: tuple[float, ...] = (0.05, 0.15, 0.25, 0.35, 0.45)
    rank_tiles: tuple[int, ...] = (5, 30, 60)
    # overlap simulation
    height: int = 128
    width: int = 128
    bands: int = 4
    area_grid: tuple[float, ...] = (0.4,)
    # label propagation
    label_fracs: tuple[float, ...] = (0.05, 0.1, 0.2)
    blogs_repeats: int | None = None
    two_block_size: int = 0
    graph_file: str = ""
    labels_file: str = ""
    # generic completion
    inputs: tuple[str, ...] = ()
    observation_files: tuple[str, ...] = ()
    truth_files: tuple[str, ...] = ()
    emit_bound_report: bool = False
    # metric variants
    mpsnr_variant: str = "maxerr"
    solver: SolverSettings = field(default_factory=SolverSettings)
    halrtc: HalrtcSettings = field(default_factory=HalrtcSettings)


def config_from_dict(data: dict, **overrides) -> ExperimentConfig:
    """Build a validated config from a JSON-style dict; ``overrides`` are
    CLI flags and win over the dict. Unknown keys are rejected."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = dict(data)
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "kind" not in data:
        raise ConfigError("config must name the experiment kind")
    explicit = set(data)
    if data.get("full_scale"):
        for key, value in FULL_SCALE_PRESET.items():
            if key not in explicit:
                data[key] = value
    try:
        if isinstance(data.get("solver"), dict):
            data["solver"] = SolverSettings(**data["solver"])
        if isinstance(data.get("halrtc"), dict):
            data["halrtc"] = HalrtcSettings(**data["halrtc"])
        for key in ("rank_grid", "missing_grid", "rank_tiles", "area_grid",
                    "label_fracs", "inputs", "observation_files", "truth_files"):
            if key in data and not isinstance(data[key], tuple):
                data[key] = tuple(data[key])
        cfg = ExperimentConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    validate_config(cfg)
    return cfg


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data, **overrides)


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}")
    if cfg.k < 1:
        raise ConfigError("k must be at least 1")
    if cfg.repeats < 1:
        raise ConfigError("repeats must be at least 1")
    if cfg.workers < 1:
        raise ConfigError("workers must be at least 1")
    if cfg.mpsnr_variant not in MPSNR_VARIANTS:
        raise ConfigError(f"mpsnr_variant must be one of {MPSNR_VARIANTS}")
    if cfg.solver.method not in ("cg", "splu", "cholesky"):
        raise ConfigError(f"unknown solver method {cfg.solver.method!r}")
    if cfg.kind in ("rank-sweep", "missing-sweep", "bound-report"):
        if min(cfg.i1, cfg.i2, cfg.i3) < 1:
            raise ConfigError("tensor extents must be positive")
        try:
            _check_missing_fraction(cfg.i1 * cfg.i2, cfg.missing_frac)
        except InfeasibleFraction as exc:
            raise ConfigError(str(exc)) from exc
    if cfg.kind == "rank-sweep":
        if not cfg.rank_grid:
            raise ConfigError("rank grid must be nonempty")
        if any(not 1 <= r <= min(cfg.i1, cfg.i2) for r in cfg.rank_grid):
            raise ConfigError(f"ranks must lie in 1..{min(cfg.i1, cfg.i2)}")
    if cfg.kind == "bound-report":
        if not 1 <= cfg.rank <= min(cfg.i1, cfg.i2):
            raise ConfigError(f"rank must lie in 1..{min(cfg.i1, cfg.i2)}")
    if cfg.kind == "missing-sweep":
        if not cfg.missing_grid or not cfg.rank_tiles:
            raise ConfigError("missing grid and rank tiles must be nonempty")
        for frac in cfg.missing_grid:
            if not 0.05 <= frac <= 0.45:
                raise ConfigError(f"missing fractions must lie in [0.05, 0.45], got {frac}")
            try:
                _check_missing_fraction(cfg.i1 * cfg.i2, frac)
            except InfeasibleFraction as exc:
                raise ConfigError(str(exc)) from exc
        if any(not 1 <= r <= min(cfg.i1, cfg.i2) for r in cfg.rank_tiles):
            raise ConfigError(f"rank tiles must lie in 1..{min(cfg.i1, cfg.i2)}")
    if cfg.kind == "overlap-sim":
        if not cfg.area_grid:
            raise ConfigError("area grid must be nonempty")
        if any(not 0.0 <= a <= 0.7 for a in cfg.area_grid):
            raise ConfigError("area fractions must lie in [0, 0.7]")
        if cfg.inputs and len(cfg.inputs) != 2:
            raise ConfigError("overlap-sim needs exactly two input rasters")
    if cfg.kind == "blogs":
        if not cfg.label_fracs:
            raise ConfigError("label fraction grid must be nonempty")
        if any(not 0.0 < f <= 1.0 for f in cfg.label_fracs):
            raise ConfigError("label fractions must lie in (0, 1]")
        if cfg.two_block_size == 0 and not (cfg.graph_file and cfg.labels_file):
            raise ConfigError("blogs needs graph_file and labels_file, or two_block_size")
    if cfg.kind == "complete":
        if not cfg.inputs:
            raise ConfigError("complete needs at least one input tensor")
        if len(cfg.observation_files) != len(cfg.inputs):
            raise ConfigError("need one observation file per input tensor")
        if cfg.emit_bound_report and len(cfg.truth_files) != len(cfg.inputs):
            raise ConfigError("bound reports need one truth tensor per input")


def _check_missing_fraction(n: int, frac: float) -> None:
    """Feasibility of the two-acquisition disjoint missing-set protocol."""
    if frac > 0 and frac >= 0.5:
        raise InfeasibleFraction(f"missing fraction {frac} must stay below 0.5")
    if 2 * math.floor(frac * n) > n:
        raise InfeasibleFraction(f"two disjoint missing sets of fraction {frac} do not fit")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    seed: int
    r: int | None
    missing_frac: float | None
    area_frac: float | None
    label_frac: float | None
    repeat: int
    method: str
    metric: str
    variant: str
    value: float
    runtime: float


RESULT_COLUMNS = (
    "experiment", "seed", "r", "missing_frac", "area_frac", "label_frac",
    "repeat", "method", "metric", "variant", "value",
)
TIMING_COLUMNS = (
    "experiment", "seed", "r", "missing_frac", "area_frac", "label_frac",
    "repeat", "method", "runtime_seconds",
)
SUMMARY_COLUMNS = (
    "experiment", "r", "missing_frac", "area_frac", "label_frac",
    "method", "metric", "variant", "mean", "std", "count",
)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _sort_key(row: ResultRow):
    return (
        row.experiment,
        row.seed,
        -1 if row.r is None else row.r,
        -1.0 if row.missing_frac is None else row.missing_frac,
        -1.0 if row.area_frac is None else row.area_frac,
        -1.0 if row.label_frac is None else row.label_frac,
        row.repeat,
        row.method,
        row.metric,
        row.variant,
    )


def summarize_rows(rows) -> list[dict]:
    """Mean and population standard deviation over repeats, per sweep
    coordinate, method, and metric."""
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        key = (row.experiment, row.r, row.missing_frac, row.area_frac,
               row.label_frac, row.method, row.metric, row.variant)
        groups.setdefault(key, []).append(row.value)
    out = []
    for key in sorted(groups, key=lambda k: tuple(-1 if v is None else v for v in k)):
        values = np.asarray(groups[key])
        out.append({
            "experiment": key[0], "r": key[1], "missing_frac": key[2],
            "area_frac": key[3], "label_frac": key[4], "method": key[5],
            "metric": key[6], "variant": key[7],
            "mean": float(values.mean()), "std": float(values.std()),
            "count": int(values.size),
        })
    return out


def _write_csv(path: Path, columns, dict_rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema={SCHEMA_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in dict_rows:
            writer.writerow([_cell(row[c]) for c in columns])


def write_outputs(cfg: ExperimentConfig, rows, notes: dict | None = None,
                  artifacts: list[str] | None = None) -> Path:
    """Persist rows, summary, timings, and the manifest; returns the
    output directory."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = sorted(rows, key=_sort_key)
    _write_csv(out_dir / "results.csv", RESULT_COLUMNS,
               [{**asdict(r)} for r in rows])
    _write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, summarize_rows(rows))
    timing_rows = []
    seen = set()
    for r in rows:
        key = (r.experiment, r.seed, r.r, r.missing_frac, r.area_frac,
               r.label_frac, r.repeat, r.method)
        if key in seen:
            continue
        seen.add(key)
        timing_rows.append(dict(zip(TIMING_COLUMNS, key + (r.runtime,))))
    _write_csv(out_dir / "timings.csv", TIMING_COLUMNS, timing_rows)
    manifest = {
        "schema": SCHEMA_VERSION,
        "kind": cfg.kind,
        "config": asdict(cfg),
        "n_rows": len(rows),
        "artifacts": sorted(artifacts or []),
        "notes": notes or {},
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return out_dir


def _derived_seed(*components) -> int:
    ss = np.random.SeedSequence([int(c) for c in components])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _observed_fiber_mask(omega: ObservationSet, i1: int, i2: int, i3: int) -> np.ndarray:
    flat = np.zeros(omega.n, dtype=bool)
    flat[omega.observed] = True
    # node p = i1_index + I1 * i2_index, first index fastest
    return np.broadcast_to(flat.reshape((i1, i2), order="F")[:, :, None], (i1, i2, i3))


def _completion_rmse(truth_fibers, est_fibers, omegas) -> float:
    ef = ErrorField.from_completions(truth_fibers, est_fibers, omegas)
    return rmse(ef)


def _synth_point(cfg: ExperimentConfig, experiment: str, r: int, frac: float,
                 rep: int) -> list[ResultRow]:
    """One synthetic instance: generate, complete with the propagation
    pipeline and the low-rank baseline, report RMSE."""
    tag = _KIND_TAGS[experiment]
    seed_gen = _derived_seed(cfg.seed, tag, r, round(frac * 1e6), rep, 0)
    seed_obs = _derived_seed(cfg.seed, tag, r, round(frac * 1e6), rep, 1)
    spec = SynthSpec(cfg.i1, cfg.i2, cfg.i3, r=r, lambda_count=2,
                     missing_frac=frac, seed=seed_gen)
    tensors = generate_acquisitions(spec)
    omegas = sample_observation_sets(spec.n, frac, 2, seed=seed_obs)
    fibers = [matricize(t, 3).values for t in tensors]

    coords = dict(
        experiment=experiment, seed=cfg.seed, r=r,
        missing_frac=frac if experiment == "missing-sweep" else None,
        area_frac=None, label_frac=None, repeat=rep,
    )
    rows = []

    start = time.perf_counter()
    results = graphprop(
        [(f[om.observed], om) for f, om in zip(fibers, omegas)],
        cfg.k, method=cfg.solver.method, tol=cfg.solver.tol,
        max_iters=cfg.solver.max_iters,
    )
    gp_time = time.perf_counter() - start
    gp_rmse = _completion_rmse(fibers, [res.completed.values for res in results], omegas)
    rows.append(ResultRow(**coords, method="graphprop", metric="rmse",
                          variant="sqrt-mean", value=gp_rmse, runtime=gp_time))

    stacked = stack_acquisitions(tensors)
    mask = np.stack(
        [_observed_fiber_mask(om, cfg.i1, cfg.i2, cfg.i3) for om in omegas], axis=-1
    )
    start = time.perf_counter()
    completed = halrtc_complete(stacked, mask, cfg.halrtc.to_params(stacked.order))
    ha_time = time.perf_counter() - start
    est_fibers = [
        matricize(DenseTensor(tensors[0].shape,
                              np.ascontiguousarray(completed.values[..., lam])), 3).values
        for lam in range(2)
    ]
    ha_rmse = _completion_rmse(fibers, est_fibers, omegas)
    rows.append(ResultRow(**coords, method="halrtc", metric="rmse",
                          variant="sqrt-mean", value=ha_rmse, runtime=ha_time))
    return rows


def _rank_point(args):
    cfg, r, rep = args
    return _synth_point(cfg, "rank-sweep", r, cfg.missing_frac, rep)


def _missing_point(args):
    cfg, r, frac, rep = args
    return _synth_point(cfg, "missing-sweep", r, frac, rep)


def _run_points(cfg: ExperimentConfig, worker, points) -> list[ResultRow]:
    if cfg.workers <= 1:
        batches = [worker(p) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            batches = list(pool.map(worker, points))
    return [row for batch in batches for row in batch]


def run_rank_sweep(cfg: ExperimentConfig, *, write: bool = True) -> list[ResultRow]:
    """Completion quality as a function of the rank parameter, at a fixed
    missing fraction, for the propagation pipeline and the low-rank
    baseline."""
    points = [(cfg, r, rep) for r in cfg.rank_grid for rep in range(cfg.repeats)]
    rows = _run_points(cfg, _rank_point, points)
    if write:
        write_outputs(cfg, rows)
    return rows


def run_missing_sweep(cfg: ExperimentConfig, *, write: bool = True) -> list[ResultRow]:
    """Completion quality as a function of the per-acquisition missing
    fraction, one tile per configured rank."""
    points = [
        (cfg, r, frac, rep)
        for r in cfg.rank_tiles
        for frac in cfg.missing_grid
        for rep in range(cfg.repeats)
    ]
    rows = _run_points(cfg, _missing_point, points)
    if write:
        write_outputs(cfg, rows)
    return rows


def _metric_rows(coords: dict, method: str, ef: ErrorField, runtime: float,
                 mpsnr_variant: str, peak: float) -> list[ResultRow]:
    values = [
        ("mse", "", mse(ef)),
        ("rmse", "sqrt-mean", rmse(ef)),
        ("mae", "", mae(ef)),
        ("mpsnr", mpsnr_variant,
         mpsnr(ef, mpsnr_variant, peak if mpsnr_variant == "standard" else None)),
    ]
    return [
        ResultRow(**coords, method=method, metric=name, variant=variant,
                  value=value, runtime=runtime)
        for name, variant, value in values
    ]


def run_overlap_sim(cfg: ExperimentConfig, rasters=None, *, write: bool = True):
    """Partial-overlap simulation on a co-registered raster pair.

    ``rasters`` may be two DenseTensor acquisitions; otherwise they are
    loaded from ``cfg.inputs`` or synthesised (smooth raster pair). Graph
    methods share one kNN graph per area fraction; metrics cover pixels
    observed at least once, and never-observed corners are flagged.
    """
    if rasters is None:
        if cfg.inputs:
            rasters = tuple(load_tensor(p) for p in cfg.inputs)
        else:
            rasters = smooth_raster_pair(
                cfg.height, cfg.width, cfg.bands,
                seed=_derived_seed(cfg.seed, _KIND_TAGS["overlap-sim"]),
            )
    rasters = tuple(rasters)
    if len(rasters) != 2:
        raise DataError("overlap simulation needs exactly two rasters")
    if rasters[0].shape != rasters[1].shape or rasters[0].order != 3:
        raise DataError(
            f"rasters must be two equal-shape (height, width, bands) tensors, "
            f"got {rasters[0].shape} and {rasters[1].shape}"
        )
    h, w, bands = rasters[0].shape
    n = h * w
    truth_fibers = [matricize(t, 3).values for t in rasters]
    peak = float(max(np.abs(t.values).max() for t in rasters))
    out_dir = Path(cfg.out_dir)
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)

    rows: list[ResultRow] = []
    notes: dict = {}
    artifacts: list[str] = []
    for area in cfg.area_grid:
        spec = OverlapSpec(h, w, area)
        mask1, mask2 = partial_overlap_masks(spec)
        area_key = f"area={area}"
        notes[area_key] = {
            "crop_count": spec.crop_count,
            "achieved_frac": spec.achieved_frac,
        }
        omegas = [
            ObservationSet(n, np.nonzero(m.ravel(order="F"))[0])
            for m in (mask1, mask2)
        ]
        never = np.nonzero(~(mask1 | mask2).ravel(order="F"))[0]
        notes[area_key]["never_observed"] = int(never.size)
        coords = dict(experiment="overlap-sim", seed=cfg.seed, r=None,
                      missing_frac=None, area_frac=area, label_frac=None, repeat=0)

        estimates: dict[str, list[np.ndarray]] = {}
        timings: dict[str, float] = {}

        start = time.perf_counter()
        edge_sets = [
            knn_edges(FiberMatrix(np.where(m.ravel(order="F")[:, None], f, 0.0)), om, cfg.k)
            for f, om, m in zip(truth_fibers, omegas, (mask1, mask2))
        ]
        graph = build_graph(union_edges(edge_sets))
        graph_time = time.perf_counter() - start

        start = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            gp = [
                solve_steady_state(graph, om, f[om.observed],
                                   method=cfg.solver.method, tol=cfg.solver.tol,
                                   max_iters=cfg.solver.max_iters,
                                   on_unreachable="exclude")
                for f, om in zip(truth_fibers, omegas)
            ]
        estimates["graphprop"] = [r.completed.values for r in gp]
        timings["graphprop"] = graph_time + time.perf_counter() - start

        start = time.perf_counter()
        gtvm = [
            gtvm_inpaint(graph, om, f[om.observed])
            for f, om in zip(truth_fibers, omegas)
        ]
        estimates["gtvm"] = [g.values for g in gtvm]
        timings["gtvm"] = graph_time + time.perf_counter() - start

        start = time.perf_counter()
        stacked = stack_acquisitions(rasters)
        pixel_masks = np.stack(
            [np.broadcast_to(m[:, :, None], (h, w, bands)) for m in (mask1, mask2)],
            axis=-1,
        )
        completed = halrtc_complete(stacked, pixel_masks, cfg.halrtc.to_params(4))
        timings["halrtc"] = time.perf_counter() - start
        estimates["halrtc"] = [
            matricize(DenseTensor((h, w, bands),
                                  np.ascontiguousarray(completed.values[..., lam])), 3).values
            for lam in range(2)
        ]

        for method in ("graphprop", "halrtc", "gtvm"):
            try:
                ef = ErrorField.from_completions(
                    truth_fibers, estimates[method], omegas, never_observed=never
                )
                rows.extend(_metric_rows(coords, method, ef, timings[method],
                                         cfg.mpsnr_variant, peak))
            except NoMissingEntries:
                notes[area_key][method] = "NoMissingEntries"
                log.warning("area %s: no missing entries, metrics skipped", area)
            if write:
                pct = int(round(area * 100))
                for lam in range(2):
                    name = f"completed_{method}_acq{lam + 1}_area{pct:02d}.tenb"
                    est = refold(FiberMatrix(estimates[method][lam]), (h, w, bands), 3)
                    save_tensor(est, out_dir / name)
                    artifacts.append(name)
        if write:
            pct = int(round(area * 100))
            flag_name = f"never_observed_area{pct:02d}.tenb"
            flag = DenseTensor.from_array(
                (~(mask1 | mask2)).astype(np.float64)[:, :, None]
            )
            save_tensor(flag, out_dir / flag_name)
            artifacts.append(flag_name)
    if write:
        write_outputs(cfg, rows, notes=notes, artifacts=artifacts)
    return rows


def load_labels(path, n: int) -> np.ndarray:
    """Label file: one 0/1 integer per line, line i labelling node i;
    blank lines and '#' comments are skipped."""
    values = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            values.append(int(text))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: labels must be integers") from exc
    labels = np.asarray(values, dtype=np.int64)
    if labels.size != n:
        raise DataError(f"{path}: expected {n} labels, found {labels.size}")
    if not np.isin(labels, (0, 1)).all():
        raise DataError(f"{path}: labels must be 0 or 1")
    return labels


def run_blogs(cfg: ExperimentConfig, *, write: bool = True) -> list[ResultRow]:
    """Label propagation versus total-variation inpainting on a provided
    graph (or the synthetic two-block stand-in), classified by the median
    rule, scored by accuracy over the unlabelled nodes."""
    if cfg.two_block_size > 0:
        edges, labels = two_block_graph(
            cfg.two_block_size, seed=_derived_seed(cfg.seed, _KIND_TAGS["blogs"], 0)
        )
    else:
        edges = load_edge_list(cfg.graph_file)
        labels = load_labels(cfg.labels_file, edges.n)
    graph = build_graph(edges)
    n = graph.n
    repeats = cfg.blogs_repeats if cfg.blogs_repeats is not None else cfg.repeats

    rows = []
    for frac in cfg.label_fracs:
        for rep in range(repeats):
            rng = np.random.default_rng(
                _derived_seed(cfg.seed, _KIND_TAGS["blogs"], 1, round(frac * 1e6), rep)
            )
            n_labelled = int(np.clip(round(frac * n), 1, n - 1))
            observed = np.sort(rng.choice(n, size=n_labelled, replace=False))
            om = ObservationSet(n, observed)
            f_obs = labels[observed].astype(np.float64)[:, None]
            coords = dict(experiment="blogs", seed=cfg.seed, r=None,
                          missing_frac=None, area_frac=None, label_frac=frac,
                          repeat=rep)

            start = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = solve_steady_state(
                    graph, om, f_obs, method=cfg.solver.method, tol=cfg.solver.tol,
                    max_iters=cfg.solver.max_iters, on_unreachable="exclude"
                )
            pred = classify_by_median(res, 0)
            gp_time = time.perf_counter() - start
            rows.append(ResultRow(**coords, method="graphprop", metric="accuracy",
                                  variant="", value=accuracy(pred, labels, om.missing),
                                  runtime=gp_time))

            start = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est = gtvm_inpaint(graph, om, f_obs)
            pred = labels.copy()
            median_threshold(est.values[:, 0], om.missing, om.missing, pred)
            gtvm_time = time.perf_counter() - start
            rows.append(ResultRow(**coords, method="gtvm", metric="accuracy",
                                  variant="", value=accuracy(pred, labels, om.missing),
                                  runtime=gtvm_time))
    if write:
        write_outputs(cfg, rows)
    return rows


def load_observation_set(path, n: int) -> ObservationSet:
    """Observation-set JSON: {"n": N, "observed": [...]} with 1-based ids."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or set(data) != {"n", "observed"}:
        raise DataError(f"{path}: expected exactly the keys 'n' and 'observed'")
    if data["n"] != n:
        raise DataError(f"{path}: observation set is over {data['n']} nodes, tensor has {n}")
    ids = data["observed"]
    if not all(isinstance(i, int) and 1 <= i <= n for i in ids):
        raise DataError(f"{path}: observed ids must be integers in 1..{n}")
    try:
        return ObservationSet(n, np.asarray(ids, dtype=np.int64) - 1)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def save_observation_set(omega: ObservationSet, path) -> None:
    payload = {"n": omega.n, "observed": (omega.observed + 1).tolist()}
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def _shared_graph(full_fibers, omegas, k):
    edge_sets = []
    for f, om in zip(full_fibers, omegas):
        features = np.zeros_like(f)
        features[om.observed] = f[om.observed]
        edge_sets.append(knn_edges(FiberMatrix(features), om, k))
    return build_graph(union_edges(edge_sets))


def run_complete(cfg: ExperimentConfig, *, write: bool = True):
    """Generic completion of user-supplied acquisitions; a thin shell over
    the library pipeline."""
    tensors = [load_tensor(p) for p in cfg.inputs]
    shape = tensors[0].shape
    for t, p in zip(tensors, cfg.inputs):
        if t.shape != shape:
            raise DataError(f"{p}: shape {t.shape} does not match {shape}")
    order = len(shape)
    n = int(np.prod(shape[:-1]))
    omegas = [load_observation_set(p, n) for p in cfg.observation_files]
    fibers = [matricize(t, order) for t in tensors]

    covered = np.zeros(n, dtype=bool)
    for om in omegas:
        covered[om.observed] = True
    uncovered = np.nonzero(~covered)[0]
    if uncovered.size:
        log.warning("%d node(s) observed in no acquisition; they are flagged "
                    "in the manifest and mean-filled", uncovered.size)

    results = graphprop(
        [(f.values[om.observed], om) for f, om in zip(fibers, omegas)],
        cfg.k, method=cfg.solver.method, tol=cfg.solver.tol,
        max_iters=cfg.solver.max_iters,
    )

    out_dir = Path(cfg.out_dir)
    notes = {
        "never_observed": uncovered.tolist(),
        "excluded_per_acquisition": [r.excluded_ids.tolist() for r in results],
    }
    artifacts = []
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, res in enumerate(results, start=1):
            name = f"completed_acq{i}.tenb"
            save_tensor(refold(res.completed, shape, order), out_dir / name)
            artifacts.append(name)
    reports = None
    if cfg.emit_bound_report:
        truths = [load_tensor(p) for p in cfg.truth_files]
        for t, p in zip(truths, cfg.truth_files):
            if t.shape != shape:
                raise DataError(f"{p}: truth shape {t.shape} does not match {shape}")
        graph = _shared_graph([f.values for f in fibers], omegas, cfg.k)
        reports = [
            evaluate_bounds(graph, om, matricize(t, order), res.completed)
            for om, t, res in zip(omegas, truths, results)
        ]
        if write:
            (out_dir / "bound_report.json").write_text(
                json.dumps([rep.to_dict() for rep in reports], indent=2, sort_keys=True)
                + "\n", encoding="utf-8")
            artifacts.append("bound_report.json")
    if write:
        write_outputs(cfg, [], notes=notes, artifacts=artifacts)
    return results, reports


def run_bound_report(cfg: ExperimentConfig, *, write: bool = True):
    """Bound quantities and measured errors on one synthetic instance;
    raises if a computed bound is violated (it never should be on
    noiseless observations)."""
    seed_gen = _derived_seed(cfg.seed, _KIND_TAGS["bound-report"], 0)
    seed_obs = _derived_seed(cfg.seed, _KIND_TAGS["bound-report"], 1)
    spec = SynthSpec(cfg.i1, cfg.i2, cfg.i3, r=cfg.rank, lambda_count=2,
                     missing_frac=cfg.missing_frac, seed=seed_gen)
    tensors = generate_acquisitions(spec)
    omegas = sample_observation_sets(spec.n, cfg.missing_frac, 2, seed=seed_obs)
    fibers = [matricize(t, 3) for t in tensors]
    results = graphprop(
        [(f.values[om.observed], om) for f, om in zip(fibers, omegas)],
        cfg.k, method=cfg.solver.method, tol=cfg.solver.tol,
        max_iters=cfg.solver.max_iters,
    )
    graph = _shared_graph([f.values for f in fibers], omegas, cfg.k)
    reports = []
    for om, f, res in zip(omegas, fibers, results):
        report = evaluate_bounds(graph, om, f, res.completed)
        if report.applicable and report.measured_error > report.bound + 1e-9:
            raise RuntimeError(
                f"bound violated: measured {report.measured_error} > bound {report.bound}"
            )
        reports.append(report)
    if write:
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "bound_report.json").write_text(
            json.dumps([rep.to_dict() for rep in reports], indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
        write_outputs(cfg, [], artifacts=["bound_report.json"])
    return reports


_RASTER_DTYPES = {"f64": "<f8", "f32": "<f4", "u8": "u1", "u16": "<u2"}


def convert_raster(input_path, sidecar_path, output_path) -> DenseTensor:
    """Convert a band-interleaved-by-pixel flat binary raster (values
    ordered band, then column, then row) with a JSON sidecar carrying
    height/width/bands/dtype into the tensor container format."""
    try:
        meta = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{sidecar_path}: not valid JSON: {exc}") from exc
    required = {"height", "width", "bands", "dtype"}
    if not isinstance(meta, dict) or not required.issubset(meta):
        raise DataError(f"{sidecar_path}: needs keys {sorted(required)}")
    h, w, bands = int(meta["height"]), int(meta["width"]), int(meta["bands"])
    if min(h, w, bands) < 1:
        raise DataError(f"{sidecar_path}: extents must be positive")
    if meta["dtype"] not in _RASTER_DTYPES:
        raise DataError(
            f"{sidecar_path}: dtype must be one of {sorted(_RASTER_DTYPES)}"
        )
    raw = np.fromfile(input_path, dtype=_RASTER_DTYPES[meta["dtype"]])
    if raw.size != h * w * bands:
        raise DataError(
            f"{input_path}: holds {raw.size} values, sidecar implies {h * w * bands}"
        )
    tensor = DenseTensor.from_array(raw.reshape(h, w, bands).astype(np.float64))
    save_tensor(tensor, output_path)
    return tensor
