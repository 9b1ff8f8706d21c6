"""Benchmark drivers and delimited report output.

Timing protocol: every measurement is repeated over independent sets
and reported as mean and sample standard deviation over the set means.
The matvec driver times `reps` products per set against one fixed
random source vector; the solve driver times whole BiCGSTAB runs (one
per set). Build and scheme preparation happen outside all timed
regions.

Speedups are relative to the FP64 baseline scheme at the same thread
count; the baseline is added to the run automatically when the
requested scheme list omits it.

Numeric report fields are rounded to nine significant digits when a
record is constructed, so emitting and re-reading a report reproduces
the records exactly.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .compress import build_hmatrix
from .matvec import matvec, matvec_threaded
from .precision import parse_scheme, prepare_scheme
from .problem import axis_centers, build_sphere_mesh, right_hand_side
from .solver import SolverConfig, bicgstab, true_residual

__all__ = ["BenchConfig", "BenchRecord", "CSV_COLUMNS", "scheme_labels",
           "run_matvec_bench", "run_solver_bench", "emit_report", "read_report"]

BASELINE_SCHEME = "m1-double"
FIXED_SCHEMES = ("m1-double", "m1-single", "m1-mixed",
                 "m2-double", "m2-single", "m2-mixed")

CSV_COLUMNS = ("scheme", "threads", "mean_time_s", "stddev_s",
               "payload_bytes", "iterations", "true_residual", "speedup")


def _sig9(v: float) -> float:
    """Round to nine significant digits (idempotent)."""
    return float(f"{float(v):.9g}")


@dataclass
class BenchConfig:
    spheres: int = 3
    refinement: int = 2
    spacing: float = 3.0
    radius: float = 1.0
    voltages: tuple | None = None
    aca_tol: float = 1e-8
    leaf_size: int = 32
    eta: float = 2.0
    max_rank: int | None = None
    schemes: tuple = FIXED_SCHEMES
    c_list: tuple = ()
    threads: tuple = (1,)
    reps: int = 1000
    sets: int = 10
    seed: int = 42
    tol: float = 1e-6
    max_iter: int = 1000

    def __post_init__(self):
        if self.reps < 1 or self.sets < 1:
            raise ValueError("reps and sets must be >= 1")
        if not self.threads or any(t < 1 for t in self.threads):
            raise ValueError("threads must be a non-empty list of positive ints")
        if not self.schemes and not self.c_list:
            raise ValueError("no schemes requested")


@dataclass
class BenchRecord:
    scheme: str
    threads: int
    mean_time_s: float
    stddev_s: float
    payload_bytes: int
    iterations: int | None
    true_residual: float | None
    speedup: float
    set_times: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        self.mean_time_s = _sig9(self.mean_time_s)
        self.stddev_s = _sig9(self.stddev_s)
        self.speedup = _sig9(self.speedup)
        if self.true_residual is not None:
            self.true_residual = _sig9(self.true_residual)

    def as_row(self) -> dict:
        return {name: getattr(self, name) for name in CSV_COLUMNS}


def scheme_labels(cfg: BenchConfig) -> list[str]:
    """Normalized scheme names to run, baseline first when implied."""
    requested = []
    for s in cfg.schemes:
        if s.strip().lower() == "all":
            requested.extend(FIXED_SCHEMES)
        else:
            requested.append(s)
    labels = [parse_scheme(s).label for s in requested]
    labels += [parse_scheme(f"m3:c={int(c)}").label for c in cfg.c_list]
    seen, ordered = set(), []
    for lab in labels:
        if lab not in seen:
            seen.add(lab)
            ordered.append(lab)
    if BASELINE_SCHEME not in seen:
        ordered.insert(0, BASELINE_SCHEME)
    return ordered


def build_problem(cfg: BenchConfig):
    """Mesh and master H-matrix for the configured geometry."""
    mesh = build_sphere_mesh(
        axis_centers(cfg.spheres, cfg.spacing),
        radius=cfg.radius,
        refinement=cfg.refinement,
        voltages=cfg.voltages,
    )
    h = build_hmatrix(mesh, aca_tol=cfg.aca_tol, max_rank=cfg.max_rank,
                      leaf_size=cfg.leaf_size, eta=cfg.eta)
    return mesh, h


def _mean_std(samples) -> tuple[float, float]:
    arr = np.asarray(samples, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


def _with_speedups(raw, labels, threads_list) -> list[BenchRecord]:
    """Attach baseline-relative speedups; raw maps (label, threads) -> stats."""
    records = []
    for thr in threads_list:
        base_mean = raw[(BASELINE_SCHEME, thr)]["mean"]
        for lab in labels:
            st = raw[(lab, thr)]
            records.append(BenchRecord(
                scheme=lab,
                threads=thr,
                mean_time_s=st["mean"],
                stddev_s=st["std"],
                payload_bytes=st["payload_bytes"],
                iterations=st.get("iterations"),
                true_residual=st.get("true_residual"),
                speedup=base_mean / st["mean"],
                set_times=tuple(st["times"]),
            ))
    return records


def run_matvec_bench(cfg: BenchConfig) -> list[BenchRecord]:
    """Time repeated H-matrix products for every scheme and thread count."""
    _, h = build_problem(cfg)
    labels = scheme_labels(cfg)
    rng = np.random.default_rng(cfg.seed)
    x = rng.uniform(-1.0, 1.0, h.n)

    raw = {}
    for thr in cfg.threads:
        for lab in labels:
            sh = prepare_scheme(h, lab)
            times = []
            for _ in range(cfg.sets):
                t0 = time.perf_counter()
                if thr == 1:
                    for _ in range(cfg.reps):
                        matvec(sh, x)
                else:
                    for _ in range(cfg.reps):
                        matvec_threaded(sh, x, thr)
                times.append((time.perf_counter() - t0) / cfg.reps)
            mean, std = _mean_std(times)
            raw[(lab, thr)] = {
                "mean": mean, "std": std, "times": times,
                "payload_bytes": sh.payload_bytes,
            }
    return _with_speedups(raw, labels, cfg.threads)


def run_solver_bench(cfg: BenchConfig) -> list[BenchRecord]:
    """Time full BiCGSTAB solves for every scheme and thread count.

    One solve per set (`reps` is ignored here). Iteration counts and
    the FP64-verified relative residual come from the solve; a run
    that stops without the confirmation step still gets its residual
    measured so the record is complete.
    """
    mesh, h = build_problem(cfg)
    b = right_hand_side(mesh)
    labels = scheme_labels(cfg)
    solver_cfg_base = {"tol": cfg.tol, "max_iter": cfg.max_iter}

    raw = {}
    for thr in cfg.threads:
        for lab in labels:
            sh = prepare_scheme(h, lab)
            scfg = SolverConfig(threads=thr, **solver_cfg_base)
            times = []
            x = report = None
            for _ in range(cfg.sets):
                x, report = bicgstab(sh, h, b, scfg)
                times.append(report.wall_time_s)
            mean, std = _mean_std(times)
            res = report.true_residual
            if res is None:
                res = true_residual(h, x, b)
            raw[(lab, thr)] = {
                "mean": mean, "std": std, "times": times,
                "payload_bytes": sh.payload_bytes,
                "iterations": report.iterations,
                "true_residual": res,
            }
    return _with_speedups(raw, labels, cfg.threads)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def emit_report(records, format: str = "csv", path=None) -> str:
    """Serialize records to CSV or JSON; returns the text written.

    `path=None` returns the text without touching the filesystem.
    An empty record list is an error and creates no file.
    """
    if not records:
        raise ValueError("refusing to emit an empty benchmark report")
    if format not in ("csv", "json"):
        raise ValueError(f"unknown report format {format!r}")

    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            row = rec.as_row()
            writer.writerow([_cell(row[col]) for col in CSV_COLUMNS])
        text = buf.getvalue()
    else:
        text = json.dumps([rec.as_row() for rec in records], indent=2) + "\n"

    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


_INT_COLUMNS = {"threads", "payload_bytes", "iterations"}
_FLOAT_COLUMNS = {"mean_time_s", "stddev_s", "true_residual", "speedup"}


def _coerce_row(row: dict) -> BenchRecord:
    kwargs = {}
    for col in CSV_COLUMNS:
        v = row[col]
        if v is None or v == "":
            kwargs[col] = None
        elif col in _INT_COLUMNS:
            kwargs[col] = int(v)
        elif col in _FLOAT_COLUMNS:
            kwargs[col] = float(v)
        else:
            kwargs[col] = v
    return BenchRecord(**kwargs)


def read_report(path, format: str | None = None) -> list[BenchRecord]:
    """Parse a report written by `emit_report` back into records."""
    p = str(path)
    if format is None:
        format = "json" if p.endswith(".json") else "csv"
    with open(p, encoding="utf-8") as fh:
        if format == "json":
            return [_coerce_row(row) for row in json.load(fh)]
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise ValueError(f"unexpected report header in {path}")
        return [_coerce_row(row) for row in reader]
