"""Experiment configuration, sweeps, CSV output and convergence summaries.

Typical use::

    eddyieti --deg 1,2 --divs 2,4,8 --steps 64 --out runs.csv

Flags may also come from a ``key = value`` file given with ``--sweep``;
flags on the command line win over file values.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import InputError
from .timestep import discretize, march, observed_order

log = logging.getLogger(__name__)

CSV_FIELDS = ("deg", "divs", "steps", "errBa", "errEa", "iter", "pri")
MODES = ("ieti", "monolithic")
TREE_ORDERS = ("lex", "reverse")
MAX_DEGREE = 3


class UsageError(InputError):
    """Bad command line or configuration file."""


@dataclass(frozen=True)
class ExperimentConfig:
    deg: int = 1
    divs: int = 2
    steps: int = 64
    patches: tuple = (2, 1, 1)
    tol: float = 1e-6
    max_iter: int = 500
    mode: str = "ieti"
    tree_order: str = "lex"
    out: str | None = None
    check: bool = False

    def __post_init__(self):
        if not 1 <= self.deg <= MAX_DEGREE:
            raise UsageError(f"deg must be in 1..{MAX_DEGREE}, got {self.deg}")
        if self.divs < 1 or self.steps < 1 or self.max_iter < 1:
            raise UsageError("divs, steps and max-iter must be positive")
        if len(self.patches) != 3 or min(self.patches) < 1:
            raise UsageError(f"bad patch layout {self.patches}")
        for n in self.patches:
            if self.divs % n:
                raise UsageError(f"divs={self.divs} is not divisible by the patch count {n}")
        if not self.tol > 0:
            raise UsageError("tol must be positive")
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}")
        if self.tree_order not in TREE_ORDERS:
            raise UsageError(f"tree-order must be one of {TREE_ORDERS}")


@dataclass(frozen=True)
class ExperimentRecord:
    deg: int
    divs: int
    steps: int
    errBa: float
    errEa: float
    iter: float
    pri: int

    @property
    def failed(self) -> bool:
        return self.pri < 0

    @classmethod
    def sentinel(cls, cfg: ExperimentConfig) -> "ExperimentRecord":
        nan = float("nan")
        return cls(cfg.deg, cfg.divs, cfg.steps, nan, nan, nan, -1)


# --- parsing -----------------------------------------------------------------

_LIST_KEYS = ("deg", "divs", "steps")


def _parse_patches(text: str) -> tuple:
    try:
        parts = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"patches must look like PxQxR, got {text!r}") from None
    if len(parts) != 3:
        raise UsageError(f"patches must look like PxQxR, got {text!r}")
    return parts


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise UsageError(f"expected integers, got {text!r}") from None


_CONVERTERS = {
    "deg": _int_list,
    "divs": _int_list,
    "steps": _int_list,
    "patches": _parse_patches,
    "tol": float,
    "max_iter": int,
    "mode": str,
    "tree_order": str,
    "out": str,
    "workers": int,
    "check": lambda v: str(v).strip().lower() in ("1", "true", "yes", "on"),
}


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; dashes in keys are allowed."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[key](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="eddyieti",
        description="Gauged dual-primal eddy current solver on the manufactured unit-cube case.",
        exit_on_error=False,
    )
    p.add_argument("--deg", help="spline degree(s), comma separated")
    p.add_argument("--divs", help="global divisions per direction, comma separated")
    p.add_argument("--steps", help="number of time steps, comma separated")
    p.add_argument("--patches", help="patch layout PxQxR (default 2x1x1)")
    p.add_argument("--tol", type=float, help="PCG tolerance (default 1e-6)")
    p.add_argument("--max-iter", dest="max_iter", type=int, help="PCG iteration cap")
    p.add_argument("--mode", help="ieti or monolithic")
    p.add_argument("--tree-order", dest="tree_order", help="lex or reverse")
    p.add_argument("--out", help="CSV output path (default: standard output)")
    p.add_argument("--sweep", help="key = value configuration file")
    p.add_argument("--workers", type=int, help="parallel runs (default 1)")
    p.add_argument("--check", action="store_true", default=None, help="assert per-step invariants")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _merged_options(argv, config_file=None) -> dict:
    parser = build_parser()
    try:
        ns, extra = parser.parse_known_args(list(argv))
    except argparse.ArgumentError as exc:
        raise UsageError(str(exc)) from None
    if extra:
        raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
    opts = {}
    path = config_file or ns.sweep
    if path:
        opts.update(read_config_file(path))
    for key, value in vars(ns).items():
        if key in ("sweep", "verbose") or value is None:
            continue
        opts[key] = _CONVERTERS[key](value) if isinstance(value, str) else value
    opts["verbose"] = ns.verbose
    return opts


def _config_kwargs(opts: dict) -> dict:
    names = {f.name for f in fields(ExperimentConfig)} - set(_LIST_KEYS)
    return {k: v for k, v in opts.items() if k in names}


def parse_sweep(argv, config_file=None) -> tuple[list, dict]:
    """Cross product of the degree, division and step lists.

    Returns ``(configs, extras)`` where ``extras`` carries ``workers`` and
    ``verbose``.  Configs are in lexicographic ``(deg, divs, steps)`` order.
    """
    opts = _merged_options(argv, config_file)
    lists = {}
    for key in _LIST_KEYS:
        vals = opts.get(key, (getattr(ExperimentConfig, key),))
        if isinstance(vals, int):
            vals = (vals,)
        if not vals:
            raise UsageError(f"empty list for {key}")
        lists[key] = tuple(sorted(set(vals)))
    base = _config_kwargs(opts)
    configs = [
        ExperimentConfig(deg=d, divs=n, steps=s, **base)
        for d, n, s in itertools.product(lists["deg"], lists["divs"], lists["steps"])
    ]
    workers = opts.get("workers", 1)
    if workers < 1:
        raise UsageError("workers must be positive")
    return configs, {"workers": workers, "verbose": opts["verbose"]}


def parse_config(argv, config_file=None) -> ExperimentConfig:
    """Single validated configuration; lists of values are rejected."""
    configs, _ = parse_sweep(argv, config_file)
    if len(configs) != 1:
        raise UsageError("expected a single configuration, got a sweep")
    return configs[0]


# --- running -----------------------------------------------------------------


def run_one(cfg: ExperimentConfig) -> ExperimentRecord:
    disc = discretize(cfg.deg, cfg.divs, cfg.patches, tree_order=cfg.tree_order)
    rep = march(disc, cfg.steps, tol=cfg.tol, max_iter=cfg.max_iter, mode=cfg.mode, check=cfg.check)
    return ExperimentRecord(cfg.deg, cfg.divs, cfg.steps, rep.errBa, rep.errEa, rep.iter, rep.pri)


def _run_guarded(cfg: ExperimentConfig) -> tuple:
    try:
        rec = run_one(cfg)
        return rec, None
    except Exception as exc:  # recorded as a sentinel row
        return ExperimentRecord.sentinel(cfg), f"{type(exc).__name__}: {exc}"


def run_sweep(configs, workers: int = 1) -> tuple[list, bool]:
    """Run every configuration; rows follow the input order.

    Failed runs yield sentinel rows (NaN errors, ``pri = -1``).  Returns
    ``(records, all_ok)``.
    """
    configs = list(configs)
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_guarded, configs))
    else:
        results = []
        for cfg in configs:
            results.append(_run_guarded(cfg))
            log.info("finished deg=%d divs=%d steps=%d", cfg.deg, cfg.divs, cfg.steps)
    ok = True
    for cfg, (_, err) in zip(configs, results):
        if err is not None:
            ok = False
            log.error("run deg=%d divs=%d steps=%d failed: %s", cfg.deg, cfg.divs, cfg.steps, err)
    return [r for r, _ in results], ok


# --- CSV -----------------------------------------------------------------------


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(int(value))


def format_csv(records) -> str:
    lines = [",".join(CSV_FIELDS)]
    for r in records:
        lines.append(",".join(_fmt(getattr(r, k)) for k in CSV_FIELDS))
    return "\n".join(lines) + "\n"


def write_csv(records, path) -> None:
    text = format_csv(records)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from None


def read_csv(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise InputError(f"unexpected header {reader.fieldnames}")
        return [
            ExperimentRecord(
                int(row["deg"]),
                int(row["divs"]),
                int(row["steps"]),
                float(row["errBa"]),
                float(row["errEa"]),
                float(row["iter"]),
                int(row["pri"]),
            )
            for row in reader
        ]


# --- summary -------------------------------------------------------------------


def loglog_slope(values, params) -> float:
    """Plain least-squares slope of ``log(values)`` against ``log(params)``."""
    v = np.asarray(values, dtype=float)
    x = np.asarray(params, dtype=float)
    if len(v) < 2 or np.any(v <= 0) or np.any(x <= 0):
        raise InputError("need two or more positive samples")
    return float(np.polyfit(np.log(x), np.log(v), 1)[0])


def pooled_slope(groups) -> float:
    """Common log-log slope of several series with separate intercepts.

    ``groups`` is an iterable of ``(values, params)`` pairs.
    """
    num = den = 0.0
    used = 0
    for values, params in groups:
        v = np.log(np.asarray(values, dtype=float))
        x = np.log(np.asarray(params, dtype=float))
        if len(v) < 2:
            continue
        xc = x - x.mean()
        num += float(xc @ (v - v.mean()))
        den += float(xc @ xc)
        used += 1
    if used == 0 or den == 0:
        raise InputError("no series with two or more distinct parameters")
    return num / den


@dataclass
class Summary:
    rows: list = field(default_factory=list)  # (deg, quantity, axis, value)
    notes: list = field(default_factory=list)

    def value(self, deg, quantity, axis):
        for d, q, a, v in self.rows:
            if d == deg and q == quantity and a == axis:
                return v
        raise KeyError((deg, quantity, axis))

    def text(self) -> str:
        out = [f"{'deg':>5} {'quantity':<14} {'axis':<6} {'value':>10}"]
        for d, q, a, v in self.rows:
            out.append(f"{str(d):>5} {q:<14} {a:<6} {v:>10.4f}")
        out += [f"note: {n}" for n in self.notes]
        return "\n".join(out) + "\n"

    def tsv(self) -> str:
        lines = ["deg\tquantity\taxis\tvalue"]
        lines += [f"{d}\t{q}\t{a}\t{v!r}" for d, q, a, v in self.rows]
        return "\n".join(lines) + "\n"


def summarize(records) -> Summary:
    """Orders in h and n_t per degree plus iteration and primal-count slopes.

    Spatial quantities use, per degree, the rows with the largest step
    count; temporal ones the rows with the finest mesh.  Slopes against h
    are reported against ``divs = 1/h`` so growth is positive.
    """
    rep = Summary()
    good = [r for r in records if not r.failed]
    if len(good) < len(records):
        rep.notes.append(f"{len(records) - len(good)} failed run(s) skipped")
    iter_groups, pri_groups = [], []
    for deg in sorted({r.deg for r in good}):
        rows = [r for r in good if r.deg == deg]
        nt = max(r.steps for r in rows)
        space = sorted((r for r in rows if r.steps == nt), key=lambda r: r.divs)
        if len({r.divs for r in space}) >= 2:
            divs = [r.divs for r in space]
            for name in ("errBa", "errEa"):
                vals = [getattr(r, name) for r in space]
                if min(vals) > 0:
                    rep.rows.append((deg, f"order_{name}", "h", observed_order(vals, divs)))
            iters = [r.iter for r in space]
            if min(iters) > 0:
                rep.rows.append((deg, "iter_slope", "1/h", loglog_slope(iters, divs)))
                iter_groups.append((iters, divs))
            pris = [r.pri for r in space]
            if min(pris) > 0:
                rep.rows.append((deg, "pri_slope", "1/h", loglog_slope(pris, divs)))
                pri_groups.append((pris, divs))
        else:
            rep.notes.append(f"deg {deg}: fewer than two meshes, no spatial orders")
        finest = max(r.divs for r in rows)
        time = sorted((r for r in rows if r.divs == finest), key=lambda r: r.steps)
        if len({r.steps for r in time}) >= 2:
            steps = [r.steps for r in time]
            for name in ("errBa", "errEa"):
                vals = [getattr(r, name) for r in time]
                if min(vals) > 0:
                    rep.rows.append((deg, f"order_{name}", "n_t", observed_order(vals, steps)))
        else:
            rep.notes.append(f"deg {deg}: fewer than two step counts, no temporal orders")
    if len(iter_groups) > 0:
        rep.rows.append(("all", "iter_slope", "1/h", pooled_slope(iter_groups)))
    if len(pri_groups) > 0:
        rep.rows.append(("all", "pri_slope", "1/h", pooled_slope(pri_groups)))
    return rep


# --- entry point ---------------------------------------------------------------


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        configs, extras = parse_sweep(argv)
    except UsageError as exc:
        print(f"eddyieti: error: {exc}", file=sys.stderr)
        return 2
    level = logging.WARNING - 10 * min(extras["verbose"], 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(name)s: %(message)s")
    records, ok = run_sweep(configs, extras["workers"])
    out = configs[0].out
    if out:
        write_csv(records, out)
    else:
        sys.stdout.write(format_csv(records))
    summary = summarize(records)
    if out:
        sys.stdout.write(summary.text())
        with open(f"{out}.summary.tsv", "w", encoding="utf-8", newline="") as fh:
            fh.write(summary.tsv())
    else:
        sys.stderr.write(summary.text())
    return 0 if ok else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
