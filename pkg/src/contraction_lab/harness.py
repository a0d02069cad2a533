"""Command-line harness: typed configs, deterministic execution, atomic output.

    contraction-lab <subcommand> [--config FILE] [--seed U64] [--replicates N]
                    [--out DIR] [--format csv|json] [--workers N] [--<key> VALUE ...]

Output goes to <out>/<subcommand>-<UTC timestamp>/ with results.csv (or
results.json), summary.json and manifest.json.  Exit codes: 0 success,
2 usage, 3 numeric failure, 4 I/O.
"""
from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import datetime as dt
import hashlib
import io
import json
import math
import os
import shutil
import sys
import tempfile
import traceback
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import LabError, NumericError
from .experiments import RUNNERS

REQUIRED = object()
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
ENV_OUT = "CONTRACTION_LAB_OUT"


class UsageError(LabError):
    pass


# -- schema ---------------------------------------------------------------------------

def _list_of(conv):
    def parse(s):
        if isinstance(s, (list, tuple)):
            return [conv(x) for x in s]
        s = str(s).strip()
        return [conv(x) for x in s.split(",") if x.strip()] if s else []
    parse.__name__ = f"list[{conv.__name__}]"
    return parse


def _int(s):
    if isinstance(s, (int, np.integer)):
        return int(s)
    try:
        return int(str(s).strip())
    except ValueError:
        pass
    v = float(s)  # accept 1e6
    if v != int(v):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(v)


def _enum(*choices):
    def parse(s):
        if s not in choices:
            raise ValueError(f"expected one of {', '.join(choices)}, got {s!r}")
        return s
    parse.__name__ = "|".join(choices)
    return parse


floats, ints = _list_of(float), _list_of(_int)

SCHEMAS = {
    "rates": {"alpha": (float, REQUIRED), "beta": (float, REQUIRED), "n": (ints, REQUIRED)},
    "concentration": {"alpha": (float, 1.0), "K": (_int, 200), "eps": (floats, [0.5, 0.4, 0.3, 0.2]),
                      "method": (_enum("tilted-mc", "cf-inversion"), "tilted-mc"),
                      "N": (_int, 1_000_000), "f0": (floats, [])},
    "small-ball": {"alpha": (float, 0.5), "K": (_int, 200), "eps": (floats, [0.3, 0.2, 0.1, 0.05]),
                   "method": (_enum("tilted-mc", "cf-inversion"), "tilted-mc"),
                   "N": (_int, 1_000_000)},
    "sandwich": {"alpha": (float, 1.0), "K": (_int, 400), "f0": (floats, [0.5, 0.25]),
                 "eps": (floats, [0.3, 0.5]), "N": (_int, 1_000_000), "corrupt": (float, 1.0)},
    "ring": {"alpha": (float, 1.0), "beta": (float, 1.0),
             "f0_kind": (_enum("power", "worst-case"), "power"), "f0_power": (float, 1.6),
             "K_max": (_int, 200), "L": (float, 1.0), "n_list": (ints, [1000, 10000, 100000]),
             "M": (float, 3.0), "m_ring": (float, 0.05), "log_power": (float, 0.0),
             "K": (_int, 0), "method": (_enum("cf-inversion", "mc"), "cf-inversion")},
    "remark2": {"alpha": (float, 1.0), "beta": (float, 0.5), "n_list": (ints, [1000, 10000, 100000]),
                "M": (float, 10.0), "L": (float, 1.0)},
    "shift-bound": {"alpha": (float, 1.0), "m": (_int, 64), "rho": (floats, [1.0, -1.0, 2.0, -2.0]),
                    "epsilon": (float, 0.5), "N": (_int, 200_000)},
    "lemma5-audit": {"pairs": (_int, 1000), "m": (_int, 129)},
    "frac-check": {"m": (_int, 2001)},
    "density": {"alpha": (float, 0.5), "beta": (float, 0.5), "n_list": (ints, [250, 1000, 4000]),
                "m": (_int, 65), "steps": (_int, 20_000), "thin": (_int, 10), "M": (float, 1.0),
                "C1": (float, 1.0), "d": (float, 1.0), "zeta_scale": (float, 1.0)},
    "remark3": {"n_list": (ints, [250, 1000, 4000]),
                "m_list": (floats, [0.0, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0]),
                "m": (_int, 65), "steps": (_int, 20_000)},
    "lemma1-ratio": {"alpha": (float, 1.0), "K": (_int, 200), "K_max": (_int, 200),
                     "f0_power": (float, 1.6), "n_list": (ints, [1000, 10000, 100000]),
                     "c": (float, 7.0), "eps_max": (float, 1.0), "eps_min": (float, 0.0005),
                     "eps_points": (_int, 80)},
    "worst-case": {"alpha": (float, 1.0), "beta": (float, 0.5),
                   "n_list": (ints, [1000, 10000, 100000, 1000000]), "K_max": (_int, 2_000_000),
                   "log_power": (float, 2.0)},
}

DEFAULT_REPLICATES = {"ring": 200, "remark2": 50, "density": 20, "remark3": 10, "lemma1-ratio": 20}


@dataclass
class RunConfig:
    subcommand: str
    params: dict
    seed: int = 0
    replicates: int = 1
    out: str = "results"
    format: str = "csv"
    workers: int = 1

    def echo(self) -> dict:
        return {"subcommand": self.subcommand, "params": self.params, "seed": self.seed,
                "replicates": self.replicates, "format": self.format}


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


META_KEYS = {"seed", "replicates", "out", "format", "workers"}


def make_config(subcommand: str, raw: dict, seed=None, replicates=None, out=None, fmt=None,
                workers=None) -> RunConfig:
    """Validate ``raw`` (strings or typed values) against the subcommand schema."""
    if subcommand not in SCHEMAS:
        raise UsageError(f"unknown subcommand {subcommand!r}")
    schema = SCHEMAS[subcommand]
    raw = dict(raw)
    meta = {k: raw.pop(k) for k in list(raw) if k in META_KEYS}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise UsageError(f"unknown key {unknown[0]!r} for subcommand {subcommand!r}")
    params = {}
    for key, (conv, default) in schema.items():
        if key in raw:
            try:
                params[key] = conv(raw[key])
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for key {key!r}: {exc}") from None
        elif default is REQUIRED:
            raise UsageError(f"missing required key {key!r} for subcommand {subcommand!r}")
        else:
            params[key] = default
    try:
        seed = _int(seed if seed is not None else meta.get("seed", 0))
        reps = _int(replicates if replicates is not None
                    else meta.get("replicates", DEFAULT_REPLICATES.get(subcommand, 1)))
        workers = _int(workers if workers is not None else meta.get("workers", 1))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if not 0 <= seed < 2 ** 64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    if reps < 1 or workers < 1:
        raise UsageError("replicates and workers must be positive")
    fmt = fmt or meta.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise UsageError("format must be csv or json")
    out = out or meta.get("out") or os.environ.get(ENV_OUT) or "results"
    return RunConfig(subcommand, params, seed, reps, out, fmt, workers)


# -- serialization ------------------------------------------------------------------------

def format_cell(v) -> str:
    """Shortest round-trip text for reals; NaN as the literal token NaN."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "NaN"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return repr(f)
    return str(v)


def csv_bytes(columns, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_cell(r.get(c, "")) for c in columns])
    return buf.getvalue().encode()


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_json_value(x) for x in v]
    return v


def json_bytes(obj) -> bytes:
    return (json.dumps(_json_value(obj), indent=2, sort_keys=True) + "\n").encode()


def nan_cells(columns, rows) -> list:
    out = []
    for i, r in enumerate(rows):
        for c in columns:
            v = r.get(c)
            if isinstance(v, (float, np.floating)) and math.isnan(v):
                out.append([i, c])
    return out


# -- execution ------------------------------------------------------------------------------

def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%S.%fZ")


def _run_dir(out: str, sub: str) -> str:
    base = os.path.join(out, f"{sub}-{_now()}")
    path, k = base, 1
    while os.path.exists(path):
        path, k = f"{base}-{k}", k + 1
    return path


@dataclass
class RunResult:
    directory: str
    manifest: dict
    table: object = field(repr=False, default=None)


def execute(cfg: RunConfig):
    """Run the experiment and return its table (no files written)."""
    runner = RUNNERS[cfg.subcommand]
    if cfg.workers > 1:
        with cf.ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            pmap = lambda fn, jobs: ex.map(fn, list(jobs), chunksize=1)
            return runner(cfg.params, cfg.seed, cfg.replicates, pmap)
    return runner(cfg.params, cfg.seed, cfg.replicates, map)


def _write_atomic(directory: str, files: dict):
    parent = os.path.dirname(directory) or "."
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".tmp-", dir=parent)
    try:
        for name, data in files.items():
            with open(os.path.join(tmp, name), "wb") as fh:
                fh.write(data)
        os.rename(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def run(cfg: RunConfig) -> RunResult:
    started = _now()
    table = execute(cfg)
    finished = _now()
    if cfg.format == "csv":
        payload_name, payload = "results.csv", csv_bytes(table.columns, table.rows)
    else:
        payload_name = "results.json"
        payload = json_bytes({"columns": table.columns,
                              "rows": [[r.get(c) for c in table.columns] for r in table.rows]})
    summary = json_bytes({"subcommand": cfg.subcommand, "rows": len(table.rows),
                          "summary": table.summary})
    files = {payload_name: payload, "summary.json": summary}
    manifest = {"config": cfg.echo(), "code_version": __version__, "started": started,
                "finished": finished, "workers": cfg.workers,
                "nan_cells": nan_cells(table.columns, table.rows),
                "checksums": {k: hashlib.sha256(v).hexdigest() for k, v in sorted(files.items())}}
    files["manifest.json"] = json_bytes(manifest)
    directory = _run_dir(cfg.out, cfg.subcommand)
    _write_atomic(directory, files)
    return RunResult(directory, manifest, table)


def _write_diagnostic(cfg: RunConfig, exc: BaseException) -> str | None:
    try:
        directory = _run_dir(cfg.out, cfg.subcommand + "-failed")
        diag = {"config": cfg.echo(), "error": type(exc).__name__, "message": str(exc),
                "diagnostics": getattr(exc, "diagnostics", {}),
                "traceback": traceback.format_exception(type(exc), exc, exc.__traceback__)}
        _write_atomic(directory, {"diagnostic.json": json_bytes(diag)})
        return directory
    except OSError:
        return None


# -- command line -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contraction-lab",
                                 description="Posterior contraction experiments and verifiers.")
    subs = ap.add_subparsers(dest="subcommand", required=True)
    for name, schema in SCHEMAS.items():
        sp = subs.add_parser(name)
        sp.add_argument("--config")
        sp.add_argument("--seed")
        sp.add_argument("--replicates")
        sp.add_argument("--out")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--workers")
        for key in schema:
            sp.add_argument(f"--{key}", dest=f"param_{key}", metavar=key.upper())
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    cfg = None
    try:
        raw = read_config_file(args.config) if args.config else {}
        for k, v in vars(args).items():
            if k.startswith("param_") and v is not None:
                raw[k[len("param_"):]] = v
        cfg = make_config(args.subcommand, raw, args.seed, args.replicates, args.out, args.format,
                          args.workers)
        res = run(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, LabError, ArithmeticError, ValueError) as exc:
        where = _write_diagnostic(cfg, exc) if cfg else None
        print(f"numeric failure: {exc}" + (f" (diagnostics in {where})" if where else ""),
              file=sys.stderr)
        return EXIT_NUMERIC
    print(res.directory)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
