"""Command-line experiment runner.

Every run writes ``report.json`` (metrics, checks, provenance, file index) and
``config.json`` (the fully resolved config, usable as ``--config``) into the
output directory, plus the verb's CSV files.  The exit code is 0 only when
every check passes.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import apply_overrides, config_hash, load_config, resolve
from .encoding import save_clips, synth_benchmark
from .errors import ConfigurationError, SimulationError
from .experiments import RECIPES, Outcome

EXIT_OK, EXIT_CHECK_FAILED, EXIT_ERROR, EXIT_CONFIG = 0, 1, 3, 2


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _matrix_csv(m: np.ndarray) -> str:
    buf = io.StringIO()
    np.savetxt(buf, m, delimiter=",", fmt="%.9e")
    return buf.getvalue()


class _Writer:
    def __init__(self, out: Path):
        self.out = out
        self.index = []

    def text(self, name: str, text: str):
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode()
        path.write_bytes(data)
        self.index.append({"path": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})

    def file(self, name: str):
        data = (self.out / name).read_bytes()
        self.index.append({"path": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})


def _report(verb, cfg, outcome: Outcome | None, files, error=None) -> dict:
    return {
        "verb": verb,
        "ok": error is None and outcome is not None and outcome.ok,
        "error": error,
        "metrics": outcome.metrics if outcome else {},
        "checks": {c.name: c.to_dict() for c in outcome.checks} if outcome else {},
        "provenance": {
            "config_hash": config_hash(cfg) if cfg else None,
            "seed": cfg["seed"] if cfg else None,
            "version": __version__,
        },
        "files": sorted(files, key=lambda f: f["path"]),
        "config": cfg,
    }


def _gen_data(cfg, w: _Writer) -> Outcome:
    g = dict(cfg["task"]["generator"])
    if g["seed"] is None:
        g["seed"] = cfg["seed"]
    clips = synth_benchmark(**g)
    save_clips(clips, w.out / "benchmark")
    for k in range(len(clips)):
        w.file(f"benchmark/clip_{k:05d}.csv")
    w.file("benchmark/manifest.jsonl")
    counts = np.bincount([c.label for c in clips], minlength=g["n_classes"])
    return Outcome(metrics={"n_clips": len(clips), "per_class": counts.tolist(), "generator": g})


def run_verb(verb: str, cfg: dict, out: Path) -> tuple[int, dict]:
    """Run one verb and write its outputs; returns ``(exit_code, report)``."""
    out.mkdir(parents=True, exist_ok=True)
    w = _Writer(out)
    w.text("config.json", _dump(cfg))
    outcome, error = None, None
    try:
        if verb == "gen-data":
            outcome = _gen_data(cfg, w)
        else:
            outcome = RECIPES[verb](cfg)
            for name, tab in outcome.tables.items():
                w.text(name, tab.to_csv())
            for name, m in outcome.matrices.items():
                w.text(name, _matrix_csv(m))
    except (SimulationError, ValueError) as exc:
        error = {"type": type(exc).__name__, "message": str(exc)}
    report = _report(verb, cfg, outcome, w.index, error)
    (out / "report.json").write_text(_dump(report))
    if error is not None:
        return (EXIT_CONFIG if error["type"] == "ConfigurationError" else EXIT_ERROR), report
    return (EXIT_OK if outcome.ok else EXIT_CHECK_FAILED), report


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config (unknown keys are rejected)")
    common.add_argument("--seed", type=int, help="override the top-level seed")
    common.add_argument("--out", type=Path, help="output directory (default: runs/<verb>)")
    common.add_argument("--mode", choices=["spatiotemporal", "temporal-only", "bypass"],
                        help="restrict to one coupling mode")
    p = argparse.ArgumentParser(prog="hnno-sim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True)
    helps = {
        "device-fit": "single-device transients, decay fit and interval sweep",
        "pattern-demo": "U/C/S/D recognition on a 6-pad array with a crossbar readout",
        "classify": "benchmark accuracy per coupling mode and sample count",
        "seizure-demo": "binary EEG-style detection versus horizon, with a threshold sweep",
        "field-validate": "2D field solves versus the lumped coupling model",
        "gen-data": "write the synthetic benchmark as clip files plus a manifest",
        "config-print": "print the resolved config",
    }
    for verb, text in helps.items():
        sub.add_parser(verb, parents=[common], help=text, description=text)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = args.out or Path("runs") / args.verb
    try:
        cfg = load_config(args.config) if args.config else resolve()
        cfg = apply_overrides(cfg, seed=args.seed, mode=args.mode)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        if args.verb != "config-print":
            out.mkdir(parents=True, exist_ok=True)
            err = {"type": "ConfigurationError", "message": str(exc)}
            (out / "report.json").write_text(_dump(_report(args.verb, None, None, [], err)))
        return EXIT_CONFIG
    if args.verb == "config-print":
        sys.stdout.write(_dump(cfg))
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "config.json").write_text(_dump(cfg))
        return EXIT_OK
    code, report = run_verb(args.verb, cfg, out)
    for name, c in report["checks"].items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}")
    if report["error"]:
        print(f"error: {report['error']['type']}: {report['error']['message']}", file=sys.stderr)
    print(f"report: {out / 'report.json'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
