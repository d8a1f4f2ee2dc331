"""Command-line runner: one JSON config in, CSV tables and a JSON summary out.

Config keys: ``experiment`` (required), ``params``, ``system``, ``tolerances``,
``seed``, ``dt_refine``, ``output``.  Flags override the config.

Exit codes: 0 all checks pass; 1 malformed config or validation error;
2 numerical failure, a failed check or a raised flag (aliasing, singular).
"""
import argparse
import json
import os
import sys

import numpy as np

from .errors import NumericalFailure, ValidationError
from .experiments import KINDS, Outcome, run

__all__ = ["load_config", "run_experiment", "emit_report", "main"]

_CONFIG_KEYS = {"experiment", "params", "system", "tolerances", "seed", "dt_refine", "output"}
_BAD_FLAGS = ("aliasing", "singular", "numerical_failure")


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"cannot read config {path}: {e}") from None
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    extra = set(cfg) - _CONFIG_KEYS
    if extra:
        raise ValidationError(f"unknown config keys {sorted(extra)}")
    if cfg.get("experiment") not in KINDS:
        raise ValidationError(f"experiment must be one of {', '.join(KINDS)}")
    for key in ("params", "system", "tolerances"):
        if key in cfg and not isinstance(cfg[key], dict):
            raise ValidationError(f"{key} must be an object")
    return cfg


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def emit_report(outcome, out_dir):
    """Write the CSV tables and summary.json; returns the summary dict."""
    os.makedirs(out_dir, exist_ok=True)
    for name, write in outcome.writers:
        write(os.path.join(out_dir, name))
    summary = {"experiment": outcome.kind, "params": outcome.params,
               "checks": outcome.checks, "flags": outcome.flags}
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_jsonable, allow_nan=False)
        fh.write("\n")
    return summary


def run_experiment(config_path, seed=None, out=None, dt_refine=None, stream=sys.stdout):
    """Run the experiment named in a config file; returns the exit code."""
    try:
        cfg = load_config(config_path)
        params = dict(cfg.get("params", {}))
        if "system" in cfg:
            params["system"] = cfg["system"]
        seed = int(cfg.get("seed", 0) if seed is None else seed)
        dt_refine = cfg.get("dt_refine", 2) if dt_refine is None else dt_refine
        out = out or cfg.get("output") or os.path.join("tnqed_out", cfg["experiment"])
        try:
            outcome = run(cfg["experiment"], params, cfg.get("tolerances"), seed, dt_refine)
        except NumericalFailure as e:
            outcome = Outcome(cfg["experiment"], dict(params, seed=seed),
                              flags={"numerical_failure": str(e)})
        emit_report(outcome, out)
    except (ValidationError, TypeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: cannot write report: {e}", file=sys.stderr)
        return 1
    for c in outcome.checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}  value={c['value']!r}", file=stream)
    raised = [k for k in _BAD_FLAGS if outcome.flags.get(k)]
    for k in raised:
        print(f"FLAG  {k}", file=stream)
    return 0 if outcome.passed and not raised else 2


def main(argv=None):
    ap = argparse.ArgumentParser(prog="tnqed", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="experiment config (JSON)")
    ap.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--dt-refine", type=int, dest="dt_refine",
                    help="refinement factor for convergence experiments (default 2)")
    args = ap.parse_args(argv)
    if args.seed is not None and args.seed < 0:
        ap.error("seed must be non-negative")
    return run_experiment(args.config, args.seed, args.out, args.dt_refine)


if __name__ == "__main__":
    sys.exit(main())
