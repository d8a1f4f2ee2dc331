"""Acceptance criteria, one CLI experiment each, at default tolerances.

Run standalone with ``python3 tests/test_acceptance.py`` for the summary lines only.
"""
import io
import json
import sys
import tempfile
import time
from pathlib import Path

import pytest

from tnqed.cli import run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

# (criterion, title, config, runtime budget in seconds or None)
CRITERIA = [
    (1, "frequency split completeness and symmetry", "split.json", 1),
    (2, "Kubo kernels against closed forms", "kubo.json", 1),
    (3, "time-normal basics", "tn-basics.json", 10),
    (4, "in-field cancellation", "tn-in-field.json", 10),
    (5, "causality probe", "causality.json", 60),
    (6, "radiated-field identity", "radiated-check.json", 300),
    (7, "consistency conditions", "consistency.json", 300),
    (8, "path-space Fourier duality", "pfunctional.json", 5),
    (9, "dressing toys", "dress-toy.json", 5),
    (10, "end-to-end dressing", "dress-e2e.json", 600),
    (11, "Wiener discretization", "wiener.json", 5),
    (12, "hbar invariance", "hbar-invariance.json", None),
    (13, "quantum-classical correspondence", "scatter-mc.json", 120),
]


def evaluate(number, title, config, budget, out_dir):
    t0 = time.perf_counter()
    code = run_experiment(CONFIGS / config, out=out_dir, stream=io.StringIO())
    elapsed = time.perf_counter() - t0
    summary = json.loads((Path(out_dir) / "summary.json").read_text())
    failed = [c["name"] for c in summary["checks"] if not c["pass"]]
    ok = code == 0 and summary["checks"] and (budget is None or elapsed < budget)
    detail = f"{len(summary['checks'])} checks, {elapsed:.1f}s"
    if failed:
        detail += f", failed: {', '.join(failed)}"
    if budget is not None and elapsed >= budget:
        detail += f", over {budget}s budget"
    line = f"criterion {number:2d} [{title}]: {'PASS' if ok else 'FAIL'} ({detail})"
    return ok, line


@pytest.mark.parametrize("number,title,config,budget", CRITERIA, ids=[f"c{c[0]}" for c in CRITERIA])
def test_criterion(number, title, config, budget, tmp_path, capsys):
    ok, line = evaluate(number, title, config, budget, tmp_path)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = []
    for crit in CRITERIA:
        with tempfile.TemporaryDirectory() as d:
            ok, line = evaluate(*crit, d)
        print(line, flush=True)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
