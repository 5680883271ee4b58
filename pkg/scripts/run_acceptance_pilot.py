"""Regenerate the acceptance-pilot fixture.

Runs the frozen acceptance corpus/config, records per-variant MCA means and
the derived gaps, and writes tests/fixtures/acceptance_pilot.json. Commit the
result; the acceptance suite cross-checks against it.
"""

import json
import time
from pathlib import Path

import numpy as np

from araida.experiments import ExperimentConfig, make_synthetic_corpus, run_experiment
from araida.session import SessionConfig

CORPUS_PARAMS = dict(num_examples=2000, num_classes=4, dim=8, separation=3.0,
                     seed=0, bimodal_classes=2)
SESSION_PARAMS = dict(lr_f=0.005, lr_gate=1.0, dropout=0.0)
SEEDS = (0, 1, 2, 3, 4)
SIZES = (1000, 2000)
VARIANTS = ("full", "no_knn", "no_f", "const:0.25", "const:0.5", "const:0.75")


def main():
    corpus = make_synthetic_corpus(**CORPUS_PARAMS)
    config = ExperimentConfig(session=SessionConfig(**SESSION_PARAMS),
                              sizes=SIZES, seeds=SEEDS, variants=VARIANTS)
    start = time.monotonic()
    report = run_experiment(config, corpus)
    elapsed = time.monotonic() - start

    means = {v: {str(s): report.mean_mca(v, s) for s in SIZES} for v in VARIANTS}
    full = means["full"]["2000"]
    no_knn = means["no_knn"]["2000"]
    best_const = max(means[f"const:{c}"]["2000"] for c in (0.25, 0.5, 0.75))
    split_margins = {}
    for seed, diag in report.diagnostics["full"].items():
        high, low = diag["f_acc_high"], diag["f_acc_low"]
        split_margins[seed] = None if (high is None or low is None) else high - low

    fixture = {
        "corpus": CORPUS_PARAMS,
        "session": SESSION_PARAMS,
        "seeds": list(SEEDS),
        "sizes": list(SIZES),
        "variant_mca": means,
        "full_minus_no_knn": full - no_knn,
        "full_minus_best_const": full - best_const,
        "lambda_split_margins": split_margins,
        "pilot_runtime_seconds": elapsed,
    }
    out = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "acceptance_pilot.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(fixture, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out} (runtime {elapsed:.1f}s)")
    print(f"full - no_knn     = {fixture['full_minus_no_knn']:+.4f}")
    print(f"full - best const = {fixture['full_minus_best_const']:+.4f}")


if __name__ == "__main__":
    main()
