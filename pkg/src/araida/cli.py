"""Command-line entry points: experiment runs, hyperparameter sweeps, serving.

The run/sweep config file is flat JSON; session fields and experiment fields
share one namespace (see ``config_from_dict``).
"""

from __future__ import annotations

import argparse
import json
from dataclasses import fields
from pathlib import Path

from . import experiments
from .corpus import load_examples
from .session import SessionConfig


def config_from_dict(raw: dict) -> experiments.ExperimentConfig:
    """Split a flat key/value mapping into session and experiment settings."""
    raw = dict(raw)
    passthrough_keys = {"synthetic_examples", "synthetic_classes", "synthetic_dim",
                        "synthetic_separation", "synthetic_seed", "dataset",
                        "sweep_capacities", "sweep_ks", "sweep_evictions"}
    for key in passthrough_keys:
        raw.pop(key, None)
    session_names = {f.name for f in fields(SessionConfig)}
    session_kwargs = {k: v for k, v in raw.items() if k in session_names}
    exp_kwargs = {k: v for k, v in raw.items() if k not in session_names}
    exp_names = {f.name for f in fields(experiments.ExperimentConfig)}
    unknown = set(exp_kwargs) - exp_names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return experiments.ExperimentConfig(session=SessionConfig(**session_kwargs),
                                        **exp_kwargs)


def _load_corpus_for(raw: dict, corpus_path: str | None):
    if corpus_path:
        return load_examples(corpus_path)
    dataset = raw.get("dataset", "synthetic")
    if dataset != "synthetic":
        return load_examples(dataset)
    return experiments.make_synthetic_corpus(
        num_examples=int(raw.get("synthetic_examples", 2000)),
        num_classes=int(raw.get("synthetic_classes", 4)),
        dim=int(raw.get("synthetic_dim", 8)),
        separation=float(raw.get("synthetic_separation", 3.0)),
        seed=int(raw.get("synthetic_seed", 0)),
    )


def cmd_run(args) -> int:
    raw = json.loads(Path(args.config).read_text())
    config = config_from_dict(raw)
    corpus = _load_corpus_for(raw, args.corpus)
    report = experiments.run_experiment(config, corpus)
    paths = experiments.write_report(report, args.out)
    for variant, size, mean, std in report.aggregates():
        print(f"{variant} size={size} mca={mean:.4f} ± {std:.4f}")
    print(f"wrote {paths['raw']}, {paths['aggregate']}, {paths['diagnostics']}")
    return 0


def cmd_sweep(args) -> int:
    raw = json.loads(Path(args.config).read_text())
    config = config_from_dict(raw)
    corpus = _load_corpus_for(raw, args.corpus)
    grids = {
        "capacities": tuple(raw.get("sweep_capacities", (100, 500, 1000, 2000))),
        "ks": tuple(raw.get("sweep_ks", (5, 10, 20, 50))),
        "evictions": tuple(raw.get("sweep_evictions",
                                   ("class_similar", "class_dissimilar",
                                    "fifo", "class_fifo"))),
    }
    rows = experiments.run_sweep(config, corpus, **grids)
    path = experiments.write_sweep(rows, args.out)
    print(f"wrote {len(rows)} cells to {path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    corpora = {}
    for spec in args.corpus:
        path = Path(spec)
        corpora[path.stem] = load_examples(path)
    app = create_app(corpora, checkpoint_dir=args.checkpoint_dir)
    print(f"serving corpora {sorted(corpora)} on port {args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="araida")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a simulated-oracle experiment")
    run.add_argument("--config", required=True, help="flat JSON config file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--corpus", help="JSONL corpus (overrides config dataset)")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="capacity/k/eviction grid sweep")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--corpus")
    sweep.set_defaults(func=cmd_sweep)

    serve = sub.add_parser("serve", help="start the annotation HTTP service")
    serve.add_argument("--port", type=int, default=8008)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--corpus", action="append", required=True,
                       help="JSONL corpus file (repeatable); name = file stem")
    serve.add_argument("--checkpoint-dir", default="checkpoints")
    serve.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
