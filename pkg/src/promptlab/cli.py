"""Command-line front end.

Subcommands: ``train-source``, ``train-prompt``, ``eval``, ``sweep-T``,
``report``.  All take ``--config PATH`` plus optional ``--seed U64``
and ``--out DIR`` overrides.  Failures print one machine-greppable
``error[code] message`` line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import sys

from .errors import (
    CheckpointError,
    ConfigError,
    DataFormatError,
    GraphError,
    NumericsError,
    PromptLabError,
    ShapeError,
)
from .harness import ExperimentConfig, run_ablation_grid, run_experiment, sweep_temperature

_ERROR_CODES = [
    (ConfigError, "config"),
    (DataFormatError, "data"),
    (CheckpointError, "checkpoint"),
    (NumericsError, "numerics"),
    (ShapeError, "shape"),
    (GraphError, "graph"),
    (PromptLabError, "internal"),
]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptlab",
        description="Visual-prompt transfer experiments on frozen source classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("train-source", "train the source classifier and write its checkpoint"),
        ("train-prompt", "train a visual prompt against the (trained) source"),
        ("eval", "full run: source, prompt, evaluation sweep, report"),
        ("sweep-T", "temperature sweep against the no-reduction baseline"),
        ("report", "run the reduction x adversarial-training ablation grid"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, metavar="PATH", help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, metavar="U64", help="override config seed")
        p.add_argument("--out", default=None, metavar="DIR", help="override output directory")
    return parser


def _cmd_train_source(cfg: ExperimentConfig) -> None:
    from .harness import _prepare_source

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    data = cfg.datasets()
    _prepare_source(cfg, data, out, {})
    print(f"source checkpoint written to {out / 'source.ckpt'}")


def _cmd_train_prompt(cfg: ExperimentConfig) -> None:
    from .checkpoint import save_prompt
    from .harness import _prepare_source, _train_prompt_phase, export_prompt_image
    from .metrics import write_metrics

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    data = cfg.datasets()
    source = _prepare_source(cfg, data, out, {})
    prompt, _clf, records = _train_prompt_phase(cfg, source, data, cfg.temperature, cfg.prompt_adversarial)
    write_metrics(records, out / "prompt_metrics.csv")
    save_prompt(out / "prompt.ckpt", prompt, temperature=cfg.temperature)
    export_prompt_image(prompt, out / "prompt.ppm")
    print(f"prompt checkpoint written to {out / 'prompt.ckpt'}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.from_file(args.config, seed_override=args.seed, out_override=args.out)
        if args.command == "train-source":
            _cmd_train_source(cfg)
        elif args.command == "train-prompt":
            _cmd_train_prompt(cfg)
        elif args.command == "eval":
            report = run_experiment(cfg)
            print(f"report written to {cfg.output_dir / 'report.json'}")
            for row in report["prompt_eval"]:
                print(
                    f"epsilon={row['epsilon']:.3f} std_acc={row['standard_accuracy']:.4f} "
                    f"adv_acc={row['adversarial_accuracy']:.4f}"
                )
        elif args.command == "sweep-T":
            rows = sweep_temperature(cfg)
            print("T,m,std_acc,adv_acc,std_delta,adv_delta")
            for r in rows:
                print(
                    f"{r['T']},{r['m']},{r['std_acc']:.6f},{r['adv_acc']:.6f},"
                    f"{r['std_delta']:.6f},{r['adv_delta']:.6f}"
                )
        elif args.command == "report":
            rows = run_ablation_grid(cfg)
            print("pbl,at,T,std_acc,adv_acc,wall_ms_per_epoch,peak_mem_bytes")
            for r in rows:
                print(
                    f"{int(r['pbl'])},{int(r['at'])},{r['T']},{r['std_acc']:.6f},"
                    f"{r['adv_acc']:.6f},{r['wall_ms_per_epoch']:.6f},{r['peak_mem_bytes']}"
                )
    except PromptLabError as exc:
        for klass, code in _ERROR_CODES:
            if isinstance(exc, klass):
                print(f"error[{code}] {exc}", file=sys.stderr)
                break
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
