"""Visual-prompt transfer from a standard vs. a robust source model.

Runs the full experiment twice with the same seed -- once per source
training regime -- and prints the downstream trade-off.  Prompts tuned
against the robust source inherit some of its robustness but give up
clean accuracy, mirroring what the sources themselves do.

    python3 demos/prompt_transfer.py --seed 0 --out runs/transfer
"""

import argparse
import json
from pathlib import Path

from promptlab.harness import default_config, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/transfer")
    args = ap.parse_args()

    reports = {}
    for regime in ("standard", "adversarial"):
        out = Path(args.out) / f"{regime}-{args.seed}"
        cfg = default_config(seed=args.seed, output_dir=str(out))
        cfg["source"]["regime"] = regime
        print(f"[{regime}] training source + prompt -> {out}")
        reports[regime] = run_experiment(cfg)

    print(f"\ndownstream results, seed {args.seed} (T=2, ILM):")
    print(f"{'source regime':<16} {'std acc':>8} {'adv acc':>8}")
    for regime, rep in reports.items():
        print(f"{regime:<16} {rep['final_std_acc']:8.3f} {rep['final_adv_acc']:8.3f}")

    d_std = reports["adversarial"]["final_std_acc"] - reports["standard"]["final_std_acc"]
    d_adv = reports["adversarial"]["final_adv_acc"] - reports["standard"]["final_adv_acc"]
    print(f"\nrobust-source prompt: {d_adv:+.3f} adversarial, {d_std:+.3f} standard")
    print("full evaluation grids are in each run's report.json, e.g.:")
    example = json.dumps(reports["adversarial"]["prompt_eval"][1], indent=2)
    print(example)


if __name__ == "__main__":
    main()
