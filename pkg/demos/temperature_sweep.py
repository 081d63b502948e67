"""How much does loosening the source decision regions help?

Sweeps the block-max reduction temperature over a robust source and
prints accuracy deltas against the no-reduction baseline.  T=1 is the
baseline by construction (its delta row is exactly zero); higher
temperatures merge neighboring source logits before label mapping.

    python3 demos/temperature_sweep.py --seed 1 --temperatures 1 2 4
"""

import argparse

from promptlab.harness import default_config, sweep_temperature


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--temperatures", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--regime", choices=["standard", "adversarial"], default="adversarial")
    args = ap.parse_args()

    cfg = default_config(seed=args.seed, output_dir=args.out)
    cfg["source"]["regime"] = args.regime
    print(f"sweeping T over {args.temperatures} ({args.regime} source, seed {args.seed})")
    rows = sweep_temperature(cfg, temperatures=args.temperatures)

    print(f"\n{'T':>3} {'m':>4} {'std acc':>8} {'adv acc':>8} {'d(std)':>8} {'d(adv)':>8}")
    for r in rows:
        print(f"{r['T']:>3} {r['m']:>4} {r['std_acc']:8.3f} {r['adv_acc']:8.3f} "
              f"{r['std_delta']:+8.3f} {r['adv_delta']:+8.3f}")
    best = max(rows, key=lambda r: r["std_acc"])
    print(f"\nbest standard accuracy at T={best['T']} "
          f"({best['std_delta']:+.3f} vs baseline); table saved to {args.out}/sweep.csv")


if __name__ == "__main__":
    main()
