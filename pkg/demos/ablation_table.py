"""Reduction x adversarial-prompt-training ablation, with cost columns.

All four prompt variants share one source model.  The work columns are
deterministic proxies (graph flop counts at a nominal rate, tracked
buffer bytes), so the table reproduces bitwise across machines; the
adversarial rows cost roughly double because every batch is attacked
before the parameter step.

    python3 demos/ablation_table.py --seed 0 --out runs/ablation
"""

import argparse

from promptlab.harness import default_config, run_ablation_grid


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()

    cfg = default_config(seed=args.seed, output_dir=args.out)
    print(f"running the four-cell grid at seed {args.seed} (one shared source)...")
    rows = run_ablation_grid(cfg)

    print(f"\n{'reduction':<10} {'adv train':<10} {'T':>2} {'std':>7} {'adv':>7} "
          f"{'ms/epoch':>9} {'peak MiB':>9}")
    for r in rows:
        print(f"{('T=' + str(r['T'])) if r['pbl'] else 'off':<10} "
              f"{'on' if r['at'] else 'off':<10} {r['T']:>2} "
              f"{r['std_acc']:7.3f} {r['adv_acc']:7.3f} "
              f"{r['wall_ms_per_epoch']:9.1f} {r['peak_mem_bytes'] / 2**20:9.2f}")
    print(f"\ntable saved to {args.out}/ablation.csv")


if __name__ == "__main__":
    main()
