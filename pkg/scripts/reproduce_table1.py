"""Convergence table for the model example, next to the published values.

    python scripts/reproduce_table1.py --n 1 2 3 [--norm pointwise] [--workers 3]
"""
import argparse
import logging

from qlocp import harness as H

PUBLISHED = {  # n: (L2, Linf)
    1: (0.0023336896515917297, 0.00450500319597),
    2: (0.0005836165289004926, 0.00112627834555),
    3: (0.00025940110070117616, 0.000500570255497),
    4: (0.00014591626457078147, 0.000281571174359),
    5: (9.33873410890861e-05, 0.000180205670745),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--norm", choices=["interpolant", "pointwise"], default="interpolant")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/table1.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    logging.getLogger("qlocp.ocp").setLevel(logging.WARNING)

    cfg = H.StudyConfig(n=args.n, norm=args.norm, workers=args.workers, out=args.out)
    rows = H.run_study(cfg)
    print(f"{'h':>10} {'L2':>12} {'ref':>12} {'Linf':>12} {'ref':>12} {'EOC L2':>8} {'EOC Linf':>8} {'its':>4}")
    for n, r in zip(args.n, rows):
        ref = PUBLISHED.get(n, (float("nan"),) * 2)
        e2 = "" if r.eoc_l2 is None else f"{r.eoc_l2:.5f}"
        ei = "" if r.eoc_linf is None else f"{r.eoc_linf:.5f}"
        print(f"{r.h:10.6f} {r.l2_error:12.5e} {ref[0]:12.5e} {r.linf_error:12.5e} {ref[1]:12.5e} "
              f"{e2:>8} {ei:>8} {r.ssn_iters:4d}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
