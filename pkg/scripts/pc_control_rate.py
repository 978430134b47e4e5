"""Piecewise-constant control discretization: L2 control error and EOC."""
import argparse

from qlocp import harness as H


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--m", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--out", default="results/pc_control.csv")
    args = ap.parse_args()
    rows = H.run_study(H.StudyConfig(m=args.m, control="piecewise_constant", out=args.out))
    for m, r in zip(args.m, rows):
        eoc = "" if r.eoc_l2 is None else f"{r.eoc_l2:.4f}"
        print(f"m={m:4d}  L2={r.l2_error:.5e}  Linf={r.linf_error:.5e}  EOC_L2={eoc}  its={r.ssn_iters}")


if __name__ == "__main__":
    main()
