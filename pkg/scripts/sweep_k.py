"""Failure, success and target quality against the number of candidate cells."""
import argparse
import csv
import sys

from homeas import chain, preset


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", default="rural-macro", choices=["urban-macro", "rural-macro"])
    parser.add_argument("--mode", default="continual", choices=["continual", "triggered"])
    parser.add_argument("--gamma-min-db", type=float, default=None)
    parser.add_argument("--k", default="1,2,4,8,16,32")
    args = parser.parse_args()

    overrides = {"mode": args.mode}
    if args.gamma_min_db is not None:
        overrides["gamma_min_db"] = args.gamma_min_db
    base = preset(args.preset, **overrides)
    out = csv.writer(sys.stdout)
    out.writerow(["k", "F", "S", "Q"])
    for k in (int(v) for v in args.k.split(",")):
        m = chain.metrics(base.with_k(k))
        out.writerow([k, f"{m.fail_prob_F:.6g}", f"{m.success_prob_S:.6g}", f"{m.target_quality_Q:.6g}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
