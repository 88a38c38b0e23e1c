"""Print the analytic versus Monte Carlo report for a preset and exit non-zero on any FAIL."""
import argparse
import sys

from homeas import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", default="urban-macro", choices=["urban-macro", "rural-macro"])
    parser.add_argument("--samples", type=int, default=100_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    return cli.main(["validate", "--preset", args.preset, "--samples", str(args.samples), "--seed", str(args.seed)])


if __name__ == "__main__":
    sys.exit(main())
