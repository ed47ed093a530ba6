"""Scalability ladder: cross the scale scenarios with every algorithm.

Cells that cannot run (for example exhaustive search past its grid cap)
are recorded as error rows rather than aborting the sweep.
"""

import argparse
from pathlib import Path

from sliceorch.harness import load_scenario, run_matrix, write_matrix_csv


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "scenarios", nargs="*",
        default=sorted(str(p) for p in Path("scenarios/scale").glob("slices_*.yaml")),
        help="scenario YAML files (default: scenarios/scale/slices_*.yaml)",
    )
    parser.add_argument("--out", default="results/scalability", help="output directory")
    args = parser.parse_args()

    scenarios = [load_scenario(p) for p in args.scenarios]
    rows = run_matrix(scenarios)
    out = Path(args.out)
    write_matrix_csv(rows, out / "matrix.csv")
    n_err = sum(1 for r in rows if r.status != "ok")
    print(f"{len(rows)} cells ({n_err} errors) -> {out / 'matrix.csv'}")


if __name__ == "__main__":
    main()
