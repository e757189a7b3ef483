"""Rerun all six size/power tables and write one CSV per table.

    python scripts/reproduce_tables.py --m 500 --seed 1 --out results/

Use ``--n 100 500`` or ``--param 1 10`` to restrict the grid.
"""

import argparse
import os
import sys
from pathlib import Path

from sfcf.experiments import TABLES, McConfig, emit_results, run_table


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--tables", nargs="+", default=list(TABLES))
    ap.add_argument("--m", type=int, default=500)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--n", type=int, nargs="+")
    ap.add_argument("--param", type=float, nargs="+")
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    only = {}
    if args.n:
        only["n"] = args.n
    if args.param:
        only["param"] = args.param
    for table in args.tables:
        cfg = McConfig(table_id=table, M=args.m, master_seed=args.seed, workers=args.workers)

        def progress(design, value, n, runs, elapsed):
            cells = " ".join(f"{k}:{100 * r.rejection_rate:5.1f}" for k, r in runs.items())
            print(f"{design.table_id:16s} {design.param}={value:<4g} n={n:<4d} {cells}  [{elapsed:.0f}s]", file=sys.stderr)

        rows = run_table(cfg, only or None, progress)
        emit_results(rows, "csv", out / f"{table}.csv", timing=True)


if __name__ == "__main__":
    main()
