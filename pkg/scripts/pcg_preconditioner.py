"""Conjugate gradients preconditioned by low-accuracy ACR factorizations.

    python scripts/pcg_preconditioner.py --n 32 --eps 6e-1 1e-1 1e-2 1e-3
"""

import argparse

from _common import print_table, write_csv

from acrlib.experiments import pcg_sweep

p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
p.add_argument("--n", type=int, default=32)
p.add_argument("--eps", type=float, nargs="+", default=[6e-1, 1e-1, 1e-2, 1e-3])
p.add_argument("--tol", type=float, default=1e-6)
p.add_argument("--leaf", type=int, default=32)
p.add_argument("--csv")
args = p.parse_args()

rows = pcg_sweep(args.n, args.eps, args.tol, args.leaf)
print_table(
    rows,
    ["eps", "factor_bytes", "largest_rank", "t_factor", "apply_time", "pcg_time", "pcg_iterations", "pcg_residual"],
)
write_csv(rows, args.csv)
