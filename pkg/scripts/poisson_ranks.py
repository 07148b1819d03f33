"""ACR on the 7-point Poisson problem: residual, ranks and bytes per grid size.

    python scripts/poisson_ranks.py --n 16 32 --eps 8e-3
"""

import argparse

from _common import print_table, write_csv

from acrlib.experiments import rank_sweep

p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
p.add_argument("--n", type=int, nargs="+", default=[8, 16, 32])
p.add_argument("--eps", type=float, default=8e-3)
p.add_argument("--eta", type=float, default=2.0)
p.add_argument("--leaf", type=int, default=32)
p.add_argument("--csv")
args = p.parse_args()

rows = rank_sweep("poisson", args.n, args.eps, args.eta, args.leaf)
print_table(rows, ["n", "eps", "residual", "average_rank", "largest_rank", "factor_bytes", "t_factor", "t_solve"])
write_csv(rows, args.csv)
