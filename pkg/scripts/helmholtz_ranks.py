"""Ranks of ACR for the indefinite Helmholtz problem at about 12 points per wavelength.

    python scripts/helmholtz_ranks.py --n 8 16 32 --eps 1e-3
"""

import argparse

from _common import print_table, write_csv

from acrlib.experiments import helmholtz_rank_sweep

p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
p.add_argument("--n", type=int, nargs="+", default=[8, 16, 32])
p.add_argument("--eps", type=float, default=1e-3)
p.add_argument("--eta", type=float, default=2.0)
p.add_argument("--leaf", type=int, default=32)
p.add_argument("--csv")
args = p.parse_args()

rows = helmholtz_rank_sweep(args.n, args.eps, args.eta, args.leaf)
print_table(
    rows,
    ["n", "kappa", "points_per_wavelength", "resonance_gap", "residual", "average_rank", "largest_rank", "factor_bytes"],
)
write_csv(rows, args.csv)
