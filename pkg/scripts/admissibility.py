"""Standard versus weak admissibility for the H-inverse of the 2D Laplacian.

    python scripts/admissibility.py --n 64 --eps 1e-4
"""

import argparse

from _common import print_table, write_csv

from acrlib.experiments import admissibility_comparison

p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
p.add_argument("--n", type=int, default=64)
p.add_argument("--eps", type=float, default=1e-4)
p.add_argument("--eta", type=float, default=2.0)
p.add_argument("--leaf", type=int, default=32)
p.add_argument("--csv")
args = p.parse_args()

rows = admissibility_comparison(args.n, args.eps, args.eta, args.leaf)
print_table(rows, ["admissibility", "bytes", "average_rank", "largest_rank", "inverse_error", "seconds"])
write_csv(rows, args.csv)
