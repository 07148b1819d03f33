"""ACR on convection-diffusion with a vortex field for increasing convection strength.

    python scripts/convdiff_robustness.py --n 16 --alpha 0 10 100 1000
"""

import argparse

from _common import print_table, write_csv

from acrlib.experiments import convdiff_sweep

p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
p.add_argument("--n", type=int, default=16)
p.add_argument("--alpha", type=float, nargs="+", default=[0.0, 10.0, 100.0, 1000.0])
p.add_argument("--eps", type=float, default=1e-4)
p.add_argument("--leaf", type=int, default=32)
p.add_argument("--csv")
args = p.parse_args()

rows = convdiff_sweep(args.n, args.alpha, args.eps, args.leaf)
print_table(rows, ["alpha", "symmetric", "residual", "error_vs_exact", "largest_rank", "factor_bytes", "t_factor"])
write_csv(rows, args.csv)
