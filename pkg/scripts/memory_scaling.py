"""Factor bytes of ACR and of dense cyclic reduction against N, with log-log slopes.

    python scripts/memory_scaling.py --n 8 16 32
"""

import argparse

from _common import print_table, write_csv

from acrlib.experiments import dense_cr_memory, loglog_slope, poisson_memory_sweep

p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
p.add_argument("--n", type=int, nargs="+", default=[8, 16, 32])
p.add_argument("--eps", type=float, default=1e-3)
p.add_argument("--csv")
args = p.parse_args()

acr = poisson_memory_sweep(args.n, args.eps)
dense = {r["n"]: r["factor_bytes"] for r in dense_cr_memory(args.n)}
for r in acr:
    r["dense_cr_bytes"] = dense[r["n"]]
print_table(acr, ["n", "N", "factor_bytes", "dense_cr_bytes", "largest_rank", "t_factor"])
N = [r["N"] for r in acr]
print(f"slope ACR {loglog_slope(N, [r['factor_bytes'] for r in acr]):.3f}, "
      f"dense CR {loglog_slope(N, list(dense.values())):.3f}")
write_csv(acr, args.csv)
