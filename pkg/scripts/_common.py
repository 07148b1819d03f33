"""Small helpers shared by the experiment scripts."""

import csv
import sys


def print_table(rows, columns):
    widths = {c: max(len(c), *(len(_fmt(r.get(c))) for r in rows)) for c in columns}
    print("  ".join(c.rjust(widths[c]) for c in columns))
    for r in rows:
        print("  ".join(_fmt(r.get(c)).rjust(widths[c]) for c in columns))
    sys.stdout.flush()


def write_csv(rows, path):
    if not path:
        return
    keys = sorted({k for r in rows for k in r})
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3e}" if (abs(v) < 1e-2 or abs(v) >= 1e5) and v != 0 else f"{v:.3f}"
    return "" if v is None else str(v)
