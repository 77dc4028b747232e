"""Compare an ``errors.csv`` from ``vevp converge`` with the published anchors.

Prints the table as E x 100, the two anchor ratios, and whether rows and
columns decrease.
"""

import sys

import numpy as np

from vevp.error_metrics import ErrorReport

ANCHORS = {(4, 0.1): 0.477455, (8, 0.1): 0.263109}


def main(path):
    rep = ErrorReport.from_csv(path)
    table = 100 * rep.table()
    print("N_el \\ k," + ",".join(f"{k:g}" for k in rep.ks()))
    for n, row in zip(rep.nels(), table):
        print(f"{n}," + ",".join(f"{v:.6f}" for v in row))
    for (n, k), ref in ANCHORS.items():
        got = 100 * rep.value(n, k)
        print(f"({n}, {k}): {got:.6f} vs {ref} -> ratio {got / ref:.3f}")
    print("rows decreasing:", bool(np.all(np.diff(table, axis=1) < 0)))
    print("columns decreasing:", bool(np.all(np.diff(table, axis=0) < 0)))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "errors.csv")
