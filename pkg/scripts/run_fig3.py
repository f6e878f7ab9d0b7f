"""Completion and factorization sweeps.

``a``: smallest budget reaching RMSE < 0.01 in 80% of seeds, per bias level.
``b``: factor RMSE against the Frobenius norm of added noise.

    python scripts/run_fig3.py a --set n=30 --set seeds=10
    python scripts/run_fig3.py b --set n=40
"""

import sys

from _common import run_and_report

if __name__ == "__main__":
    if len(sys.argv) < 2 or sys.argv[1] not in ("a", "b"):
        sys.exit("usage: run_fig3.py {a,b} [--config FILE] [--set KEY=VALUE ...] [--threads N] [--out FILE]")
    part = sys.argv.pop(1)
    if part == "a":
        run_and_report("fig3a", "fig3a.csv", key_cols=None)
    else:
        run_and_report("fig3b", "fig3b.csv")
