"""Sparsification error against the number of samples p at a fixed budget of 10 n^1.5.

    python scripts/run_fig2.py --set n=50 --set p_grid=10,50,200
"""

from _common import run_and_report

if __name__ == "__main__":
    run_and_report("fig2", "fig2.csv")
