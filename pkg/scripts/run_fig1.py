"""Sparsification error against the sample budget (L2,2 distance to the dense moment tensor).

    python scripts/run_fig1.py --set n=50 --set seeds=5
"""

from _common import run_and_report

if __name__ == "__main__":
    run_and_report("fig1", "fig1.csv")
