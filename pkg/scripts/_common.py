"""Shared driver for the figure scripts: parse overrides, run, write CSV, print medians."""

import argparse

from tensamp import experiments, io


def run_and_report(name, default_out, key_cols=2):
    ap = argparse.ArgumentParser(description=f"seeded {name} sweep")
    ap.add_argument("--config", help="key = value config file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--threads", type=int, default=0, help="0 uses every core")
    ap.add_argument("--out", default=default_out)
    args = ap.parse_args()

    config = {}
    if args.config:
        with open(args.config) as fh:
            config = io.parse_config(fh.read())
    for item in args.set:
        config.update(io.parse_config(item))

    header, rows, comments = experiments.run(name, config, args.threads)
    io.write_csv(args.out, header, rows, comments)
    print("\n".join("# " + c for c in comments))
    if key_cols is None:
        for row in rows:
            print(*row, sep="\t")
    else:
        for key, med in experiments.medians(rows, key_cols).items():
            print(*key, f"{med:.4g}", sep="\t")
    print(f"wrote {len(rows)} rows to {args.out}")
