"""``tensamp`` command line: sparsify, complete, factorize, synth, experiment.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from tensamp import experiments, io, sampling, synth
from tensamp import factorize as fz
from tensamp.completion import NumericalError, WalsConfig, wals
from tensamp.rtpm import DEFAULT_ITERS, DEFAULT_RESTARTS, DegenerateTensorError, rtpm
from tensamp.sparsify import SampleMatrix, default_budget, sparsify
from tensamp.tensor_core import ConvergenceError, DenseTensor3, cp_reconstruct

EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _diag_rows(diagnostics):
    return [{k: (int(v) if k == "sweep" else float(v)) for k, v in d.items()} for d in diagnostics]


def _add_rtpm(p):
    p.add_argument("--rtpm-restarts", type=int, default=DEFAULT_RESTARTS)
    p.add_argument("--rtpm-iters", type=int, default=DEFAULT_ITERS)


def cmd_sparsify(args):
    X = SampleMatrix(io.read_matrix(args.input))
    m = default_budget(X.n) if args.samples is None else args.samples
    st = sparsify(X, m, args.seed, dist=args.dist, mode=args.mode,
                  threads=args.threads, ls_power=args.ls_power)
    io.write_sampled(args.out, st, [f"dist={args.dist}", f"m={m}", f"seed={args.seed}", f"passes={X.passes}"])


def cmd_complete(args):
    st = io.read_sampled(args.omega)
    caps = io.read_caps(args.caps) if args.caps else None
    truth = io.read_factors(args.truth) if args.truth else None
    init = rtpm(st, args.rank, args.rtpm_restarts, args.rtpm_iters, args.seed)
    cfg = WalsConfig(args.rank, args.iters, args.fresh_samples, caps, seed=args.seed)
    res = wals(st, cfg, init, truth=truth)
    io.write_factors(args.out, res.factors)
    if args.diag:
        _write_json(args.diag, _diag_rows(res.diagnostics))


def cmd_factorize(args):
    T = io.read_tns3(args.input)
    truth = io.read_factors(args.truth) if args.truth else None
    res = fz.factorize(DenseTensor3(T, atol=1e-12), args.samples, args.rank, args.iters, args.seed, args.dist,
                       args.rtpm_restarts, args.rtpm_iters, args.fresh_samples, truth)
    io.write_factors(args.out, res.factors)
    if args.diag:
        _write_json(args.diag, {
            "passes": res.passes,
            "n_samples": len(res.samples),
            "nu": [float(v) for v in res.nu],
            "Z": float(res.Z),
            "sweeps": _diag_rows(res.diagnostics),
        })


def cmd_synth(args):
    kind = args.kind
    if kind == "samples":
        X = synth.gen_samples(args.n, args.p, args.bias, args.seed)
        io.write_matrix(args.out, X.toarray(), sparse_format=args.sparse)
    elif kind == "factors":
        f = synth.gen_orthogonal_factors(args.n, args.r, args.bias, args.seed, _sigma(args.sigma, args.r))
        io.write_factors(args.out, f, [f"bias={args.bias}", f"seed={args.seed}"])
        if args.caps_out:
            io.write_caps(args.caps_out, 2 * f.row_norms())
    elif kind == "claim":
        T, f = synth.claim_tensor(args.n)
        io.write_tns3(args.out, T.entries)
        if args.factors_out:
            io.write_factors(args.factors_out, f)
    elif kind == "tensor":
        f = synth.gen_orthogonal_factors(args.n, args.r, args.bias, args.seed, _sigma(args.sigma, args.r))
        T, _ = fz.noisy_tensor(f, fz.NoiseSpec(args.noise, args.flatness), args.seed)
        io.write_tns3(args.out, T.entries)
        if args.factors_out:
            io.write_factors(args.factors_out, f)
    elif kind == "omega":
        f = io.read_factors(args.factors)
        T = cp_reconstruct(f)
        d = experiments.completion_dist(args.dist, f, T)
        st = sampling.sample_tensor(T, d, sampling.SamplePlan(args.samples, args.mode, args.seed), args.threads)
        io.write_sampled(args.out, st, [f"dist={args.dist}", f"m={args.samples}", f"seed={args.seed}"])


def _sigma(text, r):
    if text is None:
        return None
    vals = np.array([float(v) for v in text.split(",")])
    if len(vals) != r:
        raise ValueError(f"--sigma needs {r} values, got {len(vals)}")
    return vals


def cmd_experiment(args):
    config = {}
    if args.config:
        with open(args.config) as fh:
            config = io.parse_config(fh.read())
    for item in args.set or ():
        config.update(io.parse_config(item))
    if args.face_norm is not None:
        config["face_norm"] = args.face_norm
    header, rows, comments = experiments.run(args.name, config, args.threads)
    io.write_csv(args.out, header, rows, comments)


def build_parser():
    p = argparse.ArgumentParser(prog="tensamp", description="Biased entry sampling of symmetric order-3 tensors.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker threads; 0 picks the CPU count")
    common.add_argument("--face-norm", choices=("spectral", "frobenius"), default=None,
                        help="face norm inside the L2,2 error (experiments; default spectral)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sparsify", parents=[common], help="two-pass sampled moment tensor from a sample matrix")
    s.add_argument("--input", required=True, help="sample matrix CSV (dense grid or row,col,value triplets)")
    s.add_argument("--samples", type=int, default=None, help="budget m (default ceil(10 n^1.5))")
    s.add_argument("--dist", choices=sampling.FAMILIES, default="tensorls")
    s.add_argument("--ls-power", type=float, choices=(3.0, 1.5), default=3.0,
                   help="row-norm exponent of the tensorls pair shape")
    s.add_argument("--mode", choices=sampling.MODES, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sparsify)

    c = sub.add_parser("complete", parents=[common], help="RTPM init and WALS on a sampled tensor")
    c.add_argument("--omega", required=True, help="sampled tensor CSV")
    c.add_argument("--rank", type=int, required=True)
    c.add_argument("--iters", type=int, default=None, help="WALS sweeps b")
    c.add_argument("--fresh-samples", action="store_true")
    c.add_argument("--caps", default=None, help="row caps CSV")
    c.add_argument("--truth", default=None, help="true factors, adds d_inf to diagnostics")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.add_argument("--diag", default=None, help="per-sweep diagnostics JSON")
    _add_rtpm(c)
    c.set_defaults(func=cmd_complete)

    f = sub.add_parser("factorize", parents=[common], help="two-pass factorization of a dense TNS3 tensor")
    f.add_argument("--input", required=True, help="TNS3 binary tensor")
    f.add_argument("--samples", type=int, required=True)
    f.add_argument("--rank", type=int, required=True)
    f.add_argument("--iters", type=int, default=None)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--dist", choices=fz.FACTORIZE_DISTS, default="noisy")
    f.add_argument("--fresh-samples", action="store_true")
    f.add_argument("--truth", default=None)
    f.add_argument("--out", required=True)
    f.add_argument("--diag", default=None)
    _add_rtpm(f)
    f.set_defaults(func=cmd_factorize)

    y = sub.add_parser("synth", parents=[common], help="synthetic inputs")
    y.add_argument("kind", choices=("samples", "factors", "claim", "tensor", "omega"))
    y.add_argument("--n", type=int, default=None)
    y.add_argument("--p", type=int, default=None)
    y.add_argument("--r", type=int, default=None)
    y.add_argument("--bias", type=float, default=0.0)
    y.add_argument("--sigma", default=None, help="comma-separated weights")
    y.add_argument("--noise", type=float, default=0.0, help="Frobenius norm of the added noise (tensor)")
    y.add_argument("--flatness", type=float, default=3.0)
    y.add_argument("--sparse", action="store_true", help="write samples as row,col,value triplets")
    y.add_argument("--factors", default=None, help="factors CSV to sample from (omega)")
    y.add_argument("--dist", choices=sampling.FAMILIES, default="tensorls")
    y.add_argument("--samples", type=int, default=None)
    y.add_argument("--mode", choices=sampling.MODES, default=None)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--out", required=True)
    y.add_argument("--factors-out", default=None)
    y.add_argument("--caps-out", default=None)
    y.set_defaults(func=cmd_synth)

    e = sub.add_parser("experiment", parents=[common], help="seeded figure sweeps to CSV")
    e.add_argument("name", choices=sorted(experiments.EXPERIMENTS))
    e.add_argument("--config", default=None, help="key = value config file")
    e.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_experiment)
    return p


_REQUIRED = {
    "samples": ("n", "p"),
    "factors": ("n", "r"),
    "claim": ("n",),
    "tensor": ("n", "r"),
    "omega": ("factors", "samples"),
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth":
        missing = [k for k in _REQUIRED[args.kind] if getattr(args, k) is None]
        if missing:
            parser.error(f"synth {args.kind} needs " + ", ".join("--" + k for k in missing))
    if args.threads < 0:
        parser.error("--threads must be >= 0")
    args.threads = experiments.resolve_threads(args.threads)
    try:
        args.func(args)
    except (ConvergenceError, DegenerateTensorError, NumericalError, np.linalg.LinAlgError) as exc:
        print(f"tensamp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError, MemoryError) as exc:
        print(f"tensamp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
