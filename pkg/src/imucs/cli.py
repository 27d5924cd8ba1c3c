"""Command-line entry point. Every subcommand reads an optional flat config
file (``--config``) and ``--set key=value`` overrides on top of it."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiment import (METHOD_MODEL, METHODS, Experiment, dump_config, export_recovered, load_config,
                         run_bound_diagnostic, run_latency, run_sweep, srec_check)
from .signals import write_frame_table


def _config(args):
    cfg = load_config(args.config, args.set)
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SystemExit(f"cannot create output directory {out}: {exc}")
    return cfg


def _print(obj):
    json.dump(obj, sys.stdout, indent=2, default=str)
    sys.stdout.write("\n")


def cmd_generate_data(args):
    cfg = _config(args)
    exp = Experiment(cfg)
    out = Path(args.out or Path(cfg.output_dir) / "frames")
    train = write_frame_table(out.with_name(out.name + "_train.csv"), exp.dataset.train,
                              header=f"synthetic train split, data_seed={cfg.data_seed}")
    test = write_frame_table(out.with_name(out.name + "_test.csv"), exp.dataset.test,
                             header=f"synthetic test split, data_seed={cfg.data_seed}")
    _print({"train": str(train), "test": str(test), "n": exp.n,
            "train_frames": len(exp.dataset.train), "test_frames": len(exp.dataset.test),
            "source_stats": exp.stats.to_dict(), "sigma_N": exp.sigma_N})


def cmd_train(args):
    cfg = _config(args)
    exp = Experiment(cfg)
    kind = METHOD_MODEL.get(args.method)
    if kind is None:
        raise SystemExit(f"{args.method} has no trained receiver")
    model = exp.model(kind, args.m, args.seed)
    path = Path(args.out) if args.out else exp.model_path(kind, args.m, args.seed)
    if args.out or not path.exists():
        model.save(path)
    _print({"model": str(path), "method": kind, "m": args.m, "seed": args.seed,
            "final_loss": model.training_trace[-1] if model.training_trace else None})


def cmd_evaluate(args):
    cfg = _config(args)
    exp = Experiment(cfg)
    _print(exp.run_row(args.method, args.m, args.seed))


def cmd_sweep(args):
    cfg = _config(args)
    res = run_sweep(cfg)
    bad = [r for r in res.rows if r["status"] != "ok"]
    _print({"rows": len(res.rows), "errors": len(bad), "csv": str(Path(cfg.output_dir) / "sweep.csv")})
    return 1 if bad else 0


def cmd_latency(args):
    cfg = _config(args)
    res = run_latency(cfg, args.batches)
    bad = [r for r in res.rows if r["status"] != "ok"]
    _print({"rows": len(res.rows), "errors": len(bad), "csv": str(Path(cfg.output_dir) / "latency.csv")})
    return 1 if bad else 0


def cmd_srec_check(args):
    cfg = _config(args)
    exp = Experiment(cfg)
    cert = srec_check(exp, args.m, args.seed, pairs=args.pairs, kappa=args.kappa,
                      sampler=args.sampler, sample_seed=args.sample_seed, sparsity=args.sparsity)
    out = Path(args.out or Path(cfg.output_dir) / f"srec_m{args.m}_s{args.seed}.json")
    out.write_text(cert.to_json(), encoding="utf-8")
    _print({"certificate": str(out), "gamma_hat": cert.gamma_hat, "pairs_tested": cert.pairs_tested})


def cmd_export(args):
    cfg = _config(args)
    exp = Experiment(cfg)
    out = args.out or Path(cfg.output_dir) / f"recovered_{args.method}_m{args.m}.csv"
    path = export_recovered(exp, args.method, args.m, args.seed, args.start, args.count, out)
    _print({"frames": str(path), "count": min(args.count, len(exp.dataset.test) - args.start)})


def cmd_bound_diagnostic(args):
    cfg = _config(args)
    exp = Experiment(cfg)
    rep = run_bound_diagnostic(exp, args.m, args.seed, frames=args.frames, epsilon=args.epsilon)
    out = Path(args.out or Path(cfg.output_dir) / f"bound_m{args.m}_s{args.seed}.json")
    out.write_text(json.dumps(rep, indent=2), encoding="utf-8")
    _print({"report": str(out), "fraction_holding": rep["fraction_holding"]})


def cmd_show_config(args):
    sys.stdout.write(dump_config(load_config(args.config, args.set)))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="imucs", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    def point(sp, method=True):
        if method:
            sp.add_argument("--method", choices=METHODS, default="cs-vae")
        sp.add_argument("--m", type=int, default=168)
        sp.add_argument("--seed", type=int, default=0)

    sp = add("generate-data", cmd_generate_data, "write the synthetic train/test frame tables")
    sp.add_argument("--out", help="path prefix; _train.csv and _test.csv are appended")
    sp = add("train", cmd_train, "train (or load from cache) one generative receiver")
    point(sp)
    sp.add_argument("--out")
    sp = add("evaluate", cmd_evaluate, "evaluate one (method, m, seed) point")
    point(sp)
    add("sweep", cmd_sweep, "MSE versus m over all methods and seeds")
    sp = add("latency", cmd_latency, "decode latency versus batch size")
    sp.add_argument("--batches", type=int, nargs="+")
    sp = add("srec-check", cmd_srec_check, "Monte-Carlo S-REC certificate for a matrix")
    point(sp, method=False)
    sp.add_argument("--pairs", type=int, default=1000)
    sp.add_argument("--kappa", type=float, default=0.0)
    sp.add_argument("--sampler", choices=("decoder", "frames", "sparse"), default="decoder")
    sp.add_argument("--sample-seed", type=int, default=0)
    sp.add_argument("--sparsity", type=int, default=10)
    sp.add_argument("--out")
    sp = add("export", cmd_export, "decode a test slice and write it as a frame table")
    point(sp)
    sp.add_argument("--start", type=int, default=0)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--out")
    sp = add("bound-diagnostic", cmd_bound_diagnostic, "check the recovery error bound per frame")
    point(sp, method=False)
    sp.add_argument("--frames", type=int, default=100)
    sp.add_argument("--epsilon", type=float, default=0.0)
    sp.add_argument("--out")
    add("show-config", cmd_show_config, "print the resolved configuration")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("numba").setLevel(logging.WARNING)
    try:
        return args.func(args) or 0
    except (KeyError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
