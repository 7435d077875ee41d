"""Command-line experiment runner.

    localprop train --config xor.ini [--workers N] [--seed S] [--out DIR]
    localprop gradcheck --config xor.ini
    localprop infer --weights out/weights.lpw --data points.csv [--out DIR]

Exit codes: 0 ok, 1 config/input error, 2 divergence, 3 check failure.
Log verbosity comes from ``LP_LOG_LEVEL`` (error, info or debug).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import core, oracles, weightsfile
from .architectures import build_graph
from .data import DataError, Dataset, read_csv_matrix
from .experiment import ConfigError, ExperimentConfig, load_config
from .optimizer import DivergenceError, infer, train
from .parallel import parallel_train

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("localprop")


def _setup_logging():
    level = os.environ.get("LP_LOG_LEVEL", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if level not in levels:
        log.error("LP_LOG_LEVEL=%r not recognised; using 'error'", level)


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.values["train.seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.values["run.workers"] = args.workers
    if getattr(args, "out", None) is not None:
        cfg.values["output.dir"] = args.out
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _load(args)
    spec, data, tc = cfg.network_spec(), cfg.dataset(), cfg.train_config()
    graph = build_graph(spec)
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / cfg["output.metrics"]
    workers = cfg["run.workers"]
    with open(metrics_path, "w") as mf:
        def emit(m):
            mf.write(json.dumps(m.as_record()) + "\n")

        try:
            if workers > 1:
                run = parallel_train(graph, data, tc, workers, callback=emit)
            else:
                run = train(graph, data, tc, callback=emit)
        except DivergenceError as err:
            print(f"divergence: {err}", file=sys.stderr)
            if err.where:
                print(f"offending term: {err.where}", file=sys.stderr)
            return EXIT_DIVERGED
        rec = run.final.as_record()
        rec["final"] = True
        mf.write(json.dumps(rec) + "\n")
    weightsfile.save(out / cfg["output.weights"], spec, run.weights)
    f = run.final
    print(f"{run.stop_reason} after {run.iterations} iterations: loss={f.loss_term:.6g} "
          f"max|G|={f.max_abs_residual:.3g} accuracy={f.train_accuracy}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _load(args)
    spec = cfg.network_spec()
    data = cfg.dataset()
    gc = cfg.section("gradcheck")
    n = min(gc["n_examples"], len(data))
    if n < 1:
        raise ConfigError("gradcheck.n_examples", "dataset is empty")
    sub = data.subset(slice(0, n))
    graph, states, weights, _ = oracles.random_instance(spec, n, gc["seed"], data=sub)
    g, reg = cfg.constraint(), cfg.reg()
    report = oracles.check_gradients(graph, states, weights, sub, g, reg, rtol=gc["rtol"],
                                     atol=gc["atol"], margin=gc["margin"],
                                     corrupt=gc["corrupt"])
    print(f"finite differences: {report.n_checked} coordinates checked, "
          f"{report.n_excluded} excluded near kinks; max rel error {report.max_rel_error:.3e}, "
          f"max abs error (small entries) {report.max_abs_error_small:.3e}")
    ok = report.ok
    for label, a, num in report.failures[:10]:
        print(f"  mismatch at {label}: analytic {a:.10g} vs numeric {num:.10g}")
    if spec.arch == "mlp" and g.kind == "identity" and spec.loss in core.LOSSES:
        disc = oracles.recover_backprop_check(weights, spec, sub)
        print(f"backprop recovery discrepancy: {disc:.3e} (tolerance {gc['recover_tol']:.0e})")
        ok = ok and disc <= gc["recover_tol"]
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_infer(args) -> int:
    try:
        spec, weights = weightsfile.load(args.weights)
    except (OSError, weightsfile.WeightsFileError) as err:
        raise ConfigError("--weights", str(err))
    try:
        m = read_csv_matrix(args.data)
    except (OSError, DataError) as err:
        raise ConfigError("--data", str(err))
    cols = list(args.input_cols) if args.input_cols else None
    width = spec.widths[0] * (spec.seq_len if spec.recurrent else 1)
    if m.size == 0:
        X = np.zeros((0, width))
    else:
        X = m[:, cols] if cols else m
        if X.shape[1] != width:
            raise ConfigError("--data", f"rows have {X.shape[1]} input values, network expects {width}")
    if spec.recurrent:
        X = X.reshape(len(X), spec.seq_len, spec.widths[0])
    try:
        out = infer(weights, spec, X)
    except ValueError as err:
        raise ConfigError("--weights", str(err))
    if out.ndim == 3:
        out = out[:, -1, :]
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "predictions.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"out_{k}" for k in range(spec.out_width)] + ["label"])
        for row in out:
            label = int(row[0] > 0.5) if spec.out_width == 1 else int(np.argmax(row))
            w.writerow([repr(float(v)) for v in row] + [label])
    print(f"wrote {len(out)} predictions to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="localprop",
                                description="Train constraint-based networks by local propagation.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run a training experiment")
    t.add_argument("--config", required=True, metavar="PATH")
    t.add_argument("--workers", type=int, metavar="N")
    t.add_argument("--seed", type=int, metavar="S")
    t.add_argument("--out", metavar="DIR")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("gradcheck", help="finite-difference and backprop-recovery checks")
    g.add_argument("--config", required=True, metavar="PATH")
    g.add_argument("--seed", type=int, metavar="S")
    g.set_defaults(func=cmd_gradcheck)

    i = sub.add_parser("infer", help="forward-pass predictions from a weights file")
    i.add_argument("--weights", required=True, metavar="PATH")
    i.add_argument("--data", required=True, metavar="PATH")
    i.add_argument("--input-cols", type=lambda s: [int(c) for c in s.split(",")],
                   metavar="I,J,..", help="0-based input columns (default: every column)")
    i.add_argument("--out", metavar="DIR")
    i.set_defaults(func=cmd_infer)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
