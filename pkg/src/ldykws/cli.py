"""Command-line front door: extract, train, eval, sweeps, count, gradcheck, bench.

Exit codes: 0 success, 1 data/runtime error with a message on stderr,
2 usage error (bad flags or config).
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import DataError, LdykwsError
from .backbone import BackboneParams, backbone_backward, backbone_forward, cross_entropy
from .complexity import (bench, count_params, dyconv_oracle,
                         ldyconv_cost_breakdown, table1_costs)
from .evalkit import noise_sweep, training_rate_sweep
from .features import load_wav, mfcc, write_feature_cache
from .ldyconv import LdyParams, ldy_backward, ldy_forward
from .numeric import finite_difference_gradient, relative_error
from . import report
from .training import (Model, TrainConfig, build_training_sources, evaluate,
                       load_checkpoint, save_checkpoint, train)

try:
    import tomllib
except ModuleNotFoundError:  # python 3.10
    tomllib = None


def load_config(path):
    if path is None:
        return TrainConfig()
    try:
        with open(path, "rb") as fh:
            if path.endswith(".toml"):
                if tomllib is None:
                    raise DataError("TOML configs need python >= 3.11; use JSON")
                raw = tomllib.load(fh)
            else:
                raw = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    try:
        return TrainConfig.from_dict(raw)
    except DataError as exc:
        raise UsageError(str(exc)) from exc


class UsageError(Exception):
    pass


def cmd_extract(args):
    os.makedirs(args.out, exist_ok=True)
    n = 0
    for root, _, files in os.walk(args.infile):
        for name in sorted(files):
            if not name.endswith(".wav"):
                continue
            clip = load_wav(os.path.join(root, name), downmix=args.downmix)
            fm = mfcc(clip)
            rel = os.path.relpath(os.path.join(root, name), args.infile)
            out_path = os.path.join(args.out, rel.replace(os.sep, "__") + ".ldyf")
            write_feature_cache(out_path, fm)
            n += 1
    if n == 0:
        raise DataError(f"no WAV files under {args.infile}")
    print(f"extracted {n} feature maps to {args.out}")
    return 0


def cmd_train(args):
    cfg = load_config(args.config)
    if args.data:
        cfg = dataclasses.replace(cfg, data_dir=args.data)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)

    def progress(it, lr, loss, val_acc):
        acc_text = "n/a" if val_acc is None else f"{val_acc:.3f}"
        print(f"iter {it:6d}  lr {lr:.2e}  loss {loss:.4f}  val_acc {acc_text}")

    result = train(cfg, progress=progress)
    save_checkpoint(args.out, result)
    csv_path = os.path.splitext(args.out)[0] + "_metrics.csv"
    rows = [{"iter": m[0], "lr": m[1], "loss": m[2], "val_acc": m[3]}
            for m in result.metrics]
    report.write_csv(csv_path, rows, ["iter", "lr", "loss", "val_acc"])
    fig = report.plot_metrics(csv_path, result.metrics)
    print(f"checkpoint: {args.out}\nmetrics: {csv_path}\nfigure: {fig}")
    return 0


def cmd_eval(args):
    result, _ = load_checkpoint(args.ckpt)
    cfg = dataclasses.replace(result.config, data_dir=args.data)
    sources = build_training_sources(cfg)
    subset = sources.get(args.split) or sources["testing"]
    acc, confusion = evaluate(result.model, subset, len(cfg.classes),
                              keep_c0=cfg.keep_c0)
    print(f"accuracy: {acc:.4f}  ({len(subset)} clips)")
    print("confusion (rows=true, cols=predicted):")
    names = cfg.classes
    width = max(len(n) for n in names)
    print(" " * (width + 1) + " ".join(f"{n[:6]:>6}" for n in names))
    for i, name in enumerate(names):
        print(f"{name:>{width}} " + " ".join(f"{c:6d}" for c in confusion[i]))
    return 0


def cmd_noise_sweep(args):
    result, _ = load_checkpoint(args.ckpt)
    cfg = result.config
    if args.data:
        cfg = dataclasses.replace(cfg, data_dir=args.data)
    sources = build_training_sources(cfg)
    noise_sets = {}
    for d in args.noise.split(","):
        clips = [load_wav(os.path.join(d, f)).samples
                 for f in sorted(os.listdir(d)) if f.endswith(".wav")]
        if not clips:
            raise DataError(f"no WAV files in noise directory {d}")
        noise_sets[os.path.basename(os.path.normpath(d))] = clips
    snrs = [float(s) for s in args.snrs.split(",")]
    rows = noise_sweep(result.model, sources["testing"][: args.max_clips],
                       noise_sets, snrs, len(cfg.classes),
                       keep_c0=cfg.keep_c0, seed=args.seed)
    report.write_csv(args.out, rows, ["noise_set", "snr_db", "accuracy", "n_clips"])
    fig = report.plot_noise_sweep(args.out, rows)
    for r in rows:
        print(f"{r['noise_set']:>12} {str(r['snr_db']):>5} {r['accuracy']:.4f}")
    print(f"table: {args.out}\nfigure: {fig}")
    return 0


def cmd_rate_sweep(args):
    cfg = load_config(args.config)
    rates = [float(r) for r in args.rates.split(",")]
    test_sources = build_training_sources(cfg)["testing"]
    rows = training_rate_sweep(cfg, rates, test_sources=test_sources)
    report.write_csv(args.out, rows, ["training_rate", "iters", "accuracy"])
    fig = report.plot_rate_sweep(args.out, rows)
    for r in rows:
        print(f"rate {r['training_rate']:.2f}  iters {r['iters']}  "
              f"accuracy {r['accuracy']:.4f}")
    print(f"table: {args.out}\nfigure: {fig}")
    return 0


def cmd_count(args):
    K, F, T = 9, 40, 98
    items = ldyconv_cost_breakdown(K=K, F=F, T=T)
    rows = [{"component": name, "params": c.params, "mults": c.mults,
             "adds": c.adds, "flops": c.flops, "aux_space": c.aux_space}
            for name, c in items.items()]
    enumerated = count_params(LdyParams.init_zero(F))
    total = items["total"]
    t1 = table1_costs(K, F, T * F)
    print(f"front-end parameters (exact enumeration): {enumerated}")
    print(f"front-end flops at T={T}, F={F} (frozen convention): {total.flops}")
    print(f"closed-form K(F+1) parameter figure (kernel paths only): "
          f"{t1['ldyconv'].params}")
    print(f"closed-form patch-dynamic parameters K^2: {t1['dyconv'].params}")
    if args.out:
        report.write_csv(args.out, rows,
                         ["component", "params", "mults", "adds", "flops",
                          "aux_space"])
        fig = report.plot_costs(args.out, rows)
        print(f"table: {args.out}\nfigure: {fig}")
    else:
        print("component,params,mults,adds,flops,aux_space")
        for r in rows:
            print(",".join(str(r[k]) for k in
                           ("component", "params", "mults", "adds", "flops",
                            "aux_space")))
    return 0


def gradcheck_report(seeds, tol=1e-4):
    """Max finite-difference relative error per block, over several seeds."""
    worst = {"frontend": 0.0, "frontend_input": 0.0,
             "backbone": 0.0, "backbone_input": 0.0}
    T, F, C = 8, 5, 4
    for seed in seeds:
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1, 1, (T, F))
        W = rng.uniform(-1, 1, (T, F))
        p = LdyParams.init_random(rng, n_freq=F)
        _, cache = ldy_forward(x, p)
        dx, grads = ldy_backward(cache, W)
        for name, t in p.named_tensors().items():
            orig = t.copy()

            def f(v, t=t, orig=orig):
                t[...] = v
                val = float(np.sum(W * ldy_forward(x, p)[0]))
                t[...] = orig
                return val

            err = relative_error(grads[name], finite_difference_gradient(f, orig))
            worst["frontend"] = max(worst["frontend"], err)
        fd = finite_difference_gradient(
            lambda v: float(np.sum(W * ldy_forward(v, p)[0])), x)
        worst["frontend_input"] = max(worst["frontend_input"],
                                      relative_error(dx, fd))

        # A random linear functional of the logits keeps every gradient at a
        # checkable magnitude; a saturated softmax would push some gradients
        # below what central differences can resolve.
        bb = BackboneParams.init_random(rng, n_freq=F, channels=C, n_blocks=2)
        V = rng.uniform(-1, 1, bb.n_classes)
        logits, cache = backbone_forward(x, bb)
        dx, grads = backbone_backward(cache, V)

        def bb_loss(xv):
            lg, _ = backbone_forward(xv, bb)
            return float(lg @ V)

        for name, t in bb.named_tensors().items():
            orig = t.copy()

            def f(v, t=t, orig=orig):
                t[...] = v
                val = bb_loss(x)
                t[...] = orig
                return val

            err = relative_error(grads[name], finite_difference_gradient(f, orig))
            worst["backbone"] = max(worst["backbone"], err)
        worst["backbone_input"] = max(
            worst["backbone_input"],
            relative_error(dx, finite_difference_gradient(bb_loss, x)))
    passed = all(v < tol for v in worst.values())
    return worst, passed


def cmd_gradcheck(args):
    seeds = list(range(args.seed, args.seed + 5))
    worst, passed = gradcheck_report(seeds)
    for name, err in worst.items():
        print(f"{name:16s} max relative error {err:.3e}")
    print("PASS" if passed else "FAIL", f"(tolerance 1e-4, seeds {seeds})")
    return 0 if passed else 1


def cmd_bench(args):
    rng = np.random.default_rng(0)
    T, F = 98, 40
    p = LdyParams.init_random(np.random.default_rng(0), n_freq=F)
    rows = []
    stats = bench(lambda x: ldy_forward(x, p),
                  lambda: rng.uniform(-1, 1, (T, F)), args.reps)
    rows.append({"model": "two-branch", **{k: stats[k] for k in
                                           ("median_s", "iqr_s", "n")}})
    stats = bench(lambda x: dyconv_oracle(x)[0],
                  lambda: rng.uniform(-1, 1, (T, F)), args.reps)
    rows.append({"model": "patch-dynamic", **{k: stats[k] for k in
                                              ("median_s", "iqr_s", "n")}})
    report.write_csv(args.out, rows, ["model", "median_s", "iqr_s", "n"])
    fig = report.plot_bench(args.out, rows)
    for r in rows:
        print(f"{r['model']:>14}  median {r['median_s']:.6f}s  "
              f"iqr {r['iqr_s']:.6f}s")
    print(f"table: {args.out}\nfigure: {fig}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ldykws",
        description="Dynamic-filter keyword spotting: features, training, "
                    "evaluation, and cost accounting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="batch MFCC extraction to cache files")
    p.add_argument("--in", dest="infile", required=True, help="WAV directory")
    p.add_argument("--out", required=True, help="cache output directory")
    p.add_argument("--downmix", action="store_true",
                   help="average stereo channels instead of rejecting")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="JSON or TOML config file")
    p.add_argument("--data", help="dataset directory (overrides config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy + confusion matrix")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="testing",
                   choices=["training", "validation", "testing"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("noise-sweep", help="accuracy under mixed-in noise")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", help="dataset directory (overrides config)")
    p.add_argument("--noise", required=True,
                   help="comma-separated noise WAV directories")
    p.add_argument("--snrs", default="20,15,10,5,0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-clips", type=int, default=10**9)
    p.add_argument("--out", default="noise_sweep.csv")
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("rate-sweep", help="accuracy vs training-data fraction")
    p.add_argument("--config", required=True)
    p.add_argument("--rates", default="0.75,0.5,0.25,0.10,0.05")
    p.add_argument("--out", default="rate_sweep.csv")
    p.set_defaults(func=cmd_rate_sweep)

    p = sub.add_parser("count", help="parameter and flop accounting")
    p.add_argument("--config", help="unused knobs reserved; defaults K=9,F=40,T=98")
    p.add_argument("--out", help="CSV output path (figure written beside it)")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="forward-pass wall-clock comparison")
    p.add_argument("--config")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except LdykwsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
