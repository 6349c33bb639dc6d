"""Command-line pipeline driver.

Configuration comes from a single JSON file (--config) with per-flag
overrides (flags win); every run echoes the effective configuration to
``config.resolved.json`` next to its outputs.

Exit codes: 0 success, 2 bad config/usage, 3 missing input,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys

EXIT_BAD_CONFIG = 2
EXIT_MISSING_INPUT = 3
EXIT_NUMERICAL = 4

DEFAULTS = {
    "seed": 0,
    "arch": {"kind": "gcn", "hidden": 256, "prop_depth": 2},
    "expert": {"num_experts": 20, "total_epochs": 2400,
               "snapshot_interval": 100, "lr": 0.1, "weight_decay": 0.0},
    "condense": {"ratio": 0.026, "p": 1200, "q": 500, "zeta": 0.5,
                 "meta_lr": 1e-4, "outer_steps": 1000, "score_every": 50,
                 "max_start_epoch": None, "outer_optimizer": "adam",
                 "segment_batch": 1},
    "gntk": {"layers": 2, "fc_per_layer": 1, "aggregation": "normalized",
             "ridge_scale": 1e-6, "val_cap": 2000},
    "eval": {"repeats": 10, "optimizer": "adam", "lr": 0.01,
             "weight_decay": 5e-4, "epochs": 600, "eval_every": 1,
             "arch": "gcn", "induced": False},
    "synth": {"num_nodes": 300, "num_classes": 3, "num_features": 32,
              "p_intra": 0.08, "p_inter": 0.005, "train_per_class": 20},
    "baseline": {"method": "random"},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, extra: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k not in out:
            raise ConfigError(f"unknown config key: {path}{k}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {path}{k} must be a section")
            out[k] = _merge(out[k], v, path=f"{path}{k}.")
        else:
            out[k] = v
    return out


def load_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        with open(args.config) as f:
            try:
                file_cfg = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad config JSON: {exc}") from exc
        cfg = _merge(cfg, file_cfg)
    for dest, value in vars(args).items():
        if value is None or "__" not in dest:
            continue
        section, key = dest.split("__", 1)
        cfg[section][key] = value
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def write_resolved(cfg: dict, out_dir: str) -> None:
    from .data import atomic_write_text
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(out_dir, "config.resolved.json"),
                      json.dumps(cfg, indent=1, sort_keys=True))


def _opt(parser, name, section, key, type_):
    parser.add_argument(name, dest=f"{section}__{key}", type=type_, default=None,
                        help=f"override {section}.{key} "
                             f"(default {DEFAULTS[section][key]})")


def _require(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


def _arch_for(ds, cfg, kind=None):
    from . import nn
    a = cfg["arch"]
    return nn.GnnArch(kind=kind or a["kind"], in_dim=ds.num_features,
                      out_dim=ds.num_classes, hidden=a["hidden"],
                      prop_depth=a["prop_depth"])


def _train_cfg(cfg, seed):
    from . import nn
    e = cfg["eval"]
    return nn.TrainConfig(optimizer=e["optimizer"], lr=e["lr"],
                          weight_decay=e["weight_decay"], epochs=e["epochs"],
                          seed=seed)


def cmd_synth(args):
    from .data import save_dataset
    from .synth import make_sbm_fixture
    cfg = load_config(args)
    s = cfg["synth"]
    ds = make_sbm_fixture(num_nodes=s["num_nodes"], num_classes=s["num_classes"],
                          num_features=s["num_features"], p_intra=s["p_intra"],
                          p_inter=s["p_inter"],
                          train_per_class=s["train_per_class"],
                          seed=cfg["seed"], name="sbm")
    save_dataset(ds, args.out)
    write_resolved(cfg, args.out)
    print(f"wrote {ds.num_nodes}-node fixture with {ds.num_edges} edges to {args.out}")
    return 0


def cmd_experts(args):
    from .data import load_dataset
    from .trajectory import ExpertConfig, save_bank, train_experts
    cfg = load_config(args)
    ds = load_dataset(_require(args.data, "dataset directory"))
    e = cfg["expert"]
    ecfg = ExpertConfig(num_experts=e["num_experts"],
                        total_epochs=e["total_epochs"],
                        snapshot_interval=e["snapshot_interval"], lr=e["lr"],
                        weight_decay=e["weight_decay"], seed_base=cfg["seed"])
    bank = train_experts(ds, _arch_for(ds, cfg), ecfg)
    save_bank(bank, args.out)
    write_resolved(cfg, os.path.dirname(os.path.abspath(args.out)))
    print(f"trained {bank.num_experts} experts; "
          f"mean final train acc {bank.final_train_acc.mean():.3f}; "
          f"bank -> {args.out}")
    return 0


def cmd_condense(args):
    from . import gntk
    from .condenser import MetaMatchConfig, condense, save_condensed
    from .data import atomic_write_text, load_dataset
    from .trajectory import load_bank
    cfg = load_config(args)
    ds = load_dataset(_require(args.data, "dataset directory"))
    bank = load_bank(_require(args.bank, "trajectory bank"))
    c = cfg["condense"]
    mcfg = MetaMatchConfig(p=c["p"], q=c["q"], zeta=c["zeta"],
                           meta_lr=c["meta_lr"], outer_steps=c["outer_steps"],
                           max_start_epoch=c["max_start_epoch"],
                           seed=cfg["seed"], score_every=c["score_every"],
                           outer_optimizer=c["outer_optimizer"],
                           segment_batch=c["segment_batch"])
    g = cfg["gntk"]
    gcfg = gntk.GntkConfig(layers=g["layers"], fc_per_layer=g["fc_per_layer"],
                           aggregation=g["aggregation"],
                           ridge_scale=g["ridge_scale"], val_cap=g["val_cap"])
    result = condense(ds, bank, c["ratio"], mcfg, gntk_cfg=gcfg)
    save_condensed(result.best, args.out)
    atomic_write_text(os.path.join(args.out, "log.csv"), result.log_csv())
    write_resolved(cfg, args.out)
    print(f"selected checkpoint at step {result.best.step} "
          f"(score {min(result.scores):.6f}) -> {args.out}")
    return 0


def cmd_score(args):
    from . import gntk
    from .condenser import load_condensed
    from .data import atomic_write_text, load_dataset
    cfg = load_config(args)
    ds = load_dataset(_require(args.data, "dataset directory"))
    g = cfg["gntk"]
    gcfg = gntk.GntkConfig(layers=g["layers"], fc_per_layer=g["fc_per_layer"],
                           aggregation=g["aggregation"],
                           ridge_scale=g["ridge_scale"], val_cap=g["val_cap"])
    scorer = gntk.GnfScorer(ds, gcfg)
    lines = ["condensed,gnf_score"]
    for path in args.cond:
        cond = load_condensed(_require(path, "condensed directory"))
        lines.append(f"{path},{scorer.score(cond.features, cond.labels):.8f}")
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print("\n".join(lines[1:]))
    return 0


def cmd_eval(args):
    from .condenser import load_condensed
    from .data import load_dataset
    from .evaluator import EvalConfig, cross_arch_eval, emit_report, eval_condensed
    cfg = load_config(args)
    ds = load_dataset(_require(args.data, "dataset directory"))
    cond = load_condensed(_require(args.cond, "condensed directory"))
    ecfg = EvalConfig(repeats=cfg["eval"]["repeats"],
                      train=_train_cfg(cfg, cfg["seed"]),
                      eval_every=cfg["eval"]["eval_every"])
    if args.cross:
        reports = cross_arch_eval(ds, cond, cfg=ecfg,
                                  hidden=cfg["arch"]["hidden"],
                                  ratio=cond.ratio)
    else:
        arch = _arch_for(ds, cfg, kind=cfg["eval"]["arch"])
        reports = [eval_condensed(ds, cond, arch, ecfg, ratio=cond.ratio)]
    emit_report(reports, args.out, fmt=args.format)
    write_resolved(cfg, os.path.dirname(os.path.abspath(args.out)))
    for r in reports:
        print(f"{r.dataset} {r.method} {r.architecture}: "
              f"{100 * r.mean:.1f} +- {100 * r.std:.1f}")
    return 0


def cmd_baseline(args):
    import numpy as np

    from .condenser import plan_labels
    from .data import load_dataset
    from .evaluator import (EvalConfig, coreset_dataset, coreset_select,
                            emit_report, eval_condensed)
    cfg = load_config(args)
    ds = load_dataset(_require(args.data, "dataset directory"))
    method = cfg["baseline"]["method"]
    counts = plan_labels(ds, cfg["condense"]["ratio"])
    rng = np.random.default_rng(cfg["seed"])
    idx = coreset_select(ds, method, counts, rng)
    small = coreset_dataset(ds, idx, induced=args.induced_subgraph)
    arch = _arch_for(ds, cfg, kind=cfg["eval"]["arch"])
    ecfg = EvalConfig(repeats=cfg["eval"]["repeats"],
                      train=_train_cfg(cfg, cfg["seed"]),
                      eval_every=cfg["eval"]["eval_every"])
    report = eval_condensed(ds, small, arch, ecfg, method=method,
                            induced=args.induced_subgraph,
                            ratio=cfg["condense"]["ratio"])
    emit_report([report], args.out, fmt=args.format)
    write_resolved(cfg, os.path.dirname(os.path.abspath(args.out)))
    print(f"{method}: {100 * report.mean:.1f} +- {100 * report.std:.1f}")
    return 0


def cmd_report(args):
    from .data import atomic_write_text
    rows = []
    header = None
    for path in args.inputs:
        with open(_require(path, "report csv")) as f:
            lines = [l.strip() for l in f if l.strip()]
        if header is None:
            header = lines[0].split(",")
        rows.extend(l.split(",") for l in lines[1:])
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"merged {len(rows)} rows -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="graphcondense",
        description="Structure-free graph condensation pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None,
                        help=f"base RNG seed (default {DEFAULTS['seed']})")

    sp = sub.add_parser("synth", help="generate the SBM test fixture")
    common(sp)
    sp.add_argument("--out", required=True, help="output dataset directory")
    for key in DEFAULTS["synth"]:
        t = float if isinstance(DEFAULTS["synth"][key], float) else int
        _opt(sp, f"--{key.replace('_', '-')}", "synth", key, t)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("experts", help="train the expert trajectory bank")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="bank file")
    _opt(sp, "--experts", "expert", "num_experts", int)
    _opt(sp, "--epochs", "expert", "total_epochs", int)
    _opt(sp, "--interval", "expert", "snapshot_interval", int)
    _opt(sp, "--expert-lr", "expert", "lr", float)
    _opt(sp, "--arch-kind", "arch", "kind", str)
    _opt(sp, "--hidden", "arch", "hidden", int)
    sp.set_defaults(func=cmd_experts)

    sp = sub.add_parser("condense", help="synthesize condensed graph-free data")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--bank", required=True)
    sp.add_argument("--out", required=True, help="condensed data directory")
    _opt(sp, "--ratio", "condense", "ratio", float)
    _opt(sp, "--p", "condense", "p", int)
    _opt(sp, "--q", "condense", "q", int)
    _opt(sp, "--zeta", "condense", "zeta", float)
    _opt(sp, "--meta-lr", "condense", "meta_lr", float)
    _opt(sp, "--outer-steps", "condense", "outer_steps", int)
    _opt(sp, "--score-every", "condense", "score_every", int)
    _opt(sp, "--max-start-epoch", "condense", "max_start_epoch", int)
    _opt(sp, "--val-cap", "gntk", "val_cap", int)
    sp.set_defaults(func=cmd_condense)

    sp = sub.add_parser("score", help="feature-quality score of condensed data")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--cond", nargs="+", required=True)
    sp.add_argument("--out", required=True, help="output CSV")
    _opt(sp, "--val-cap", "gntk", "val_cap", int)
    _opt(sp, "--aggregation", "gntk", "aggregation", str)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("eval", help="train-from-scratch evaluation")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--cond", required=True)
    sp.add_argument("--out", required=True, help="report file")
    sp.add_argument("--cross", action="store_true",
                    help="evaluate MLP, GCN and SGC plus an average row")
    sp.add_argument("--format", choices=("csv", "markdown"), default="csv")
    _opt(sp, "--repeats", "eval", "repeats", int)
    _opt(sp, "--epochs", "eval", "epochs", int)
    _opt(sp, "--eval-arch", "eval", "arch", str)
    _opt(sp, "--eval-every", "eval", "eval_every", int)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("baseline", help="coreset baseline evaluation")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--induced-subgraph", action="store_true",
                    help="evaluate the coreset with its induced structure")
    sp.add_argument("--format", choices=("csv", "markdown"), default="csv")
    _opt(sp, "--method", "baseline", "method", str)
    _opt(sp, "--ratio", "condense", "ratio", float)
    _opt(sp, "--repeats", "eval", "repeats", int)
    _opt(sp, "--epochs", "eval", "epochs", int)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("report", help="merge report CSVs into markdown")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report)

    return p


def main(argv=None) -> int:
    threads = os.environ.get("GRAPHCONDENSE_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except (FloatingPointError, ArithmeticError, RuntimeError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
