"""Command-line entry point: generate | train | bench | landscape | show-config.

Settings come from built-in defaults, then an optional JSON config file with
one flat section per command, then command-line flags. The output directory
may also be set through the ``RLQAOA_OUT_DIR`` environment variable.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

from . import bench, graphs, ppo, qsim

OUT_DIR_ENV = "RLQAOA_OUT_DIR"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_PARTIAL = 4

DEFAULTS = {
    "seed": 0,
    "out_dir": "out",
    "generate": {"family": "erdos", "n": 8, "edge_prob": 0.5, "k": 3, "out": None},
    "train": {
        **{k: v for k, v in ppo.TrainConfig().to_dict().items() if k != "seed"},
        "p": 1,
        "graph": None,
        "graph_n": 8,
        "graph_edge_prob": 0.5,
        "graph_seed": 1,
        "checkpoint": "checkpoint.json",
        "metrics": "metrics.csv",
        "resume": None,
    },
    "bench": {
        "checkpoints": [],
        "depths": [1, 2, 4],
        "families": list(bench.FAMILIES),
        "optimizers": list(bench.OPTIMIZERS),
        "attempts": 10,
        "budget": 192,
        "jobs": 1,
        "max_qubits": 22,
        "report": "report.csv",
        "summary": "summary.csv",
    },
    "landscape": {"graph": None, "resolution": 65, "out": "landscape.csv"},
}

FAMILY_ALIASES = {"erdos": "erdos", "erdos_renyi": "erdos", "ladder": "ladder", "barbell": "barbell",
                  "caveman": "caveman", "complete": "complete"}


class UsageError(ValueError):
    pass


def load_config(path) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    with open(path, encoding="utf-8") as fh:
        user = json.load(fh)
    for key, val in user.items():
        if key not in cfg:
            raise UsageError(f"unknown config section {key!r}")
        if isinstance(cfg[key], dict):
            if not isinstance(val, dict):
                raise UsageError(f"config section {key!r} must be an object")
            unknown = set(val) - set(cfg[key])
            if unknown:
                raise UsageError(f"unknown keys in section {key!r}: {sorted(unknown)}")
            cfg[key].update(val)
        else:
            cfg[key] = val
    return cfg


def _apply(section: dict, args, names) -> dict:
    for name in names:
        val = getattr(args, name, None)
        if val is not None:
            section[name] = val
    return section


def _out_dir(cfg: dict, args) -> Path:
    if args.out_dir is not None:
        return Path(args.out_dir)
    if OUT_DIR_ENV in os.environ:
        return Path(os.environ[OUT_DIR_ENV])
    return Path(cfg["out_dir"])


def _resolve(out_dir: Path, name) -> Path:
    path = Path(name)
    return path if path.is_absolute() else out_dir / path


def _csv_list(text: str, cast=str) -> list:
    return [cast(t) for t in text.split(",") if t.strip()]


def make_graph(family: str, n: int, edge_prob: float = 0.5, seed: int = 0, k: int = 3) -> graphs.Graph:
    fam = FAMILY_ALIASES.get(family)
    if fam is None:
        raise UsageError(f"unknown family {family!r}; choose from {sorted(set(FAMILY_ALIASES.values()))}")
    if fam == "erdos":
        return graphs.gen_erdos_renyi(n, edge_prob, seed)
    if fam == "ladder":
        return graphs.gen_ladder(n)
    if fam == "barbell":
        return graphs.gen_barbell(n)
    if fam == "caveman":
        return graphs.gen_caveman(n, k)
    if n < 2:
        raise ValueError(f"complete graph needs m >= 2, got {n}")
    return graphs.complete_graph(n)


def cmd_generate(cfg: dict, args) -> int:
    sec = _apply(cfg["generate"], args, ("family", "n", "edge_prob", "k", "out"))
    g = make_graph(sec["family"], sec["n"], sec["edge_prob"], cfg["seed"], sec["k"])
    out = _resolve(_out_dir(cfg, args), sec["out"] or f"{g.label}.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    graphs.save_graph(g, out)
    print(f"seed={cfg['seed']} {g.label}: n={g.n} m={g.m} -> {out}")
    return EXIT_OK


def _train_config(cfg: dict) -> ppo.TrainConfig:
    sec = cfg["train"]
    names = set(ppo.TrainConfig().to_dict())
    return ppo.TrainConfig.from_dict({**{k: v for k, v in sec.items() if k in names}, "seed": cfg["seed"]})


def cmd_train(cfg: dict, args) -> int:
    sec = _apply(cfg["train"], args, (
        "epochs", "episodes_per_epoch", "horizon", "history", "actor_lr", "critic_lr", "target_kl",
        "p", "graph", "checkpoint", "metrics", "resume",
    ))
    tcfg = _train_config(cfg)
    if sec["graph"]:
        g = graphs.load_graph(sec["graph"])
    else:
        g = graphs.gen_erdos_renyi(sec["graph_n"], sec["graph_edge_prob"], sec["graph_seed"])
    out_dir = _out_dir(cfg, args)
    ck_path = _resolve(out_dir, sec["checkpoint"])
    metrics_path = _resolve(out_dir, sec["metrics"])
    ck_path.parent.mkdir(parents=True, exist_ok=True)
    metrics_path.parent.mkdir(parents=True, exist_ok=True)
    resume = ppo.load_checkpoint(sec["resume"], sec["p"], tcfg.history) if sec["resume"] else None

    with open(metrics_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"# seed={tcfg.seed}\n")
        fh.write(",".join(ppo.EpochMetrics.CSV_FIELDS) + "\n")

        def on_epoch(ck, m):
            fh.write(m.csv_row() + "\n")
            fh.flush()
            print(f"epoch {m.epoch:4d}  return {m.mean_return:+.5f}  best_f {m.best_f:.5f}  "
                  f"kl {m.mean_kl:.3g}  clip {m.clip_fraction:.3f}", flush=True)

        try:
            ck, _ = ppo.train(tcfg, g, sec["p"], resume=resume, on_epoch=on_epoch)
        except ppo.TrainingDiverged as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
    ppo.save_checkpoint(ck, ck_path)
    print(f"seed={tcfg.seed} trained {ck.epoch} epochs on {g.label} (p={ck.p}) -> {ck_path}")
    return EXIT_OK


def cmd_bench(cfg: dict, args) -> int:
    sec = cfg["bench"]
    if args.checkpoint:
        sec["checkpoints"] = args.checkpoint
    if args.depths:
        sec["depths"] = _csv_list(args.depths, int)
    if args.families:
        sec["families"] = _csv_list(args.families)
    if args.optimizers:
        sec["optimizers"] = _csv_list(args.optimizers)
    _apply(sec, args, ("attempts", "budget", "jobs", "max_qubits", "report", "summary"))
    unknown = set(sec["families"]) - set(bench.FAMILIES)
    if unknown:
        raise UsageError(f"unknown families {sorted(unknown)}; choose from {list(bench.FAMILIES)}")

    checkpoints = {}
    for path in sec["checkpoints"]:
        ck = ppo.load_checkpoint(path)
        checkpoints[ck.p] = ck
    needs_policy = any(o != "NM" for o in sec["optimizers"])
    missing = [p for p in sec["depths"] if p not in checkpoints]
    if needs_policy and missing:
        have = sorted(checkpoints) or "none"
        raise UsageError(f"no checkpoint for depth(s) {missing}; checkpoints cover p={have}")

    suite = bench.build_g_test(sec["families"])
    report = bench.run_benchmark(
        suite, checkpoints or None, depths=sec["depths"], attempts=sec["attempts"], budget=sec["budget"],
        seed=cfg["seed"], optimizers=sec["optimizers"], jobs=sec["jobs"], max_qubits=sec["max_qubits"],
    )
    out_dir = _out_dir(cfg, args)
    rep_path, sum_path = _resolve(out_dir, sec["report"]), _resolve(out_dir, sec["summary"])
    for path in (rep_path, sum_path):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(rep_path, "w", encoding="ascii", newline="\n") as fh:
        report.write_report_csv(fh)
    with open(sum_path, "w", encoding="ascii", newline="\n") as fh:
        report.write_summary_csv(fh)
    for row in report.summary():
        print(f"{row['family']:>9s} p={row['p']} {row['optimizer']:>4s}  median tau {row['median_tau']:.5f}  "
              f"gap reduction vs NM {row['gap_reduction_vs_nm']:.3g}")
    for note in report.notes:
        print(f"note: {note}", file=sys.stderr)
    print(f"seed={cfg['seed']} {len(report.rows)} rows -> {rep_path}, {sum_path}")
    return EXIT_PARTIAL if report.partial else EXIT_OK


def cmd_landscape(cfg: dict, args) -> int:
    sec = _apply(cfg["landscape"], args, ("graph", "resolution", "out"))
    if not sec["graph"]:
        raise UsageError("landscape needs a graph file")
    g = graphs.load_graph(sec["graph"])
    d = qsim.cost_diagonal(g)
    betas, gammas, f = qsim.landscape_grid(d, sec["resolution"])
    out = _resolve(_out_dir(cfg, args), sec["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"# seed={cfg['seed']}\n")
        qsim.write_landscape_csv(betas, gammas, f, fh)
    print(f"seed={cfg['seed']} {f.size} cells, max f {f.max():.6f} -> {out}")
    return EXIT_OK


def cmd_show_config(cfg: dict, args) -> int:
    json.dump(cfg, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out-dir", help=f"output directory (else ${OUT_DIR_ENV}, else config)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="rlqaoa", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a graph in the canonical text format")
    g.add_argument("--family", help="erdos | ladder | barbell | caveman | complete")
    g.add_argument("--n", type=int, help="vertices (erdos), ladder length, clique size (barbell), clique count (caveman)")
    g.add_argument("--p", dest="edge_prob", type=float, help="edge probability (erdos)")
    g.add_argument("--k", type=int, help="clique size (caveman)")
    g.add_argument("--out", help="output file")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="train the policy with PPO")
    t.add_argument("--epochs", type=int)
    t.add_argument("--episodes-per-epoch", type=int)
    t.add_argument("--horizon", type=int)
    t.add_argument("--history", type=int)
    t.add_argument("--actor-lr", type=float)
    t.add_argument("--critic-lr", type=float)
    t.add_argument("--target-kl", type=float)
    t.add_argument("--p", type=int, help="QAOA depth")
    t.add_argument("--graph", help="training graph file (default: Erdos-Renyi n=8, e_p=0.5, seed 1)")
    t.add_argument("--checkpoint", help="checkpoint output path")
    t.add_argument("--metrics", help="metrics CSV output path")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bench", parents=[common], help="compare optimizers on the test suite")
    b.add_argument("--checkpoint", action="append", help="policy checkpoint; repeat for several depths")
    b.add_argument("--depths", help="comma-separated depths, e.g. 1,2,4")
    b.add_argument("--families", help="comma-separated subset of random,community,ladder")
    b.add_argument("--optimizers", help="comma-separated subset of NM,RL,RLNM")
    b.add_argument("--attempts", type=int)
    b.add_argument("--budget", type=int)
    b.add_argument("--jobs", type=int, help="concurrent benchmark cells")
    b.add_argument("--max-qubits", type=int)
    b.add_argument("--report", help="per-attempt report CSV path")
    b.add_argument("--summary", help="summary CSV path")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("landscape", parents=[common], help="export the p=1 energy landscape")
    s.add_argument("graph", nargs="?", help="graph file")
    s.add_argument("--resolution", type=int)
    s.add_argument("--out", help="output CSV path")
    s.set_defaults(func=cmd_landscape)

    c = sub.add_parser("show-config", parents=[common], help="print the effective configuration")
    c.set_defaults(func=cmd_show_config)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        return args.func(cfg, args)
    except (UsageError, ValueError, graphs.GraphParseError, OSError) as exc:
        ap.print_usage(sys.stderr)
        print(f"{ap.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
