"""Command-line front end: ``cliplearn <command> [flags]``.

Every command exits 0 on success. On failure it prints a single line
``error: <Kind>: <message>`` to stderr and exits 1 (2 for usage errors).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
from pathlib import Path

from cliplearn.kb import KBError, kb_stats, load_kb_file

log = logging.getLogger("cliplearn")


class CLIError(Exception):
    pass


def _seed_default() -> int:
    raw = os.environ.get("CLIP_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CLIError(f"CLIP_SEED must be an integer, got {raw!r}") from None


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def _refinement_cfg(args):
    from cliplearn.refinement import RefinementConfig
    return RefinementConfig(k=args.k, construct_frac=args.construct_frac,
                            max_length=args.max_length, rng_seed=args.seed,
                            leaf_fallback=args.leaf_fallback)


def _clip_cfg(args):
    from cliplearn.search import ClipConfig, parse_cap
    mode, k = parse_cap(args.cap)
    return ClipConfig(timeout_s=args.timeout, cap_mode=mode, cap=k, cap_slack=args.cap_slack,
                      max_nodes=args.max_nodes, n_total=args.n_examples,
                      under_cap_fallback=args.under_cap_fallback)


def _load_predictor(args):
    if args.cap != "predicted":
        return None, None
    if not args.model or not args.emb:
        raise CLIError("--cap predicted needs --model and --emb")
    from cliplearn.embed import load_embeddings
    from cliplearn.lengthpred import load_model
    return load_model(Path(args.model).read_bytes()), load_embeddings(Path(args.emb).read_text())


# --- commands -----------------------------------------------------------------

def cmd_stats(args) -> None:
    kb = load_kb_file(args.kb)
    stats = kb_stats(kb)
    lines = [f"{k},{v}" for k, v in stats.items()]
    lines += [f"diagnostic,{d}" for d in kb.diagnostics] if args.verbose else []
    _write(args.out, "\n".join(lines) + "\n")


def cmd_gen_data(args) -> None:
    from cliplearn.lpgen import (default_n_examples, generate_training_concepts, label_concepts,
                                 split_dataset, write_dataset)
    kb = load_kb_file(args.kb)
    rng = random.Random(args.seed)
    concepts = generate_training_concepts(kb, args.count, _refinement_cfg(args), rng)
    n_total = args.n_examples or default_n_examples(kb)
    data = label_concepts(concepts, kb, n_total, rng)
    split = split_dataset(data, rng)
    out = Path(args.out or "data")
    out.mkdir(parents=True, exist_ok=True)
    for name in ("train", "val", "test"):
        write_dataset(getattr(split, name), str(out / f"{name}.jsonl"))
    print(json.dumps({"concepts": len(data), "train": len(split.train), "val": len(split.val),
                      "test": len(split.test), "n_examples": n_total}))


def cmd_train_embeddings(args) -> None:
    from cliplearn.embed import embed_kb, save_embeddings
    kb = load_kb_file(args.kb)
    table = embed_kb(kb, dim=args.dim, epochs=args.epochs if args.epochs is not None else 100,
                     lr=args.lr if args.lr is not None else 0.05,
                     batch_size=args.batch, seed=args.seed)
    _write(args.out or "embeddings.csv", save_embeddings(table))
    print(json.dumps({"entities": len(table.entity_vectors), "dim": table.dim,
                      "final_loss": table.losses[-1] if table.losses else None}))


def cmd_train_predictor(args) -> None:
    from cliplearn.embed import load_embeddings
    from cliplearn.lengthpred import PredictorConfig, evaluate, random_baseline, train_predictor
    from cliplearn.lpgen import DatasetSplit, read_dataset
    data_dir = Path(args.data)
    split = DatasetSplit(*(read_dataset(str(data_dir / f"{n}.jsonl")) for n in ("train", "val", "test")))
    table = load_embeddings(Path(args.emb).read_text())
    out = args.out or "model.bin"
    if args.arch == "random":
        model = random_baseline([it.label for it in split.train], random.Random(args.seed))
        summary = {"arch": "random", **(evaluate(model, split.test, table) if split.test else {})}
    else:
        cfg = PredictorConfig(arch=args.arch, d=table.dim, lr=args.lr if args.lr is not None else 0.003,
                              batch_size=args.batch, epochs=args.epochs if args.epochs is not None else 50,
                              seed=args.seed, num_classes=args.max_length + 1)
        model, report = train_predictor(split, table, cfg)
        _write(args.report or out + ".csv", report.to_csv())
        summary = {"arch": args.arch, "best_epoch": report.best_epoch,
                   "accuracy": report.test_accuracy, "macro_f1": report.test_macro_f1}
    Path(out).write_bytes(model.to_bytes())
    print(json.dumps(summary))


def cmd_gen_lps(args) -> None:
    from cliplearn.lpgen import generate_random_lps, write_lps
    kb = load_kb_file(args.kb)
    lps = generate_random_lps(kb, args.count, args.max_length, None, random.Random(args.seed))
    out = args.out or "lps.jsonl"
    write_lps(lps, out)
    print(json.dumps({"lps": len(lps), "out": out}))


def cmd_learn(args) -> None:
    from cliplearn.lpgen import read_lps
    from cliplearn.search import clip_learn
    kb = load_kb_file(args.kb)
    lps = read_lps(args.lp)
    if len(lps) != 1:
        raise CLIError(f"{args.lp}: expected exactly one learning problem, found {len(lps)}")
    model, table = _load_predictor(args)
    res = clip_learn(kb, lps[0], _clip_cfg(args), model, table, _refinement_cfg(args),
                     random.Random(args.seed))
    out = res.to_json()
    if args.no_timing:
        out["runtime_s"] = 0.0
    _write(args.out, json.dumps(out, sort_keys=True) + "\n")


def cmd_benchmark(args) -> None:
    from cliplearn.lpgen import generate_random_lps, read_lps
    from cliplearn.search import benchmark, benchmark_csv
    kb = load_kb_file(args.kb)
    rng = random.Random(args.seed)
    lps = read_lps(args.lps) if args.lps else generate_random_lps(kb, args.count, args.max_length, None, rng)
    model, table = _load_predictor(args)
    results, agg = benchmark(kb, lps, _clip_cfg(args), model, table, _refinement_cfg(args), rng)
    _write(args.out, benchmark_csv(results, agg, timing=not args.no_timing))


def cmd_selftest(args) -> None:
    from cliplearn.selftest import run_selftest
    failures = run_selftest(print)
    if failures:
        raise CLIError(f"{failures} self-test check(s) failed")


COMMANDS = {
    "stats": (cmd_stats, "print knowledge-base counts"),
    "gen-data": (cmd_gen_data, "generate labeled concepts and split them into train/val/test"),
    "train-embeddings": (cmd_train_embeddings, "train entity embeddings on the KB triples"),
    "train-predictor": (cmd_train_predictor, "train a length predictor (gru, mlp or random)"),
    "gen-lps": (cmd_gen_lps, "generate random learning problems"),
    "learn": (cmd_learn, "solve one learning problem"),
    "benchmark": (cmd_benchmark, "solve many learning problems and report aggregates"),
    "selftest": (cmd_selftest, "run the toy KB through every module"),
}

# flags accepted in a --config file, with their defaults
DEFAULTS = {
    "kb": None, "seed": None, "out": None, "dim": 40, "lr": None, "epochs": None, "batch": 512,
    "n_examples": None, "arch": "gru", "cap": "predicted", "cap_slack": 0, "timeout": 120.0,
    "count": 100, "max_length": 15, "k": 5, "construct_frac": 0.8, "model": None, "emb": None,
    "data": "data", "lp": None, "lps": None, "report": None, "max_nodes": None,
    "leaf_fallback": False, "under_cap_fallback": False, "no_timing": False, "verbose": False,
}


def read_config(path: str) -> dict:
    """``key=value`` lines; ``#`` starts a comment; keys use flag names."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in DEFAULTS or key == "config":
            raise CLIError(f"{path}:{lineno}: unknown key {key!r}")
        default = DEFAULTS[key]
        try:
            if isinstance(default, bool):
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError
                out[key] = value.lower() in ("true", "1", "yes")
            elif isinstance(default, int) or key in ("seed", "epochs", "n_examples", "max_nodes"):
                out[key] = int(value)
            elif isinstance(default, float) or key == "lr":
                out[key] = float(value)
            else:
                out[key] = value
        except ValueError:
            raise CLIError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS,
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    g = common.add_argument_group("common")
    g.add_argument("--config", help="key=value file; flags override it")
    g.add_argument("--kb", help="knowledge base in N-Triples form")
    g.add_argument("--seed", type=int, help="random seed (default: $CLIP_SEED or 0)")
    g.add_argument("--out", help="output file or directory (default: stdout where sensible)")
    g.add_argument("--dim", type=int, help="embedding dimension (default 40)")
    g.add_argument("--lr", type=float, help="learning rate (default 0.05 embeddings, 0.003 predictor)")
    g.add_argument("--epochs", type=int, help="training epochs (default 100 embeddings, 50 predictor)")
    g.add_argument("--batch", type=int, help="mini-batch size (default 512)")
    g.add_argument("--n-examples", dest="n_examples", type=int,
                   help="examples per concept (default min(1000, |individuals|/2))")
    g.add_argument("--arch", choices=("gru", "mlp", "random"), help="predictor (default gru)")
    g.add_argument("--cap", help="predicted | none | fixed:<k> (default predicted)")
    g.add_argument("--cap-slack", dest="cap_slack", type=int, help="added to predicted caps (default 0)")
    g.add_argument("--timeout", type=float, help="seconds per learning problem (default 120)")
    g.add_argument("--count", type=int, help="concepts or learning problems to generate (default 100)")
    g.add_argument("--max-length", dest="max_length", type=int, help="maximum concept length (default 15)")
    g.add_argument("--k", type=int, help="filler sample size in atomic refinement (default 5)")
    g.add_argument("--construct-frac", dest="construct_frac", type=float,
                   help="fraction of constructs sampled in atomic refinement (default 0.8)")
    g.add_argument("--model", help="predictor file from train-predictor")
    g.add_argument("--emb", help="embedding CSV from train-embeddings")
    g.add_argument("--data", help="directory with train/val/test.jsonl (default data)")
    g.add_argument("--lp", help="learning problem JSON file")
    g.add_argument("--lps", help="learning problems JSON-lines file (benchmark)")
    g.add_argument("--report", help="training curve CSV (default <out>.csv)")
    g.add_argument("--max-nodes", dest="max_nodes", type=int, help="expansion budget per problem")
    g.add_argument("--leaf-fallback", dest="leaf_fallback", action="store_true",
                   help="refine leaf atomics A to A and E")
    g.add_argument("--under-cap-fallback", dest="under_cap_fallback", action="store_true",
                   help="raise a predicted cap by 2 once if the frontier runs dry")
    g.add_argument("--no-timing", dest="no_timing", action="store_true",
                   help="write runtimes as 0 so outputs are byte-identical across runs")
    g.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="cliplearn", description="Concept learning with length prediction.")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


_REQUIRED = {
    "stats": ("kb",), "gen-data": ("kb",), "train-embeddings": ("kb",),
    "train-predictor": ("emb",), "gen-lps": ("kb",), "learn": ("kb", "lp"), "benchmark": ("kb",),
}


def resolve_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    ns = parser.parse_args(argv)
    merged = dict(DEFAULTS)
    flags = vars(ns)
    if "config" in flags:
        merged.update(read_config(flags["config"]))
    merged.update({k: v for k, v in flags.items() if k != "config"})
    if merged["seed"] is None:
        merged["seed"] = _seed_default()
    missing = [k for k in _REQUIRED.get(ns.command, ()) if not merged.get(k)]
    if missing:
        parser.error(f"{ns.command}: missing --{missing[0].replace('_', '-')}")
    return argparse.Namespace(**merged)


def main(argv=None) -> int:
    try:
        args = resolve_args(argv)
    except CLIError as exc:
        print(f"error: CLIError: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command][0](args)
    except (KBError, CLIError, ValueError, KeyError, OSError, RuntimeError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
