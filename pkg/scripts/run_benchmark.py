"""Paired search runs on generated learning problems: cap = true target length
versus no cap. Writes one CSV row per problem and prints the totals.

    python3 scripts/run_benchmark.py --n-lps 20 --timeout-s 120 --out results/pruning.csv
"""
import argparse
import dataclasses
import sys

from cliplearn.experiments import PruningExperimentConfig, pruning_experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0],
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    for f in dataclasses.fields(PruningExperimentConfig):
        kind = int if f.name == "max_nodes" else type(f.default)
        parser.add_argument("--" + f.name.replace("_", "-"), type=kind, default=f.default)
    parser.add_argument("--out", default="-", help="CSV path or - for stdout")
    args = parser.parse_args()
    cfg = PruningExperimentConfig(**{f.name: getattr(args, f.name)
                                     for f in dataclasses.fields(PruningExperimentConfig)})

    res = pruning_experiment(cfg)
    lines = ["lp,target_length,target,capped_f1,capped_nodes,capped_runtime_s,capped_stop,"
             "uncapped_f1,uncapped_nodes,uncapped_runtime_s,uncapped_stop,uncapped_concept"]
    for i, row in enumerate(res.rows):
        c, u = row.capped, row.uncapped
        lines.append(f'{i},{row.lp.target.length},"{row.lp.target.key}",{c.f1:.4f},{c.nodes_expanded},'
                     f'{c.runtime_s:.3f},{c.stop_reason},{u.f1:.4f},{u.nodes_expanded},{u.runtime_s:.3f},'
                     f'{u.stop_reason},"{u.best_concept.key}"')
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(f"total runtime capped={res.capped_runtime:.1f}s uncapped={res.uncapped_runtime:.1f}s",
          file=sys.stderr)


if __name__ == "__main__":
    main()
