"""Train GRU and MLP length predictors on a synthetic KB and compare them with
the distribution-aware random baseline.

    python3 scripts/run_length_prediction.py --count 1000 --epochs 100 --out results/
"""
import argparse
import dataclasses
import json
from pathlib import Path

from cliplearn.experiments import LengthExperimentConfig, length_prediction_experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0],
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    for f in dataclasses.fields(LengthExperimentConfig):
        parser.add_argument("--" + f.name.replace("_", "-"), type=type(f.default), default=f.default)
    parser.add_argument("--out", default=None, help="directory for training-curve CSVs")
    args = parser.parse_args()
    cfg = LengthExperimentConfig(**{f.name: getattr(args, f.name)
                                    for f in dataclasses.fields(LengthExperimentConfig)})

    res = length_prediction_experiment(cfg)
    print(json.dumps({"config": dataclasses.asdict(cfg), "split": res.n_items, "labels": res.label_counts,
                      "macro_f1": res.macro_f1, "accuracy": res.accuracy,
                      "best_epoch": {k: r.best_epoch for k, r in res.reports.items()},
                      "max_train_acc": {k: max(r.train_acc, default=0.0) for k, r in res.reports.items()},
                      "runtime_s": round(res.runtime_s, 1)}, indent=2))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for arch, report in res.reports.items():
            (out / f"curves_{arch}.csv").write_text(report.to_csv())


if __name__ == "__main__":
    main()
