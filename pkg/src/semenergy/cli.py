"""Command-line interface: gen-data, train, score, threshold, eval."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics, plots
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import Dataset, SyntheticSpec, generate, load_dataset_csv, load_logit_csv, save_dataset_csv
from .errors import ConfigError
from .network import forward_batch
from .scoring import (
    SCORER_TAGS,
    ScoreRow,
    free_energy_batch,
    load_score_csv,
    save_score_csv,
    semantic_energy_batch,
    softmax_score_batch,
    threshold_at_tpr,
)
from .train import TrainConfig, default_config_for, log_line, train

# Which scorers a checkpoint trained in a given mode may serve.
MODE_SCORERS = {
    "softmax_baseline": ("softmax_baseline", "vanilla"),
    "energy_baseline": ("vanilla", "softmax_baseline"),
    "se": ("semantic", "vanilla", "softmax_baseline"),
    "mlse": ("multilayer_semantic", "semantic", "vanilla", "softmax_baseline"),
    "cfl_mlse": ("multilayer_semantic", "semantic", "vanilla", "softmax_baseline"),
}


def _load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _spec_from_dict(doc: dict) -> SyntheticSpec:
    allowed = set(SyntheticSpec.__dataclass_fields__)
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown dataset spec keys: {sorted(unknown)}")
    return SyntheticSpec(**doc)


def cmd_gen_data(args) -> None:
    doc = _load_json(args.config) if args.config else {}
    if args.seed is not None:
        doc["seed"] = args.seed
    dataset = generate(_spec_from_dict(doc))
    save_dataset_csv(dataset, args.out)


def cmd_train(args) -> None:
    dataset = load_dataset_csv(args.in_path)
    if args.config:
        config = TrainConfig.from_dict(_load_json(args.config))
    else:
        config = default_config_for(dataset)
    if args.seed is not None:
        doc = config.to_dict()
        doc["seed"] = args.seed
        doc["network"]["seed"] = args.seed
        config = TrainConfig.from_dict(doc)
    result = train(config, dataset, log_fn=lambda entry: print(log_line(entry)))
    save_checkpoint(Checkpoint(config=result.config.to_dict(), state=result.state,
                               cluster_means=result.means), args.out)


def _detect_input_kind(path) -> str:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = next(csv.reader(fh), None)
    if header and header[:4] == ["id", "split", "dist", "label"]:
        return "dataset"
    if header and header[:3] == ["id", "dist", "label"]:
        return "logits"
    raise ConfigError(f"unrecognized input header in {path}: {header}")


def _score_values(scorer: str, ckpt: Checkpoint, logits: np.ndarray,
                  hidden: list[np.ndarray] | None, t: float) -> np.ndarray:
    if scorer == "vanilla":
        return free_energy_batch(logits, t)
    if scorer == "softmax_baseline":
        return softmax_score_batch(logits, t)
    if ckpt.cluster_means is None:
        raise ConfigError(f"scorer {scorer!r} needs cluster means, "
                          "but the checkpoint holds none")
    values = semantic_energy_batch(logits, ckpt.cluster_means, t)
    if scorer == "semantic":
        return values
    if hidden is None:
        raise ConfigError("multilayer scoring needs network activations; "
                          "logit files only support final-layer scorers")
    cfg = ckpt.config.get("layer_energy", {})
    for idx, weight in zip(cfg.get("layer_indices", ()), cfg.get("layer_weights", ())):
        values = values + weight * free_energy_batch(hidden[idx], t)
    return values


def cmd_score(args) -> None:
    ckpt = load_checkpoint(args.checkpoint)
    mode = ckpt.config.get("mode", "softmax_baseline")
    scorer = args.scorer or MODE_SCORERS[mode][0]
    if scorer not in SCORER_TAGS:
        raise ConfigError(f"unknown scorer {scorer!r}; choose from {SCORER_TAGS}")
    if scorer not in MODE_SCORERS.get(mode, ()):
        raise ConfigError(f"scorer {scorer!r} is not valid for a {mode!r} checkpoint")
    t = float(ckpt.config.get("temperature", 1.0))

    kind = _detect_input_kind(args.in_path)
    if kind == "dataset":
        dataset = load_dataset_csv(args.in_path)
        chosen = dataset.samples if args.split == "all" else dataset.select(split=args.split)
        if not chosen:
            raise ValueError(f"no samples in split {args.split!r}")
        features = np.array([s.features for s in chosen])
        trace = forward_batch(ckpt.state, features)
        values = _score_values(scorer, ckpt, trace.logits, trace.hidden, t)
        rows = [ScoreRow(s.sample_id, s.label, s.dist, scorer, float(-v))
                for s, v in zip(chosen, values)]
    else:
        parsed = load_logit_csv(args.in_path)
        if not parsed:
            raise ValueError("logit file holds no rows")
        logits = np.array([row[1] for row in parsed])
        values = _score_values(scorer, ckpt, logits, None, t)
        rows = [ScoreRow(sid, label, dist, scorer, float(-v))
                for (sid, _, label, dist), v in zip(parsed, values)]
    save_score_csv(rows, args.out)


def _rows_to_samples(rows) -> tuple[list[metrics.ScoredSample], str]:
    scorers = {r.scorer for r in rows}
    if len(scorers) > 1:
        raise ValueError(f"score file mixes scorer tags: {sorted(scorers)}")
    samples = [metrics.ScoredSample(r.score, r.split == "in") for r in rows]
    return samples, scorers.pop()


def cmd_threshold(args) -> None:
    rows = load_score_csv(args.in_path)
    in_rows = [r for r in rows if r.split == "in"]
    if not in_rows:
        raise ValueError("score file holds no in-distribution rows")
    _, scorer = _rows_to_samples(in_rows)
    tau = threshold_at_tpr([r.score for r in in_rows], args.tpr)
    doc = {"tau": tau, "target_tpr": args.tpr, "scorer": scorer}
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def cmd_eval(args) -> None:
    rows = load_score_csv(args.in_path)
    samples, scorer = _rows_to_samples(rows)
    report = metrics.evaluate(samples, target_tpr=args.tpr, bins=args.bins,
                              aupr_positive=args.aupr_positive)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())

    in_scores = [s.score for s in samples if s.is_in]
    out_scores = [s.score for s in samples if not s.is_in]
    centers, h_in, h_out = metrics.score_histograms(in_scores, out_scores, args.bins)
    hist_path = out.with_name(out.stem + "_hist.csv")
    with open(hist_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_center", "h_in", "h_out"])
        for c, a, b in zip(centers, h_in, h_out):
            writer.writerow([format(c, ".17g"), format(a, ".17g"), format(b, ".17g")])
    plots.save_score_histogram(centers, h_in, h_out,
                               out.with_name(out.stem + "_hist.png"), scorer)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semenergy",
        description="Train, score, and evaluate energy-based out-of-distribution detectors.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p.add_argument("--config", help="JSON file with dataset spec overrides")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a detector and write a checkpoint")
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--in", dest="in_path", required=True, help="dataset CSV")
    p.add_argument("--out", required=True, help="checkpoint JSON path")
    p.add_argument("--seed", type=int, default=None, help="override config and network seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score samples with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="in_path", required=True, help="dataset CSV or logit CSV")
    p.add_argument("--scorer", choices=SCORER_TAGS, default=None,
                   help="defaults to the checkpoint mode's own scorer")
    p.add_argument("--split", choices=("train", "test", "all"), default="test",
                   help="dataset split to score (dataset CSV input only)")
    p.add_argument("--out", required=True, help="score CSV path")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("threshold", help="calibrate a detection threshold from scores")
    p.add_argument("--in", dest="in_path", required=True, help="score CSV")
    p.add_argument("--tpr", type=float, default=0.95)
    p.add_argument("--out", required=True, help="threshold JSON path")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("eval", help="evaluate a score file and export report + figures")
    p.add_argument("--in", dest="in_path", required=True, help="score CSV")
    p.add_argument("--tpr", type=float, default=0.95)
    p.add_argument("--bins", type=int, default=metrics.DEFAULT_OVERLAP_BINS)
    p.add_argument("--aupr-positive", choices=("in", "out"), default="in")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
        return 0
    except Exception as exc:  # surface a single machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
