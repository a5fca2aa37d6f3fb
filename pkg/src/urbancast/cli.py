"""Command-line entry point: ``urbancast <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .batch import GeoBatch
from .bench.city import CityLayout, SyntheticCityConfig, generate_city
from .bench.experiment import (
    DecoderConfig,
    ExperimentConfig,
    ablate_retrieval,
    ablate_weighting,
    default_train_config,
    summarize,
    write_reports,
)
from .bench.metrics import metrics
from .bench.tasks import TEST, TRAIN, LabeledDataset, PlantedTask, plant_labels, split
from .exceptions import UrbancastError
from .geotransformer import (
    GeoTransformerRegressor,
    load_checkpoint,
    predict_batch,
    save_checkpoint,
)
from .region_store import load_bundle, save_bundle
from .retrieval import (
    CachedLanguageModelClient,
    Mechanism,
    RetrievalConfig,
    clients_from_env,
    make_context,
    retrieve_many,
)

LAYOUT_FILE = "layout.json"


def _read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def _load_task(path) -> PlantedTask:
    return PlantedTask.load(path) if path else PlantedTask()


def read_contexts(db, path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            ids = [e["id"] for e in rec["entries"]]
            out.append(make_context(db, rec["target_id"], ids, Mechanism(rec["mechanism"])))
    return out


def _labelled_batch(args):
    db = load_bundle(args.bundle)
    dataset = LabeledDataset.load(args.labels)
    batch = GeoBatch.from_contexts(db, read_contexts(db, args.ctx))
    labels = dataset.labels_for(batch.target_ids)
    part = np.array([dataset.split.get(i, TRAIN) for i in batch.target_ids.tolist()])
    return batch, labels, part


def cmd_gen_city(args):
    cfg = SyntheticCityConfig.from_json(_read_json(args.config)) if args.config else SyntheticCityConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    db, layout = generate_city(cfg)
    save_bundle(db, args.out)
    layout.save(Path(args.out) / LAYOUT_FILE)
    if args.labels_out:
        task = _load_task(args.task)
        dataset = split(plant_labels(db, layout, task, cfg.seed), args.fraction, cfg.seed)
        dataset.save(args.labels_out)
    print(f"wrote {len(db)} regions (dim {db.dim}) to {args.out}")


def cmd_retrieve(args):
    db = load_bundle(args.bundle)
    task = _load_task(args.task)
    cfg = RetrievalConfig(k=args.k, n=args.n, mechanism=Mechanism(args.mechanism),
                          lasso_lambda=args.lasso_lambda, seed=args.seed)
    client, embedder = clients_from_env({task.task_text: task.prototype, task.name: task.prototype})
    if args.cache:
        client = CachedLanguageModelClient(client, args.cache)
    contexts = retrieve_many(db, db.ids.tolist(), cfg, task.spec, client, embedder,
                             max_in_flight=args.max_in_flight)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for c in contexts:
            fh.write(json.dumps(c.to_json()) + "\n")
    print(f"wrote {len(contexts)} context sets to {out}")


def cmd_train(args):
    batch, labels, part = _labelled_batch(args)
    train_cfg = default_train_config()
    est = GeoTransformerRegressor(
        heads=args.heads, layers=args.layers, alpha=args.alpha, weighting=args.weighting,
        learning_rate=args.lr if args.lr is not None else train_cfg.learning_rate,
        epochs=args.epochs if args.epochs is not None else train_cfg.epochs,
        weight_decay=args.weight_decay if args.weight_decay is not None else train_cfg.weight_decay,
        random_state=args.seed,
    )
    is_train = part == TRAIN
    est.fit(batch[is_train], labels[is_train])
    save_checkpoint(args.model_out, est.model_, est.config_)
    print(f"trained on {int(is_train.sum())} regions, final loss {est.history_[-1]:.6g}")


def cmd_eval(args):
    batch, labels, part = _labelled_batch(args)
    model, cfg = load_checkpoint(args.model)
    report = {}
    for name in (TRAIN, TEST):
        mask = part == name
        if mask.any():
            report[name] = metrics(predict_batch(model, batch[mask], cfg), labels[mask]).to_json()
    _write_json(args.report, report)
    print(json.dumps(report))


def cmd_ablate(args):
    base = ExperimentConfig()
    if args.heads is not None:
        base = replace(base, decoder=replace(base.decoder, heads=args.heads))
    seeds = tuple(range(args.seeds))
    runner, key = {"retrieval": (ablate_retrieval, "mechanism"),
                   "weighting": (ablate_weighting, "weighting")}[args.suite]
    rows = runner(base, seeds=seeds)
    write_reports(rows, args.report)
    for name, s in summarize(rows, key).items():
        print(f"{name:<18} test_r2={s['test_r2']:.4f} precision={s['retrieval_precision']:.3f}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="urbancast")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-city", help="generate a synthetic city bundle")
    g.add_argument("--config", help="SyntheticCityConfig JSON (defaults if omitted)")
    g.add_argument("--out", required=True, help="bundle directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--task", help="PlantedTask JSON used for --labels-out")
    g.add_argument("--labels-out", help="also plant labels and write them here")
    g.add_argument("--fraction", type=float, default=0.8, help="train fraction")
    g.set_defaults(func=cmd_gen_city)

    r = sub.add_parser("retrieve", help="retrieve a context set for every region")
    r.add_argument("--bundle", required=True)
    r.add_argument("--task", help="PlantedTask JSON (name, task_text, prototype)")
    r.add_argument("--mechanism", default="task_aware", choices=[m.value for m in Mechanism])
    r.add_argument("--k", type=int, default=24)
    r.add_argument("--n", type=int, default=8)
    r.add_argument("--lasso-lambda", type=float, default=0.01)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--cache", help="prototype cache JSONL")
    r.add_argument("--max-in-flight", type=int, default=4)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_retrieve)

    for name, func, help_ in (("train", cmd_train, "train a GeoTransformer"),
                              ("eval", cmd_eval, "evaluate a checkpoint")):
        t = sub.add_parser(name, help=help_)
        t.add_argument("--bundle", required=True)
        t.add_argument("--labels", required=True)
        t.add_argument("--ctx", required=True)
        t.set_defaults(func=func)
        if name == "train":
            d = DecoderConfig()
            t.add_argument("--model-out", required=True)
            t.add_argument("--heads", type=int, default=d.heads)
            t.add_argument("--layers", type=int, default=d.layers)
            t.add_argument("--alpha", type=float, default=d.alpha)
            t.add_argument("--weighting", default=d.weighting)
            t.add_argument("--lr", type=float)
            t.add_argument("--epochs", type=int)
            t.add_argument("--weight-decay", type=float)
            t.add_argument("--seed", type=int, default=0)
        else:
            t.add_argument("--model", required=True)
            t.add_argument("--report", required=True)

    a = sub.add_parser("ablate", help="run an ablation suite over seeds")
    a.add_argument("--suite", required=True, choices=["retrieval", "weighting"])
    a.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at 0")
    a.add_argument("--heads", type=int)
    a.add_argument("--report", required=True, help="CSV path; JSON written alongside")
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (UrbancastError, ValueError, KeyError, OSError) as exc:
        print(f"urbancast {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
