"""Command-line surface: synth, train, eval, generate, diversity.

Behavior is driven by a JSON config file; explicit flags override file
values, and file values override built-in defaults. The effective config is
dumped at startup so every run is reproducible from its log alone.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import data as dat
from . import metrics as met
from . import policy as pol
from . import synth
from . import trainer as trn
from .checkpoint import CheckpointError
from .vocab import tokenize

CONFIG_KEYS = {f.name for f in dataclasses.fields(trn.TrainConfig)}


class CliError(ValueError):
    pass


def load_config(path: str | None, overrides: dict) -> trn.TrainConfig:
    values: dict = {}
    if path:
        try:
            raw = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot read config {path}: {exc}") from exc
        try:
            values = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CliError(f"config {path} line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        if not isinstance(values, dict):
            raise CliError(f"config {path} must hold a JSON object")
        for key in values:
            if key not in CONFIG_KEYS:
                raise CliError(f"config {path}: unknown key {key!r}")
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    try:
        return trn.TrainConfig(**values)
    except (trn.ConfigError, TypeError) as exc:
        raise CliError(f"invalid configuration: {exc}") from exc


def dump_effective_config(cfg: trn.TrainConfig, out_dir: Path | None) -> None:
    line = cfg.to_json()
    print(f"config {line}")
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "effective_config.json").write_text(
            json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")


def _load_grammar(path: str | None, seed: int) -> synth.GrammarSpec:
    if path is None:
        return synth.GrammarSpec(seed=seed)
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read grammar spec {path}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CliError(
            f"grammar spec {path} line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    known = {f.name for f in dataclasses.fields(synth.GrammarSpec)}
    for key in doc:
        if key not in known:
            raise CliError(f"grammar spec {path}: unknown key {key!r}")
    for key in ("nouns", "adjectives", "verbs", "templates"):
        if key in doc:
            doc[key] = tuple(doc[key])
    doc["seed"] = seed
    try:
        return synth.GrammarSpec(**doc)
    except synth.GrammarError as exc:
        raise CliError(f"grammar spec {path}: {exc}") from exc


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = _load_grammar(args.grammar, args.seed)
    train_scenes, val_scenes, vocab = synth.synth_split(spec, args.scenes, args.val_scenes)
    vocab.save(out / "vocab.txt")
    feat_dir = out / "features"
    feat_dir.mkdir(exist_ok=True)

    def write_split(name: str, scenes):
        entries = []
        for scene in scenes:
            rel = f"features/{scene.scene_id}.bin"
            dat.write_features(out / rel, scene.features)
            refs = [" ".join(vocab.decode_text(r)) for r in scene.references]
            entries.append((scene.scene_id, rel, refs))
        dat.write_manifest(out / f"{name}_manifest.json", entries, "vocab.txt",
                           spec.feature_dim)

    write_split("train", train_scenes)
    write_split("val", val_scenes)
    print(f"wrote {len(train_scenes)} train and {len(val_scenes)} val scenes to {out}")
    return 0


def _load_split(manifest: str | None, t_max: int) -> dat.LoadedDataset | None:
    if manifest is None:
        return None
    return dat.load_dataset(manifest, t_max=t_max)


def cmd_train(args) -> int:
    overrides = {
        "seed": args.seed, "epochs": args.epochs, "batch_size": args.batch_size,
        "hidden_size": args.hidden_size, "train_manifest": args.train_manifest,
        "val_manifest": args.val_manifest, "out_dir": args.out,
        "mode": args.mode, "optimizer": args.optimizer,
        "learning_rate": args.learning_rate,
    }
    cfg = load_config(args.config, overrides)
    if cfg.train_manifest is None:
        raise CliError("a train manifest is required (config train_manifest or --train-manifest)")
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    dump_effective_config(cfg, out_dir)

    train_ds = dat.load_dataset(cfg.train_manifest, t_max=cfg.t_max)
    val_ds = _load_split(cfg.val_manifest, cfg.t_max)
    val_scenes = val_ds.scenes if val_ds else []

    model = None
    start_epoch = 0
    if args.resume:
        model, extra = trn.load_model(args.resume, cfg, train_ds.vocab.size,
                                      train_ds.feature_dim)
        start_epoch = int(extra.get("epoch", -1)) + 1
        print(f"resuming from {args.resume} at epoch {start_epoch}")

    report_file = (out_dir / "reports.jsonl").open("a") if out_dir else None

    def sink(report: trn.EpochReport):
        line = report.to_json()
        print(line)
        if report_file:
            report_file.write(line + "\n")
            report_file.flush()

    try:
        trn.train(train_ds.scenes, val_scenes, train_ds.vocab, cfg,
                  start_epoch=start_epoch, model=model, report_sink=sink)
    finally:
        if report_file:
            report_file.close()
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config, {
        "beam_width": args.beam_width,
        "decode": "beam" if args.beam_width and args.beam_width > 1 else None,
    })
    manifest = {"train": cfg.train_manifest, "val": cfg.val_manifest}[args.split]
    if manifest is None:
        raise CliError(f"config does not name a manifest for split {args.split!r}")
    ds = dat.load_dataset(manifest, t_max=cfg.t_max)
    train_ds = ds if args.split == "train" else dat.load_dataset(cfg.train_manifest, t_max=cfg.t_max)
    model, _ = trn.load_model(args.checkpoint, cfg, ds.vocab.size, ds.feature_dim)
    idf = met.build_idf(trn.reference_documents(train_ds.scenes, train_ds.vocab))
    report = trn.evaluate(ds.scenes, model, ds.vocab, idf, cfg)
    record = {
        "split": args.split,
        "decode": cfg.decode,
        "beam_width": cfg.beam_width,
        "n_scenes": report.n_scenes,
        "bleu1": report.bleu[1], "bleu2": report.bleu[2],
        "bleu3": report.bleu[3], "bleu4": report.bleu[4],
        "cider": report.cider,
        "distinct1": report.distinct1, "distinct2": report.distinct2,
    }
    print(json.dumps(record, sort_keys=True))
    if args.graph_out:
        Path(args.graph_out).write_text(
            json.dumps(report.graph.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    return 0


def cmd_generate(args) -> int:
    cfg = load_config(args.config, {})
    manifest = cfg.val_manifest or cfg.train_manifest
    if args.manifest:
        manifest = args.manifest
    if manifest is None:
        raise CliError("no manifest available; pass --manifest or set one in the config")
    ds = dat.load_dataset(manifest, t_max=cfg.t_max)
    scene = next((s for s in ds.scenes if s.scene_id == args.scene_id), None)
    if scene is None:
        raise CliError(f"scene id {args.scene_id!r} not found in {manifest}")
    model, _ = trn.load_model(args.checkpoint, cfg, ds.vocab.size, ds.feature_dim)
    if args.beam_width > 1:
        tokens = pol.beam_search(model.policy, scene.features, cfg.t_max, args.beam_width)
    else:
        tokens = pol.rollout_greedy(model.policy, scene.features, cfg.t_max)
    print(" ".join(ds.vocab.decode_text(tokens)))
    return 0


def cmd_diversity(args) -> int:
    try:
        lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {args.input}: {exc}") from exc
    paragraphs = [tokenize(line) for line in lines if line.strip()]
    graph = met.diversity_graph(paragraphs)
    payload = json.dumps(graph.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curioseq",
                                     description="curiosity-driven sequence generation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--grammar", help="grammar spec JSON (defaults built in)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenes", type=int, default=200)
    p.add_argument("--val-scenes", type=int, default=50)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config")
    p.add_argument("--train-manifest")
    p.add_argument("--val-manifest")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--hidden-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--optimizer", choices=("sgd", "adam"))
    p.add_argument("--mode", choices=trn.MODES)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a split")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val"), default="val")
    p.add_argument("--beam-width", type=int)
    p.add_argument("--graph-out", help="write the diversity graph JSON here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("generate", help="decode one scene")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene-id", required=True)
    p.add_argument("--manifest")
    p.add_argument("--beam-width", type=int, default=1)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("diversity", help="export a diversity graph from text")
    p.add_argument("--input", required=True, help="one paragraph per line")
    p.add_argument("--output")
    p.set_defaults(fn=cmd_diversity)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CliError, dat.DatasetError, trn.ConfigError, trn.TrainingAborted,
            CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
