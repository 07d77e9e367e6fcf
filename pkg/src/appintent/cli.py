"""Pipeline entry point: synth, ingest, build-vocab, pretrain, train,
evaluate, ab-report, annotate-export, serve.

Every subcommand takes all randomness from an explicit --seed, validates
inputs before work, writes a run manifest (config snapshot, artifact
hashes, wall time) atomically at the end, and exits 0 on success, 1 on
usage errors, 2 on data errors, 3 on numeric failures.
"""
from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import checkpoints, evaluation, pipeline, synth as synthmod
from .catalog import CatalogError, extract_products, load_catalog
from .classifier import (
    ClassifierConfig,
    class_forward,
    load_bundle,
    predict_products,
    save_bundle,
    train_classifier,
)
from .encoder import EncoderConfig, init_encoder, pretrain as run_pretrain
from .optim import NumericError
from .pipeline import DatasetSplit
from .tokenizer import VocabError, build_vocab, load_vocab, make_blocks, save_vocab
from .checkpoints import CheckpointError


def _write_manifest(outdir: Path, subcommand: str, config: dict, outputs: list[str],
                    seed: int | None, t0: float) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "outputs": {p: checkpoints.file_sha256(p) for p in outputs if Path(p).is_file()},
        "seed": seed,
        "wall_time_seconds": round(time.time() - t0, 3),
    }
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"manifest_{subcommand}.json"
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _emit(report: dict, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps(report))
    else:
        for key, value in report.items():
            click.echo(f"{key}: {value}")


@click.group()
def cli() -> None:
    """Query-to-product intent pipeline."""


@cli.command("synth")
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-products", type=int, default=10, show_default=True)
@click.option("--n-queries", type=int, default=800, show_default=True)
@click.option("--implicit-fraction", type=float, default=0.5, show_default=True)
@click.option("--epsilon", type=float, default=0.1, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def synth_cmd(out, seed, n_products, n_queries, implicit_fraction, epsilon, as_json):
    """Generate a synthetic catalog, corpus, click log, and query sets."""
    t0 = time.time()
    spec = synthmod.SynthSpec(
        n_products=n_products,
        n_behavioral_queries=n_queries,
        implicit_fraction=implicit_fraction,
        epsilon=epsilon,
        seed=seed,
    )
    data = synthmod.generate(spec)
    paths = synthmod.write_files(data, out)
    _write_manifest(Path(out), "synth", spec.__dict__ | {}, list(paths.values()), seed, t0)
    _emit({"queries": sum(len(v) for v in data.query_sets.values()),
           "clicks": len(data.click_log), "products": data.catalog.size}, as_json)


@cli.command("ingest")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True,
              help="directory produced by synth (or files in the same layout)")
@click.option("--out", type=click.Path(), required=True)
@click.option("--w-min", type=float, default=pipeline.DEFAULT_W_MIN, show_default=True)
@click.option("--test-fraction", type=float, default=0.10, show_default=True)
@click.option("--sources", default="behavioral,curated_docs,ner_explicit,product_top_queries",
              show_default=True, help="comma-separated subset of dataset sources to merge")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def ingest_cmd(data_dir, out, w_min, test_fraction, sources, seed, as_json):
    """Build the merged weighted dataset and train/validation/test splits."""
    t0 = time.time()
    data_dir = Path(data_dir)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    wanted = {s.strip() for s in sources.split(",") if s.strip()}
    unknown = wanted - set(pipeline.SOURCE_PRIORITY)
    if unknown:
        raise click.ClickException(f"unknown sources: {sorted(unknown)}")
    catalog = load_catalog(data_dir / "catalog.json")
    parts = []
    if "behavioral" in wanted:
        events = pipeline.read_click_log(data_dir / "clicks.jsonl")
        aggregates = pipeline.aggregate_clicks(events, catalog, w_min=w_min)
        parts.append(pipeline.build_behavioral(aggregates))
    if "curated_docs" in wanted:
        parts.append(pipeline.build_curated(pipeline.read_curated_docs(data_dir / "docs.jsonl")))
    if "ner_explicit" in wanted:
        queries = (data_dir / "queries.txt").read_text(encoding="utf-8").splitlines()
        parts.append(pipeline.build_ner_explicit(queries, catalog))
    if "product_top_queries" in wanted:
        top_product = (data_dir / "top_product.txt").read_text(encoding="utf-8").strip()
        top_queries = (data_dir / "top_queries.txt").read_text(encoding="utf-8").splitlines()
        parts.append(pipeline.build_top_queries(top_queries, top_product))
    merged = pipeline.merge_sources(*parts)
    split = pipeline.split_dataset(merged, test_fraction=test_fraction, seed=seed)
    pipeline.write_labeled(merged, outdir / "merged.jsonl")
    pipeline.write_labeled(split.train, outdir / "train.jsonl")
    pipeline.write_labeled(split.validation, outdir / "validation.jsonl")
    pipeline.write_labeled(split.test, outdir / "test.jsonl")
    outputs = [str(outdir / n) for n in ("merged.jsonl", "train.jsonl", "validation.jsonl", "test.jsonl")]
    _write_manifest(outdir, "ingest",
                    {"w_min": w_min, "test_fraction": test_fraction, "sources": sorted(wanted)},
                    outputs, seed, t0)
    _emit({"merged": len(merged), "train": len(split.train),
           "validation": len(split.validation), "test": len(split.test)}, as_json)


@cli.command("build-vocab")
@click.option("--docs", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--min-frequency", type=int, default=1, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def build_vocab_cmd(docs, out, min_frequency, as_json):
    """Build the word vocabulary from the document corpus."""
    t0 = time.time()
    corpus = [f"{t} {d}" for t, d, _ in pipeline.read_curated_docs(docs)]
    vocab = build_vocab(corpus, min_frequency=min_frequency)
    save_vocab(vocab, out)
    _write_manifest(Path(out).parent, "build-vocab", {"min_frequency": min_frequency},
                    [out], None, t0)
    _emit({"vocab_size": vocab.size}, as_json)


@cli.command("pretrain")
@click.option("--docs", type=click.Path(exists=True), required=True)
@click.option("--vocab", "vocab_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--epochs", type=int, default=8, show_default=True)
@click.option("--lr", type=float, default=3e-3, show_default=True)
@click.option("--batch-size", type=int, default=4, show_default=True)
@click.option("--d-model", type=int, default=64, show_default=True)
@click.option("--n-layers", type=int, default=2, show_default=True)
@click.option("--n-heads", type=int, default=4, show_default=True)
@click.option("--d-ff", type=int, default=256, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def pretrain_cmd(docs, vocab_path, out, epochs, lr, batch_size,
                 d_model, n_layers, n_heads, d_ff, seed, as_json):
    """Pretrain the encoder with masked language modeling on 128-token blocks."""
    t0 = time.time()
    vocab = load_vocab(vocab_path)
    corpus = [f"{t} {d}" for t, d, _ in pipeline.read_curated_docs(docs)]
    blocks = make_blocks(corpus, vocab)
    config = EncoderConfig(
        vocab_size=vocab.size, d_model=d_model, n_layers=n_layers,
        n_heads=n_heads, d_ff=d_ff, seed=seed,
    )
    state = init_encoder(config)
    state, history = run_pretrain(
        state, blocks, epochs=epochs, lr=lr, batch_size=batch_size, seed=seed
    )
    checkpoints.save_encoder(state, out, vocab_hash=checkpoints.file_sha256(vocab_path))
    _write_manifest(Path(out).parent, "pretrain",
                    {"epochs": epochs, "lr": lr, "batch_size": batch_size}, [out], seed, t0)
    _emit({"blocks": len(blocks), "vocab_size": vocab.size,
           "initial_perplexity": history[0], "final_perplexity": history[-1],
           "perplexity_history": history}, as_json)


def _read_split(data_dir: Path, seed: int) -> DatasetSplit:
    return DatasetSplit(
        train=pipeline.read_labeled(data_dir / "train.jsonl"),
        validation=pipeline.read_labeled(data_dir / "validation.jsonl"),
        test=pipeline.read_labeled(data_dir / "test.jsonl"),
        seed=seed,
    )


@cli.command("train")
@click.option("--encoder", "encoder_path", type=click.Path(exists=True), required=True)
@click.option("--vocab", "vocab_path", type=click.Path(exists=True), required=True)
@click.option("--catalog", "catalog_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True,
              help="directory with train/validation/test.jsonl from ingest")
@click.option("--out", "outdir", type=click.Path(), required=True)
@click.option("--lr", type=float, default=1e-2, show_default=True)
@click.option("--backbone-lr", type=float, default=None,
              help="unfrozen-phase backbone step size [default: lr/10]")
@click.option("--dropout", type=float, default=0.1, show_default=True)
@click.option("--freeze-epochs", type=int, default=2, show_default=True)
@click.option("--total-epochs", type=int, default=10, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--tau", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--random-backbone", is_flag=True,
              help="discard pretrained weights; reinitialize the backbone")
@click.option("--json", "as_json", is_flag=True)
def train_cmd(encoder_path, vocab_path, catalog_path, data_dir, outdir, lr, backbone_lr,
              dropout, freeze_epochs, total_epochs, batch_size, tau, seed,
              random_backbone, as_json):
    """Train the multi-label classifier head (freeze-then-unfreeze)."""
    t0 = time.time()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    catalog = load_catalog(catalog_path)
    vocab = load_vocab(vocab_path)
    vocab_hash = checkpoints.file_sha256(vocab_path)
    encoder = checkpoints.load_encoder(encoder_path, expected_vocab_hash=vocab_hash)
    if random_backbone:
        from dataclasses import replace
        encoder = init_encoder(replace(encoder.config, seed=seed + 1))
    split = _read_split(Path(data_dir), seed)
    cfg = ClassifierConfig(
        lr=lr, backbone_lr=backbone_lr, dropout=dropout, freeze_epochs=freeze_epochs,
        total_epochs=total_epochs, batch_size=batch_size, threshold=tau, seed=seed,
    )
    result = train_classifier(encoder, split, cfg, vocab, catalog)
    enc_out = outdir / "encoder_tuned.ckpt"
    clf_out = outdir / "classifier.ckpt"
    save_bundle(result, enc_out, clf_out, vocab_hash=vocab_hash,
                catalog_hash=checkpoints.file_sha256(catalog_path))
    _write_manifest(outdir, "train",
                    {"lr": lr, "backbone_lr": backbone_lr, "dropout": dropout,
                     "freeze_epochs": freeze_epochs,
                     "total_epochs": total_epochs, "tau": tau,
                     "random_backbone": random_backbone},
                    [str(enc_out), str(clf_out)], seed, t0)
    _emit({"val_f1_history": result.f1_history,
           "backbone_unchanged_during_freeze":
               result.backbone_hash_input == result.backbone_hash_after_freeze}, as_json)


def _bundle_options(fn):
    for opt in (
        click.option("--classifier", "classifier_path", type=click.Path(exists=True), required=True),
        click.option("--encoder", "encoder_path", type=click.Path(exists=True), required=True),
        click.option("--vocab", "vocab_path", type=click.Path(exists=True), required=True),
        click.option("--catalog", "catalog_path", type=click.Path(exists=True), required=True),
    ):
        fn = opt(fn)
    return fn


@cli.command("evaluate")
@_bundle_options
@click.option("--test", "test_path", type=click.Path(exists=True), required=True)
@click.option("--tau", type=float, default=0.5, show_default=True)
@click.option("--gold-min-weight", type=float, default=0.2, show_default=True,
              help="labels below this weight are treated as click noise, not gold")
@click.option("--out", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
def evaluate_cmd(classifier_path, encoder_path, vocab_path, catalog_path,
                 test_path, tau, gold_min_weight, out, as_json):
    """Micro-averaged precision/recall/accuracy/F1 on a held-out split."""
    t0 = time.time()
    catalog, vocab, clf = load_bundle(catalog_path, vocab_path, encoder_path, classifier_path)
    rows = pipeline.read_labeled(test_path)
    predictions = [class_forward(clf, lq.query, vocab) for lq in rows]
    gold = [
        {catalog.label_index[pid] for pid, w in lq.labels.items() if w >= gold_min_weight}
        for lq in rows
    ]
    report = evaluation.micro_metrics(predictions, gold, tau).to_dict()
    if out:
        evaluation.write_report(report, out)
        _write_manifest(Path(out).parent, "evaluate",
                        {"tau": tau, "gold_min_weight": gold_min_weight}, [out], None, t0)
    _emit(report, as_json)


@cli.command("ab-report")
@_bundle_options
@click.option("--queries", "queries_path", type=click.Path(exists=True), required=True,
              help="text file with one query per line")
@click.option("--tau", type=float, default=0.5, show_default=True)
@click.option("--top-k", type=int, default=3, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
def ab_report_cmd(classifier_path, encoder_path, vocab_path, catalog_path,
                  queries_path, tau, top_k, out, as_json):
    """Surfacing / null-rate comparison: gazetteer baseline vs semantic model."""
    t0 = time.time()
    catalog, vocab, clf = load_bundle(catalog_path, vocab_path, encoder_path, classifier_path)
    queries = [q for q in Path(queries_path).read_text(encoding="utf-8").splitlines() if q]

    def baseline(query: str) -> list[tuple[str, float]]:
        seen: dict[str, float] = {}
        for m in extract_products(query, catalog):
            seen.setdefault(m.product_id, 1.0)
        return sorted(seen.items())[:top_k]

    def semantic(query: str) -> list[tuple[str, float]]:
        return predict_products(clf, query, vocab, catalog, tau=tau, top_k=top_k)

    report = evaluation.surfacing_report(queries, baseline, semantic)
    if out:
        evaluation.write_report(report, out)
        _write_manifest(Path(out).parent, "ab-report", {"tau": tau, "top_k": top_k}, [out], None, t0)
    _emit(report, as_json)


@cli.command("annotate-export")
@_bundle_options
@click.option("--queries", "queries_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--tau", type=float, default=0.5, show_default=True)
@click.option("--top-k", type=int, default=3, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def annotate_export_cmd(classifier_path, encoder_path, vocab_path, catalog_path,
                        queries_path, out, tau, top_k, as_json):
    """Export a CSV of model predictions for expert annotation."""
    t0 = time.time()
    catalog, vocab, clf = load_bundle(catalog_path, vocab_path, encoder_path, classifier_path)
    queries = [q for q in Path(queries_path).read_text(encoding="utf-8").splitlines() if q]
    n = evaluation.export_annotation_sheet(
        queries, lambda q: predict_products(clf, q, vocab, catalog, tau=tau, top_k=top_k), out
    )
    _write_manifest(Path(out).parent, "annotate-export", {"tau": tau, "top_k": top_k}, [out], None, t0)
    _emit({"rows": n, "path": str(out)}, as_json)


@cli.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def serve_cmd(config_path):
    """Serve predictions over HTTP until shutdown."""
    from .serving import ServeConfig, serve

    serve(ServeConfig.from_file(os.environ.get("APPINTENT_CONFIG", config_path)))


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except NumericError as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        sys.exit(3)
    except (CatalogError, VocabError, CheckpointError, ValueError,
            KeyError, OSError, json.JSONDecodeError) as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
