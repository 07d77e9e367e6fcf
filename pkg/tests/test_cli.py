"""CLI contract tests: determinism, manifests, and exit codes."""
import hashlib
import json
import subprocess
import sys

import pytest

CLI = [sys.executable, "-m", "appintent.cli"]


def run(*args: str, expect: int = 0) -> subprocess.CompletedProcess:
    proc = subprocess.run([*CLI, *args], capture_output=True, text=True)
    assert proc.returncode == expect, proc.stderr + proc.stdout
    return proc


def tree_hashes(root) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file() and not p.name.startswith("manifest_")
    }


def synth(out, **kw) -> None:
    args = ["synth", "--out", str(out), "--n-products", "4", "--n-queries", "60"]
    for key, value in kw.items():
        args += [f"--{key.replace('_', '-')}", str(value)]
    run(*args)


def test_synth_is_byte_identical_across_runs(tmp_path):
    synth(tmp_path / "a", seed=3)
    synth(tmp_path / "b", seed=3)
    assert tree_hashes(tmp_path / "a") == tree_hashes(tmp_path / "b")
    synth(tmp_path / "c", seed=4)
    assert tree_hashes(tmp_path / "a") != tree_hashes(tmp_path / "c")


def test_synth_json_output_and_manifest(tmp_path):
    out = tmp_path / "data"
    proc = subprocess.run(
        [*CLI, "synth", "--out", str(out), "--n-products", "4",
         "--n-queries", "60", "--json"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    report = json.loads(proc.stdout)
    assert report["products"] == 4
    manifest = json.loads((out / "manifest_synth.json").read_text())
    assert manifest["subcommand"] == "synth"
    assert manifest["seed"] == 0
    for path, digest in manifest["outputs"].items():
        assert len(digest) == 64, path


def test_ingest_writes_splits_and_manifest(tmp_path):
    synth(tmp_path / "data")
    out = tmp_path / "ds"
    run("ingest", "--data", str(tmp_path / "data"), "--out", str(out))
    for name in ("merged.jsonl", "train.jsonl", "validation.jsonl", "test.jsonl"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest_ingest.json").read_text())
    assert sorted(manifest["config"]["sources"]) == [
        "behavioral", "curated_docs", "ner_explicit", "product_top_queries"
    ]


def test_ingest_sources_subset(tmp_path):
    synth(tmp_path / "data")
    out = tmp_path / "ds"
    run("ingest", "--data", str(tmp_path / "data"), "--out", str(out),
        "--sources", "behavioral")
    rows = (out / "merged.jsonl").read_text().splitlines()
    assert rows
    for line in rows:
        assert json.loads(line)["source"] == "behavioral"


def test_ingest_rejects_unknown_source(tmp_path):
    synth(tmp_path / "data")
    run("ingest", "--data", str(tmp_path / "data"), "--out", str(tmp_path / "ds"),
        "--sources", "telemetry", expect=1)


def test_build_vocab(tmp_path):
    synth(tmp_path / "data")
    run("build-vocab", "--docs", str(tmp_path / "data" / "docs.jsonl"),
        "--out", str(tmp_path / "vocab.json"))
    vocab = json.loads((tmp_path / "vocab.json").read_text())
    assert vocab["tokens"][:4] == ["<pad>", "<unk>", "<mask>", "<cls>"]


def test_usage_error_exits_1(tmp_path):
    proc = subprocess.run([*CLI, "ingest", "--out", str(tmp_path / "x")],
                          capture_output=True, text=True)
    assert proc.returncode == 1


def test_data_error_exits_2(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    (data / "catalog.json").write_text('{"products": "not-a-list"}')
    proc = subprocess.run(
        [*CLI, "ingest", "--data", str(data), "--out", str(tmp_path / "ds")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert "data error" in proc.stderr
