"""Deterministic checkpoint container for encoder and classifier states.

Layout: 4-byte magic, 8-byte little-endian header length, UTF-8 JSON
header, then tensor bytes concatenated in header order. Writing the same
state twice produces byte-identical files, which the freeze-contract and
reproducibility checks rely on (zip-based formats embed timestamps).
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig, EncoderState

MAGIC = b"AIC1"


class CheckpointError(ValueError):
    pass


def _pack(meta: dict, params: dict[str, np.ndarray]) -> bytes:
    tensors = []
    blobs = []
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype=np.float64)
        tensors.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps({"meta": meta, "tensors": tensors}, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(blobs)


def _unpack(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<Q", data[4:12])
    header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    params: dict[str, np.ndarray] = {}
    offset = 12 + hlen
    for spec in header["tensors"]:
        n = int(np.prod(spec["shape"])) if spec["shape"] else 1
        arr = np.frombuffer(data[offset : offset + 8 * n], dtype=np.float64).copy()
        params[spec["name"]] = arr.reshape(spec["shape"])
        offset += 8 * n
    return header["meta"], params


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def encoder_bytes(state: EncoderState, vocab_hash: str = "") -> bytes:
    meta = {"kind": "encoder", "config": asdict(state.config), "vocab_hash": vocab_hash}
    return _pack(meta, state.params)


def save_encoder(state: EncoderState, path: str | Path, vocab_hash: str = "") -> None:
    Path(path).write_bytes(encoder_bytes(state, vocab_hash))


def load_encoder(path: str | Path, expected_vocab_hash: str | None = None) -> EncoderState:
    meta, params = _unpack(Path(path).read_bytes())
    if meta.get("kind") != "encoder":
        raise CheckpointError(f"expected encoder checkpoint, got {meta.get('kind')!r}")
    if expected_vocab_hash is not None and meta["vocab_hash"] != expected_vocab_hash:
        raise CheckpointError("vocab hash mismatch: checkpoint was built for a different vocab")
    return EncoderState(config=EncoderConfig(**meta["config"]), params=params)


def classifier_bytes(config_dict: dict, params: dict[str, np.ndarray],
                     encoder_hash: str, catalog_hash: str) -> bytes:
    meta = {
        "kind": "classifier",
        "config": config_dict,
        "encoder_hash": encoder_hash,
        "catalog_hash": catalog_hash,
    }
    return _pack(meta, params)


def save_classifier(config_dict: dict, params: dict[str, np.ndarray], path: str | Path,
                    encoder_hash: str, catalog_hash: str) -> None:
    Path(path).write_bytes(classifier_bytes(config_dict, params, encoder_hash, catalog_hash))


def load_classifier(path: str | Path, expected_encoder_hash: str | None = None,
                    expected_catalog_hash: str | None = None):
    meta, params = _unpack(Path(path).read_bytes())
    if meta.get("kind") != "classifier":
        raise CheckpointError(f"expected classifier checkpoint, got {meta.get('kind')!r}")
    if expected_encoder_hash is not None and meta["encoder_hash"] != expected_encoder_hash:
        raise CheckpointError("encoder hash mismatch")
    if expected_catalog_hash is not None and meta["catalog_hash"] != expected_catalog_hash:
        raise CheckpointError("catalog hash mismatch")
    return meta, params
