"""Versioned binary checkpoint: JSON header plus named float64 tensors.

Layout (all integers little-endian):

    8 bytes   magic b"TRAITCKP"
    u32       format version (currently 1)
    u64       header length in bytes
    ...       header: canonical JSON (sorted keys, no whitespace) holding
              format_version, model kind, dims, the vocabulary (characters
              as code points with ids, or word strings with ids) and the
              training config
    u32       tensor count
    per tensor:
        u16       name length, then UTF-8 name
        u8        ndim, then u64 per dimension
        ...       row-major float64 little-endian payload

save(load(path)) is byte-identical; any truncation or corruption raises
CheckpointError.
"""

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .data import CharVocab, WordVocab
from .model import ModelKind, Regressor, build_params

MAGIC = b"TRAITCKP"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


@dataclass
class Checkpoint:
    kind: ModelKind
    dims: dict
    vocab: object  # CharVocab or WordVocab
    config: dict   # training config as plain key/value pairs
    tensors: "OrderedDict[str, np.ndarray]"

    def to_regressor(self) -> Regressor:
        return Regressor(kind=self.kind, params=build_params(self.kind, self.tensors),
                         vocab=self.vocab)


def _vocab_payload(vocab) -> dict:
    if isinstance(vocab, CharVocab):
        return {"kind": "char", "entries": [[cp, i] for cp, i in vocab.entries()]}
    if isinstance(vocab, WordVocab):
        return {"kind": "word", "entries": [[w, i] for w, i in vocab.entries()]}
    raise CheckpointError(f"unsupported vocabulary type {type(vocab).__name__}")


def _vocab_from_payload(payload: dict):
    if payload["kind"] == "char":
        return CharVocab.from_entries((cp, i) for cp, i in payload["entries"])
    if payload["kind"] == "word":
        return WordVocab.from_entries((w, i) for w, i in payload["entries"])
    raise CheckpointError(f"unknown vocabulary kind {payload['kind']!r}")


def save(ckpt: Checkpoint, path) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "model_kind": ckpt.kind.value,
        "dims": ckpt.dims,
        "vocab": _vocab_payload(ckpt.vocab),
        "train_config": ckpt.config,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":"),
                              ensure_ascii=True).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(struct.pack("<I", len(ckpt.tensors)))
        for name, arr in ckpt.tensors.items():
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint: expected {n} bytes for {what}, got {len(buf)}")
    return buf


def load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC), "magic") != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (header_len,) = struct.unpack("<Q", _read_exact(fh, 8, "header length"))
        try:
            header = json.loads(_read_exact(fh, header_len, "header"))
        except json.JSONDecodeError as e:
            raise CheckpointError(f"corrupt checkpoint header: {e}") from None
        (n_tensors,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors = OrderedDict()
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "tensor name length"))
            name = _read_exact(fh, name_len, "tensor name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "tensor rank"))
            shape = tuple(
                struct.unpack("<Q", _read_exact(fh, 8, f"shape of {name}"))[0]
                for _ in range(ndim)
            )
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            payload = _read_exact(fh, count * 8, f"payload of {name}")
            tensors[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("trailing bytes after checkpoint payload")
    try:
        kind = ModelKind(header["model_kind"])
        vocab = _vocab_from_payload(header["vocab"])
        dims = header["dims"]
        config = header["train_config"]
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from None
    return Checkpoint(kind=kind, dims=dims, vocab=vocab, config=config, tensors=tensors)
