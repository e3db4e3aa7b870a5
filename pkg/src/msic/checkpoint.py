"""Binary checkpoint: header, config snapshot, vocabulary digests, tensor table.

All integers are little-endian. Layout::

    b"MSICCKPT" u32 version
    u32 n, n bytes UTF-8 config text (``section.key = value`` lines)
    u32 count, then per vocabulary: u32 n, name, u64 FNV-1a digest
    u32 count, then per tensor: u32 n, name, u32 rank, rank x u32 dims, f32 values
"""
from __future__ import annotations

import os
import struct
from typing import BinaryIO, Mapping

import numpy as np

from .config import Settings, parse_settings
from .data import EVENT_KINDS, Vocabulary
from .errors import ParseError, ValidationError
from .model import MSIC, CorpusStats

MAGIC = b"MSICCKPT"
VERSION = 1
WORDS_SUFFIX = ".words"


def _write_str(fh: BinaryIO, text: str) -> None:
    raw = text.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise ParseError("truncated checkpoint")
    return raw


def _read_u32(fh: BinaryIO) -> int:
    return struct.unpack("<I", _read_exact(fh, 4))[0]


def _read_str(fh: BinaryIO) -> str:
    return _read_exact(fh, _read_u32(fh)).decode("utf-8")


def model_tensors(model: MSIC) -> dict[str, np.ndarray]:
    tensors = {name: p.data for name, p in model.named_parameters()}
    if model.stats is not None:
        tensors.update(model.stats.named_arrays())
    return tensors


def vocabulary_digests(model: MSIC) -> dict[str, int]:
    return {k: v.digest() for k, v in model.vocabularies.items()}


def save_checkpoint(model: MSIC, settings: Settings, path: str | os.PathLike) -> None:
    digests = vocabulary_digests(model)
    tensors = model_tensors(model)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        _write_str(fh, settings.dumps())
        fh.write(struct.pack("<I", len(digests)))
        for name, digest in digests.items():
            _write_str(fh, name)
            fh.write(struct.pack("<Q", digest))
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            _write_str(fh, name)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    if "word" in model.vocabularies:
        model.vocabularies["word"].to_file(str(path) + WORDS_SUFFIX)


def read_checkpoint(path: str | os.PathLike) -> tuple[str, dict[str, int], dict[str, np.ndarray]]:
    """Raw contents: (config text, digests, tensors)."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC)) != MAGIC:
            raise ParseError(f"{path} is not a checkpoint (bad magic)")
        version = _read_u32(fh)
        if version != VERSION:
            raise ParseError(f"unsupported checkpoint version {version}")
        config = _read_str(fh)
        digests = {}
        for _ in range(_read_u32(fh)):
            name = _read_str(fh)
            digests[name] = struct.unpack("<Q", _read_exact(fh, 8))[0]
        tensors = {}
        for _ in range(_read_u32(fh)):
            name = _read_str(fh)
            rank = _read_u32(fh)
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
            count = int(np.prod(dims)) if rank else 1
            tensors[name] = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4").reshape(dims).copy()
        if fh.read(1):
            raise ParseError("trailing bytes after tensor table")
    return config, digests, tensors


def load_checkpoint(path: str | os.PathLike, vocabularies: Mapping[str, Vocabulary]) -> tuple[MSIC, Settings]:
    """Rebuild the model; vocabularies must match the digests recorded at training time."""
    config, digests, tensors = read_checkpoint(path)
    settings = parse_settings(config).validate()
    vocabs = dict(vocabularies)
    words_path = str(path) + WORDS_SUFFIX
    if "word" in digests and "word" not in vocabs and os.path.exists(words_path):
        vocabs["word"] = Vocabulary.from_file(words_path, "word")
    for name, digest in digests.items():
        if name not in vocabs:
            raise ValidationError(f"checkpoint needs the {name} vocabulary")
        if vocabs[name].digest() != digest:
            raise ValidationError(f"{name} vocabulary does not match the checkpoint")
    vocabs = {k: v for k, v in vocabs.items() if k in digests}
    model = MSIC(vocabs, settings.model, seed=settings.train.seed)
    named = dict(model.named_parameters())
    for name, p in named.items():
        if name not in tensors:
            raise ValidationError(f"checkpoint lacks tensor {name}")
        if tensors[name].shape != p.data.shape:
            raise ValidationError(f"tensor {name}: shape {tensors[name].shape} does not match config {p.data.shape}")
        p.data[...] = tensors[name]
    extra = set(tensors) - set(named)
    stats = {k: tensors[k] for k in extra if k.startswith("stats.")}
    if set(extra) - set(stats):
        raise ValidationError(f"unexpected tensors {sorted(set(extra) - set(stats))[:3]}")
    if stats:
        model.stats = CorpusStats.from_arrays(stats)
    for k in EVENT_KINDS:
        if model.sizes[k] != len(vocabs[k]):
            raise ValidationError(f"{k} vocabulary size mismatch")
    return model, settings
