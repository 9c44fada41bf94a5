"""Embedding cache files: fingerprint matrices tied to a sample set by hash.

A cache is a CSV matrix (rows = crystals in set order, columns = fingerprint
entries) preceded by comment headers recording the distance kind, its vector
length, and a content hash of the sample set it was computed from. Loading
refuses a cache whose hash does not match the sample set presented with it.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .errors import CacheMismatchError, InputError
from .metrics import DistanceKind
from .structures import SampleSet, serialize_jsonl

FORMAT_TAG = "xtalmet-embedding-cache-v1"


def sample_hash(samples: SampleSet) -> str:
    """Content hash of a sample set (order-sensitive, 12-digit canonical floats)."""
    return hashlib.sha256(serialize_jsonl(samples).encode("utf-8")).hexdigest()


def write_cache(path, kind: DistanceKind, samples: SampleSet, embeddings: list) -> None:
    """Write the embedding matrix for ``samples``; byte-identical on re-runs."""
    matrix = kind.matrix(embeddings)
    lines = [
        f"# {FORMAT_TAG}",
        f"# kind={kind.name}",
        f"# columns={matrix.shape[1]}",
        f"# sample_hash={sample_hash(samples)}",
    ]
    lines.extend(",".join(repr(float(v)) for v in row) for row in matrix)
    Path(path).write_text("\n".join(lines) + "\n")


def read_cache(path, kind: DistanceKind, samples: SampleSet) -> list:
    """Load embeddings for ``samples``, verifying kind, shape, and content hash."""
    text = Path(path).read_text()
    lines = text.splitlines()
    header: dict[str, str] = {}
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith("#"):
            body_start = i
            break
        if i == 0:
            if line[1:].strip() != FORMAT_TAG:
                raise InputError(f"{path}: not an embedding cache file")
            continue
        key, _, value = line[1:].strip().partition("=")
        header[key] = value
    if header.get("kind") != kind.name:
        raise CacheMismatchError(
            f"{path}: cache holds {header.get('kind')!r} embeddings, expected {kind.name!r}"
        )
    if header.get("sample_hash") != sample_hash(samples):
        raise CacheMismatchError(f"{path}: cache does not match the sample set (content hash)")
    matrix = np.array(
        [[float(tok) for tok in line.split(",")] for line in lines[body_start:] if line],
        dtype=float,
    )
    if matrix.shape[0] != len(samples):
        raise CacheMismatchError(f"{path}: cache has {matrix.shape[0]} rows for {len(samples)} samples")
    return kind.embeddings_from_matrix(matrix)
