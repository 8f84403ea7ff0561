"""Fixed-width utterance vectors and the local context windows built on them.

Two interchangeable providers produce token vectors: a seeded feature-hashing
scheme that needs no external file, and a lookup table loaded from disk for
pretrained vectors. An utterance vector is the L2-normalized mean of its
token vectors; windows of 2k+1 neighboring utterance vectors are zero padded
at sequence edges.
"""

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractViolation

_PROVIDERS = ("hash", "table")


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 800
    provider: str = "hash"
    window_k: int = 1
    seed: int = 0
    table_path: object = None
    buckets_per_token: int = 3

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"encoder dim must be >= 1, got {self.dim}")
        if self.window_k < 0:
            raise ConfigError(f"window_k must be >= 0, got {self.window_k}")
        if self.provider not in _PROVIDERS:
            raise ConfigError(f"unknown encoder provider: {self.provider!r}")
        if self.provider == "table" and self.table_path is None:
            raise ConfigError("table provider needs table_path")
        if self.buckets_per_token < 1:
            raise ConfigError("buckets_per_token must be >= 1")


@dataclass(frozen=True)
class UtteranceEncoding:
    index: int
    vector: np.ndarray


@dataclass(frozen=True)
class LocalWindow:
    """2k+1 utterance vectors centered on one position. pad_mask[s] is True
    for real neighbors, False for zero padding."""

    center: int
    vectors: np.ndarray
    pad_mask: tuple


@dataclass(frozen=True)
class EmbeddingTable:
    vectors: dict
    unk: np.ndarray
    dim: int
    duplicate_rows: int = 0


def config_fingerprint(cfg):
    """Stable hash of everything that changes the produced vectors; stored in
    checkpoints so stale encoder settings are caught at load time."""
    payload = {
        "dim": cfg.dim,
        "provider": cfg.provider,
        "window_k": cfg.window_k,
        "seed": cfg.seed,
        "buckets_per_token": cfg.buckets_per_token,
    }
    if cfg.provider == "table":
        payload["table_sha256"] = hashlib.sha256(
            Path(cfg.table_path).read_bytes()
        ).hexdigest()
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _token_hash_vector(token, cfg):
    v = np.zeros(cfg.dim)
    for j in range(cfg.buckets_per_token):
        digest = hashlib.blake2b(
            f"{cfg.seed}:{j}:{token}".encode("utf-8"), digest_size=8
        ).digest()
        val = int.from_bytes(digest, "little")
        sign = 1.0 if val & 1 else -1.0
        v[(val >> 1) % cfg.dim] += sign
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def load_embedding_table(path, cfg):
    """Rows are ``token v1 .. v_dim`` whitespace separated. Later duplicate
    tokens win; the unknown-token vector is the mean row. Dimension must
    match the config."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"embedding table not found: {p}")
    vectors = {}
    duplicates = 0
    dim = None
    for line_no, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        token, vals = parts[0], parts[1:]
        if dim is None:
            dim = len(vals)
            if dim == 0:
                raise ConfigError(f"{p}:{line_no}: row has no values")
        elif len(vals) != dim:
            raise ConfigError(
                f"{p}:{line_no}: row has {len(vals)} values, expected {dim}"
            )
        if token in vectors:
            duplicates += 1
        try:
            vectors[token] = np.array([float(x) for x in vals])
        except ValueError as exc:
            raise ConfigError(f"{p}:{line_no}: bad float ({exc})") from exc
    if not vectors:
        raise ConfigError(f"embedding table is empty: {p}")
    if dim != cfg.dim:
        raise ConfigError(
            f"embedding table dim {dim} does not match configured dim {cfg.dim}"
        )
    unk = np.mean(list(vectors.values()), axis=0)
    return EmbeddingTable(vectors, unk, dim, duplicates)


@lru_cache(maxsize=4)
def _cached_table(path, cfg):
    return load_embedding_table(path, cfg)


def encode_tokens(tokens, cfg, table=None):
    """Mean of token vectors, L2 normalized; no tokens gives the zero
    vector."""
    if not tokens:
        return np.zeros(cfg.dim)
    if cfg.provider == "hash":
        acc = np.zeros(cfg.dim)
        for t in tokens:
            acc += _token_hash_vector(t, cfg)
    else:
        if table is None:
            table = _cached_table(str(cfg.table_path), cfg)
        acc = np.zeros(cfg.dim)
        for t in tokens:
            acc += table.vectors.get(t, table.unk)
    acc /= len(tokens)
    norm = np.linalg.norm(acc)
    return acc / norm if norm > 0 else acc


def encode_utterance(utt, cfg, table=None):
    return UtteranceEncoding(utt.index, encode_tokens(utt.tokens, cfg, table))


def build_local_window(vectors, center, k, dim=None):
    """Stack positions center-k .. center+k from a sequence of equal-width
    vectors, zero padding outside the sequence."""
    n = len(vectors)
    if not 0 <= center < n:
        raise ContractViolation(f"window center {center} outside sequence of {n}")
    if dim is None:
        dim = len(vectors[center])
    slots = np.zeros((2 * k + 1, dim))
    mask = []
    for s, pos in enumerate(range(center - k, center + k + 1)):
        inside = 0 <= pos < n
        mask.append(inside)
        if inside:
            v = np.asarray(vectors[pos])
            if v.shape != (dim,):
                raise ContractViolation(
                    f"window vector at {pos} has shape {v.shape}, expected ({dim},)"
                )
            slots[s] = v
    return LocalWindow(center=center, vectors=slots, pad_mask=tuple(mask))
