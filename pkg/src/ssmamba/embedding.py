"""Series-name embeddings: pretrained table lookup with a hash fallback,
plus the trainable projection into the backbone's state space.

The pretrained vectors themselves are frozen; only the projection trains.
Any valid UTF-8 name resolves to a vector, which is what makes zero-shot
evaluation total.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .autograd import ContractViolation, Parameter, Tensor

MAGIC = "ssmamba-emb"
FORMAT_VERSION = 1


class EmbeddingFormatError(ValueError):
    """Embedding file violates the documented format."""


class EmbeddingTable:
    """name -> d_emb vector, with provenance 'pretrained' or 'hash-fallback'."""

    def __init__(self, dim: int, entries: dict | None = None,
                 provenance: str = "pretrained"):
        if dim <= 0:
            raise ContractViolation("embedding dim must be positive")
        self.dim = dim
        self.entries = dict(entries or {})
        self.provenance = provenance

    def __contains__(self, name):
        return name in self.entries

    def __len__(self):
        return len(self.entries)

    @classmethod
    def empty(cls, dim: int) -> "EmbeddingTable":
        return cls(dim, {}, provenance="hash-fallback")


def load_embedding_table(path) -> EmbeddingTable:
    """Parse the text embedding format.

    Line 1: `ssmamba-emb 1 <dim>`. Each following line: name, tab, dim
    space-separated floats. Lines starting with `#` are comments.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split(" ")
        if len(parts) != 3 or parts[0] != MAGIC:
            raise EmbeddingFormatError(f"bad magic line: {header!r}")
        if parts[1] != str(FORMAT_VERSION):
            raise EmbeddingFormatError(f"unsupported version: {parts[1]!r}")
        try:
            dim = int(parts[2])
        except ValueError:
            raise EmbeddingFormatError(f"bad dimension field: {parts[2]!r}")
        if dim <= 0:
            raise EmbeddingFormatError(f"non-positive dimension: {dim}")
        entries = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if "\t" not in line:
                raise EmbeddingFormatError(f"line {lineno}: missing tab separator")
            name, _, rest = line.partition("\t")
            if not name:
                raise EmbeddingFormatError(f"line {lineno}: empty name")
            if name in entries:
                raise EmbeddingFormatError(f"line {lineno}: duplicate name {name!r}")
            try:
                vec = np.array([float(v) for v in rest.split()], dtype=np.float64)
            except ValueError:
                raise EmbeddingFormatError(f"line {lineno}: non-numeric value")
            if vec.shape != (dim,):
                raise EmbeddingFormatError(
                    f"line {lineno}: expected {dim} floats, got {vec.size}")
            entries[name] = vec
    return EmbeddingTable(dim, entries, provenance="pretrained")


def hash_fallback_embedding(name: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic unit-norm vector derived from the name alone.

    SHA-256 of (seed, name) seeds a PCG64 stream; identical name and seed
    give bitwise-identical vectors on every platform.
    """
    if dim <= 0:
        raise ContractViolation("dim must be positive")
    digest = hashlib.sha256(f"{seed}\x00{name}".encode("utf-8")).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class IndexProjection:
    """Trainable linear map from the embedding space to the state space."""

    def __init__(self, state_size: int, emb_dim: int, seed: int = 0,
                 prefix: str = "idx"):
        rng = np.random.default_rng(seed)
        self.W_proj = Parameter(
            rng.normal(0.0, 1.0 / np.sqrt(emb_dim), size=(state_size, emb_dim)),
            f"{prefix}.W_proj")
        self.b_proj = Parameter(np.zeros(state_size), f"{prefix}.b_proj")

    def parameters(self):
        return [self.W_proj, self.b_proj]


def lookup_vector(name: str, table: EmbeddingTable, seed: int = 0):
    """Raw pretrained-or-fallback vector plus its source tag."""
    if name in table.entries:
        return table.entries[name], "pretrained"
    return hash_fallback_embedding(name, table.dim, seed), "hash-fallback"


def embed_name(name: str, table: EmbeddingTable, proj: IndexProjection,
               seed: int = 0, dtype=np.float32):
    """Project a series name into the index space: e = W_proj h + b_proj.

    Returns (Tensor of shape (N,), source) where source records whether the
    underlying vector came from the table or the hash fallback.
    """
    h, source = lookup_vector(name, table, seed)
    hv = Tensor(h.astype(dtype).reshape(-1, 1))
    e = proj.W_proj.matmul(hv).reshape((proj.W_proj.data.shape[0],)) + proj.b_proj
    return e, source


def embed_names(names, table: EmbeddingTable, proj: IndexProjection,
                seed: int = 0, dtype=np.float32):
    """Batched embed_name: returns (Tensor (B, N), list of sources)."""
    hs, sources = [], []
    for n in names:
        h, src = lookup_vector(n, table, seed)
        hs.append(h)
        sources.append(src)
    H = Tensor(np.stack(hs).astype(dtype))              # (B, d_emb)
    E = H.matmul(proj.W_proj.T) + proj.b_proj           # (B, N)
    return E, sources
