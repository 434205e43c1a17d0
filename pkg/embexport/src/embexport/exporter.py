"""Encode series names with a pretrained text encoder and write them in the
ssmamba embedding-file format:

    ssmamba-emb 1 <dim>
    <name>\t<dim floats>
    ...
    # model=<id>@<revision>

The trailing comment records provenance; the consumer skips '#' lines.
"""

from __future__ import annotations

import os

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer
from transformers.utils import logging as hf_logging

hf_logging.set_verbosity_error()
hf_logging.disable_progress_bar()

from .pinned import revision_of

POOLINGS = ("cls", "mean")


class ExportError(ValueError):
    pass


def read_names(path) -> list[str]:
    """One series name per line; blanks and '#' comments skipped."""
    names = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "\t" in line:
                raise ExportError(f"{path}:{lineno}: name contains a tab")
            if line in names:
                raise ExportError(f"{path}:{lineno}: duplicate name {line!r}")
            names.append(line)
    if not names:
        raise ExportError(f"{path}: no names found")
    return names


def load_encoder(model_id: str):
    """(tokenizer, model, revision) for a hub id or local model directory."""
    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModel.from_pretrained(model_id)
    model.eval()
    if os.path.isdir(model_id):
        revision = revision_of(model_id)
    else:
        revision = getattr(model.config, "_commit_hash", None) or "main"
    return tokenizer, model, revision


def encode_names(names, tokenizer, model, pooling: str = "cls") -> np.ndarray:
    """(len(names), hidden) float32 matrix, deterministic on CPU."""
    if pooling not in POOLINGS:
        raise ExportError(f"pooling must be one of {POOLINGS}, got {pooling!r}")
    rows = []
    with torch.no_grad():
        # one name at a time: no padding, so results are batch-size invariant
        for name in names:
            enc = tokenizer(name, return_tensors="pt", truncation=True)
            hidden = model(**enc).last_hidden_state[0]     # (T, H)
            if pooling == "cls":
                vec = hidden[0]
            else:
                vec = hidden.mean(dim=0)
            rows.append(vec.to(torch.float32).numpy())
    return np.stack(rows)


def write_embedding_file(path, names, vectors: np.ndarray,
                         model_id: str, revision: str) -> None:
    dim = vectors.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"ssmamba-emb 1 {dim}\n")
        for name, vec in zip(names, vectors):
            floats = " ".join(np.format_float_scientific(
                v, precision=8, unique=False) for v in vec)
            fh.write(f"{name}\t{floats}\n")
        fh.write(f"# model={model_id}@{revision}\n")


def export(names_path, model_id, out_path, pooling: str = "cls") -> int:
    names = read_names(names_path)
    tokenizer, model, revision = load_encoder(model_id)
    vectors = encode_names(names, tokenizer, model, pooling)
    write_embedding_file(out_path, names, vectors, model_id, revision)
    return len(names)
