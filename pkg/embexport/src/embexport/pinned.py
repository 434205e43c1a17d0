"""A tiny deterministic BERT usable as a pinned local model.

Environments without model-hub access still need a real encoder behind the
exporter. `materialize` builds a small character-level BERT with seeded
weights into a directory that `transformers` loads like any other local
model; identical seeds reproduce the directory bit for bit, so the model
functions as a pinned revision.
"""

from __future__ import annotations

import hashlib
import os
import string

import torch
from transformers import BertConfig, BertModel, BertTokenizer
from transformers.utils import logging as hf_logging

hf_logging.set_verbosity_error()
hf_logging.disable_progress_bar()

PINNED_SEED = 6
HIDDEN = 32


def _vocab_lines():
    """Character-level WordPiece vocabulary (printable ASCII)."""
    chars = string.ascii_lowercase + string.digits + string.punctuation
    lines = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    lines += list(chars)
    lines += [f"##{c}" for c in chars]
    return lines


def materialize(target_dir: str, seed: int = PINNED_SEED) -> str:
    """Write the pinned model into target_dir (idempotent); returns the path."""
    os.makedirs(target_dir, exist_ok=True)
    vocab_path = os.path.join(target_dir, "vocab.txt")
    with open(vocab_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(_vocab_lines()) + "\n")

    config = BertConfig(
        vocab_size=len(_vocab_lines()),
        hidden_size=HIDDEN,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    torch.manual_seed(seed)
    model = BertModel(config)
    model.eval()
    model.save_pretrained(target_dir, safe_serialization=True)
    BertTokenizer(vocab_path, do_lower_case=True).save_pretrained(target_dir)
    return target_dir


def revision_of(model_dir: str) -> str:
    """Stable short revision: SHA-256 of the weight file."""
    for name in ("model.safetensors", "pytorch_model.bin"):
        path = os.path.join(model_dir, name)
        if os.path.exists(path):
            with open(path, "rb") as fh:
                return hashlib.sha256(fh.read()).hexdigest()[:12]
    raise FileNotFoundError(f"no weight file under {model_dir}")
