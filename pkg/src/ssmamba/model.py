"""The composed forecaster plus checkpoint serialization.

A ForecastModel owns the index projection, the temporal encoder, and the
SSM backbone. Checkpoints are a JSON manifest next to a contiguous
little-endian float32 payload; reload reproduces forward outputs bitwise.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .autograd import ContractViolation, Tensor
from .config import Config, config_hash, serialize_config
from .embedding import EmbeddingTable, IndexProjection, embed_names
from .ssm import Backbone
from .temporal import FeatureRanges, KanParams, kan_features, kan_forward

CHECKPOINT_FORMAT = 1


class ForecastModel:

    def __init__(self, cfg: Config, ranges: FeatureRanges | None = None):
        cfg.validate()
        self.cfg = cfg
        N = cfg.ssm_state_size
        self.proj = IndexProjection(N, cfg.emb_dim, seed=cfg.seed)
        self.kan = KanParams(
            N, degree=cfg.kan_degree, basis_count=cfg.kan_basis_count,
            activation=cfg.kan_activation,
            mode="sinusoidal" if cfg.kan_off else "kan",
            ranges=ranges, seed=cfg.seed,
            feature_indices=cfg.feature_indices())
        e_scale = 0.0 if (cfg.semantic_off or cfg.context_off) else cfg.ssm_e_scale
        k_scale = 0.0 if cfg.context_off else cfg.ssm_k_scale
        self.backbone = Backbone(
            state_size=N, channels=cfg.ssm_channels, layers=cfg.ssm_layers,
            e_scale=e_scale, k_scale=k_scale,
            window_hint=cfg.window, seed=cfg.seed)
        self.use_semantic = e_scale != 0.0
        self.use_temporal = k_scale != 0.0
        self.dtype = np.float32

    def to_double(self):
        """Convert every parameter to float64 (test-oracle replay path)."""
        for p in self.all_parameters():
            p.data = p.data.astype(np.float64)
        self.dtype = np.float64
        return self

    # -- parameter sets --------------------------------------------------
    def all_parameters(self):
        """Every leaf, trainable or not; checkpoint order."""
        return (self.proj.parameters() + self.kan.parameters()
                + self.backbone.parameters())

    def trainable_parameters(self):
        """Leaves the optimizer updates; ablations freeze unused paths out."""
        ps = []
        if self.use_semantic:
            ps.extend(self.proj.parameters())
        if self.use_temporal:
            ps.extend(self.kan.parameters())
        ps.extend(self.backbone.parameters())
        return ps

    # -- forward ---------------------------------------------------------
    def forward(self, values_std: np.ndarray, dates_raw: np.ndarray,
                names, table: EmbeddingTable) -> Tensor:
        """One-step-ahead predictions (B, L) on standardized inputs.

        values_std: (B, L) float; dates_raw: (B, L, 7) raw descriptors;
        names: B series names resolved through `table` (or hash fallback).
        """
        x = Tensor(np.asarray(values_std, dtype=self.dtype))
        e = None
        if self.use_semantic:
            e, _ = embed_names(names, table, self.proj, seed=self.cfg.emb_seed,
                               dtype=self.dtype)
        tev = None
        if self.use_temporal:
            feats = kan_features(np.asarray(dates_raw), self.kan)
            tev = kan_forward(feats, self.kan, dtype=self.dtype)
        return self.backbone.forward(x, e, tev)

    def forward_with_features(self, values_std, feats, e) -> Tensor:
        """Forward from precomputed basis features and embeddings (training
        hot path; avoids re-deriving constants every step)."""
        x = Tensor(np.asarray(values_std, dtype=self.dtype))
        tev = (kan_forward(feats, self.kan, dtype=self.dtype)
               if self.use_temporal else None)
        return self.backbone.forward(x, e, tev)

    def parameter_digest(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for p in self.all_parameters():
            h.update(p.name.encode())
            h.update(p.data.tobytes())
        return h.hexdigest()


def save_checkpoint(run_dir, model: ForecastModel, scalers: dict,
                    emb_provenance: str, extra: dict | None = None) -> None:
    """Write <run_dir>/manifest.json and <run_dir>/params.bin."""
    os.makedirs(run_dir, exist_ok=True)
    params = model.all_parameters()
    entries = []
    offset = 0
    blobs = []
    for p in params:
        buf = p.data.astype("<f4").tobytes()
        entries.append({"name": p.name, "shape": list(p.data.shape),
                        "offset": offset, "size": int(p.data.size)})
        offset += len(buf)
        blobs.append(buf)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "config": serialize_config(model.cfg),
        "config_hash": config_hash(model.cfg),
        "params": entries,
        "payload_bytes": offset,
        "scalers": {k: {"mean": s.mean, "std": s.std} for k, s in scalers.items()},
        "feature_ranges": (model.kan.ranges.to_dict()
                           if model.kan.ranges is not None else None),
        "embedding_provenance": emb_provenance,
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(run_dir, "params.bin"), "wb") as fh:
        fh.write(b"".join(blobs))
    with open(os.path.join(run_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(run_dir):
    """Rebuild (model, scalers dict, manifest) from a run directory."""
    from .config import parse_config
    from .data import Scaler

    mpath = os.path.join(run_dir, "manifest.json")
    if not os.path.exists(mpath):
        raise FileNotFoundError(f"no checkpoint manifest at {mpath}")
    with open(mpath, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ContractViolation(f"unsupported checkpoint format {manifest.get('format')}")
    cfg = parse_config(manifest["config"])
    ranges = (FeatureRanges.from_dict(manifest["feature_ranges"])
              if manifest.get("feature_ranges") else None)
    model = ForecastModel(cfg, ranges=ranges)
    with open(os.path.join(run_dir, "params.bin"), "rb") as fh:
        payload = fh.read()
    if len(payload) != manifest["payload_bytes"]:
        raise ContractViolation("checkpoint payload size mismatch")
    by_name = {p.name: p for p in model.all_parameters()}
    for entry in manifest["params"]:
        p = by_name.get(entry["name"])
        if p is None:
            raise ContractViolation(f"unknown parameter {entry['name']} in manifest")
        n = entry["size"] * 4
        arr = np.frombuffer(payload[entry["offset"]:entry["offset"] + n],
                            dtype="<f4").reshape(entry["shape"])
        if arr.shape != p.data.shape:
            raise ContractViolation(f"shape mismatch for {entry['name']}")
        p.data = arr.astype(np.float32).copy()
    scalers = {k: Scaler(v["mean"], v["std"])
               for k, v in manifest.get("scalers", {}).items()}
    return model, scalers, manifest
