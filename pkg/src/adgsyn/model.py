"""The full drug-pair synergy classifier."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, model_config_from_dict
from .errors import CheckpointError
from .data import TripletBatch
from .encoder import CellProjector, DrugEncoder, EncoderOutput
from .head import POSITIVE, FusionHead
from .layers import Module
from .pooling import DualAttention, PooledPair
from .tensor import Tensor


@dataclass
class ForwardOutput:
    logits: Tensor
    prob: np.ndarray          # P(synergy) per triplet
    gat_pool: PooledPair
    lstm_pool: PooledPair
    pooled: Tensor            # B x 4*pool_dim
    cell_ctx: Tensor


class ADGSyn(Module):
    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0):
        cfg = cfg or ModelConfig()
        cfg.validate()
        self.config = cfg
        rng = np.random.default_rng(seed)
        self.cell = CellProjector(cfg, rng)
        self.encoder = DrugEncoder(cfg, rng)
        self.pool_gat = DualAttention(cfg.hidden, cfg.pool_dim, rng, cfg.dropout,
                                      shared=cfg.share_projections, eps=cfg.ln_eps)
        self.pool_lstm = DualAttention(2 * cfg.lstm_hidden, cfg.pool_dim, rng, cfg.dropout,
                                       shared=cfg.share_projections, eps=cfg.ln_eps)
        self.head = FusionHead(cfg.fusion_dim, cfg.head_hidden, rng, cfg.dropout)
        self.set_rng(np.random.default_rng(seed + 1))

    def encode(self, batch: TripletBatch) -> tuple[EncoderOutput, Tensor]:
        cells = Tensor(batch.cells)
        node_ctx = self.cell.node(cells)
        return self.encoder(batch.graphs, node_ctx, batch.node_cell), self.cell.context(cells)

    def _pad(self, x: Tensor, batch: TripletBatch, side: str) -> Tensor:
        pad, pad_t, n = ((batch.pad_x, batch.pad_x_t, batch.n_x) if side == "x"
                         else (batch.pad_y, batch.pad_y_t, batch.n_y))
        return T.spmm(pad, x, pad_t).reshape(batch.size, n, x.shape[-1])

    def pool(self, enc: EncoderOutput, batch: TripletBatch):
        gat = self.pool_gat(self._pad(enc.gat_nodes, batch, "x"), self._pad(enc.gat_nodes, batch, "y"),
                            batch.mask_x, batch.mask_y)
        lstm = self.pool_lstm(self._pad(enc.lstm_nodes, batch, "x"), self._pad(enc.lstm_nodes, batch, "y"),
                              batch.mask_x, batch.mask_y)
        return gat, lstm, T.concat([gat.z_x, gat.z_y, lstm.z_x, lstm.z_y], axis=-1)

    def forward(self, batch: TripletBatch) -> ForwardOutput:
        enc, ctx = self.encode(batch)
        gat, lstm, pooled = self.pool(enc, batch)
        logits = self.head(T.concat([pooled, ctx], axis=-1))
        prob = T.softmax(logits, axis=-1).data[:, POSITIVE].astype(np.float32)
        return ForwardOutput(logits, prob, gat, lstm, pooled, ctx)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={missing[:3]} unexpected={extra[:3]}")
        for name, p in params.items():
            if tuple(state[name].shape) != p.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.assign(state[name])


def model_config_dict(cfg: ModelConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["cell_hidden"] = list(cfg.cell_hidden)
    return d


def save_model(model: ADGSyn, path, meta: dict | None = None) -> dict:
    """Write master weights plus a manifest that records the model configuration."""
    return save_checkpoint(path, model.state_dict(), {"model": model_config_dict(model.config), **(meta or {})})


def load_model(path) -> tuple[ADGSyn, dict]:
    tensors, manifest = load_checkpoint(path)
    if "model" not in manifest:
        raise CheckpointError(f"{path}: manifest has no model configuration")
    model = ADGSyn(model_config_from_dict(manifest["model"]))
    model.load_state_dict(tensors)
    return model, manifest
