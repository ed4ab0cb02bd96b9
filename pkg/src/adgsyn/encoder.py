"""Cell-conditioned graph encoder: stacked graph layers read out by a BiLSTM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import tensor as T
from .config import ModelConfig
from .errors import EmptyGraph, WidthMismatch
from .graphs import GraphBatch, batch_graphs
from .layers import MLP, BiLstm, GatLayer, GcnLayer, Module
from .tensor import Tensor


class CellProjector(Module):
    """Two reduction paths from the expression vector: fusion context and node conditioning."""

    def __init__(self, cfg: ModelConfig, rng):
        hidden = list(cfg.cell_hidden)
        self.context = MLP([cfg.cell_dim, *hidden, cfg.ctx_dim], rng, cfg.dropout)
        self.node = MLP([cfg.cell_dim, *hidden, cfg.atom_dim], rng, cfg.dropout)


@dataclass
class EncoderOutput:
    gat_nodes: Tensor   # N x hidden, final graph-layer node embeddings
    lstm_nodes: Tensor  # N x 2*lstm_hidden


def condition_nodes(features: Tensor, node_ctx: Tensor, node_cell: sp.csr_matrix, mode="add") -> Tensor:
    """Attach each node's cell-line projection: added (width kept) or concatenated."""
    per_node = T.spmm(node_cell, node_ctx)
    if mode == "add":
        if per_node.shape[-1] != features.shape[-1]:
            raise WidthMismatch(
                f"cell projection width {per_node.shape[-1]} != atom feature width {features.shape[-1]}")
        return features + per_node
    if mode == "concat":
        return T.concat([features, per_node], axis=-1)
    raise ValueError(f"unknown encoder mode {mode!r}")


class DrugEncoder(Module):
    def __init__(self, cfg: ModelConfig, rng):
        self.mode = cfg.encoder_mode
        self.graph_layer = cfg.graph_layer
        in_dim = cfg.atom_dim * (2 if cfg.encoder_mode == "concat" else 1)
        if cfg.graph_layer == "gat":
            self.gat1 = GatLayer(in_dim, cfg.gat_heads, cfg.gat_head_dim, rng, cfg.negative_slope)
            self.gat2 = GatLayer(cfg.hidden, cfg.gat_heads, cfg.gat_head_dim, rng, cfg.negative_slope)
        else:
            self.gcn1 = GcnLayer(in_dim, cfg.hidden, rng)
            self.gcn2 = GcnLayer(cfg.hidden, cfg.hidden, rng)
        self.lstm = BiLstm(cfg.hidden, cfg.lstm_hidden, rng)

    @property
    def graph_layers(self):
        if self.graph_layer == "gat":
            return self.gat1, self.gat2
        return self.gcn1, self.gcn2

    def forward(self, batch: GraphBatch, node_ctx: Tensor, node_cell: sp.csr_matrix) -> EncoderOutput:
        if batch.n_nodes == 0:
            raise EmptyGraph("encoder received no atoms")
        h0 = condition_nodes(Tensor(batch.features), node_ctx, node_cell, self.mode)
        layer1, layer2 = self.graph_layers
        z1 = T.relu(layer1(h0, batch))
        z2 = T.relu(layer2(z1, batch))
        return EncoderOutput(z2, self.lstm([z1, z2]))


def single_graph_inputs(graphs):
    """Batch ``graphs`` with every node attached to cell row 0."""
    batch = batch_graphs(list(graphs))
    node_cell = batch.node_broadcast(np.zeros(batch.n_graphs, dtype=np.int64))
    return batch, node_cell
