"""Disjoint-union batching of molecular graphs into sparse operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .chem import MolecularGraph, featurize
from .errors import EmptyGraph


def _csr(rows, cols, shape, values=None) -> sp.csr_matrix:
    values = np.ones(len(rows), dtype=np.float32) if values is None else values.astype(np.float32)
    return sp.csr_matrix((values, (rows, cols)), shape=shape, dtype=np.float32)


@dataclass
class GraphBatch:
    features: np.ndarray        # N x F node features
    sizes: np.ndarray           # atoms per graph
    offsets: np.ndarray         # first node of each graph
    edge_src: np.ndarray        # message edges incl. self loops, sorted by target
    edge_dst: np.ndarray
    indptr: np.ndarray          # target segments into the edge list (CSR)
    gather_src: sp.csr_matrix   # E x N, row e selects node edge_src[e]
    gather_dst: sp.csr_matrix   # E x N
    scatter_dst: sp.csr_matrix  # N x E, sums edges into their target
    gcn_norm: sp.csr_matrix     # D^-1/2 (A + I) D^-1/2
    node_graph: np.ndarray      # graph id per node

    @property
    def n_nodes(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_graphs(self) -> int:
        return len(self.sizes)

    _transposes: dict = None

    def t(self, name: str) -> sp.csr_matrix:
        """Cached CSR transpose of one of the sparse operators."""
        if self._transposes is None:
            self._transposes = {}
        if name not in self._transposes:
            self._transposes[name] = getattr(self, name).T.tocsr()
        return self._transposes[name]

    def node_broadcast(self, rows: np.ndarray) -> sp.csr_matrix:
        """N x R operator copying row ``rows[g]`` to every node of graph g."""
        r = np.asarray(rows)[self.node_graph]
        return _csr(np.arange(self.n_nodes), r, (self.n_nodes, int(np.max(rows)) + 1))

    def padder(self, graphs: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray, int]:
        """Operator stacking the nodes of ``graphs`` into a (len * n_max) x N padded block.

        Returns the operator, the padding mask (True = padding) of shape
        (len, n_max), and n_max.
        """
        graphs = np.asarray(graphs)
        sizes = self.sizes[graphs]
        n_max = int(sizes.max())
        rows, cols = [], []
        for b, g in enumerate(graphs):
            k = int(self.sizes[g])
            rows.append(b * n_max + np.arange(k))
            cols.append(self.offsets[g] + np.arange(k))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        mask = np.arange(n_max)[None, :] >= sizes[:, None]
        return _csr(rows, cols, (len(graphs) * n_max, self.n_nodes)), mask, n_max


def batch_graphs(graphs: list[MolecularGraph], features: list[np.ndarray] | None = None) -> GraphBatch:
    if any(g.n_atoms == 0 for g in graphs):
        raise EmptyGraph("cannot batch a graph with no atoms")
    if features is None:
        features = [g.features if g.features is not None else featurize(g) for g in graphs]
    sizes = np.array([g.n_atoms for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    n = int(sizes.sum())
    src, dst = [], []
    for g, off in zip(graphs, offsets):
        ei = g.edge_index()
        loops = np.arange(g.n_atoms)
        src.append(np.concatenate([ei[0], loops]) + off)
        dst.append(np.concatenate([ei[1], loops]) + off)
    src = np.concatenate(src)
    dst = np.concatenate(dst)
    order = np.lexsort((src, dst))
    src, dst = src[order], dst[order]
    e = len(src)
    indptr = np.concatenate([[0], np.cumsum(np.bincount(dst, minlength=n))]).astype(np.int64)
    deg = np.bincount(dst, minlength=n).astype(np.float64)  # row sums of A + I
    inv_sqrt = 1.0 / np.sqrt(deg)
    norm_vals = inv_sqrt[dst] * inv_sqrt[src]
    return GraphBatch(
        features=np.concatenate(features).astype(np.float32),
        sizes=sizes,
        offsets=offsets,
        edge_src=src,
        edge_dst=dst,
        indptr=indptr,
        gather_src=_csr(np.arange(e), src, (e, n)),
        gather_dst=_csr(np.arange(e), dst, (e, n)),
        scatter_dst=_csr(dst, np.arange(e), (n, e)),
        gcn_norm=_csr(dst, src, (n, n), norm_vals),
        node_graph=np.repeat(np.arange(len(graphs)), sizes),
    )
