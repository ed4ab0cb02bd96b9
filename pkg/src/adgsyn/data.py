"""Triplet tables, expression matrices, folds and batches."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chem import MolecularGraph, parse_smiles
from .errors import (DatasetCountMismatch, DrugParseError, MalformedRow, SmilesError, TooFewSamples,
                     UnknownCellLine, WidthMismatch)
from .graphs import GraphBatch, batch_graphs

log = logging.getLogger(__name__)

POSITIVE_ABOVE = 10.0
NEGATIVE_BELOW = 0.0
TRIPLET_COLUMNS = ("drug_a_smiles", "drug_b_smiles", "cell_line", "synergy_score")
ONEIL_COUNTS = {"triplets": 13243, "drugs": 38, "cell_lines": 31}


def label_for(score: float) -> int | None:
    """1 above 10, 0 below 0, None inside the exclusion band [0, 10]."""
    if score > POSITIVE_ABOVE:
        return 1
    if score < NEGATIVE_BELOW:
        return 0
    return None


@dataclass(frozen=True)
class Triplet:
    drug_a_smiles: str
    drug_b_smiles: str
    cell_line: str
    synergy_score: float
    label: int | None
    drug_a_name: str = ""
    drug_b_name: str = ""

    @property
    def drug_a(self) -> str:
        return self.drug_a_name or self.drug_a_smiles

    @property
    def drug_b(self) -> str:
        return self.drug_b_name or self.drug_b_smiles

    @property
    def pair_key(self) -> tuple:
        return tuple(sorted((self.drug_a_smiles, self.drug_b_smiles)))

    def swapped(self) -> "Triplet":
        return Triplet(self.drug_b_smiles, self.drug_a_smiles, self.cell_line, self.synergy_score,
                       self.label, self.drug_b_name, self.drug_a_name)


@dataclass
class DropReport:
    total: int = 0
    positive: int = 0
    negative: int = 0
    excluded: int = 0

    def as_dict(self):
        return {"total": self.total, "positive": self.positive, "negative": self.negative,
                "excluded": self.excluded}


def load_triplets(path, known_cells=None, report: DropReport | None = None) -> list[Triplet]:
    """Read a triplet CSV and keep only rows outside the exclusion band.

    Optional columns ``drug_a`` / ``drug_b`` carry drug names. ``known_cells``
    (e.g. the keys of the expression map) makes unknown cell ids an error.
    """
    report = report if report is not None else DropReport()
    path = Path(path)
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MalformedRow(path, 1, "missing header row")
        missing = [c for c in TRIPLET_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise MalformedRow(path, 1, f"header lacks columns {missing}")
        for row in reader:
            line = reader.line_num
            if None in row or any(row.get(c) in (None, "") for c in TRIPLET_COLUMNS):
                raise MalformedRow(path, line, "wrong number of fields or empty required value")
            try:
                score = float(row["synergy_score"])
            except ValueError:
                raise MalformedRow(path, line, f"synergy_score {row['synergy_score']!r} is not a number") from None
            if not np.isfinite(score):
                raise MalformedRow(path, line, "synergy_score is not finite")
            cell = row["cell_line"].strip()
            if known_cells is not None and cell not in known_cells:
                raise UnknownCellLine(f"{path}:{line}: cell line {cell!r} not in expression matrix")
            report.total += 1
            label = label_for(score)
            if label is None:
                report.excluded += 1
                continue
            if label == 1:
                report.positive += 1
            else:
                report.negative += 1
            out.append(Triplet(row["drug_a_smiles"].strip(), row["drug_b_smiles"].strip(), cell, score, label,
                               (row.get("drug_a") or "").strip(), (row.get("drug_b") or "").strip()))
    if report.excluded:
        log.info("%s: dropped %d of %d rows in the [0, 10] band", path, report.excluded, report.total)
    return out


def load_queries(path, known_cells=None) -> list[Triplet]:
    """Triplets to score: the synergy_score column is optional and ignored for labeling."""
    path = Path(path)
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = TRIPLET_COLUMNS[:3]
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in required):
            raise MalformedRow(path, 1, f"header must contain {list(required)}")
        for row in reader:
            line = reader.line_num
            if None in row or any(not row.get(c) for c in required):
                raise MalformedRow(path, line, "wrong number of fields or empty required value")
            cell = row["cell_line"].strip()
            if known_cells is not None and cell not in known_cells:
                raise UnknownCellLine(f"{path}:{line}: cell line {cell!r} not in expression matrix")
            out.append(Triplet(row["drug_a_smiles"].strip(), row["drug_b_smiles"].strip(), cell, float("nan"),
                               None, (row.get("drug_a") or "").strip(), (row.get("drug_b") or "").strip()))
    return out


def write_drop_report(report: DropReport, path):
    Path(path).write_text(json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")


def read_expression_raw(path, width: int | None = None) -> dict[str, np.ndarray]:
    """Cell line -> raw expression vector (no transform)."""
    path = Path(path)
    profiles = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "cell_line":
            raise MalformedRow(path, 1, "first header column must be 'cell_line'")
        n_genes = len(header) - 1
        if width is not None and n_genes != width:
            raise WidthMismatch(f"{path}: {n_genes} gene columns, config expects {width}")
        for row in reader:
            line = reader.line_num
            if len(row) != n_genes + 1:
                raise MalformedRow(path, line, f"expected {n_genes + 1} fields, got {len(row)}")
            try:
                values = np.array([float(v) for v in row[1:]], dtype=np.float64)
            except ValueError:
                raise MalformedRow(path, line, "non-numeric expression value") from None
            if not np.isfinite(values).all():
                raise MalformedRow(path, line, "non-finite expression value")
            if row[0] in profiles:
                raise MalformedRow(path, line, f"duplicate cell line {row[0]!r}")
            profiles[row[0]] = values
    return profiles


class ExpressionScaler:
    """log1p, then per-gene z-score with statistics from the fitted cell lines only."""

    def fit(self, raw: dict[str, np.ndarray], cells=None) -> "ExpressionScaler":
        cells = sorted(raw) if cells is None else sorted(set(cells))
        m = np.log1p(np.stack([raw[c] for c in cells]))
        self.mean_ = m.mean(axis=0)
        self.std_ = m.std(axis=0)
        return self

    @classmethod
    def from_stats(cls, mean, std) -> "ExpressionScaler":
        self = cls()
        self.mean_ = np.asarray(mean, dtype=np.float64)
        self.std_ = np.asarray(std, dtype=np.float64)
        return self

    def transform(self, raw: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        safe = np.where(self.std_ > 0, self.std_, 1.0)
        out = {}
        for cell, v in raw.items():
            z = (np.log1p(v) - self.mean_) / safe
            out[cell] = np.where(self.std_ > 0, z, 0.0).astype(np.float32)
        return out


def load_expression(path, width: int | None = None) -> dict[str, np.ndarray]:
    """Cell line -> log1p + z-scored profile (statistics over every row of the file)."""
    raw = read_expression_raw(path, width)
    if not raw:
        raise MalformedRow(Path(path), 2, "expression matrix has no rows")
    return ExpressionScaler().fit(raw).transform(raw)


def lookup_cell(profiles: dict, cell: str) -> np.ndarray:
    try:
        return profiles[cell]
    except KeyError:
        raise UnknownCellLine(f"cell line {cell!r} not in expression matrix") from None


# ---------------------------------------------------------------------------
# folds


@dataclass
class DatasetSplit:
    folds: list  # n_partitions disjoint index arrays

    def rotation(self, k: int):
        """(train, val, test) indices: test = partition k, val = k+1, train = the rest."""
        n = len(self.folds)
        test = self.folds[k % n]
        val = self.folds[(k + 1) % n]
        train = np.concatenate([self.folds[(k + j) % n] for j in range(2, n)])
        return np.sort(train), np.sort(val), np.sort(test)


def make_folds(triplets, seed: int, n_partitions: int = 5, unit: str = "triplet") -> DatasetSplit:
    n = len(triplets)
    if n < n_partitions:
        raise TooFewSamples(f"need at least {n_partitions} labeled triplets, got {n}")
    rng = np.random.default_rng(seed)
    if unit == "triplet":
        perm = rng.permutation(n)
        return DatasetSplit([np.sort(p) for p in np.array_split(perm, n_partitions)])
    if unit != "pair":
        raise ValueError(f"unknown randomization unit {unit!r}")
    groups: dict[tuple, list[int]] = {}
    for i, t in enumerate(triplets):
        groups.setdefault(t.pair_key, []).append(i)
    keys = sorted(groups)
    if len(keys) < n_partitions:
        raise TooFewSamples(f"need at least {n_partitions} drug pairs, got {len(keys)}")
    order = rng.permutation(len(keys))
    folds = [[] for _ in range(n_partitions)]
    sizes = np.zeros(n_partitions, dtype=np.int64)
    for gi in order:
        k = int(np.argmin(sizes))
        folds[k].extend(groups[keys[gi]])
        sizes[k] += len(groups[keys[gi]])
    return DatasetSplit([np.sort(np.array(f, dtype=np.int64)) for f in folds])


def label_counts(triplets, idx=None) -> dict:
    labels = np.array([t.label for t in triplets], dtype=np.int64)
    if idx is not None:
        labels = labels[np.asarray(idx, dtype=np.int64)]
    return {"total": int(len(labels)), "positive": int((labels == 1).sum()), "negative": int((labels == 0).sum())}


def dataset_counts(triplets) -> dict:
    drugs = {t.drug_a_smiles for t in triplets} | {t.drug_b_smiles for t in triplets}
    return {"triplets": len(triplets), "drugs": len(drugs), "cell_lines": len({t.cell_line for t in triplets})}


def validate_oneil_counts(triplets) -> dict:
    counts = dataset_counts(triplets)
    bad = {k: (counts[k], v) for k, v in ONEIL_COUNTS.items() if counts[k] != v}
    if bad:
        detail = ", ".join(f"{k}={got} (expected {want})" for k, (got, want) in bad.items())
        raise DatasetCountMismatch(f"dataset does not match the O'Neil build: {detail}")
    return counts


# ---------------------------------------------------------------------------
# batches


class GraphCache:
    """SMILES -> parsed graph, parsing each distinct string once."""

    def __init__(self):
        self._graphs: dict[str, MolecularGraph] = {}

    def __getitem__(self, smiles: str) -> MolecularGraph:
        g = self._graphs.get(smiles)
        if g is None:
            g = self._graphs[smiles] = parse_smiles(smiles)
        return g

    def add(self, smiles, graph):
        self._graphs[smiles] = graph

    def __len__(self):
        return len(self._graphs)


@dataclass
class TripletBatch:
    graphs: GraphBatch   # drug-x graphs first, then drug-y graphs
    cells: np.ndarray    # B x cell_dim
    labels: np.ndarray | None
    triplets: list = field(default_factory=list)

    def __post_init__(self):
        b = self.size
        self.node_cell = self.graphs.node_broadcast(np.concatenate([np.arange(b), np.arange(b)]))
        self.pad_x, self.mask_x, self.n_x = self.graphs.padder(np.arange(b))
        self.pad_y, self.mask_y, self.n_y = self.graphs.padder(np.arange(b, 2 * b))
        self.pad_x_t = self.pad_x.T.tocsr()
        self.pad_y_t = self.pad_y.T.tocsr()

    @property
    def size(self) -> int:
        return len(self.cells)


def make_batch(triplets, graphs: GraphCache, profiles: dict) -> TripletBatch:
    xs, ys = [], []
    for t in triplets:
        for smiles, name, bucket in ((t.drug_a_smiles, t.drug_a, xs), (t.drug_b_smiles, t.drug_b, ys)):
            try:
                bucket.append(graphs[smiles])
            except SmilesError as e:
                raise DrugParseError(name, e) from e
    cells = np.stack([lookup_cell(profiles, t.cell_line) for t in triplets]).astype(np.float32)
    labels = None if any(t.label is None for t in triplets) else np.array([t.label for t in triplets])
    return TripletBatch(batch_graphs(xs + ys), cells, labels, list(triplets))


def iter_batches(triplets, batch_size: int, rng: np.random.Generator | None = None):
    """Index chunks of at most ``batch_size``; shuffled when ``rng`` is given."""
    idx = np.arange(len(triplets)) if rng is None else rng.permutation(len(triplets))
    for start in range(0, len(idx), batch_size):
        yield idx[start:start + batch_size]
