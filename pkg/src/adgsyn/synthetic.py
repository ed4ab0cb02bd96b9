"""Small synthetic datasets with a known, linearly separable labeling rule.

Cell lines come in two groups whose expression profiles differ on a block of
marker genes. A triplet is synergistic exactly when its cell line belongs to
the responsive group, so a linear read-out of the cell context separates the
classes perfectly.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .data import Triplet, label_for

TOY_DRUGS = {
    "ethanol": "CCO",
    "benzene": "c1ccccc1",
    "acetic_acid": "CC(=O)O",
    "pyridine": "c1ccncc1",
    "glycerol": "OCC(O)CO",
    "phenol": "Oc1ccccc1",
    "isopropanol": "CC(C)O",
    "aniline": "Nc1ccccc1",
}


def toy_expression(n_cells=8, n_genes=32, n_markers=8, seed=0) -> tuple[dict, dict]:
    """Raw TPM-like profiles and the responsive flag per cell line."""
    rng = np.random.default_rng(seed)
    raw, responsive = {}, {}
    for i in range(n_cells):
        name = f"CELL{i:02d}"
        log_tpm = rng.normal(2.0, 0.3, size=n_genes)
        flag = i % 2 == 0
        log_tpm[:n_markers] += 1.5 if flag else -1.5
        raw[name] = np.expm1(np.clip(log_tpm, 0.0, None))
        responsive[name] = flag
    return raw, responsive


def toy_triplets(n=64, seed=0, n_cells=8, n_genes=32, n_excluded=0):
    """``n`` labeled triplets plus ``n_excluded`` rows inside the [0, 10] band.

    Returns ``(triplets, raw_expression)``; excluded rows carry ``label=None``.
    """
    rng = np.random.default_rng(seed)
    raw, responsive = toy_expression(n_cells, n_genes, seed=seed)
    names = list(TOY_DRUGS)
    cells = sorted(raw)
    combos = [(a, b, c) for i, a in enumerate(names) for b in names[i + 1:] for c in cells]
    if n + n_excluded > len(combos):
        raise ValueError(f"at most {len(combos)} distinct triplets available")
    picks = rng.choice(len(combos), size=n + n_excluded, replace=False)
    out = []
    for j, k in enumerate(picks):
        a, b, c = combos[k]
        if j >= n:
            score = float(rng.uniform(0.5, 9.5))
        elif responsive[c]:
            score = float(rng.uniform(12.0, 40.0))
        else:
            score = float(rng.uniform(-30.0, -2.0))
        out.append(Triplet(TOY_DRUGS[a], TOY_DRUGS[b], c, score, label_for(score), a, b))
    return out, raw


def write_triplets_csv(triplets, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["drug_a", "drug_b", "drug_a_smiles", "drug_b_smiles", "cell_line", "synergy_score"])
        for t in triplets:
            w.writerow([t.drug_a_name, t.drug_b_name, t.drug_a_smiles, t.drug_b_smiles, t.cell_line,
                        repr(t.synergy_score)])


def write_expression_csv(raw: dict, path):
    width = len(next(iter(raw.values())))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_line", *[f"G{i:04d}" for i in range(width)]])
        for cell in sorted(raw):
            w.writerow([cell, *[repr(float(v)) for v in raw[cell]]])


def write_toy_dataset(directory, n=64, seed=0, n_genes=32, n_excluded=8) -> dict:
    """Write triplets.csv and expression.csv; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    triplets, raw = toy_triplets(n, seed, n_genes=n_genes, n_excluded=n_excluded)
    paths = {"triplets": directory / "triplets.csv", "expression": directory / "expression.csv"}
    write_triplets_csv(triplets, paths["triplets"])
    write_expression_csv(raw, paths["expression"])
    return paths
