import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adgsyn.data import (
    DropReport,
    ExpressionScaler,
    GraphCache,
    label_for,
    load_expression,
    load_queries,
    load_triplets,
    make_batch,
    make_folds,
    read_expression_raw,
)
from adgsyn.errors import DrugParseError, MalformedRow, TooFewSamples, UnknownCellLine, WidthMismatch
from adgsyn.synthetic import toy_triplets, write_toy_dataset


@pytest.mark.parametrize("score, label", [(10.0001, 1), (10.0, None), (0.0, None), (-0.0001, 0), (5, None)])
def test_label_band(score, label):
    assert label_for(score) == label


def test_load_toy_dataset(tmp_path):
    paths = write_toy_dataset(tmp_path, n=40, n_excluded=6)
    report = DropReport()
    raw = read_expression_raw(paths["expression"], width=32)
    triplets = load_triplets(paths["triplets"], known_cells=raw, report=report)
    assert len(triplets) == 40
    assert report.as_dict() == {"total": 46, "positive": report.positive, "negative": report.negative,
                                "excluded": 6}
    assert report.positive + report.negative == 40
    assert triplets[0].drug_a_name


def test_malformed_rows(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("drug_a_smiles,drug_b_smiles,cell_line,synergy_score\nCC,CO,X,abc\n")
    with pytest.raises(MalformedRow) as info:
        load_triplets(p)
    assert info.value.line == 2
    p.write_text("drug_a_smiles,drug_b_smiles,cell_line\nCC,CO,X\n")
    with pytest.raises(MalformedRow):
        load_triplets(p)
    p.write_text("drug_a_smiles,drug_b_smiles,cell_line,synergy_score\nCC,CO,X,20\n")
    with pytest.raises(UnknownCellLine):
        load_triplets(p, known_cells={"Y"})


def test_queries_need_no_score(tmp_path):
    p = tmp_path / "q.csv"
    p.write_text("drug_a_smiles,drug_b_smiles,cell_line\nCC,CO,X\n")
    (q,) = load_queries(p)
    assert q.label is None and q.cell_line == "X"


def test_expression_width_and_values(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("cell_line,G1,G2\nA,1,2\nB,3,4\n")
    with pytest.raises(WidthMismatch):
        read_expression_raw(p, width=3)
    prof = load_expression(p)
    np.testing.assert_allclose(prof["A"], [-1, -1], atol=1e-6)
    p.write_text("cell_line,G1\nA,1\nA,2\n")
    with pytest.raises(MalformedRow):
        read_expression_raw(p)


def test_scaler_uses_training_cells_only():
    raw = {"A": np.array([0.0, 1.0]), "B": np.array([2.0, 1.0]), "C": np.array([100.0, 50.0])}
    s = ExpressionScaler().fit(raw, ["A", "B"])
    np.testing.assert_allclose(s.mean_, np.log1p([[0.0, 1.0], [2.0, 1.0]]).mean(axis=0))
    out = s.transform(raw)
    # the constant gene gets zero instead of a division by zero
    assert out["A"][1] == 0.0 and out["C"][1] == 0.0
    again = ExpressionScaler.from_stats(s.mean_, s.std_).transform(raw)
    np.testing.assert_array_equal(again["C"], out["C"])


@given(st.integers(5, 60), st.integers(0, 100), st.sampled_from([3, 5]))
def test_folds_partition_and_rotate(n, seed, parts):
    triplets, _ = toy_triplets(n=n, seed=seed % 7)
    split = make_folds(triplets, seed, parts)
    every = np.sort(np.concatenate(split.folds))
    np.testing.assert_array_equal(every, np.arange(n))
    for k in range(parts):
        tr, va, te = split.rotation(k)
        assert len(set(tr) | set(va) | set(te)) == n
        assert not set(tr) & set(te) and not set(va) & set(te) and not set(tr) & set(va)


def test_pair_split_keeps_pairs_together():
    triplets, _ = toy_triplets(n=120, seed=1)
    split = make_folds(triplets, 0, 5, unit="pair")
    owner = {}
    for k, fold in enumerate(split.folds):
        for i in fold:
            assert owner.setdefault(triplets[i].pair_key, k) == k


def test_too_few_samples():
    triplets, _ = toy_triplets(n=4)
    with pytest.raises(TooFewSamples):
        make_folds(triplets, 0, 5)


def test_batch_layout():
    triplets, raw = toy_triplets(n=6, n_genes=8)
    profiles = ExpressionScaler().fit(raw).transform(raw)
    batch = make_batch(triplets, GraphCache(), profiles)
    assert batch.size == 6 and batch.cells.shape == (6, 8)
    assert batch.graphs.n_graphs == 12
    assert batch.mask_x.shape == (6, batch.n_x)
    assert (~batch.mask_x).sum() == sum(batch.graphs.sizes[:6])


def test_bad_drug_smiles_names_the_drug():
    triplets, raw = toy_triplets(n=1, n_genes=4)
    t = triplets[0]
    broken = type(t)("C(C", t.drug_b_smiles, t.cell_line, t.synergy_score, t.label, "brokenol", "")
    with pytest.raises(DrugParseError, match="brokenol"):
        make_batch([broken], GraphCache(), ExpressionScaler().fit(raw).transform(raw))
