import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqsplit.group import build_shift_group, build_dihedral_group
from eqsplit.operators import (
    DENSE, DFT, ROW_MASK, ForwardOperator, OperatorFormatError, SplitRule, bernoulli_mask, compression_rows,
    draw_rows, enumerate_splits, load_operator, make_gaussian_cs, make_inpainting, make_subsampled_dft,
    sample_split, save_operator, simulate, split_from_rows, virtual_matrix, virtual_operator,
)


def test_inpainting_selects_coordinates():
    op = make_inpainting(4, [1, 0, 1, 0])
    assert op.kind == ROW_MASK
    np.testing.assert_array_equal(op(np.array([5.0, 6, 7, 8])), [5, 7])


def test_inpainting_full_mask_is_identity():
    op = make_inpainting(6, np.ones(6, bool))
    np.testing.assert_array_equal(op.matrix, np.eye(6))


def test_inpainting_rows_are_distinct_basis_vectors():
    op = make_inpainting(20, bernoulli_mask(20, 0.5, seed=3))
    assert np.all(op.matrix.sum(axis=1) == 1)
    assert len({tuple(r) for r in op.matrix}) == op.m


def test_empty_mask_rejected():
    with pytest.raises(ValueError):
        make_inpainting(4, np.zeros(4, bool))


def test_bernoulli_mask_count_is_binomial():
    n, p = 784, 0.3
    counts = np.array([bernoulli_mask(n, p, seed=s).sum() for s in range(1000)])
    sd = np.sqrt(n * p * (1 - p))
    assert abs(counts.mean() - n * p) < 3 * sd / np.sqrt(len(counts))
    assert abs(counts.std() - sd) < 0.1 * sd


def test_gaussian_cs_is_deterministic():
    a = make_gaussian_cs(10, 20, seed=5).matrix
    b = make_gaussian_cs(10, 20, seed=5).matrix
    assert a.tobytes() == b.tobytes()
    assert make_gaussian_cs(10, 20, seed=5).kind == DENSE


def test_compression_rows_grid():
    assert compression_rows(784, 50) == 392
    assert [compression_rows(784, c) for c in (90, 80, 70, 60, 50)] == [78, 157, 235, 314, 392]


def test_gaussian_cs_column_norms_concentrate():
    norms = np.concatenate([(make_gaussian_cs(392, 784, seed=s).matrix ** 2).sum(axis=0) for s in range(3)])
    assert abs(norms.mean() - 1.0) < 0.05


def test_gaussian_cs_rejects_oversampling():
    with pytest.raises(ValueError):
        make_gaussian_cs(21, 20, seed=0)


def test_full_dft_is_unitary():
    op = make_subsampled_dft(6, np.ones((6, 6), bool))
    assert op.kind == DFT
    np.testing.assert_allclose(op.matrix.T @ op.matrix, np.eye(36), atol=1e-10)


def test_dc_atom_on_constant_image():
    mask = np.zeros((5, 5), bool)
    mask[0, 0] = True
    op = make_subsampled_dft(5, mask)
    c = 0.7
    # unitary normalization: DC coefficient of a constant image is c * side
    np.testing.assert_allclose(op(np.full(25, c)), [c * 5, 0.0], atol=1e-12)


def test_open_half_plane_mask_has_full_row_rank():
    # columns 1..3 hold no self-conjugate frequency and no conjugate pair
    mask = np.zeros((8, 8), bool)
    mask[:, 1:4] = True
    op = make_subsampled_dft(8, mask)
    assert op.m == 48
    assert np.linalg.matrix_rank(op.matrix) == op.m


def test_self_conjugate_frequency_has_zero_imaginary_row():
    mask = np.zeros((8, 8), bool)
    mask[4, 0] = True
    np.testing.assert_allclose(make_subsampled_dft(8, mask).matrix[1], 0.0, atol=1e-15)


def test_empty_frequency_set_rejected():
    with pytest.raises(ValueError):
        make_subsampled_dft(4, np.zeros((4, 4), bool))


def test_simulate_noiseless_and_noise_level():
    op = make_gaussian_cs(5, 8, seed=1)
    x = np.random.default_rng(0).standard_normal(8)
    np.testing.assert_array_equal(simulate(x, op).y, op(x))
    xs = np.tile(x, (20_000, 1))
    r = simulate(xs, op, sigma=0.005, seed=2).y - op(xs)
    assert abs(r.std() / 0.005 - 1) < 0.01


def test_simulate_dimension_mismatch():
    with pytest.raises(ValueError):
        simulate(np.zeros(3), make_gaussian_cs(2, 4, seed=0))


def test_virtual_operator_identity_and_mask_shift():
    G = build_shift_group(4)
    op = make_inpainting(4, [0, 1, 0, 1])
    assert np.array_equal(virtual_operator(op, G, G.identity).matrix, op.matrix)
    v = virtual_operator(op, G, 1)
    np.testing.assert_array_equal(v.matrix, op.matrix @ G.matrix(1))
    assert v.kind == ROW_MASK


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), dihedral=st.booleans())
def test_virtual_operator_undoes_transform(seed, dihedral):
    rng = np.random.default_rng(seed)
    G = build_dihedral_group(3) if dihedral else build_shift_group(9)
    A = rng.standard_normal((4, 9))
    x = rng.standard_normal(9)
    g = G.random_element(rng)
    Ag = virtual_matrix(A, G, g)
    np.testing.assert_array_equal(Ag, A @ G.matrix(g))
    np.testing.assert_allclose(Ag @ (G.matrix(G.inverse(g)) @ x), A @ x, atol=1e-12)


def test_degenerate_split_keeps_everything():
    op = make_gaussian_cs(5, 7, seed=0)
    meas = simulate(np.ones(7), op)
    s = sample_split(SplitRule.fixed([tuple(range(5))]), meas, seed=0)
    np.testing.assert_array_equal(s.y1, meas.y)
    assert s.y2.size == 0


def test_split_bookkeeping_row_permutes_to_source():
    op = make_gaussian_cs(10, 12, seed=0)
    meas = simulate(np.arange(12.0), op)
    s = sample_split(SplitRule.bernoulli(0.5), meas, seed=4)
    p = s.permutation
    np.testing.assert_array_equal(np.concatenate([s.y1, s.y2]), meas.y[p])
    np.testing.assert_array_equal(np.vstack([s.A1, s.A2]), op.matrix[p])
    np.testing.assert_array_equal(s.M @ op.matrix, s.A1)


def test_bernoulli_keep_fraction():
    rng = np.random.default_rng(0)
    rule = SplitRule.bernoulli(0.6)
    frac = np.mean([len(draw_rows(rule, 50, rng)) / 50 for _ in range(10_000)])
    assert abs(frac - 0.6) < 0.015


def test_min_rows_exceeding_m_rejected():
    with pytest.raises(ValueError):
        draw_rows(SplitRule.bernoulli(0.5, min_rows=6), 5, np.random.default_rng(0))


def test_split_rule_validation():
    with pytest.raises(ValueError):
        SplitRule.bernoulli(1.0)
    with pytest.raises(ValueError):
        SplitRule.fixed([(0,), (1,)], weights=[0.2, 0.2])
    with pytest.raises(ValueError):
        enumerate_splits(SplitRule.fixed([(0, 5)]), 3)


def test_enumerated_bernoulli_support_sums_to_one():
    sup = enumerate_splits(SplitRule.bernoulli(0.3), 5)
    assert len(sup) == 2**5 - 1
    assert sum(p for _, p in sup) == pytest.approx(1.0, abs=1e-14)
    # conditional on at least one row, P(all rows) = p^m / (1 - (1-p)^m)
    full = dict(sup)[tuple(range(5))]
    assert full == pytest.approx(0.3**5 / (1 - 0.7**5), rel=1e-12)


def test_split_from_rows_rows_order():
    A = np.arange(12.0).reshape(4, 3)
    s = split_from_rows(np.arange(4.0), A, [2, 0])
    np.testing.assert_array_equal(sorted(s.rows2), [1, 3])


@pytest.mark.parametrize("make", [
    lambda: make_inpainting(9, bernoulli_mask(9, 0.5, seed=1)),
    lambda: make_gaussian_cs(3, 9, seed=1),
    lambda: make_subsampled_dft(3, np.eye(3, dtype=bool)),
], ids=["mask", "dense", "dft"])
def test_operator_file_round_trip(tmp_path, make):
    op = make()
    save_operator(tmp_path / "a.eqop", op)
    back = load_operator(tmp_path / "a.eqop")
    assert back.kind == op.kind
    assert back.matrix.tobytes() == op.matrix.tobytes()
    if op.selection is not None:
        np.testing.assert_array_equal(back.selection, op.selection)


def test_operator_file_errors(tmp_path):
    p = tmp_path / "a.eqop"
    save_operator(p, make_gaussian_cs(3, 5, seed=0))
    raw = p.read_bytes()
    (tmp_path / "magic.eqop").write_bytes(b"NOPE" + raw[4:])
    (tmp_path / "short.eqop").write_bytes(raw[:-8])
    for name in ("magic.eqop", "short.eqop"):
        with pytest.raises(OperatorFormatError):
            load_operator(tmp_path / name)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        ForwardOperator("sparse", np.eye(2))
