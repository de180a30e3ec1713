import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqsplit import autodiff as ad
from eqsplit import losses as L
from eqsplit import reconstructors as rec
from eqsplit.group import build_dihedral_group, build_shift_group, build_trivial_group
from eqsplit.operators import SplitRule, enumerate_splits, make_inpainting


def _toy(seed=0, m=6, n=5, batch=3):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n)) / np.sqrt(m)
    f = rec.Linear.from_matrix(rng.standard_normal((n, n)), rng.standard_normal(n) * 0.1)
    return f, rng.standard_normal((batch, m)), A


def test_supervised_and_consistency_vanish_for_perfect_reconstruction():
    x = np.array([[1.0, 2.0, 3.0]])
    f = rec.ArtifactRemoval(rec.IdentityDenoiser())
    assert L.mc_loss(f, x, np.eye(3)).value == 0.0
    assert L.sup_loss(f, x, x, np.eye(3)).value == 0.0


def test_supervised_loss_value_and_weights():
    f, y, A = _toy()
    x = np.random.default_rng(1).standard_normal((3, 5))
    err = np.sum((f(y, A) - x) ** 2, axis=1)
    assert L.sup_loss(f, x, y, A).value == pytest.approx(err.mean(), rel=1e-12)
    w = np.array([0.2, 0.0, 0.8])
    assert L.sup_loss(f, x, y, A, sample_weights=w).value == pytest.approx(w @ err, rel=1e-12)
    with pytest.raises(ValueError):
        L.sup_loss(f, x[:, :4], y, A)


def test_keep_all_split_reduces_to_consistency():
    f, y, A = _toy()
    v = L.split_loss(f, y, A, SplitRule.fixed([tuple(range(6))]), seed=0)
    assert v.terms["prediction"] == 0.0
    assert v.value == pytest.approx(L.mc_loss(f, y, A).value, rel=1e-12)


def test_split_loss_on_mask_by_hand():
    A = make_inpainting(3, [1, 1, 1]).matrix
    f = rec.ArtifactRemoval(rec.IdentityDenoiser())
    y = np.array([[1.0, 2.0, 3.0]])
    # keeping row 0 zero-fills the rest; the held-out rows contribute 2^2 + 3^2
    v = L.split_loss(f, y, A, SplitRule.fixed([(0,)]), seed=0)
    assert v.terms == {"consistency": 0.0, "prediction": 13.0}


def test_es_with_trivial_group_equals_split_pathwise():
    f, y, A = _toy(2)
    rule = SplitRule.bernoulli(0.5)
    for seed in range(10):
        a = L.es_loss(f, y, A, build_trivial_group(5), rule, seed=seed)
        b = L.split_loss(f, y, A, rule, seed=seed)
        assert a.value == b.value
        np.testing.assert_array_equal(a.gradient, b.gradient)


def test_reduced_es_matches_es_for_equivariant_model():
    G = build_shift_group(8)
    f = rec.ArtifactRemoval(rec.ConvDenoiser((1, 8), hidden=(3,), kernel=3, seed=1))
    rng = np.random.default_rng(3)
    A = rng.standard_normal((5, 8))
    y = rng.standard_normal((4, 5))
    rule = SplitRule.bernoulli(0.6)
    for seed in range(5):
        full = L.es_loss(f, y, A, G, rule, seed=seed)
        red = L.es_loss_reduced(f, y, A, rule, seed=seed)
        assert full.value == pytest.approx(red.value, rel=1e-10)
        np.testing.assert_allclose(full.gradient, red.gradient, rtol=1e-8, atol=1e-10)


def test_reduced_es_rejects_unclaimed_models():
    f, y, A = _toy()
    with pytest.raises(L.NotEquivariantError):
        L.es_loss_reduced(f, y, A, SplitRule.bernoulli(0.5), seed=0)


def test_split_loss_monte_carlo_matches_enumeration():
    f, y, A = _toy(4, batch=2)
    rule = SplitRule.bernoulli(0.5)
    exact = L.split_loss(f, y, A, rule, exact=True).value
    draws = np.array([L.split_loss(f, y, A, rule, seed=s).value for s in range(10_000)])
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - exact) < 3 * se


def test_exact_es_is_mean_over_group_of_exact_split_losses():
    G = build_shift_group(5)
    f, y, A = _toy(5)
    rule = SplitRule.bernoulli(0.4)
    total = 0.0
    for g in range(G.order):
        Ag = A @ G.matrix(g)
        # f evaluated on (y1, M A T_g) but remeasured through A T_g
        shifted = rec.ClosedForm(lambda yy, AA, g=g: f(yy, AA))
        total += L.split_loss(shifted, y, Ag, rule, exact=True).value / G.order
    assert L.es_loss(f, y, A, G, rule, exact=True).value == pytest.approx(total, rel=1e-12)


def test_ges_without_noise_equals_es():
    D = build_dihedral_group(2)
    f, y, A = _toy(6, m=3, n=4)
    rule = SplitRule.bernoulli(0.5)
    for seed in range(5):
        assert L.ges_loss(f, y, A, D, rule, alpha=0.7, sigma=0.0, seed=seed).value == pytest.approx(
            L.es_loss(f, y, A, D, rule, seed=seed).value, rel=1e-12)
    with pytest.raises(ValueError):
        L.ges_loss(f, y, A, D, rule, alpha=0.0)


def test_ges_consistency_is_unbiased_for_clean_targets():
    # E_w ||A1 f(y1 + a w) - (y1 - w/a)||^2 = E||A1 f(y1 + a w) - y1||^2 + m1 sigma^2 / a^2 for any f
    A = np.eye(4)
    f = rec.Linear.from_matrix(0.5 * np.eye(4))
    y = np.tile(np.array([1.0, -1.0, 2.0, 0.5]), (20_000, 1))
    rule = SplitRule.fixed([tuple(range(4))])
    G = build_trivial_group(4)
    a, s = 0.5, 0.2
    v = L.ges_loss(f, y, A, G, rule, alpha=a, sigma=s, seed=1).terms["consistency"]
    # f(y1 + a w) - y1 + w/a = -y1/2 + (a/2 + 1/a) w
    expect = np.sum((0.5 * y[0]) ** 2) + 4 * s**2 * (a / 2 + 1 / a) ** 2
    assert v == pytest.approx(expect, rel=0.02)


def test_ei_vanishes_for_identity_on_full_operator():
    G = build_shift_group(6)
    f = rec.ArtifactRemoval(rec.IdentityDenoiser())
    y = np.random.default_rng(0).standard_normal((3, 6))
    v = L.ei_loss(f, y, np.eye(6), G, seed=0)
    assert v.value == pytest.approx(0.0, abs=1e-24)
    with pytest.raises(ValueError):
        L.ei_loss(f, y, np.eye(6), G, lam=0.0)


def test_ei_equivariance_term_by_hand():
    G = build_shift_group(4)
    f = rec.Linear.from_matrix(np.diag([1.0, 2.0, 3.0, 4.0]))
    y = np.array([[1.0, 0.0, 0.0, 0.0]])
    lam = 0.3
    v = L.ei_loss(f, y, np.eye(4), G, lam=lam, seed=7)
    g = G.random_element(L.streams(7)[1])
    xhat = f(y[0], np.eye(4))
    moved = xhat[G.perms[g]]
    assert v.terms["equivariance"] == pytest.approx(lam * np.sum((moved - f(moved, np.eye(4))) ** 2), rel=1e-12)


def test_ei_composes_a_list_of_actions():
    f, y, A = _toy(7, m=4, n=4)
    acts = [build_shift_group(2, 2), build_dihedral_group(2)]
    a = L.ei_loss(f, y, A, acts, seed=3)
    b = L.ei_loss(f, y, A, acts, seed=3)
    assert a.value == b.value


def test_sure_matches_closed_form_for_diagonal_linear_model():
    rng = np.random.default_rng(8)
    n, sigma = 6, 0.3
    d = rng.uniform(0.2, 1.0, n)
    f = rec.Linear.from_matrix(np.diag(d))
    x = rng.standard_normal(n)
    y = x + sigma * rng.standard_normal((5000, n))
    per = np.sum((y * d - y) ** 2, axis=1) - n * sigma**2 + 2 * sigma**2 * d.sum()
    v = L.sure_loss(f, y, np.eye(n), sigma, probes=1, seed=0)
    # for a diagonal Jacobian one Rademacher probe is exact
    assert v.value == pytest.approx(per.mean(), rel=1e-8)
    true = np.sum((y * d - x) ** 2, axis=1)
    diff = per - true
    assert abs(diff.mean()) < 3 * diff.std(ddof=1) / np.sqrt(diff.size)


def test_divergence_estimate_for_affine_model():
    rng = np.random.default_rng(9)
    n = 20
    W = 2 * np.eye(n) + 0.02 * rng.standard_normal((n, n))
    f = rec.Linear.from_matrix(W, rng.standard_normal(n))
    div = L.divergence_estimate(f, rng.standard_normal((1, n)), np.eye(n), probes=64, seed=1)
    assert div[0] == pytest.approx(np.trace(W), rel=0.02)


def test_sure_needs_noise():
    f, y, A = _toy()
    with pytest.raises(ValueError):
        L.sure_loss(f, y, A, 0.0)


def test_mc_samples_average_child_draws():
    f, y, A = _toy(10)
    spec = L.LossSpec("split", rule=SplitRule.bernoulli(0.5), mc_samples=4)
    v = L.evaluate(spec, f, y, A, seed=11)
    kids = np.random.SeedSequence(11).spawn(4)
    ref = [L.split_loss(f, y, A, spec.rule, seed=k) for k in kids]
    assert v.value == pytest.approx(np.mean([r.value for r in ref]), rel=1e-12)
    np.testing.assert_allclose(v.gradient, np.mean([r.gradient for r in ref], axis=0), rtol=1e-12)


def test_same_seed_same_loss():
    f, y, A = _toy(12)
    spec = L.LossSpec("es", rule=SplitRule.bernoulli(0.5), action=build_shift_group(5))
    a, b = L.evaluate(spec, f, y, A, seed=3), L.evaluate(spec, f, y, A, seed=3)
    assert a.value == b.value
    assert a.gradient.tobytes() == b.gradient.tobytes()


@pytest.mark.parametrize("kw", [
    dict(kind="bogus"),
    dict(kind="split"),
    dict(kind="es", rule=SplitRule.bernoulli(0.5)),
    dict(kind="ei", action=build_shift_group(3), lam=0.0),
    dict(kind="ges", rule=SplitRule.bernoulli(0.5), action=build_shift_group(3), alpha=-1.0),
    dict(kind="sure"),
    dict(kind="mc", sigma=-1.0),
    dict(kind="mc", probes=0),
])
def test_loss_spec_validation(kw):
    with pytest.raises(L.LossConfigError):
        L.LossSpec(**kw)


def test_supervised_dispatch_needs_ground_truth():
    f, y, A = _toy()
    with pytest.raises(L.LossConfigError):
        L.evaluate(L.LossSpec("sup"), f, y, A)


def test_measurement_length_mismatch():
    f, y, A = _toy()
    with pytest.raises(ValueError):
        L.mc_loss(f, y[:, :4], A)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), kind=st.sampled_from(["mc", "split", "es", "ges", "ei", "sure"]))
def test_loss_gradients_match_central_differences(seed, kind):
    f, y, A = _toy(seed % 997, m=4, n=4, batch=2)
    G = build_shift_group(2, 2)
    spec = L.LossSpec(kind, rule=SplitRule.bernoulli(0.5), action=G, sigma=0.1 if kind in ("sure", "ges") else 0.0)
    # a fixed tau keeps the SURE finite difference smooth in the parameters
    if kind == "sure":
        def value(t):
            return L.sure_loss(f, y, A, 0.1, seed=seed, params=t, tau=1e-3)
    else:
        def value(t):
            return L.evaluate(spec, f, y, A, seed=seed, params=t)
    g = value(f.params).gradient
    num = ad.numerical_gradient(lambda t: value(t).value, f.params)
    np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-6)


def test_enumerated_support_matches_exact_flag():
    f, y, A = _toy(13, m=3)
    rule = SplitRule.bernoulli(0.3)
    total = 0.0
    for rows, p in enumerate_splits(rule, 3):
        total += p * L.split_loss(f, y, A, SplitRule.fixed([rows]), seed=0).value
    assert L.split_loss(f, y, A, rule, exact=True).value == pytest.approx(total, rel=1e-12)
