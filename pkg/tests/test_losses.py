import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drrl import losses as L

scores = st.floats(-1.0, 1.0, allow_nan=False)
pos_arrays = st.lists(scores, min_size=1, max_size=4).map(np.asarray)
neg_arrays = st.lists(scores, min_size=1, max_size=12).map(np.asarray)


def make_input(pos, neg):
    return L.UserLossInput(np.asarray(pos, dtype=float), np.asarray(neg, dtype=float))


def test_spec_validation():
    with pytest.raises(ValueError):
        L.LossSpec(kind="nope").validate()
    with pytest.raises(ValueError):
        L.LossSpec(kind="sl", tau=0.0).validate()
    with pytest.raises(ValueError):
        L.LossSpec(kind="drrl", gamma_star=0.5).validate()
    assert L.LossSpec(kind="drrl", gamma_star=1.0).gamma == np.inf
    assert L.LossSpec(kind="drrl", gamma_star=2.0).gamma == pytest.approx(2.0)


def test_mse_hand_values():
    out = L.mse_loss(make_input([0.5], [0.25, -0.5]))
    assert out.value == pytest.approx(0.25 + (0.0625 + 0.25) / 2)
    assert out.d_pos == pytest.approx([-1.0])
    assert out.d_neg == pytest.approx([0.25, -0.5])


def test_bce_symmetric_point():
    # f = 0 scores log(2) per side
    out = L.bce_loss(make_input([0.0], [0.0]))
    assert out.value == pytest.approx(2 * np.log(2))
    assert out.d_pos == pytest.approx([-0.5])
    assert out.d_neg == pytest.approx([0.5])


def test_bpr_pairwise_mean():
    out = L.bpr_loss(make_input([0.3, 0.1], [0.2]))
    sig = 1 / (1 + np.exp(-np.array([0.1, -0.1])))
    assert out.value == pytest.approx(float(np.mean(-np.log(sig))))
    # pair gradients average over the 2 pairs
    assert out.d_neg == pytest.approx([np.sum(1 - sig) / 2])


def test_bpr_requires_negatives():
    with pytest.raises(ValueError):
        L.bpr_loss(make_input([0.3], []))


def test_softmax_loss_matches_direct_form():
    inp = make_input([0.4], [0.2, -0.1, 0.5])
    tau = 0.2
    out = L.softmax_loss(inp, tau)
    direct = -0.4 / tau + np.log(np.sum(np.exp(inp.neg_scores / tau)))
    assert out.value == pytest.approx(direct)
    softmax = np.exp(inp.neg_scores / tau) / np.sum(np.exp(inp.neg_scores / tau))
    assert out.d_neg == pytest.approx(softmax / tau)


def test_sl_weights_hand_values():
    w = L.sl_worst_case_weights(np.array([0.5, 0.3]), 0.2)
    assert w == pytest.approx([1.46211, 0.53789], abs=1e-5)


@given(neg_arrays, st.floats(0.05, 0.5))
@settings(max_examples=200)
def test_sl_weights_mean_one(neg, tau):
    assert L.sl_worst_case_weights(neg, tau).mean() == pytest.approx(1.0, abs=1e-12)


def test_ccl_truncation_zeroes_gradient():
    out = L.ccl_loss(make_input([0.8], [0.5, 0.1, -0.3]), 2.0, 0.2)
    assert out.value == pytest.approx(-0.8 + 2.0 * 0.3 / 3)
    assert out.d_neg == pytest.approx([2.0 / 3, 0.0, 0.0])


def test_drrl_hand_values():
    # hinges [0.5, 0.1, 0], g*=2, c=1, eps=0: M = sqrt(0.26/3)
    out = L.drrl_loss(make_input([0.8], [0.5, 0.1, -0.3]), 2.0, 1.0, 0.0, 0.0)
    m = np.sqrt(0.26 / 3)
    assert out.value == pytest.approx(-0.8 + m)
    assert out.d_neg == pytest.approx(np.array([0.5, 0.1, 0.0]) / m / 3)


def test_drrl_worst_case_weights_hand_values():
    w, degenerate = L.drrl_worst_case_weights(
        np.array([0.5, 0.1, -0.3]), 2.0, 1.0, 0.0
    )
    assert not degenerate
    assert w == pytest.approx([1.69842, 0.33968, 0.0], abs=1e-5)


def test_drrl_fully_truncated_degenerates():
    w, degenerate = L.drrl_worst_case_weights(np.array([-0.5, -0.2]), 2.0, 1.0, 0.5)
    assert degenerate
    out = L.drrl_loss(make_input([0.3], [-0.5, -0.2]), 2.0, 1.0, 0.0, 0.5)
    assert out.d_neg == pytest.approx([0.0, 0.0])


@given(pos_arrays, neg_arrays, st.floats(0.5, 3.0), st.floats(-0.5, 0.5))
@settings(max_examples=200)
def test_drrl_gamma_star_one_equals_ccl(pos, neg, alpha, beta):
    inp = make_input(pos, neg)
    a = L.drrl_loss(inp, 1.0, alpha, 0.0, beta)
    b = L.ccl_loss(inp, alpha, beta)
    assert a.value == pytest.approx(b.value, abs=1e-12)
    np.testing.assert_allclose(a.d_neg, b.d_neg, atol=1e-12)


@given(neg_arrays, st.floats(1.0, 3.0), st.floats(0.5, 2.0),
       st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
@settings(max_examples=300)
def test_beta_objective_midpoint_convex(neg, gamma_star, c, a, b):
    h = lambda t: L.drrl_beta_objective(neg, gamma_star, c, 0.01, t)
    mid = h(0.5 * (a + b))
    assert mid <= 0.5 * (h(a) + h(b)) + 1e-10


def test_beta_step_applies_per_user_updates():
    state = L.MarginState.initialize(3, 0.5)
    L.beta_step(state, {0: 2.0, 2: -1.0}, 0.1)
    assert state.beta == pytest.approx([0.3, 0.5, 0.6])


def test_user_loss_dispatch_and_margin_requirement():
    inp = make_input([0.5], [0.2])
    spec = L.LossSpec(kind="drrl")
    with pytest.raises(ValueError):
        L.user_loss(inp, spec)
    out = L.user_loss(inp, spec, beta_u=0.0)
    assert np.isfinite(out.value)


def test_batch_loss_scales_per_pair():
    inp1 = make_input([0.5], [0.2, -0.1])
    inp2 = make_input([0.1], [0.4, 0.3])
    spec = L.LossSpec(kind="sl", tau=0.2)
    value, outputs = L.batch_loss([(0, inp1), (1, inp2)], spec)
    v1 = L.softmax_loss(inp1, 0.2).value
    v2 = L.softmax_loss(inp2, 0.2).value
    assert value == pytest.approx((v1 + v2) / 2)
    assert outputs[0].d_neg == pytest.approx(L.softmax_loss(inp1, 0.2).d_neg / 2)


def test_empty_positives_rejected():
    with pytest.raises(ValueError):
        L.mse_loss(make_input([], [0.1]))
