import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drrl import graphmodel as gm


def two_node_graph():
    # single edge (u0, i0); both degree 1
    return gm.InteractionGraph(np.array([[0, 0]]), 1, 1)


def test_mf_forward_is_identity():
    table = gm.EmbeddingTable.init_normal(3, 4, 2, seed=0)
    out = gm.forward(table, None, gm.BackboneConfig(kind="mf"))
    np.testing.assert_array_equal(out.final_user, table.user)
    np.testing.assert_array_equal(out.final_item, table.item)


def test_lightgcn_two_node_hand_unroll():
    # e_u^(1) = e_i^(0), e_u^(2) = e_u^(0): final = (2 e_u + e_i) / 3
    table = gm.EmbeddingTable(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
    cfg = gm.BackboneConfig(kind="lightgcn", layers=2)
    out = gm.forward(table, two_node_graph(), cfg)
    np.testing.assert_allclose(out.final_user[0], [2 / 3, 1 / 3], atol=1e-12)
    np.testing.assert_allclose(out.final_item[0], [1 / 3, 2 / 3], atol=1e-12)


def test_xsimgcl_zero_noise_equals_lightgcn():
    table = gm.EmbeddingTable.init_normal(4, 5, 3, seed=1)
    pairs = np.array([[0, 0], [1, 1], [2, 2], [3, 3], [0, 4]])
    graph = gm.InteractionGraph(pairs, 4, 5)
    lgcn = gm.forward(table, graph, gm.BackboneConfig(kind="lightgcn", layers=2))
    xsim = gm.forward(
        table, graph, gm.BackboneConfig(kind="xsimgcl", layers=2, noise_modulus=0.0)
    )
    np.testing.assert_allclose(xsim.final_user, lgcn.final_user, atol=1e-12)
    assert xsim.contrast_user is not None


def test_xsimgcl_noise_has_fixed_norm_per_node():
    table = gm.EmbeddingTable.init_normal(4, 5, 3, seed=1)
    pairs = np.array([[0, 0], [1, 1], [2, 2], [3, 3]])
    graph = gm.InteractionGraph(pairs, 4, 5)
    cfg = gm.BackboneConfig(kind="xsimgcl", layers=1, noise_modulus=0.3)
    rng = np.random.default_rng(0)
    lgcn = gm.forward(table, graph, gm.BackboneConfig(kind="lightgcn", layers=1))
    out = gm.forward(table, graph, cfg, rng)
    # layer-1 output differs from the clean propagation by a norm-0.3 vector
    delta = out.user_layers[1] - lgcn.user_layers[1]
    np.testing.assert_allclose(np.linalg.norm(delta, axis=1), 0.3, atol=1e-9)


def test_xsimgcl_noise_requires_rng():
    table = gm.EmbeddingTable.init_normal(2, 2, 2, seed=0)
    graph = gm.InteractionGraph(np.array([[0, 0], [1, 1]]), 2, 2)
    with pytest.raises(ValueError):
        gm.forward(table, graph, gm.BackboneConfig(kind="xsimgcl"))


def test_backward_is_adjoint_of_forward():
    # <forward(x), y> == <x, backward(y)> for the linear propagation map
    rng = np.random.default_rng(2)
    table = gm.EmbeddingTable(rng.normal(size=(3, 2)), rng.normal(size=(4, 2)))
    pairs = np.array([[0, 0], [0, 1], [1, 2], [2, 3]])
    graph = gm.InteractionGraph(pairs, 3, 4)
    cfg = gm.BackboneConfig(kind="lightgcn", layers=2)
    out = gm.forward(table, graph, cfg)
    yu = rng.normal(size=(3, 2))
    yi = rng.normal(size=(4, 2))
    gu, gi = gm.backward(yu, yi, graph, cfg)
    lhs = np.sum(out.final_user * yu) + np.sum(out.final_item * yi)
    rhs = np.sum(table.user * gu) + np.sum(table.item * gi)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_isolated_node_keeps_layer0_contribution():
    table = gm.EmbeddingTable(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([[3.0, 0.0]]))
    graph = gm.InteractionGraph(np.array([[0, 0]]), 2, 1)
    out = gm.forward(table, graph, gm.BackboneConfig(kind="lightgcn", layers=2))
    # user 1 has no edges: propagation contributes nothing beyond layer 0
    np.testing.assert_allclose(out.final_user[1], np.array([0.0, 2.0]) / 3, atol=1e-12)


@given(st.integers(0, 2 ** 31))
@settings(max_examples=30, deadline=None)
def test_cosine_score_bounded(seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=3)
    i = rng.normal(size=3)
    s = gm.score(u, i)
    assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12


def test_score_gradient_matches_finite_difference():
    rng = np.random.default_rng(4)
    u = rng.normal(size=5)
    i = rng.normal(size=5)
    gu, gi = gm.score_gradient(u, i)
    h = 1e-6
    for k in range(5):
        e = np.zeros(5)
        e[k] = h
        fd_u = (gm.score(u + e, i) - gm.score(u - e, i)) / (2 * h)
        fd_i = (gm.score(u, i + e) - gm.score(u, i - e)) / (2 * h)
        assert gu[k] == pytest.approx(fd_u, abs=1e-8)
        assert gi[k] == pytest.approx(fd_i, abs=1e-8)


def test_cosine_matrix_agrees_with_scalar_score():
    rng = np.random.default_rng(5)
    users = rng.normal(size=(3, 4))
    items = rng.normal(size=(5, 4))
    mat = gm.cosine_matrix(users, items)
    assert mat[1, 2] == pytest.approx(gm.score(users[1], items[2]), abs=1e-12)


def test_infonce_value_positive_and_shift_invariant_pairing():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(4, 3))
    value, da, db = gm.infonce_auxiliary(a, a.copy(), 0.2, 1.0)
    # perfectly aligned views still pay the in-batch partition cost
    assert value > 0
    assert da.shape == a.shape


def test_checkpoint_roundtrip(tmp_path):
    table = gm.EmbeddingTable.init_normal(3, 4, 2, seed=7)
    margins = np.array([0.1, -0.2, 0.3])
    path = tmp_path / "ck.bin"
    gm.save_checkpoint(path, table, margins)
    loaded, loaded_margins = gm.load_checkpoint(path)
    np.testing.assert_allclose(loaded.user, table.user, atol=1e-6)
    np.testing.assert_allclose(loaded.item, table.item, atol=1e-6)
    np.testing.assert_allclose(loaded_margins, margins, atol=1e-6)


def test_checkpoint_without_margins(tmp_path):
    table = gm.EmbeddingTable.init_normal(2, 2, 2, seed=8)
    path = tmp_path / "ck.bin"
    gm.save_checkpoint(path, table)
    _, margins = gm.load_checkpoint(path)
    assert margins is None


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"nope" + b"\x00" * 32)
    with pytest.raises(ValueError):
        gm.load_checkpoint(path)


def test_backbone_config_validation():
    with pytest.raises(ValueError):
        gm.BackboneConfig(kind="gcn").validate()
    with pytest.raises(ValueError):
        gm.BackboneConfig(kind="lightgcn", layers=0).validate()
    with pytest.raises(ValueError):
        gm.BackboneConfig(kind="xsimgcl", layers=2, contrast_layer=3).validate()
