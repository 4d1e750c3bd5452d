import json

import numpy as np
import pytest

from drrl import trainer as tr
from drrl.dataio import BatchSample, split_iid
from drrl.graphmodel import BackboneConfig, EmbeddingTable, InteractionGraph
from drrl.losses import LossSpec, MarginState
from drrl.synthetic import make_block_log


def toy_setup(seed=0, kind="mf"):
    table = EmbeddingTable.init_normal(4, 4, 3, seed=seed)
    pairs = [(u, i) for u in range(4) for i in range(4) if (u + i) % 2 == 0]
    graph = InteractionGraph(np.asarray(pairs), 4, 4)
    cfg = BackboneConfig(kind=kind, layers=2)
    batch = BatchSample(
        np.array([[0, 0], [1, 1], [2, 2]]),
        np.array([[1, 3], [0, 2], [3, 1]]),
        np.zeros((3, 2), dtype=bool),
    )
    return table, graph, cfg, batch


class TestAdam:
    def test_first_step_moves_by_lr(self):
        # bias correction makes the very first update lr * g / (|g| + floor)
        adam = tr.Adam({"w": (2,)})
        params = {"w": np.array([1.0, -1.0])}
        adam.step(params, {"w": np.array([0.5, -2.0])}, 0.1)
        np.testing.assert_allclose(params["w"], [0.9, -0.9], atol=1e-6)

    def test_rejects_non_finite_gradients(self):
        adam = tr.Adam({"w": (1,)})
        with pytest.raises(FloatingPointError):
            adam.step({"w": np.zeros(1)}, {"w": np.array([np.nan])}, 0.1)


def test_weight_decay_touches_only_batch_rows():
    table = EmbeddingTable.init_normal(3, 3, 2, seed=0)
    gu = np.zeros((3, 2))
    gi = np.zeros((3, 2))
    tr.apply_weight_decay(table, gu, gi, np.array([1]), np.array([0, 2]), 0.5)
    np.testing.assert_allclose(gu[1], table.user[1])
    assert not gu[0].any() and not gu[2].any()
    assert not gi[1].any()


def test_train_config_validation():
    with pytest.raises(ValueError):
        tr.TrainConfig(lr=0.0).validate()
    with pytest.raises(ValueError):
        tr.TrainConfig(noise=2.0).validate()
    with pytest.raises(ValueError):
        tr.TrainConfig(noise_pool="other").validate()
    with pytest.raises(ValueError):
        tr.TrainConfig(margin_mode="global").validate()


def test_margin_update_happens_before_loss():
    table, graph, cfg, batch = toy_setup()
    spec = LossSpec(kind="drrl", gamma_star=2.0, c=1.0, eps=0.1, beta0=0.2,
                    lr_beta=0.05)
    margins = MarginState.initialize(4, spec.beta0)
    before = margins.beta.copy()
    tr.loss_and_gradients(table, graph, cfg, spec, margins, batch,
                          margin_update="per_user")
    # batch users 0..2 get margin steps, user 3 untouched
    assert not np.array_equal(margins.beta[:3], before[:3])
    assert margins.beta[3] == before[3]


def test_shared_margin_moves_all_users_equally():
    table, graph, cfg, batch = toy_setup()
    spec = LossSpec(kind="drrl", gamma_star=2.0, c=1.0, eps=0.1, beta0=0.2,
                    lr_beta=0.05)
    margins = MarginState.initialize(4, spec.beta0)
    tr.loss_and_gradients(table, graph, cfg, spec, margins, batch,
                          margin_update="shared")
    assert np.ptp(margins.beta) == pytest.approx(0.0, abs=1e-15)


def test_fixed_margin_mode_leaves_margins_alone():
    table, graph, cfg, batch = toy_setup()
    spec = LossSpec(kind="drrl", beta0=0.2)
    margins = MarginState.initialize(4, spec.beta0)
    tr.loss_and_gradients(table, graph, cfg, spec, margins, batch,
                          margin_update="fixed")
    np.testing.assert_array_equal(margins.beta, np.full(4, 0.2))


def _smoke_train(spec, seed=0, **overrides):
    log = make_block_log(num_users=30, num_items=20, seed=seed)
    split = split_iid(log, seed=seed)
    kwargs = dict(batch_size=64, n_neg=8, lr=0.05, max_epochs=5, embed_dim=8,
                  metric_k=5, seed=seed)
    kwargs.update(overrides)
    cfg = tr.TrainConfig(**kwargs)
    return tr.train(split, BackboneConfig(kind="mf"), spec, cfg)


def test_training_is_deterministic_given_seed():
    spec = LossSpec(kind="sl", tau=0.2)
    t1, _, r1 = _smoke_train(spec)
    t2, _, r2 = _smoke_train(spec)
    np.testing.assert_array_equal(t1.user, t2.user)
    assert r1.epoch_loss == r2.epoch_loss


def test_training_reduces_loss():
    _, _, report = _smoke_train(LossSpec(kind="bpr"), max_epochs=10)
    assert report.epoch_loss[-1] < report.epoch_loss[0]


def test_best_checkpoint_tracks_validation():
    _, _, report = _smoke_train(LossSpec(kind="sl", tau=0.2), max_epochs=6)
    evaluated = [v for v in report.val_ndcg if v is not None]
    assert report.best_metric == pytest.approx(max(evaluated))


def test_report_serialization(tmp_path):
    _, _, report = _smoke_train(LossSpec(kind="bpr"), max_epochs=3)
    report.to_json(tmp_path / "r.json")
    report.to_csv(tmp_path / "r.csv")
    data = json.loads((tmp_path / "r.json").read_text())
    assert len(data["epoch_loss"]) == 3
    lines = (tmp_path / "r.csv").read_text().strip().splitlines()
    assert lines[0] == "epoch,train_loss,val_ndcg,val_recall"
    assert len(lines) == 4


def test_drrl_margins_move_during_training():
    spec = LossSpec(kind="drrl", gamma_star=2.0, c=1.2, eps=0.1, beta0=0.3,
                    lr_beta=0.01)
    _, margins, _ = _smoke_train(spec, max_epochs=3)
    assert np.ptp(margins.beta) > 0
