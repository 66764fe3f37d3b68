"""Density weighting and the training loss, held against the mapping
package's implementations as the reference."""

import numpy as np
import pytest
import torch

import stablemap as sm
import stabnet as sn


def _label_sets():
    rng = np.random.default_rng(42)
    yield rng.uniform(0.0, 1.0, 500)
    yield rng.beta(0.5, 4.0, 1000)  # skewed toward 0 like real stability labels
    yield np.clip(rng.normal(0.2, 0.15, 300), 0.0, 1.0)
    yield np.concatenate([np.full(900, 0.05), np.full(100, 0.95)])


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0, 2.0])
def test_weights_match_mapping_package(alpha):
    for labels in _label_sets():
        ours = sn.density_weights(labels, alpha=alpha)
        reference = sm.dense_weights(labels, sm.WeightParams(alpha=alpha))
        np.testing.assert_array_equal(ours, reference)


def test_weights_on_real_labels(scene_batch):
    labels = np.concatenate([s.labels for s in scene_batch.batch.submaps])
    ours = sn.density_weights(labels, alpha=1.0)
    reference = sm.dense_weights(labels, sm.WeightParams(alpha=1.0))
    np.testing.assert_array_equal(ours, reference)
    assert abs(ours.mean() - 1.0) < 1e-9


def test_alpha_zero_gives_unit_weights():
    labels = np.random.default_rng(0).uniform(0, 1, 256)
    assert np.array_equal(sn.density_weights(labels, alpha=0.0), np.ones(256))


def test_fitted_model_transfers_to_new_labels():
    rng = np.random.default_rng(1)
    fit_on = rng.beta(0.6, 3.0, 2000)
    apply_to = rng.uniform(0, 1, 500)
    ours = sn.WeightModel(alpha=1.0).fit(fit_on).weights(apply_to)
    reference = sm.DensityWeighter(alpha=1.0).fit(fit_on).transform(apply_to)
    np.testing.assert_array_equal(ours, reference)


def test_weight_model_validation():
    with pytest.raises(ValueError, match="alpha must be non-negative"):
        sn.WeightModel(alpha=-0.5)
    with pytest.raises(ValueError, match="epsilon must be positive"):
        sn.WeightModel(alpha=1.0, epsilon=0.0)
    with pytest.raises(ValueError, match="bins must be at least 1"):
        sn.WeightModel(alpha=1.0, bins=0)
    with pytest.raises(ValueError, match="at least 2 labels"):
        sn.WeightModel(alpha=1.0).fit([0.5])
    with pytest.raises(ValueError, match="has not been fitted"):
        sn.WeightModel(alpha=1.0).weights([0.5])


# ---------------------------------------------------------------------------
# loss


def test_loss_matches_mapping_weighted_rmse():
    rng = np.random.default_rng(9)
    for n in (10, 1000, 4096):
        truth = rng.uniform(0, 1, n)
        pred = rng.uniform(0, 1, n)
        weights = sn.density_weights(truth, alpha=1.0)
        ours = float(sn.weighted_rmse_loss(
            torch.tensor(pred), torch.tensor(truth), torch.tensor(weights)
        ))
        reference = sm.weighted_rmse(pred, truth, weights)
        assert abs(ours - reference) <= 1e-6
        # in practice the two float64 computations agree far tighter
        assert abs(ours - reference) < 1e-12


def test_loss_is_float64_even_for_float32_predictions():
    pred = torch.rand(100, dtype=torch.float32)
    truth = torch.rand(100, dtype=torch.float64)
    w = torch.ones(100, dtype=torch.float64)
    loss = sn.weighted_rmse_loss(pred, truth, w)
    assert loss.dtype == torch.float64


def test_loss_gradients_flow():
    pred = torch.rand(50, requires_grad=True)
    truth = torch.rand(50, dtype=torch.float64)
    loss = sn.weighted_rmse_loss(pred, truth, torch.ones(50))
    loss.backward()
    assert pred.grad is not None
    assert torch.isfinite(pred.grad).all()


def test_loss_unit_weights_equal_plain_rmse():
    rng = np.random.default_rng(3)
    pred = rng.uniform(0, 1, 200)
    truth = rng.uniform(0, 1, 200)
    ours = float(sn.weighted_rmse_loss(
        torch.tensor(pred), torch.tensor(truth), torch.ones(200, dtype=torch.float64)
    ))
    assert ours == pytest.approx(float(np.sqrt(np.mean((pred - truth) ** 2))), abs=1e-15)


def test_loss_validation():
    with pytest.raises(ValueError, match="same length"):
        sn.weighted_rmse_loss(torch.rand(3), torch.rand(4), torch.rand(3))
    with pytest.raises(ValueError, match="at least one sample"):
        sn.weighted_rmse_loss(torch.empty(0), torch.empty(0), torch.empty(0))
