"""Training loop pieces: config, losses, sampling, Adam, gradients, end-to-end."""

import numpy as np
import pytest
from scipy import stats

import dct2net.training as training
from conftest import perturbed_basis
from dct2net.denoise import dct2net_forward, dct_model, DenoiserModel
from dct2net.image import add_gaussian_noise
from dct2net.training import (
    AdamState,
    TrainConfig,
    adam_step,
    batch_loss,
    grad_wrt_basis,
    gradcheck,
    loss_masked,
    loss_mse,
    loss_ortho_penalty,
    loss_patch_target,
    sample_batch,
    train,
    train_ortho_param,
    validation_psnr,
    _dihedral,
    _split_validation,
)
from dct2net.denoise import clean_patches, patch_forward
from dct2net.transform import TransformBasis, dct_basis, orthonormal_param


def small_cfg(**kw):
    defaults = dict(p=3, crop=16, batch=2, epochs=1, seed=3)
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestTrainConfig:
    def test_defaults_are_the_full_protocol(self):
        cfg = TrainConfig()
        assert (cfg.epochs, cfg.batch, cfg.crop, cfg.p, cfg.m) == (15, 32, 128, 13, 32)
        assert cfg.sigma_range == (1.0, 55.0)
        assert (cfg.lr_start, cfg.lr_end) == (1e-3, 1e-5)
        assert cfg.loss == "mse"

    @pytest.mark.parametrize(
    "kw",
        [
            {"epochs": -1},
            {"batch": 0},
            {"lr_start": 1e-6, "lr_end": 1e-3},
            {"lr_end": 0.0},
            {"m": 0},
            {"sigma_range": (0.0, 10.0)},
            {"sigma_range": (30.0, 10.0)},
            {"p": 4},
            {"p": 1},
            {"crop": 2, "p": 3},
            {"loss": "huber"},
            {"beta": -0.5},
        ],
    )
    def test_invalid_rejected(self, kw):
        with pytest.raises(ValueError):
            small_cfg(**kw)


class TestLosses:
    def test_mse_is_a_sum_not_a_mean(self):
        pred = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert loss_mse(pred, np.zeros((2, 2))) == 30.0

    def test_masked_restricts_support(self):
        pred = np.array([[1.0, 2.0], [3.0, 4.0]])
        mask = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert loss_masked(pred, np.zeros((2, 2)), mask) == 17.0

    def test_ortho_penalty_zero_on_orthonormal(self):
        assert loss_ortho_penalty(dct_basis(3).mat, 0.7) == pytest.approx(0.0, abs=1e-12)

    def test_ortho_penalty_known_value(self):
        # P = 2I: I - P^T P = -3I, l1 norm 27
        assert loss_ortho_penalty(2.0 * np.eye(9), 0.5) == pytest.approx(13.5)

    def test_patch_target_sums_everything(self):
        stack = np.ones((2, 2, 4))
        assert loss_patch_target(stack, np.zeros_like(stack)) == 16.0

    def test_shape_mismatches_rejected(self):
        with pytest.raises(ValueError):
            loss_mse(np.zeros((2, 2)), np.zeros((3, 2)))
        with pytest.raises(ValueError):
            loss_masked(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            loss_patch_target(np.zeros((1, 1, 4)), np.zeros((1, 1, 5)))
        with pytest.raises(ValueError):
            loss_ortho_penalty(np.eye(4), -1.0)


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        p = np.full((3, 3), 2.0)
        new_p, state = adam_step(p, np.zeros((3, 3)), AdamState.zeros((3, 3)), 0.1)
        np.testing.assert_array_equal(new_p, p)
        assert state.t == 1

    def test_first_step_is_signed_lr(self):
        # bias correction makes m_hat = g and v_hat = g^2 on step one
        g = np.array([[4.0, -0.5]])
        p = np.zeros((1, 2))
        lr = 0.01
        new_p, _ = adam_step(p, g, AdamState.zeros((1, 2)), lr)
        np.testing.assert_allclose(new_p, -lr * np.sign(g), rtol=1e-6)

    def test_state_accumulates(self):
        g = np.ones((2, 2))
        state = AdamState.zeros((2, 2))
        p = np.zeros((2, 2))
        for _ in range(3):
            p, state = adam_step(p, g, state, 0.1)
        assert state.t == 3
        assert np.all(p < 0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            adam_step(np.zeros((2, 2)), np.zeros((2, 3)), AdamState.zeros((2, 2)), 0.1)


class TestDihedral:
    def test_identity(self, rng):
        a = rng.random((5, 7))
        np.testing.assert_array_equal(_dihedral(a, 0), a)

    def test_eight_distinct_symmetries(self, rng):
        a = rng.random((6, 6))
        outs = [_dihedral(a, k).tobytes() for k in range(8)]
        assert len(set(outs)) == 8

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            _dihedral(np.zeros((2, 2)), 8)


class TestSampleBatch:
    def test_pure_function_of_seed(self, rng):
        images = [rng.random((24, 24)) * 255 for _ in range(3)]
        cfg = small_cfg(batch=4)
        a = sample_batch(images, cfg, (3, 17))
        b = sample_batch(images, cfg, (3, 17))
        for ea, eb in zip(a, b):
            np.testing.assert_array_equal(ea[0], eb[0])
            np.testing.assert_array_equal(ea[1], eb[1])
            assert ea[2] == eb[2]
        c = sample_batch(images, cfg, (3, 18))
        assert not np.array_equal(a[0][0], c[0][0])

    def test_element_shapes_and_sigma_range(self, rng):
        images = [rng.random((24, 24)) * 255]
        cfg = small_cfg(batch=8)
        lo, hi = cfg.sigma_range
        for noisy, clean, sigma, mask in sample_batch(images, cfg, 0):
            assert noisy.shape == clean.shape == (16, 16)
            assert lo <= sigma <= hi
            assert mask is None

    def test_masks_travel_with_crops(self, rng):
        img = rng.random((24, 24)) * 255
        mask = (rng.random((24, 24)) < 0.5).astype(np.float64)
        cfg = small_cfg(batch=6)
        for _, clean, _, mcrop in sample_batch([(img, mask)], cfg, 5):
            assert mcrop is not None and mcrop.shape == clean.shape
            assert set(np.unique(mcrop)) <= {0.0, 1.0}

    def test_sigma_distribution_is_uniform(self, rng):
        # chi-squared goodness of fit over 10 bins at the 1% level
        images = [rng.random((16, 16)) * 255]
        cfg = small_cfg(crop=16, batch=32)
        lo, hi = cfg.sigma_range
        sigmas = []
        step = 0
        while len(sigmas) < 10_000:
            sigmas.extend(e[2] for e in sample_batch(images, cfg, (99, step)))
            step += 1
        sigmas = np.array(sigmas[:10_000])
        counts, _ = np.histogram(sigmas, bins=10, range=(lo, hi))
        expected = len(sigmas) / 10
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        assert chi2 < stats.chi2.ppf(0.99, df=9)

    def test_crop_larger_than_image_rejected(self, rng):
        with pytest.raises(ValueError):
            sample_batch([rng.random((8, 8))], small_cfg(crop=16), 0)


class TestLossForwardConsistency:
    """batch_loss must equal the public forward pass composed with the loss."""

    def _element(self, rng, crop=16):
        clean = rng.random((crop, crop)) * 255
        noisy = add_gaussian_noise(clean, 25.0, 77)
        return noisy, clean

    def test_mse(self, rng):
        noisy, clean = self._element(rng)
        basis = perturbed_basis(3)
        cfg = small_cfg(loss="mse")
        model = DenoiserModel(basis, 3, cfg.m)
        direct = loss_mse(dct2net_forward(noisy, 25.0, model, phase="train"), clean)
        via_batch = batch_loss([(noisy, clean, 25.0, None)], basis.mat, cfg)
        assert via_batch == pytest.approx(direct, rel=1e-12)

    def test_masked(self, rng):
        noisy, clean = self._element(rng)
        mask = (rng.random(clean.shape) < 0.5).astype(np.float64)
        basis = perturbed_basis(3)
        cfg = small_cfg(loss="masked")
        model = DenoiserModel(basis, 3, cfg.m)
        direct = loss_masked(dct2net_forward(noisy, 25.0, model, phase="train"), clean, mask)
        via_batch = batch_loss([(noisy, clean, 25.0, mask)], basis.mat, cfg)
        assert via_batch == pytest.approx(direct, rel=1e-12)

    def test_patch_target(self, rng):
        noisy, clean = self._element(rng)
        basis = perturbed_basis(3)
        cfg = small_cfg(loss="patch_target")
        model = DenoiserModel(basis, 3, cfg.m)
        direct = loss_patch_target(
            patch_forward(noisy, 25.0, model, phase="train"), clean_patches(clean, 3)
        )
        via_batch = batch_loss([(noisy, clean, 25.0, None)], basis.mat, cfg)
        assert via_batch == pytest.approx(direct, rel=1e-12)

    def test_ortho_reg_adds_penalty_once(self, rng):
        noisy, clean = self._element(rng)
        basis = perturbed_basis(3)
        beta = 0.7
        plain = batch_loss(
            [(noisy, clean, 25.0, None)] * 2, basis.mat, small_cfg(loss="mse")
        )
        reg = batch_loss(
            [(noisy, clean, 25.0, None)] * 2,
            basis.mat,
            small_cfg(loss="ortho_reg", beta=beta),
        )
        assert reg == pytest.approx(plain + loss_ortho_penalty(basis.mat, beta), rel=1e-12)

    def test_ortho_param_runs_through_the_map(self, rng):
        noisy, clean = self._element(rng)
        m_param = dct_basis(3).mat + 0.05 * np.random.default_rng(0).standard_normal((9, 9))
        cfg = small_cfg(loss="ortho_param")
        q = orthonormal_param(m_param)
        model = DenoiserModel(TransformBasis(q), 3, cfg.m)
        direct = loss_mse(dct2net_forward(noisy, 25.0, model, phase="train"), clean)
        via_batch = batch_loss([(noisy, clean, 25.0, None)], m_param, cfg)
        assert via_batch == pytest.approx(direct, rel=1e-10)

    def test_sigma_zero_element(self, rng):
        # the lam = 0 branch: shrinkage degenerates to the identity
        clean = rng.random((16, 16)) * 255
        basis = perturbed_basis(3)
        cfg = small_cfg(loss="mse")
        model = DenoiserModel(basis, 3, cfg.m)
        direct = loss_mse(dct2net_forward(clean, 0.0, model, phase="train"), clean)
        via_batch = batch_loss([(clean, clean, 0.0, None)], basis.mat, cfg)
        assert via_batch == pytest.approx(direct, rel=1e-9, abs=1e-9)


class TestGradcheck:
    def test_mse_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(np.random.SeedSequence((0, 0xF1C)))
        image = rng.random((12, 12)) * 255
        cfg = TrainConfig(p=3, crop=12, loss="mse", seed=0)
        report = gradcheck(3, image, 25.0, cfg)
        assert report.max_rel_err < 1e-4
        assert report.analytic.shape == (9, 9)

    def test_grad_wrt_basis_nonzero(self, rng):
        clean = rng.random((14, 14)) * 255
        noisy = add_gaussian_noise(clean, 25.0, 1)
        g = grad_wrt_basis([(noisy, clean, 25.0, None)], dct_basis(3).mat.copy(), small_cfg())
        assert np.any(g != 0)


class TestSplitValidation:
    def test_five_percent_from_the_end(self):
        items = list(range(40))
        tr, va = _split_validation(items)
        assert va == [38, 39] and tr == items[:38]

    def test_minimum_one_holdout(self):
        tr, va = _split_validation([1, 2, 3])
        assert va == [3] and tr == [1, 2]

    def test_singleton_reused(self):
        tr, va = _split_validation([7])
        assert tr == [7] and va == [7]


class TestTrainingLoop:
    def test_epochs_zero_returns_initialization(self, rng):
        images = [rng.random((20, 20)) * 255 for _ in range(2)]
        model = train(images, small_cfg(epochs=0))
        np.testing.assert_array_equal(model.basis.mat, dct_basis(3).mat)
        assert model.meta["steps"] == 0

    def test_training_improves_a_held_out_probe(self, monkeypatch):
        # per-step losses are dominated by the sigma draw, so the check
        # evaluates one fixed probe batch before and after training instead
        monkeypatch.setattr(training, "CROPS_PER_IMAGE", 120)
        xs = np.arange(40.0)
        images = [
            np.clip(
                np.add.outer(xs * 2, xs)
                + 60 * np.sin(np.add.outer(xs / 3.0, xs / 5.0) + k)
                + 40.0,
                0,
                255,
            )
            for k in range(2)
        ]
        cfg = small_cfg(p=3, crop=24, batch=4, epochs=2, seed=0, sigma_range=(20.0, 30.0))
        probe = sample_batch(images, cfg, (123, 456))
        losses = []
        model = train(images, cfg, log=lambda r: losses.append(r["loss"]))
        assert len(losses) == 2 * 30
        init_loss = batch_loss(probe, dct_basis(3).mat.copy(), cfg)
        trained_loss = batch_loss(probe, model.basis.mat, cfg)
        assert trained_loss < init_loss

    def test_deterministic_and_logged(self, rng, monkeypatch):
        monkeypatch.setattr(training, "CROPS_PER_IMAGE", 8)
        images = [rng.random((20, 20)) * 255 for _ in range(2)]
        cfg = small_cfg(batch=4, epochs=2)
        logs = []
        m1 = train(images, cfg, log=logs.append)
        m2 = train(images, cfg)
        np.testing.assert_array_equal(m1.basis.mat, m2.basis.mat)
        # 8 crops * 1 train image / batch 4 -> 2 steps per epoch
        assert [r["step"] for r in logs] == [0, 1, 2, 3]
        assert [r["epoch"] for r in logs] == [0, 0, 1, 1]
        assert logs[0]["lr"] == cfg.lr_start
        assert all(
            a["lr"] > b["lr"] for a, b in zip(logs, logs[1:])
        ), "lr schedule must decay monotonically"
        assert logs[1]["val_psnr"] is not None and logs[0]["val_psnr"] is None
        assert m1.meta["loss"] == "mse" and m1.meta["steps"] == 4

    def test_masked_loss_runs(self, rng, monkeypatch):
        monkeypatch.setattr(training, "CROPS_PER_IMAGE", 4)
        images = [rng.random((20, 20)) * 255 for _ in range(2)]
        model = train(images, small_cfg(batch=4, loss="masked"))
        assert model.meta["mask_policy"].startswith("once-per-clean-image")

    def test_ortho_param_model_is_orthonormal(self, rng, monkeypatch):
        monkeypatch.setattr(training, "CROPS_PER_IMAGE", 8)
        images = [rng.random((20, 20)) * 255 for _ in range(2)]
        model = train_ortho_param(images, small_cfg(batch=4))
        gram = model.basis.mat.T @ model.basis.mat
        np.testing.assert_allclose(gram, np.eye(9), atol=1e-10)
        assert model.meta["loss"] == "ortho_param"

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train([], small_cfg())

    def test_validation_psnr_finite(self, rng):
        imgs = [rng.random((32, 32)) * 255]
        value = validation_psnr(imgs, dct_basis(3).mat, small_cfg())
        assert np.isfinite(value) and value > 5.0
