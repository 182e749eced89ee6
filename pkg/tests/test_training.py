"""Noise synthesis, patching, optimization, scheduling, and the training loop."""

import math

import numpy as np
import pytest

from conftest import synth_corpus, synth_image
from gtcnn.model import GtcnnConfig, GtcnnModel
from gtcnn.tensor import Tensor4
from gtcnn.training import (
    Adam,
    RunLog,
    TrainConfig,
    TrainingDiverged,
    add_awgn,
    clamp01,
    cosine_lr,
    psnr,
    sample_patches,
    train,
)


class TestAwgn:
    def test_sigma_zero_is_bitwise_identity(self):
        y = synth_image(0)
        x = add_awgn(y, 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(x.data, y.data)

    def test_sample_std_matches_sigma(self):
        y = Tensor4.full((1, 1, 1000, 1000), 0.5)
        x = add_awgn(y, 50.0, np.random.default_rng(1))
        noise = x.data - 0.5
        assert abs(noise.std() - 50.0 / 255.0) < 0.01 * (50.0 / 255.0)

    def test_mean_within_statistical_bound(self):
        y = Tensor4.full((1, 1, 500, 500), 0.5)
        sigma = 30.0
        x = add_awgn(y, sigma, np.random.default_rng(2))
        bound = 3.0 * (sigma / 255.0) / math.sqrt(y.data.size)
        assert abs(float((x.data - 0.5).mean())) < bound

    def test_same_seed_identical_noise(self):
        y = synth_image(3)
        a = add_awgn(y, 25.0, np.random.default_rng(7))
        b = add_awgn(y, 25.0, np.random.default_rng(7))
        np.testing.assert_array_equal(a.data, b.data)

    def test_not_clamped(self):
        y = Tensor4.full((1, 1, 100, 100), 1.0)
        x = add_awgn(y, 50.0, np.random.default_rng(3))
        assert x.data.max() > 1.0

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError, match="sigma"):
            add_awgn(synth_image(0), -1.0, np.random.default_rng(0))


class TestPatches:
    def test_exact_fit_single_patch(self):
        image = synth_image(4, h=192, w=192)
        patches = sample_patches(image, 192, 192)
        assert len(patches) == 1
        np.testing.assert_array_equal(patches[0].data, image.data)

    def test_grid_tiles_image(self):
        image = synth_image(5, h=96, w=96)
        patches = sample_patches(image, 48, 48)
        assert len(patches) == 4
        np.testing.assert_array_equal(patches[0].data, image.data[:, :, :48, :48])
        np.testing.assert_array_equal(patches[3].data, image.data[:, :, 48:, 48:])

    def test_trailing_pixels_dropped(self):
        image = synth_image(6, h=100, w=100)
        assert len(sample_patches(image, 48, 48)) == 4

    def test_image_smaller_than_patch(self):
        with pytest.raises(ValueError, match="smaller"):
            sample_patches(synth_image(7, h=30, w=30), 48, 48)


class TestCosine:
    def test_endpoints_and_midpoint(self):
        assert cosine_lr(0, 100, 1e-3) == pytest.approx(1e-3)
        assert cosine_lr(100, 100, 1e-3) == pytest.approx(0.0, abs=1e-18)
        assert cosine_lr(50, 100, 1e-3) == pytest.approx(5e-4)

    def test_nonincreasing(self):
        values = [cosine_lr(t, 200, 1e-3) for t in range(201)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_zero_total_rejected(self):
        with pytest.raises(ValueError):
            cosine_lr(0, 0, 1e-3)


class TestAdam:
    def scalar_param(self, value):
        return Tensor4(np.full((1, 1, 1, 1), value, dtype=np.float32))

    def test_zero_grad_leaves_params(self):
        p = self.scalar_param(1.0)
        p.ensure_grad()
        opt = Adam([p])
        opt.step(1e-3)
        assert p.item() == 1.0

    def test_first_step_magnitude(self):
        p = self.scalar_param(1.0)
        p.ensure_grad()[...] = 1.0
        Adam([p]).step(1e-3)
        assert p.item() == pytest.approx(1.0 - 1e-3, abs=1e-6)

    def test_descends_quadratic(self):
        p = self.scalar_param(1.0)
        opt = Adam([p])
        for t in range(100):
            p.zero_grad()
            p.ensure_grad()[...] = 2.0 * p.item()  # d/dp of p^2
            opt.step(1e-2)
        assert abs(p.item()) < 0.5


class TestPsnr:
    def test_identical_is_infinite(self):
        x = synth_image(8)
        assert psnr(x, x.copy()) == math.inf

    def test_uniform_difference(self):
        a = Tensor4.full((1, 1, 8, 8), 0.6, dtype=np.float64)
        b = Tensor4.full((1, 1, 8, 8), 0.5, dtype=np.float64)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-6)

    def test_known_mse(self):
        a = Tensor4.zeros((1, 1, 100, 100), dtype=np.float64)
        b = Tensor4.full((1, 1, 100, 100), math.sqrt(1e-3), dtype=np.float64)
        assert psnr(a, b) == pytest.approx(30.0, abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            psnr(Tensor4.zeros((1, 1, 2, 2)), Tensor4.zeros((1, 1, 2, 3)))


class TestTrainLoop:
    def tiny_setup(self, steps=10, seed=0, **overrides):
        model = GtcnnModel(GtcnnConfig(c_in=1, c=8, depth=1, stages=1), seed=seed)
        defaults = dict(sigma=25.0, patch=32, stride=32, batch=2, steps=steps, seed=seed)
        defaults.update(overrides)
        return model, synth_corpus(2, h=64, w=64), TrainConfig(**defaults)

    def test_empty_corpus_rejected(self):
        model, _, config = self.tiny_setup()
        with pytest.raises(ValueError, match="empty"):
            train(model, [], config)

    def test_zero_steps_rejected(self):
        model, corpus, _ = self.tiny_setup()
        config = TrainConfig(steps=0)
        with pytest.raises(ValueError, match="steps"):
            train(model, corpus, config)

    def test_patch_must_cover_stage_grid(self):
        model = GtcnnModel(GtcnnConfig(c_in=1, c=8, depth=1, stages=4), seed=0)
        with pytest.raises(ValueError, match="patch"):
            train(model, synth_corpus(1), TrainConfig(patch=8, stride=8))

    def test_log_has_one_entry_per_step(self):
        model, corpus, config = self.tiny_setup(steps=5)
        _, log = train(model, corpus, config)
        assert [r.step for r in log.steps] == list(range(5))
        assert all(math.isfinite(r.loss) for r in log.steps)

    def test_same_seed_reproduces_loss_trajectory(self):
        losses = []
        for _ in range(2):
            model, corpus, config = self.tiny_setup(steps=6, seed=3)
            _, log = train(model, corpus, config)
            losses.append(log.losses())
        assert losses[0] == losses[1]

    def test_memorizes_single_patch(self):
        model = GtcnnModel(GtcnnConfig(c_in=1, c=16, depth=1, stages=2), seed=0)
        patch = Tensor4(synth_image(20).data[:, :, :48, :48].copy())
        config = TrainConfig(sigma=25.0, patch=48, stride=48, batch=1, steps=200, seed=0)
        _, log = train(model, [patch], config)
        assert log.losses()[-1] <= 0.5 * log.losses()[0]

    def test_model_eval_ready_after_training(self):
        model, corpus, config = self.tiny_setup(steps=3)
        model, _ = train(model, corpus, config)
        model.forward(synth_image(30, h=32, w=32))  # eval mode must not raise

    def test_diverged_loss_aborts_with_step(self):
        model, corpus, config = self.tiny_setup(steps=5)
        model.output_conv.bias.data[...] = np.inf
        with pytest.raises(TrainingDiverged, match="step 0"):
            train(model, corpus, config)

    def test_checkpoints_written(self, tmp_path):
        model, corpus, config = self.tiny_setup(steps=4, checkpoint_every=2)
        train(model, corpus, config, checkpoint_dir=tmp_path)
        assert (tmp_path / "step000002.gtcw").exists()
        assert (tmp_path / "step000004.gtcw").exists()
        assert (tmp_path / "step000004.csv").exists()

    def test_eval_log(self):
        model, corpus, config = self.tiny_setup(steps=4, eval_every=2)
        holdout = Tensor4(synth_image(31).data[:, :, :32, :32].copy())
        _, log = train(model, corpus, config, holdout=holdout)
        assert len(log.evals) == 2
        assert all(math.isfinite(v) for _, v in log.evals)

    def test_run_log_csv(self, tmp_path):
        model, corpus, config = self.tiny_setup(steps=3)
        _, log = train(model, corpus, config)
        path = tmp_path / "log.csv"
        log.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "step,loss,lr"
        assert len(lines) == 4


class TestSmokeRun:
    def test_beats_noisy_psnr_by_3db(self, smoke_model, holdout_image):
        model, _ = smoke_model
        noisy = add_awgn(holdout_image, 25.0, np.random.default_rng(1))
        y_hat, _ = model.forward(noisy)
        noisy_psnr = psnr(clamp01(noisy), holdout_image)
        denoised_psnr = psnr(clamp01(y_hat), holdout_image)
        assert denoised_psnr >= noisy_psnr + 3.0

    def test_loss_decreased(self, smoke_model):
        _, log = smoke_model
        losses = log.losses()
        assert losses[-1] < 0.5 * losses[0]
