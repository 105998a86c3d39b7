"""Loss functions: exact arithmetic, identities, and gradients."""

import pytest
import torch

from ctenhance.perception import (
    FeatureBackbone,
    LossWeights,
    band_loss,
    charbonnier_loss,
    mse_loss,
    perceptual_loss,
)


class _RiggedBackbone:
    """Produces features whose band losses are exact, chosen constants.

    backbone(x) scales fixed per-band patterns by the first pixel of x, so
    comparing an all-ones image against an all-zeros image yields squared
    feature differences equal to the pattern itself. Patterns of zeros and
    twos have exactly representable means, keeping the arithmetic exact.
    """

    def __init__(self, band_losses):
        self.patterns = {}
        for band, target in zip(("low", "mid", "high"), band_losses):
            flat = torch.zeros(16, dtype=torch.float64)
            # mean of squares == target using only exact dyadic values
            if target == 1.0:
                flat[:] = 1.0
            elif target == 2.0:
                flat[:8] = 2.0
            elif target != 0.0:
                raise ValueError("rigged backbone supports targets 0, 1, 2")
            self.patterns[band] = flat.reshape(1, 1, 4, 4)

    def __call__(self, x):
        scale = x.reshape(-1)[0]
        return {band: pat * scale for band, pat in self.patterns.items()}


ONES = torch.ones(1, 1, 8, 8, dtype=torch.float64)
ZEROS = torch.zeros(1, 1, 8, 8, dtype=torch.float64)


class TestWeights:
    def test_defaults(self):
        w = LossWeights()
        assert (w.lambda_low, w.lambda_mid, w.lambda_high) == (0.35, 0.5, 0.15)
        assert w.as_dict() == {"low": 0.35, "mid": 0.5, "high": 0.15}

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_mid=-0.1)


class TestPerceptualArithmetic:
    def test_unit_band_losses_sum_to_one(self):
        loss = perceptual_loss(_RiggedBackbone((1.0, 1.0, 1.0)), ONES, ZEROS)
        assert abs(loss.item() - 1.0) <= 1e-12

    def test_low_band_only(self):
        loss = perceptual_loss(_RiggedBackbone((2.0, 0.0, 0.0)), ONES, ZEROS)
        assert abs(loss.item() - 0.7) <= 1e-12

    def test_identical_inputs_give_zero(self):
        backbone = FeatureBackbone()
        img = torch.rand(1, 1, 32, 32)
        assert perceptual_loss(backbone, img, img.clone()).item() <= 1e-8

    def test_symmetry(self):
        backbone = FeatureBackbone()
        a, b = torch.rand(1, 1, 32, 32), torch.rand(1, 1, 32, 32)
        torch.testing.assert_close(
            perceptual_loss(backbone, a, b), perceptual_loss(backbone, b, a)
        )

    def test_monotone_in_perturbation(self):
        backbone = FeatureBackbone()
        torch.manual_seed(0)
        base = torch.rand(1, 1, 32, 32) * 0.5 + 0.25
        noise = torch.randn_like(base) * 0.05
        losses = [
            perceptual_loss(backbone, (base + k * noise).clamp(0, 1), base).item()
            for k in (0, 1, 2, 4)
        ]
        assert losses[0] < losses[1] < losses[2] < losses[3]

    def test_band_loss_matches_manual(self):
        backbone = FeatureBackbone()
        a, b = torch.rand(1, 1, 32, 32), torch.rand(1, 1, 32, 32)
        fa, fb = backbone(a), backbone(b)
        for band in ("low", "mid", "high"):
            want = torch.mean((fa[band] - fb[band]) ** 2)
            torch.testing.assert_close(band_loss(backbone, a, b, band), want)
        with pytest.raises(ValueError):
            band_loss(backbone, a, b, "ultra")

    def test_custom_weights_applied(self):
        rig = _RiggedBackbone((1.0, 1.0, 1.0))
        loss = perceptual_loss(rig, ONES, ZEROS, LossWeights(0.2, 0.3, 0.4))
        assert abs(loss.item() - 0.9) <= 1e-12

    def test_gradient_flows_to_prediction(self):
        backbone = FeatureBackbone()
        pred = (torch.rand(1, 1, 32, 32)).requires_grad_(True)
        perceptual_loss(backbone, pred, torch.rand(1, 1, 32, 32)).backward()
        assert pred.grad is not None and torch.any(pred.grad != 0)


class TestPixelLosses:
    def test_mse_closed_form(self):
        pred = torch.tensor([[1.0, 2.0], [3.0, 4.0]])
        gt = torch.tensor([[1.0, 0.0], [0.0, 0.0]])
        assert mse_loss(pred, gt).item() == pytest.approx((0 + 4 + 9 + 16) / 4)
        assert mse_loss(gt, gt).item() == 0.0

    def test_charbonnier_closed_form_and_limit(self):
        pred = torch.full((4,), 3.0, dtype=torch.float64)
        gt = torch.zeros(4, dtype=torch.float64)
        eps = 1e-3
        want = (9 + eps * eps) ** 0.5
        assert charbonnier_loss(pred, gt, eps).item() == pytest.approx(want, rel=1e-12)
        # approaches mean absolute error as eps shrinks
        assert charbonnier_loss(pred, gt, 1e-8).item() == pytest.approx(3.0, rel=1e-9)

    def test_charbonnier_at_identity_is_eps(self):
        x = torch.rand(5, 5, dtype=torch.float64)
        assert charbonnier_loss(x, x, 1e-3).item() == pytest.approx(1e-3, rel=1e-9)

    def test_charbonnier_smooth_at_zero(self):
        pred = torch.zeros(1, dtype=torch.float64, requires_grad=True)
        charbonnier_loss(pred, torch.zeros(1, dtype=torch.float64)).backward()
        assert pred.grad.item() == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            charbonnier_loss(torch.zeros(2), torch.zeros(3))
        with pytest.raises(ValueError):
            charbonnier_loss(torch.zeros(2), torch.zeros(2), eps=0.0)
        with pytest.raises(ValueError):
            mse_loss(torch.zeros(2), torch.zeros(3))


class TestFiniteDifferenceGradients:
    def test_pixel_loss_gradients_match_fd(self):
        torch.manual_seed(1)
        pred = torch.rand(6, 6, dtype=torch.float64, requires_grad=True)
        gt = torch.rand(6, 6, dtype=torch.float64)
        for fn in (mse_loss, charbonnier_loss):
            loss = fn(pred, gt)
            (grad,) = torch.autograd.grad(loss, pred)
            eps = 1e-6
            rng = torch.Generator().manual_seed(2)
            for _ in range(10):
                i = int(torch.randint(0, 6, (1,), generator=rng))
                j = int(torch.randint(0, 6, (1,), generator=rng))
                plus = pred.detach().clone()
                plus[i, j] += eps
                minus = pred.detach().clone()
                minus[i, j] -= eps
                fd = (fn(plus, gt).item() - fn(minus, gt).item()) / (2 * eps)
                assert grad[i, j].item() == pytest.approx(fd, rel=1e-4, abs=1e-8)
