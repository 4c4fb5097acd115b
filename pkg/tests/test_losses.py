"""Loss oracles: brute-force references, frozen constants, gradient contracts."""

import dataclasses
import math

import numpy as np
import pytest
import torch

from autocl import LossConfig, autocl_loss, init_model, nt_xent, pearson_term
from autocl.models import ForwardTrace

from helpers import (
    analytic_gradients,
    fd_gradients,
    max_relative_error,
    nt_xent_first_view_reference,
    nt_xent_reference,
    pearson_per_sample_reference,
    pearson_reference,
    tiny_spec,
)

# Two orthonormal pairs with perfectly aligned positives at tau = 0.1:
# every anchor sees logits {10, 0, 0} -> loss = log(1 + 2 * exp(-10)).
ORTHONORMAL_PAIR_LOSS = 9.079573746724446e-05


class TestLossConfig:
    def test_round_trip(self):
        cfg = LossConfig(tau=0.2, cr_enabled=False, sg_enabled=False)
        assert LossConfig.from_dict(cfg.to_dict()) == cfg

    def test_validation(self):
        with pytest.raises(ValueError):
            LossConfig(tau=0.0)
        with pytest.raises(ValueError):
            LossConfig(cr_weight=-0.5)
        with pytest.raises(ValueError):
            LossConfig(denominator_mode="both_views")
        with pytest.raises(ValueError):
            LossConfig(correlation_mode="median")


class TestNtXent:
    def test_matches_brute_force_reference(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = int(rng.choice([2, 3, 4]))
            d = int(rng.choice([3, 8]))
            tau = float(rng.choice([0.07, 0.1, 0.5, 1.0]))
            y1 = rng.standard_normal((n, d))
            y2 = rng.standard_normal((n, d))
            got = float(nt_xent(torch.from_numpy(y1), torch.from_numpy(y2), tau))
            want = nt_xent_reference(y1, y2, tau)
            assert math.isclose(got, want, rel_tol=0, abs_tol=1e-9)

    def test_orthonormal_identical_pairs_closed_form(self):
        # float64 on purpose: the closed form sits 1e-4 above zero and float32
        # logsumexp cancellation alone costs ~5e-7 here.
        y = torch.eye(2, 4, dtype=torch.float64)
        got = float(nt_xent(y, y.clone(), tau=0.1))
        assert math.isclose(got, ORTHONORMAL_PAIR_LOSS, rel_tol=0, abs_tol=1e-12)
        assert abs(got - 9.08e-5) < 1e-7
        assert math.isclose(
            ORTHONORMAL_PAIR_LOSS, math.log1p(2.0 * math.exp(-10.0)), rel_tol=1e-12
        )

    def test_first_view_mode_matches_reference(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.choice([2, 3, 5]))
            y1 = rng.standard_normal((n, 6))
            y2 = rng.standard_normal((n, 6))
            got = float(
                nt_xent(
                    torch.from_numpy(y1),
                    torch.from_numpy(y2),
                    0.1,
                    denominator_mode="first_view_only",
                )
            )
            want = nt_xent_first_view_reference(y1, y2, 0.1)
            assert math.isclose(got, want, rel_tol=0, abs_tol=1e-9)

    def test_loss_drops_as_positives_align(self):
        """Rotate each second view toward its positive; everything else fixed.

        y1_i = e_i and y2_i = cos(a) e_i + sin(a) e_{N+i} keep every cross
        similarity at exactly zero, so the loss must fall strictly as the
        angle a shrinks.
        """
        n = 4
        eye = torch.eye(2 * n, dtype=torch.float64)
        y1 = eye[:n]
        losses = []
        for angle in [1.4, 1.0, 0.7, 0.4, 0.1]:
            y2 = math.cos(angle) * eye[:n] + math.sin(angle) * eye[n:]
            losses.append(float(nt_xent(y1, y2, tau=0.1)))
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_per_row_scale_invariance(self):
        rng = np.random.default_rng(3)
        y1 = rng.standard_normal((5, 7))
        y2 = rng.standard_normal((5, 7))
        base = float(nt_xent(torch.from_numpy(y1), torch.from_numpy(y2), 0.1))
        c1 = rng.uniform(0.1, 10.0, (5, 1))
        c2 = rng.uniform(0.1, 10.0, (5, 1))
        scaled = float(nt_xent(torch.from_numpy(y1 * c1), torch.from_numpy(y2 * c2), 0.1))
        assert math.isclose(base, scaled, rel_tol=0, abs_tol=1e-9)

    def test_aligned_pairs_beat_shuffled_pairs(self):
        rng = np.random.default_rng(11)
        y = torch.from_numpy(rng.standard_normal((8, 16)))
        aligned = float(nt_xent(y, y.clone(), 0.1))
        shuffled = float(nt_xent(y, y.roll(1, dims=0), 0.1))
        assert aligned < shuffled

    def test_zero_norm_row_named(self):
        y1 = torch.ones(3, 4)
        y2 = torch.ones(3, 4)
        y1[1] = 0.0
        with pytest.raises(ValueError, match="row 1 in first batch"):
            nt_xent(y1, y2)
        y1[1] = 1.0
        y2[2] = 0.0
        with pytest.raises(ValueError, match="row 2 in second batch"):
            nt_xent(y1, y2)

    def test_argument_errors(self):
        y = torch.randn(4, 8)
        with pytest.raises(ValueError, match="shape"):
            nt_xent(y, torch.randn(4, 9))
        with pytest.raises(ValueError, match="at least 2"):
            nt_xent(torch.randn(1, 8), torch.randn(1, 8))
        with pytest.raises(ValueError, match="tau"):
            nt_xent(y, y, tau=0.0)
        with pytest.raises(ValueError, match="denominator_mode"):
            nt_xent(y, y, denominator_mode="everything")
        with pytest.raises(ValueError, match="\\[N, D\\]"):
            nt_xent(torch.randn(4, 8, 2), torch.randn(4, 8, 2))


class TestPearsonTerm:
    def test_exact_correlations(self):
        rng = np.random.default_rng(0)
        x = torch.from_numpy(rng.standard_normal((4, 8, 2)))
        assert abs(float(pearson_term(x, x.clone())) - 1.0) < 1e-6
        assert abs(float(pearson_term(x, -x)) + 1.0) < 1e-6
        assert abs(float(pearson_term(x, 2.0 * x + 3.0)) - 1.0) < 1e-6

    def test_bounded_by_one(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            a = torch.from_numpy(rng.standard_normal((2, 6, 1)))
            b = torch.from_numpy(rng.standard_normal((2, 6, 1)))
            val = float(pearson_term(a, b, mode="whole_batch"))
            assert abs(val) <= 1.0 + 1e-9

    def test_whole_batch_matches_corrcoef(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((3, 10, 4))
        g = rng.standard_normal((3, 10, 4))
        got = float(
            pearson_term(torch.from_numpy(x), torch.from_numpy(g), mode="whole_batch")
        )
        assert math.isclose(got, pearson_reference(x, g), rel_tol=0, abs_tol=1e-9)

    def test_per_sample_matches_mean_of_corrcoef(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((5, 12, 3))
        g = rng.standard_normal((5, 12, 3))
        got = float(pearson_term(torch.from_numpy(x), torch.from_numpy(g)))
        assert math.isclose(
            got, pearson_per_sample_reference(x, g), rel_tol=0, abs_tol=1e-9
        )

    def test_sign_flip(self):
        rng = np.random.default_rng(5)
        x = torch.from_numpy(rng.standard_normal((4, 9, 2)))
        g = torch.from_numpy(rng.standard_normal((4, 9, 2)))
        assert math.isclose(
            float(pearson_term(x, g)), -float(pearson_term(x, -g)), abs_tol=1e-12
        )

    def test_constant_sample_named(self):
        rng = np.random.default_rng(6)
        x = torch.from_numpy(rng.standard_normal((4, 8, 2)))
        g = x.clone()
        g[2] = 5.0
        with pytest.raises(ValueError, match="index 2"):
            pearson_term(x, g)

    def test_argument_errors(self):
        x = torch.randn(3, 8, 2)
        with pytest.raises(ValueError, match="shape"):
            pearson_term(x, torch.randn(3, 8, 3))
        with pytest.raises(ValueError, match="mode"):
            pearson_term(x, x, mode="per_channel")


def _leaf_trace(n=4, d=6, w=16, c=2, seed=0):
    """A forward trace built from independent leaf tensors (no real network)."""
    gen = torch.Generator().manual_seed(seed)

    def rand(*shape):
        return torch.randn(*shape, generator=gen, requires_grad=True)

    x = torch.randn(n, w, c, generator=gen)
    trace = ForwardTrace(
        z=rand(n, d), y=rand(n, d), x_gen=rand(n, w, c), z_gen=rand(n, d), y_gen=rand(n, d)
    )
    return trace, x


class TestAutoCLLoss:
    def test_stop_gradient_blocks_first_branch_only(self):
        trace, x = _leaf_trace()
        cfg = LossConfig(sg_enabled=True)
        loss, _ = autocl_loss(trace, x, cfg)
        loss.backward()
        assert trace.y.grad is None
        assert trace.y_gen.grad is not None
        assert float(trace.y_gen.grad.abs().max()) > 0
        assert trace.x_gen.grad is not None  # correlation term stays live

    def test_no_stop_gradient_reaches_first_branch(self):
        trace, x = _leaf_trace(seed=1)
        cfg = LossConfig(sg_enabled=False)
        loss, _ = autocl_loss(trace, x, cfg)
        loss.backward()
        assert trace.y.grad is not None
        assert float(trace.y.grad.abs().max()) > 0

    def test_stop_gradient_never_changes_the_value(self):
        trace, x = _leaf_trace(seed=2)
        on, _ = autocl_loss(trace, x, LossConfig(sg_enabled=True))
        off, _ = autocl_loss(trace, x, LossConfig(sg_enabled=False))
        assert float(on.detach()) == float(off.detach())

    def test_cr_disabled_is_exactly_nt_xent(self):
        trace, x = _leaf_trace(seed=3)
        cfg = LossConfig(cr_enabled=False)
        loss, parts = autocl_loss(trace, x, cfg)
        bare = nt_xent(trace.y.detach(), trace.y_gen, cfg.tau)
        assert float(loss.detach()) == float(bare.detach())
        assert set(parts) == {"nt_xent"}

    def test_cr_weight_scales_the_penalty(self):
        trace, x = _leaf_trace(seed=4)
        nt = float(autocl_loss(trace, x, LossConfig(cr_enabled=False))[0].detach())
        corr = float(pearson_term(x, trace.x_gen).detach())
        for w in (0.5, 1.0, 2.0):
            total, parts = autocl_loss(trace, x, LossConfig(cr_weight=w))
            assert math.isclose(
                float(total.detach()), nt + w * abs(corr), rel_tol=0, abs_tol=1e-6
            )
            assert math.isclose(parts["pearson"], corr, rel_tol=0, abs_tol=1e-6)

    def test_penalty_is_symmetric_in_correlation_sign(self):
        """A strongly anti-correlated generated batch costs as much as a copy."""
        trace, x = _leaf_trace(seed=8)
        mirrored = dataclasses.replace(trace, x_gen=-trace.x_gen.detach())
        plain, _ = autocl_loss(trace, x, LossConfig())
        flipped, _ = autocl_loss(mirrored, x, LossConfig())
        nt = float(autocl_loss(trace, x, LossConfig(cr_enabled=False))[0].detach())
        assert math.isclose(
            float(plain.detach()) - nt, float(flipped.detach()) - nt, abs_tol=1e-9
        )

    def test_constant_generator_embedding_starves_the_encoder(self):
        """With stop-gradient on, a constant second-view embedding leaves the
        contrastive term without any route back to the encoder."""
        net = init_model(tiny_spec(), seed=7)
        net.eval()
        x = torch.randn(6, 16, 2)
        trace = net.forward_trace(x)
        frozen = dataclasses.replace(trace, y_gen=torch.ones_like(trace.y_gen))
        cfg = LossConfig(cr_enabled=False, sg_enabled=True)
        loss, _ = autocl_loss(frozen, x, cfg)
        if loss.requires_grad:
            net.zero_grad()
            loss.backward()
            for p in net.theta_parameters():
                assert p.grad is None or float(p.grad.abs().max()) == 0.0
        # Turning stop-gradient off restores the direct first-branch route.
        live, _ = autocl_loss(frozen, x, LossConfig(cr_enabled=False, sg_enabled=False))
        net.zero_grad()
        live.backward()
        peak = max(
            (float(p.grad.abs().max()) for p in net.theta_parameters() if p.grad is not None),
            default=0.0,
        )
        assert peak > 1e-6


class TestGradientCheck:
    """Central finite differences against autograd on a doubled tiny network."""

    def _check(self, sg_enabled):
        cfg = LossConfig(sg_enabled=sg_enabled)
        net = init_model(tiny_spec(), seed=2).double().eval()
        torch.manual_seed(0)
        x = torch.randn(4, 16, 2, dtype=torch.float64)
        analytic = analytic_gradients(net, x, cfg)
        fd = fd_gradients(
            net, x, cfg, max_elements_per_tensor=3, rng=np.random.default_rng(9)
        )
        return max_relative_error(analytic, fd)

    def test_with_stop_gradient(self):
        assert self._check(sg_enabled=True) < 1e-4

    def test_without_stop_gradient(self):
        assert self._check(sg_enabled=False) < 1e-4
