import json
from fractions import Fraction

import numpy as np
import pytest
import torch

from cyclegan_qp import diagnostics, divergence
from cyclegan_qp.diagnostics import (
    check_qp_analytics,
    checkerboard_contrast,
    checkerboard_probe,
    checkerboard_score,
    exact_generator_total,
    exact_mean_l1,
    exact_qp,
    finite_difference_gradcheck,
    qp_worked_examples,
)
from cyclegan_qp.divergence import QpConfig


def test_qp_analytics_small_run_passes():
    rep = check_qp_analytics(trials=5, grid_points=100_003, value_tol=1e-4)
    assert rep.passed, rep.failures
    assert rep.max_argmax_error_in_steps <= 1.0
    assert json.loads(rep.to_json())["trials"] == 5


def test_qp_analytics_catches_wrong_curvature(monkeypatch):
    # quadratic term with lam*d instead of 2*lam*d moves the peak to lam*d/2
    monkeypatch.setattr(divergence, "qp_value", lambda a, d, lam, eps=1e-8: a - a * a / (lam * d))
    assert not check_qp_analytics(trials=3, grid_points=10_001).passed


def test_checkerboard_score_constant_and_errors():
    assert checkerboard_score(torch.full((1, 2, 6, 6), 3.0), 1) == 0.0
    x = torch.zeros(1, 1, 6, 6)
    x[..., ::2, ::2] = 1.0
    assert checkerboard_score(x, 1) > 0
    with pytest.raises(ValueError):
        checkerboard_score(x, 3)
    with pytest.raises(ValueError):
        checkerboard_score(torch.zeros(6, 6), 1)


def test_probe_separates_upsampling_modes():
    score, y = checkerboard_probe("transpose_conv", seed=0)
    assert score > 0
    dec_score, _ = checkerboard_probe("nearest_neighbor_conv", seed=0)
    assert dec_score <= 1e-10
    assert y.dtype == torch.float64


def test_checkerboard_contrast_rows():
    passed, rows = checkerboard_contrast(seeds=range(3))
    assert passed and [r["seed"] for r in rows] == [0, 1, 2]


def test_gradcheck_quadratic():
    p = torch.randn(10, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
    rep = finite_difference_gradcheck(lambda t: 0.5 * (t * t).sum(), [p], n_coords=10, tol=1e-8)
    assert rep.passed and rep.max_rel_error <= 1e-8


def test_gradcheck_detects_wrong_gradient():
    class Bad(torch.autograd.Function):
        @staticmethod
        def forward(ctx, t):
            ctx.save_for_backward(t)
            return (t * t).sum()

        @staticmethod
        def backward(ctx, g):
            (t,) = ctx.saved_tensors
            return g * t  # true gradient is 2t

    p = torch.rand(6, dtype=torch.float64) + 0.5
    assert not finite_difference_gradcheck(Bad.apply, [p], n_coords=6).passed


def test_exact_oracles_agree_with_float():
    g = torch.Generator().manual_seed(1)
    x, y = torch.rand(2, 3, 2, 2, generator=g, dtype=torch.float64), torch.rand(2, 3, 2, 2, generator=g,
                                                                                  dtype=torch.float64)
    fx, fy = diagnostics._as_fractions(x), diagnostics._as_fractions(y)
    assert float(exact_mean_l1(fx, fy)) == pytest.approx((x - y).abs().mean().item(), rel=1e-14)
    sr, sf = torch.tensor([1.0, 0.5], dtype=torch.float64), torch.tensor([0.25, -1.0], dtype=torch.float64)
    q = divergence.qp_divergence(divergence.ScorePair(sr, sf), x, y).item()
    fq = exact_qp(diagnostics._as_fractions(sr), diagnostics._as_fractions(sf), fx, fy)
    assert isinstance(fq, Fraction) and float(fq) == pytest.approx(q, rel=1e-13)


def test_exact_generator_total_worked_example():
    one = np.array([Fraction(1)], dtype=object)
    zero = np.array([Fraction(0)], dtype=object)
    z = np.full((1, 1, 1, 1), Fraction(0), dtype=object)
    c = np.full((1, 1, 1, 1), Fraction(1, 10), dtype=object)
    i = np.full((1, 1, 1, 1), Fraction(2, 10), dtype=object)
    total = exact_generator_total(one, zero, one, zero, z, z, z, z, c, c, i, i)
    assert total == Fraction(42, 10)


def test_loss_gradchecks_pass():
    reports = diagnostics.loss_gradchecks(np.random.default_rng(0), n_coords=10)
    assert set(reports) == {"qp_divergence", "cycle_loss", "identity_loss", "generator_total"}
    assert all(r.passed and r.max_rel_error <= 1e-6 for r in reports.values())


def test_qp_worked_examples_pass():
    ok, rows = qp_worked_examples()
    assert ok and len(rows) == len(diagnostics.QP_WORKED_EXAMPLES)


def test_qp_gradient_example():
    # dQ/d score_real = 1 - a / (lam d) = 1 - 3/10
    sr = torch.tensor([3.0], dtype=torch.float64, requires_grad=True)
    xr = torch.zeros(1, 3, 2, 2, dtype=torch.float64)
    divergence.qp_divergence(divergence.ScorePair(sr, torch.zeros(1, dtype=torch.float64)), xr, xr + 1,
                             QpConfig(lam=10)).backward()
    assert sr.grad.item() == pytest.approx(0.7, abs=1e-12)
