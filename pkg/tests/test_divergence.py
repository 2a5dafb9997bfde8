import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclegan_qp.divergence import (
    NonFiniteError,
    QpConfig,
    ScorePair,
    critic_direction_objective,
    generator_adversarial_scalar,
    l1_distance,
    qp_divergence,
    qp_value,
)

D64 = torch.float64


def images_at_distance(d, n=1, shape=(3, 2, 2)):
    """A real/fake pair whose per-sample mean-L1 distance is exactly ``d``."""
    x_real = torch.zeros((n, *shape), dtype=D64)
    return x_real, torch.full_like(x_real, d)


def scores(real, fake):
    return ScorePair(torch.tensor(real, dtype=D64), torch.tensor(fake, dtype=D64))


# ---------------------------------------------------------------- l1_distance

def test_l1_identical_is_zero():
    x = torch.randn(3, 3, 8, 8)
    assert torch.equal(l1_distance(x, x), torch.zeros(3))


def test_l1_hand_examples():
    assert l1_distance(torch.tensor([[1.0, -1.0]]), torch.tensor([[0.0, 0.0]])).item() == 1.0
    assert l1_distance(torch.tensor([[2.0, 0, 0, 0]]), torch.zeros(1, 4)).item() == 0.5


def test_l1_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        l1_distance(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 5))


arrays = st.integers(0, 2 ** 31 - 1).map(
    lambda s: torch.from_numpy(np.random.default_rng(s).uniform(-1, 1, size=(2, 3, 3))))


@given(arrays, arrays, arrays)
def test_l1_metric_axioms(x, y, z):
    dxy, dyx = l1_distance(x, y), l1_distance(y, x)
    assert (dxy >= 0).all()
    assert torch.equal(dxy, dyx)
    assert (l1_distance(x, z) <= dxy + l1_distance(y, z) + 1e-12).all()
    assert torch.equal(l1_distance(x, x), torch.zeros(2, dtype=D64))
    if not torch.equal(x, y):
        assert (dxy > 0).any()


# ---------------------------------------------------------------- qp_divergence

def test_qp_zero_gap():
    xr, xf = torch.zeros(2, 3, 4, 4), torch.rand(2, 3, 4, 4)
    assert qp_divergence(scores([0.7, 0.7], [0.7, 0.7]), xr.double(), xf.double()).item() == 0.0


@pytest.mark.parametrize("a, lam, d, expected", [
    (1.0, 1.0, 0.5, 0.0),
    (2.0, 10.0, 1.0, 1.8),
    (10.0, 10.0, 1.0, 5.0),
])
def test_qp_worked_values(a, lam, d, expected):
    xr, xf = images_at_distance(d)
    got = qp_divergence(scores([a], [0.0]), xr, xf, QpConfig(lam=lam)).item()
    assert got == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("a, expected", [(0.0, 0.0), (1.0, 0.95), (-1.0, -1.05)])
def test_critic_direction_objective(a, expected):
    xr, xf = images_at_distance(1.0)
    got = critic_direction_objective(scores([a], [0.0]), xr, xf, QpConfig(lam=10.0)).item()
    assert got == pytest.approx(expected, abs=1e-12)


def test_qp_is_batch_mean():
    xr = torch.zeros(2, 3, 2, 2, dtype=D64)
    xf = torch.stack([torch.full((3, 2, 2), 1.0), torch.full((3, 2, 2), 0.5)]).double()
    got = qp_divergence(scores([2.0, 1.0], [0.0, 0.0]), xr, xf, QpConfig(lam=10.0)).item()
    assert got == pytest.approx((1.8 + (1 - 1 / 10)) / 2, abs=1e-12)


def test_qp_epsilon_floor_keeps_value_finite():
    x = torch.zeros(1, 3, 4, 4, dtype=D64)
    v = qp_divergence(scores([1.0], [0.0]), x, x.clone())
    assert math.isfinite(v.item()) and v.item() < -1e6


@pytest.mark.parametrize("bad", [float("nan"), float("inf")])
def test_qp_non_finite_raises(bad):
    xr, xf = images_at_distance(1.0)
    with pytest.raises(NonFiniteError):
        qp_divergence(scores([bad], [0.0]), xr, xf)
    with pytest.raises(NonFiniteError):
        qp_divergence(scores([1.0], [0.0]), xr, xf * bad)


def test_qp_score_batch_mismatch():
    xr, xf = images_at_distance(1.0, n=2)
    with pytest.raises(ValueError):
        qp_divergence(scores([1.0], [0.0]), xr, xf)


def test_qp_config_invariants():
    with pytest.raises(ValueError):
        QpConfig(lam=0.0)
    with pytest.raises(ValueError):
        QpConfig(epsilon=1e-3)
    assert QpConfig().lam == 10.0


# ------------------------------------------------------------- properties in the gap a

gap = st.floats(-50, 50, allow_nan=False)
pos = st.floats(0.01, 10)


@given(gap, gap, st.floats(0.1, 100), pos)
def test_midpoint_concavity(a1, a2, lam, d):
    a = torch.tensor([a1, a2, (a1 + a2) / 2], dtype=D64)
    q = qp_value(a, torch.tensor(d, dtype=D64), lam)
    assert q[2] >= (q[0] + q[1]) / 2 - 1e-9 * (1 + q.abs().max())


def test_analytic_maximum_matches_grid():
    rng = np.random.default_rng(7)
    for _ in range(20):
        lam, d = rng.uniform(0.1, 100), rng.uniform(0.01, 10)
        grid = torch.linspace(0, 2 * lam * d, 200_003, dtype=D64)
        q = qp_value(grid, torch.tensor(d, dtype=D64), lam)
        i = int(q.argmax())
        assert abs(grid[i].item() - lam * d) <= (grid[1] - grid[0]).item()
        assert abs(q[i].item() - lam * d / 2) <= 1e-6


def test_gradient_wrt_gap_matches_central_differences():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a0, lam, d = rng.uniform(-20, 20), rng.uniform(0.1, 100), rng.uniform(0.01, 10)
        a = torch.tensor(a0, dtype=D64, requires_grad=True)
        qp_value(a, torch.tensor(d, dtype=D64), lam).backward()
        h = 1e-6
        fd = (qp_value(torch.tensor(a0 + h, dtype=D64), d, lam)
              - qp_value(torch.tensor(a0 - h, dtype=D64), d, lam)).item() / (2 * h)
        expected = 1 - a0 / (lam * d)
        assert a.grad.item() == pytest.approx(expected, rel=1e-12, abs=1e-12)
        assert abs(fd - expected) <= 1e-4 * max(abs(expected), 1e-2)


def test_gradient_example_score_real():
    xr, xf = images_at_distance(1.0)
    sr = torch.tensor([3.0], dtype=D64, requires_grad=True)
    qp_divergence(ScorePair(sr, torch.zeros(1, dtype=D64)), xr, xf, QpConfig(lam=10.0)).backward()
    assert sr.grad.item() == pytest.approx(0.7, abs=1e-12)


@given(gap, st.floats(0.1, 100), pos)
def test_swap_symmetry(a, lam, d):
    xr, xf = images_at_distance(d)
    cfg = QpConfig(lam=lam)
    swapped = qp_divergence(scores([0.0], [a]), xf, xr, cfg).item()
    assert swapped == pytest.approx(-a - a * a / (2 * lam * d), rel=1e-9, abs=1e-9)


# ---------------------------------------------------------------- generator scalar

@pytest.mark.parametrize("real, fake, expected", [
    ([0.3, -2.0], [0.3, -2.0], 0.0),
    ([1.0], [0.2], 0.8),
    ([-0.5], [0.5], -1.0),
])
def test_generator_adversarial_scalar(real, fake, expected):
    assert generator_adversarial_scalar(scores(real, fake)).item() == pytest.approx(expected, abs=1e-12)


def test_generator_adversarial_scalar_non_finite():
    with pytest.raises(NonFiniteError):
        generator_adversarial_scalar(scores([float("nan")], [0.0]))


def test_minimising_generator_scalar_raises_fake_score():
    fake = torch.tensor([0.0], requires_grad=True)
    generator_adversarial_scalar(ScorePair(torch.tensor([1.0]), fake)).backward()
    assert fake.grad.item() < 0  # descent increases the fake score


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_zero_gap_annihilates_for_any_images(seed):
    g = torch.Generator().manual_seed(seed)
    xr, xf = torch.rand(3, 3, 4, 4, generator=g), torch.rand(3, 3, 4, 4, generator=g)
    s = torch.randn(3, generator=g)
    assert qp_divergence(ScorePair(s, s.clone()), xr, xf).item() == 0.0
