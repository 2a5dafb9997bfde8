"""Quadratic-potential (QP) divergence and the adversarial scalars it induces.

The critic is realised as a single-input score network ``f``; the two-argument
critic ``C(u, v)`` of the QP formulation is read as ``f(u)``, so the score gap
is ``a = f(x_real) - f(x_fake)``.  For a real/fake pair at distance ``d``::

    Q(a, d) = a - a**2 / (2 * lam * d)

``Q`` is concave in ``a`` with its maximum ``lam * d / 2`` at ``a = lam * d``.
The critic maximises the batch mean of ``Q``; the generator minimises the
batch mean of ``a`` (no quadratic term).
"""

from dataclasses import dataclass
from typing import NamedTuple

import torch

__all__ = [
    "NonFiniteError",
    "QpConfig",
    "ScorePair",
    "l1_distance",
    "qp_value",
    "qp_divergence",
    "critic_direction_objective",
    "generator_adversarial_scalar",
]


class NonFiniteError(FloatingPointError):
    """A loss term or its inputs contained NaN or Inf."""

    def __init__(self, term, iteration=None):
        self.term = term
        self.iteration = iteration
        msg = f"non-finite value in {term!r}"
        if iteration is not None:
            msg += f" at iteration {iteration}"
        super().__init__(msg)


@dataclass(frozen=True)
class QpConfig:
    lam: float = 10.0
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if not 0 < self.epsilon <= 1e-6:
            raise ValueError(f"epsilon must lie in (0, 1e-6], got {self.epsilon}")


class ScorePair(NamedTuple):
    """Critic scores on the real sample and on the generated sample, shape (N,)."""

    score_real: torch.Tensor
    score_fake: torch.Tensor

    @property
    def gap(self):
        return self.score_real - self.score_fake


def _check_finite(name, *tensors):
    for t in tensors:
        if not torch.isfinite(t).all():
            raise NonFiniteError(name)


def l1_distance(x, y):
    """Per-sample mean absolute difference between two image batches.

    Returns a tensor of shape ``(N,)``.  The mean (not the sum) over the
    ``C*H*W`` elements keeps the distance scale independent of resolution.
    """
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.dim() < 1 or x.shape[0] < 1:
        raise ValueError("need a non-empty batch dimension")
    return (x - y).abs().reshape(x.shape[0], -1).mean(dim=1)


def qp_value(a, d, lam, epsilon=1e-8):
    """Elementwise ``a - a**2 / (2*lam*max(d, epsilon))``."""
    d = torch.clamp(torch.as_tensor(d, dtype=a.dtype, device=a.device), min=epsilon)
    return a - a * a / (2.0 * lam * d)


def _check_batch(scores, x_real, x_fake):
    n = x_real.shape[0]
    if scores.score_real.shape != (n,) or scores.score_fake.shape != (n,):
        raise ValueError(
            f"scores must have shape ({n},), got {tuple(scores.score_real.shape)} "
            f"and {tuple(scores.score_fake.shape)}"
        )


def qp_divergence(scores, x_real, x_fake, cfg=QpConfig()):
    """Batch mean of the QP divergence for real/fake pairs."""
    _check_batch(scores, x_real, x_fake)
    _check_finite("scores", scores.score_real, scores.score_fake)
    _check_finite("images", x_real, x_fake)
    d = l1_distance(x_real, x_fake)
    return qp_value(scores.gap, d, cfg.lam, cfg.epsilon).mean()


def critic_direction_objective(scores, x_real, x_fake, cfg=QpConfig()):
    """The critic's objective for one translation direction (larger is better).

    Numerically identical to :func:`qp_divergence`; callers doing gradient
    descent negate it.
    """
    return qp_divergence(scores, x_real, x_fake, cfg)


def generator_adversarial_scalar(scores):
    """Batch mean of ``score_real - score_fake``, minimised by the generator."""
    _check_finite("scores", scores.score_real, scores.score_fake)
    return scores.gap.mean()
