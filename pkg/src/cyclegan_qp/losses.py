"""Generator and critic objectives for two-domain translation.

Domain ``r`` holds photos, domain ``s`` holds paintings.  ``G_rs`` maps
photos to paintings and ``G_sr`` the reverse; critic ``f_s`` scores
paintings and ``f_r`` scores photos.
"""

import json
from dataclasses import asdict, dataclass, fields

import torch

from . import divergence
from .divergence import NonFiniteError, QpConfig, ScorePair

__all__ = [
    "IDENTITY_MODES",
    "LossWeights",
    "TranslationStep",
    "LossReport",
    "cycle_loss",
    "identity_loss",
    "generator_total",
    "critic_total",
]

IDENTITY_MODES = ("cross_domain", "same_domain")


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 10.0
    beta: float = 0.5

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(f"loss weights must be >= 0, got alpha={self.alpha}, beta={self.beta}")


@dataclass
class TranslationStep:
    """Every image batch touched by one generator evaluation.

    ``id_r``/``id_s`` are the outputs compared against ``x_r``/``x_s`` by the
    identity terms.  In ``cross_domain`` mode they are the
    translations ``G_sr(x_s)`` and ``G_rs(x_r)`` (i.e. ``fake_r`` and
    ``fake_s`` reused); in ``same_domain`` mode they are ``G_sr(x_r)`` and
    ``G_rs(x_s)``.
    """

    x_r: torch.Tensor
    x_s: torch.Tensor
    fake_s: torch.Tensor
    fake_r: torch.Tensor
    rec_r: torch.Tensor
    rec_s: torch.Tensor
    id_r: torch.Tensor
    id_s: torch.Tensor

    @classmethod
    def from_generators(cls, g_rs, g_sr, x_r, x_s, identity_mode="cross_domain"):
        if identity_mode not in IDENTITY_MODES:
            raise ValueError(f"identity_mode must be one of {IDENTITY_MODES}, got {identity_mode!r}")
        fake_s = g_rs(x_r)
        fake_r = g_sr(x_s)
        rec_r = g_sr(fake_s)
        rec_s = g_rs(fake_r)
        if identity_mode == "cross_domain":
            id_r, id_s = fake_r, fake_s
        else:
            id_r, id_s = g_sr(x_r), g_rs(x_s)
        return cls(x_r, x_s, fake_s, fake_r, rec_r, rec_s, id_r, id_s)

    def validate(self):
        shape = self.x_r.shape
        for f in fields(self):
            t = getattr(self, f.name)
            if t.shape != shape:
                raise ValueError(f"{f.name} has shape {tuple(t.shape)}, expected {tuple(shape)}")
            if not torch.isfinite(t).all():
                raise NonFiniteError(f.name)


@dataclass
class LossReport:
    adv_rs: float = 0.0
    adv_sr: float = 0.0
    cyc_r: float = 0.0
    cyc_s: float = 0.0
    id_r: float = 0.0
    id_s: float = 0.0
    gen_total: float = 0.0
    critic_s: float = 0.0
    critic_r: float = 0.0
    # batch-mean real/fake distances used by the critic objectives
    d_s: float = 0.0
    d_r: float = 0.0
    iteration: int = 0
    wall_time: float = 0.0

    LOSS_FIELDS = ("adv_rs", "adv_sr", "cyc_r", "cyc_s", "id_r", "id_s",
                   "gen_total", "critic_s", "critic_r")

    def losses(self):
        return {k: getattr(self, k) for k in self.LOSS_FIELDS}

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line):
        return cls(**json.loads(line))


def _mean_l1(a, b):
    return divergence.l1_distance(a, b).mean()


def cycle_loss(original, reconstructed):
    """Mean absolute reconstruction error over the batch."""
    return _mean_l1(reconstructed, original)


def identity_loss(target_domain_sample, translated_other_domain_sample):
    """Mean absolute difference between a translation and a target-domain sample."""
    return _mean_l1(translated_other_domain_sample, target_domain_sample)


def generator_total(step, critic_s_scores, critic_r_scores, w=LossWeights()):
    """Joint objective of both generators.

    ``adv_rs + adv_sr + alpha*(cyc_r + cyc_s) + beta*(id_r + id_s)``.
    Returns the differentiable total and a :class:`LossReport`.
    """
    terms = {
        "adv_rs": divergence.generator_adversarial_scalar(critic_s_scores),
        "adv_sr": divergence.generator_adversarial_scalar(critic_r_scores),
        "cyc_r": cycle_loss(step.x_r, step.rec_r),
        "cyc_s": cycle_loss(step.x_s, step.rec_s),
        "id_r": identity_loss(step.x_r, step.id_r),
        "id_s": identity_loss(step.x_s, step.id_s),
    }
    for name, value in terms.items():
        if not torch.isfinite(value):
            raise NonFiniteError(name)
    total = (terms["adv_rs"] + terms["adv_sr"]
             + w.alpha * (terms["cyc_r"] + terms["cyc_s"])
             + w.beta * (terms["id_r"] + terms["id_s"]))
    report = LossReport(**{k: float(v.detach()) for k, v in terms.items()},
                        gen_total=float(total.detach()))
    return total, report


def critic_total(step, critic_s_scores, critic_r_scores, cfg=QpConfig()):
    """QP objectives of the painting critic and the photo critic (both maximised).

    Each direction measures ``d`` between the real sample of that critic's
    domain and the generated sample in the same domain.
    """
    obj_s = divergence.critic_direction_objective(critic_s_scores, step.x_s, step.fake_s, cfg)
    obj_r = divergence.critic_direction_objective(critic_r_scores, step.x_r, step.fake_r, cfg)
    return obj_s, obj_r
