"""Unpaired photo <-> painting translation trained with the quadratic-potential GAN divergence."""

from .divergence import (
    NonFiniteError,
    QpConfig,
    ScorePair,
    critic_direction_objective,
    generator_adversarial_scalar,
    l1_distance,
    qp_divergence,
)
from .losses import LossReport, LossWeights, TranslationStep, critic_total, cycle_loss, generator_total, identity_loss
from .models import Critic, CriticSpec, Generator, GeneratorSpec, build_critic, build_generator
from .trainer import TrainConfig, TrainState, fit, load_checkpoint, save_checkpoint, train_step

__version__ = "0.1.0"
