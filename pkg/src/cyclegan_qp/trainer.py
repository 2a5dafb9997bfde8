"""Alternating min-max training of two generators and two QP critics."""

import hashlib
import itertools
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import torch

from . import data as data_mod
from .divergence import NonFiniteError, QpConfig, ScorePair, l1_distance
from .losses import IDENTITY_MODES, LossReport, LossWeights, TranslationStep, critic_total, generator_total
from .models import CriticSpec, GeneratorSpec, build_critic, build_generator

log = logging.getLogger(__name__)

__all__ = [
    "FORMAT_VERSION",
    "CheckpointError",
    "TrainConfig",
    "TrainState",
    "default_iterations",
    "train_step",
    "fit",
    "save_checkpoint",
    "load_checkpoint",
    "read_log",
]

FORMAT_VERSION = 1
NETWORKS = ("g_rs", "g_sr", "f_s", "f_r")
OPTIMIZERS = ("opt_g", "opt_cs", "opt_cr")
LOG_NAME = "train_log.jsonl"
CKPT_NAME = "checkpoint.pt"

ITERATIONS = 15000
UKIYOE_ITERATIONS = 12000


def default_iterations(style):
    return UKIYOE_ITERATIONS if style == "ukiyoe" else ITERATIONS


class CheckpointError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lam: float = 10.0
    alpha: float = 10.0
    beta: float = 0.5
    learning_rate: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 4
    total_iterations: Optional[int] = None  # None -> per-style default
    checkpoint_every: int = 1000
    seed: int = 0
    style: str = "vangogh"
    data_root: str = "datasets"
    out_dir: str = "runs"
    critic_steps_per_gen_step: int = 1
    crop_size: int = 256
    flip_probability: float = 0.5
    identity_mode: str = "cross_domain"
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    critic: CriticSpec = field(default_factory=CriticSpec)
    device: str = "cpu"
    prefetch: int = 2

    def __post_init__(self):
        if isinstance(self.generator, dict):
            self.generator = GeneratorSpec(**self.generator)
        if isinstance(self.critic, dict):
            self.critic = CriticSpec(**self.critic)
        if self.total_iterations is None:
            self.total_iterations = default_iterations(self.style)
        for name in ("lam", "learning_rate", "batch_size", "total_iterations",
                     "checkpoint_every", "critic_steps_per_gen_step", "crop_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.identity_mode not in IDENTITY_MODES:
            raise ValueError(f"identity_mode must be one of {IDENTITY_MODES}")
        if self.style not in data_mod.STYLES:
            raise ValueError(f"style must be one of {data_mod.STYLES}")
        if self.crop_size % self.generator.size_multiple:
            raise ValueError(f"crop_size must be divisible by {self.generator.size_multiple}")

    @property
    def qp(self):
        return QpConfig(lam=self.lam)

    @property
    def weights(self):
        return LossWeights(self.alpha, self.beta)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def config_hash(self):
        """Digest of everything that shapes the optimisation (not paths or budgets)."""
        d = self.to_dict()
        for k in ("total_iterations", "checkpoint_every", "data_root", "out_dir", "device", "prefetch"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


class TrainState:
    """Networks, optimisers and iteration counter of one training run."""

    def __init__(self, cfg):
        self.cfg = cfg
        s = cfg.seed
        self.g_rs, _ = build_generator(cfg.generator, seed=4 * s)
        self.g_sr, _ = build_generator(cfg.generator, seed=4 * s + 1)
        self.f_s, _ = build_critic(cfg.critic, seed=4 * s + 2)
        self.f_r, _ = build_critic(cfg.critic, seed=4 * s + 3)
        for name in NETWORKS:
            getattr(self, name).to(cfg.device)
        betas = (cfg.adam_beta1, cfg.adam_beta2)
        lr = cfg.learning_rate
        self.opt_g = torch.optim.Adam(
            itertools.chain(self.g_rs.parameters(), self.g_sr.parameters()), lr=lr, betas=betas)
        self.opt_cs = torch.optim.Adam(self.f_s.parameters(), lr=lr, betas=betas)
        self.opt_cr = torch.optim.Adam(self.f_r.parameters(), lr=lr, betas=betas)
        self.iteration = 0

    def generators(self):
        return self.g_rs, self.g_sr

    def critics(self):
        return self.f_s, self.f_r

    def state_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "iteration": self.iteration,
            "config": self.cfg.to_dict(),
            "config_hash": self.cfg.config_hash(),
            "networks": {n: getattr(self, n).state_dict() for n in NETWORKS},
            "optimizers": {n: getattr(self, n).state_dict() for n in OPTIMIZERS},
        }

    def load_state_dict(self, ckpt):
        for name in NETWORKS:
            _load_network(getattr(self, name), ckpt["networks"][name], name)
        for name in OPTIMIZERS:
            getattr(self, name).load_state_dict(ckpt["optimizers"][name])
        self.iteration = int(ckpt["iteration"])


def _load_network(net, sd, net_name):
    own = net.state_dict()
    for key in own:
        if key not in sd:
            raise CheckpointError(f"{net_name}: checkpoint lacks layer {key!r}")
        if sd[key].shape != own[key].shape:
            raise CheckpointError(
                f"{net_name}: layer {key!r} has shape {tuple(sd[key].shape)} in checkpoint, "
                f"model expects {tuple(own[key].shape)}")
    extra = set(sd) - set(own)
    if extra:
        raise CheckpointError(f"{net_name}: unexpected layers in checkpoint: {sorted(extra)}")
    net.load_state_dict(sd)


def _set_requires_grad(nets, flag):
    for net in nets:
        for p in net.parameters():
            p.requires_grad_(flag)


def _scores(critic, real, fake):
    return ScorePair(critic(real), critic(fake))


def train_step(state, batch_r, batch_s):
    """One critic ascent step per direction, then one joint generator descent step.

    Returns ``(state, report)``; ``state`` is updated in place.  A NaN/Inf
    term raises :class:`NonFiniteError` before the optimiser step it would
    feed.
    """
    cfg = state.cfg
    it = state.iteration + 1
    dev = cfg.device
    x_r, x_s = batch_r.to(dev), batch_s.to(dev)
    t0 = time.perf_counter()

    step = TranslationStep.from_generators(state.g_rs, state.g_sr, x_r, x_s, cfg.identity_mode)
    fake_s, fake_r = step.fake_s.detach(), step.fake_r.detach()
    # critic_total reads only the real and fake fields
    frozen = TranslationStep(x_r, x_s, fake_s, fake_r, fake_r, fake_s, fake_r, fake_s)

    for opt in (state.opt_g, state.opt_cs, state.opt_cr):
        opt.zero_grad(set_to_none=True)

    # Critic phase: generator outputs are constants.
    _set_requires_grad(state.critics(), True)
    for _ in range(cfg.critic_steps_per_gen_step):
        cs = _scores(state.f_s, x_s, fake_s)
        cr = _scores(state.f_r, x_r, fake_r)
        try:
            obj_s, obj_r = critic_total(frozen, cs, cr, cfg.qp)
        except NonFiniteError as exc:
            raise NonFiniteError(f"critic:{exc.term}", it) from exc
        if not (torch.isfinite(obj_s) and torch.isfinite(obj_r)):
            raise NonFiniteError("critic_s" if not torch.isfinite(obj_s) else "critic_r", it)
        state.opt_cs.zero_grad(set_to_none=True)
        state.opt_cr.zero_grad(set_to_none=True)
        (-(obj_s + obj_r)).backward()
        state.opt_cs.step()
        state.opt_cr.step()
    d_s = float(l1_distance(x_s, fake_s).mean())
    d_r = float(l1_distance(x_r, fake_r).mean())

    # Generator phase: critic parameters are constants.
    _set_requires_grad(state.critics(), False)
    try:
        total, report = generator_total(
            step, _scores(state.f_s, x_s, step.fake_s), _scores(state.f_r, x_r, step.fake_r), cfg.weights)
        state.opt_g.zero_grad(set_to_none=True)
        total.backward()
        state.opt_g.step()
    except NonFiniteError as exc:
        raise NonFiniteError(exc.term, it) from exc
    finally:
        _set_requires_grad(state.critics(), True)

    state.iteration = it
    report.critic_s = float(obj_s.detach())
    report.critic_r = float(obj_r.detach())
    report.d_s, report.d_r = d_s, d_r
    report.iteration = it
    report.wall_time = time.perf_counter() - t0
    return state, report


def save_checkpoint(state, path):
    """Atomically write ``state`` to a single versioned file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    torch.save(state.state_dict(), tmp)
    os.replace(tmp, path)


def load_checkpoint(path, cfg=None):
    """Rebuild a :class:`TrainState` from ``path``.

    With ``cfg`` the networks are built from that config and every layer is
    checked against the file; otherwise the stored config is used.
    """
    try:
        ckpt = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(ckpt, dict) or "format_version" not in ckpt:
        raise CheckpointError(f"{path} is not a checkpoint")
    if ckpt["format_version"] != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format {ckpt['format_version']} != supported {FORMAT_VERSION}")
    stored = TrainConfig.from_dict(ckpt["config"])
    state = TrainState(cfg if cfg is not None else stored)
    state.load_state_dict(ckpt)
    return state


def read_log(path):
    with open(path) as fh:
        return [LossReport.from_json(line) for line in fh if line.strip()]


def _truncate_log(path, iteration):
    """Drop log records past ``iteration`` (written after the last checkpoint)."""
    if not path.exists():
        return
    keep = [r for r in read_log(path) if r.iteration <= iteration]
    with open(path, "w") as fh:
        for r in keep:
            fh.write(r.to_json() + "\n")


def fit(cfg, ds=None, resume=True, callback=None):
    """Train for ``cfg.total_iterations`` steps, logging and checkpointing into ``cfg.out_dir``.

    If ``resume`` and a checkpoint exists in ``out_dir``, training continues
    from its iteration.  ``callback(state, report)`` runs after every step.
    Returns the final :class:`TrainState`.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if ds is None:
        ds = data_mod.UnpairedDataset.from_root(
            cfg.data_root, cfg.style, crop_size=cfg.crop_size, flip_probability=cfg.flip_probability)
    ckpt_path, log_path = out / CKPT_NAME, out / LOG_NAME

    if resume and ckpt_path.exists():
        state = load_checkpoint(ckpt_path, cfg)
        stored_hash = torch.load(ckpt_path, map_location="cpu", weights_only=True)["config_hash"]
        if stored_hash != cfg.config_hash():
            raise CheckpointError(f"{ckpt_path} was written with a different configuration")
        log.info("resuming from iteration %d", state.iteration)
    else:
        state = TrainState(cfg)
        if log_path.exists():
            log_path.unlink()
    _truncate_log(log_path, state.iteration)

    batches = data_mod.Prefetcher(ds, cfg.batch_size, cfg.seed, state.iteration + 1,
                                  cfg.total_iterations + 1, depth=max(1, cfg.prefetch))
    try:
        with open(log_path, "a") as fh:
            for _, (x_r, x_s) in batches:
                _, report = train_step(state, x_r, x_s)
                fh.write(report.to_json() + "\n")
                fh.flush()
                if state.iteration % cfg.checkpoint_every == 0:
                    save_checkpoint(state, ckpt_path)
                if callback is not None:
                    callback(state, report)
    finally:
        batches.close()
    save_checkpoint(state, ckpt_path)
    return state
