"""Desk-scale verification: QP closed-form checks, gradient checks, checkerboard probe."""

import copy
import json
import math
from fractions import Fraction
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from . import divergence
from .divergence import QpConfig
from .models import GeneratorSpec, build_decoder, build_generator, init_glorot_

__all__ = [
    "QpAnalyticsReport",
    "GradCheckReport",
    "check_qp_analytics",
    "checkerboard_score",
    "checkerboard_probe",
    "finite_difference_gradcheck",
    "generator_gradcheck",
    "loss_gradchecks",
    "checkerboard_contrast",
    "qp_worked_examples",
]


@dataclass
class QpAnalyticsReport:
    trials: int
    grid_points: int
    value_tol: float
    passed: bool = True
    max_value_error: float = 0.0
    max_argmax_error_in_steps: float = 0.0
    failures: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self))


def check_qp_analytics(cfg=QpConfig(), trials=50, rng=None, grid_points=400_003, value_tol=1e-6,
                       lam_range=(0.1, 100.0), d_range=(0.01, 10.0)):
    """Grid-search the QP value over the score gap and compare with its closed form.

    For random ``(lam, d)`` the maximiser must be ``lam*d`` (to within one grid
    step) and the maximum ``lam*d/2`` (to ``value_tol``); every consecutive
    grid triple must satisfy midpoint concavity.  ``cfg.epsilon`` is the
    distance floor; ``cfg.lam`` is only used for the floor-contract probe.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    report = QpAnalyticsReport(trials, grid_points, value_tol)
    for _ in range(trials):
        lam = float(rng.uniform(*lam_range))
        d = float(rng.uniform(*d_range))
        peak = lam * d
        # asymmetric window so the optimum is not the grid midpoint
        a = torch.linspace(-peak, 3.0 * peak, grid_points, dtype=torch.float64)
        q = divergence.qp_value(a, torch.tensor(d, dtype=torch.float64), lam, cfg.epsilon)
        i = int(torch.argmax(q))
        h = float(a[1] - a[0])
        value_err = abs(float(q[i]) - peak / 2.0)
        argmax_steps = abs(float(a[i]) - peak) / h
        second = q[:-2] + q[2:] - 2.0 * q[1:-1]
        slack = 1e-12 * max(1.0, float(q.abs().max()))
        bad_concave = int((second > slack).sum())
        report.max_value_error = max(report.max_value_error, value_err)
        report.max_argmax_error_in_steps = max(report.max_argmax_error_in_steps, argmax_steps)
        if value_err > value_tol or argmax_steps > 1.0 or bad_concave:
            report.failures.append({"lam": lam, "d": d, "a": float(a[i]), "value_error": value_err,
                                    "argmax_steps": argmax_steps, "non_concave_triples": bad_concave})

    # the distance floor keeps Q finite at d = 0
    q0 = divergence.qp_value(torch.tensor(1.0, dtype=torch.float64), torch.tensor(0.0, dtype=torch.float64),
                             cfg.lam, cfg.epsilon)
    if not (torch.isfinite(q0) and q0 < 0):
        report.failures.append({"lam": cfg.lam, "d": 0.0, "a": 1.0, "floor_value": float(q0)})
    report.passed = not report.failures
    return report


def checkerboard_score(x, border):
    """Largest per-(sample, channel) spatial variance inside a ``border``-pixel margin."""
    if x.dim() != 4:
        raise ValueError("expected an (N, C, H, W) batch")
    h, w = x.shape[-2:]
    if border < 0 or 2 * border >= min(h, w) - 1:
        raise ValueError(f"border {border} leaves fewer than 2 interior pixels in {h}x{w}")
    inner = x[..., border:h - border, border:w - border].to(torch.float64)
    return float(inner.flatten(2).var(dim=2, unbiased=False).max())


def checkerboard_probe(upsample_mode, seed=0, spec=None, size=8, value=0.5, border=None):
    """Feed a spatially constant feature map through a freshly initialised decoder.

    Runs in double precision so the nearest-neighbour path is constant to
    round-off.  Returns ``(score, output)``.
    """
    base = spec or GeneratorSpec(base_width=8, n_residual_blocks=1, n_down=2)
    spec = GeneratorSpec(base.base_width, base.n_residual_blocks, base.n_down, upsample_mode, base.norm,
                         base.channels)
    dec = init_glorot_(build_decoder(spec), seed).double()
    x = torch.full((1, spec.base_width * 2 ** spec.n_down, size, size), value, dtype=torch.float64)
    with torch.no_grad():
        y = dec(x)
    # each stage's 3x3 kernel touches one pixel beyond its input; doubled per later stage
    if border is None:
        border = 2 ** spec.n_down
    return checkerboard_score(y, border), y


@dataclass
class GradCheckReport:
    coords: list
    analytic: list
    numeric: list
    rel_error: list
    max_rel_error: float
    step: float
    tol: float
    passed: bool
    message: str = ""

    def to_json(self):
        d = asdict(self)
        for k in ("coords", "analytic", "numeric", "rel_error"):
            d.pop(k)
        d["n_coords"] = len(self.coords)
        return json.dumps(d)


def _rel_error(a, n, floor):
    return abs(a - n) / max(abs(a), abs(n), floor)


def _as_fractions(t):
    return np.array([Fraction(v) for v in t.detach().to(torch.float64).reshape(-1).tolist()],
                    dtype=object).reshape(tuple(t.shape))


def finite_difference_gradcheck(loss_fn, params, n_coords=50, step=1e-6, rng=None, tol=1e-6,
                                floor=1e-300, reference_dtype=None, reference_fn=None):
    """Compare autograd gradients of ``loss_fn(*params)`` with central differences.

    ``params`` is a tensor or a sequence of tensors; ``n_coords`` coordinates
    are sampled uniformly over all of them.  The finite differences are taken
    on one of:

    * ``loss_fn`` itself (default);
    * ``loss_fn`` on copies cast to ``reference_dtype`` (e.g. a float64
      reference for a float32 network; ``loss_fn`` must accept both dtypes);
    * ``reference_fn``, an independent implementation of the same formula
      that receives numpy object arrays of :class:`fractions.Fraction` and
      returns a ``Fraction``.  The difference quotient is then exact apart
      from truncation, so gradients far below ``eps * |loss| / step`` are
      still resolved.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if isinstance(params, torch.Tensor):
        params = [params]
    leaves = [p.detach().clone().requires_grad_(True) for p in params]
    loss = loss_fn(*leaves)
    if not torch.isfinite(loss):
        return GradCheckReport([], [], [], [], math.inf, step, tol, False, "non-finite loss at base point")
    grads = torch.autograd.grad(loss, leaves, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(leaves, grads)]

    message = ""
    if reference_fn is not None:
        ref = [_as_fractions(p) for p in params]
        evaluate, h = reference_fn, Fraction(step)
        base = float(reference_fn(*ref))
        message = f"reference value {base!r} vs implementation {float(loss.detach())!r}"
        if abs(base - float(loss.detach())) > 1e-12 * max(1.0, abs(base)):
            return GradCheckReport([], [], [], [], math.inf, step, tol, False, "reference mismatch: " + message)
    else:
        ref = [p.detach().clone() if reference_dtype is None else p.detach().to(reference_dtype) for p in params]
        evaluate, h = (lambda *xs: float(loss_fn(*xs))), step
    sizes = [int(np.prod(p.shape)) for p in ref]
    flat = rng.choice(sum(sizes), size=min(n_coords, sum(sizes)), replace=False)
    coords, analytic, numeric, rel = [], [], [], []
    with torch.no_grad():
        for f in flat:
            k, j = 0, int(f)
            while j >= sizes[k]:
                j -= sizes[k]
                k += 1
            view = ref[k].reshape(-1)
            orig = view[j].item() if isinstance(view, torch.Tensor) else view[j]
            view[j] = orig + h
            up = evaluate(*ref)
            view[j] = orig - h
            down = evaluate(*ref)
            view[j] = orig
            if not (math.isfinite(float(up)) and math.isfinite(float(down))):
                return GradCheckReport(coords, analytic, numeric, rel, math.inf, step, tol, False,
                                       f"non-finite loss probing tensor {k} index {j}")
            n = float((up - down) / (2 * h))
            a = float(grads[k].view(-1)[j])
            coords.append((k, j))
            analytic.append(a)
            numeric.append(n)
            rel.append(_rel_error(a, n, floor))
    worst = max(rel) if rel else 0.0
    return GradCheckReport(coords, analytic, numeric, rel, worst, step, tol, worst <= tol, message)


def generator_gradcheck(spec=None, seed=0, size=8, n_coords=20, rng=None, tol=1e-3, step=1e-6):
    """Input-gradient check of a float32 generator against float64 central differences.

    Float32 round-off swamps a float32 finite difference at any usable step,
    so the reference is the same network cast to double.
    """
    spec = spec or GeneratorSpec(base_width=4, n_residual_blocks=1, n_down=1)
    net, _ = build_generator(spec, seed)
    net64 = copy.deepcopy(net).double()
    g = torch.Generator().manual_seed(seed)
    x = torch.randn(1, spec.channels, size, size, generator=g)
    w = torch.randn(1, spec.channels, size, size, generator=g)

    def loss(inp):
        m = net64 if inp.dtype == torch.float64 else net
        return (m(inp) * w.to(inp.dtype)).sum()

    return finite_difference_gradcheck(loss, x, n_coords=n_coords, step=step, rng=rng, tol=tol,
                                       reference_dtype=torch.float64)


# Exact-arithmetic restatements of the loss formulas, written independently of
# the torch code; inputs are numpy object arrays of Fractions.

def _exact_sample_l1(x, y):
    n = x.shape[0]
    diff = np.abs(x - y).reshape(n, -1)
    return diff.sum(axis=1) / diff.shape[1]


def _exact_batch_mean(v):
    return v.sum() / len(v)


def exact_qp(score_real, score_fake, x_real, x_fake, lam=Fraction(10), epsilon=Fraction(1, 10 ** 8)):
    a = score_real - score_fake
    d = np.array([max(v, epsilon) for v in _exact_sample_l1(x_real, x_fake)], dtype=object)
    return _exact_batch_mean(a - a * a / (2 * lam * d))


def exact_mean_l1(x, y):
    return _exact_batch_mean(_exact_sample_l1(x, y))


def exact_generator_total(ssr, ssf, srr, srf, x_r, x_s, fake_s, fake_r, rec_r, rec_s, id_r, id_s,
                          alpha=Fraction(10), beta=Fraction(1, 2)):
    adv = _exact_batch_mean(ssr - ssf) + _exact_batch_mean(srr - srf)
    cyc = exact_mean_l1(rec_r, x_r) + exact_mean_l1(rec_s, x_s)
    ident = exact_mean_l1(id_r, x_r) + exact_mean_l1(id_s, x_s)
    return adv + alpha * cyc + beta * ident


def loss_gradchecks(rng=None, n_coords=50, step=1e-6, tol=1e-6, shape=(2, 3, 4, 4)):
    """Gradchecks of the double-precision loss functions against exact-rational central differences."""
    from . import losses

    rng = np.random.default_rng(0) if rng is None else rng

    def img():
        return torch.from_numpy(rng.uniform(-1, 1, size=shape))

    def vec():
        return torch.from_numpy(rng.normal(size=shape[0]))

    qp = QpConfig(lam=10.0)
    w = losses.LossWeights(10.0, 0.5)

    def qp_loss(sr, sf, xr, xf):
        return divergence.qp_divergence(divergence.ScorePair(sr, sf), xr, xf, qp)

    def gen_loss(ssr, ssf, srr, srf, *imgs):
        step_ = losses.TranslationStep(*imgs)
        total, _ = losses.generator_total(
            step_, divergence.ScorePair(ssr, ssf), divergence.ScorePair(srr, srf), w)
        return total

    cases = {
        "qp_divergence": (qp_loss, exact_qp, [vec(), vec(), img(), img()]),
        "cycle_loss": (losses.cycle_loss, exact_mean_l1, [img(), img()]),
        "identity_loss": (losses.identity_loss, exact_mean_l1, [img(), img()]),
        "generator_total": (gen_loss, exact_generator_total, [vec() for _ in range(4)] + [img() for _ in range(8)]),
    }
    return {name: finite_difference_gradcheck(fn, params, n_coords=n_coords, step=step, rng=rng, tol=tol,
                                              reference_fn=oracle)
            for name, (fn, oracle, params) in cases.items()}


def checkerboard_contrast(seeds=range(10), nn_tol=1e-10):
    """Run the constant-field probe for both upsampling modes over several seeds.

    Passes iff every resize-convolution score is ``<= nn_tol`` and every
    transpose-convolution score is ``> 0``.
    """
    rows = []
    for s in seeds:
        nn_score, _ = checkerboard_probe("nearest_neighbor_conv", seed=s)
        tc_score, _ = checkerboard_probe("transpose_conv", seed=s)
        rows.append({"seed": s, "nearest_neighbor_conv": nn_score, "transpose_conv": tc_score})
    passed = all(r["nearest_neighbor_conv"] <= nn_tol and r["transpose_conv"] > 0 for r in rows)
    return passed, rows


# (score gap, lam, per-sample distance, expected value), each derived by hand
QP_WORKED_EXAMPLES = (
    (1.0, 1.0, 0.5, 0.0),
    (2.0, 10.0, 1.0, 1.8),
    (1.0, 10.0, 1.0, 0.95),
    (-1.0, 10.0, 1.0, -1.05),
    (10.0, 10.0, 1.0, 5.0),
)


def qp_worked_examples(tol=1e-12):
    """Evaluate the batch-level QP divergence on hand-computed cases; returns (passed, rows)."""
    rows = []
    for a, lam, d, expected in QP_WORKED_EXAMPLES:
        x_real = torch.zeros(1, 3, 2, 2, dtype=torch.float64)
        x_fake = torch.full_like(x_real, d)
        scores = divergence.ScorePair(torch.tensor([a], dtype=torch.float64),
                                      torch.zeros(1, dtype=torch.float64))
        got = float(divergence.qp_divergence(scores, x_real, x_fake, QpConfig(lam=lam)))
        rows.append({"a": a, "lam": lam, "d": d, "expected": expected, "got": got,
                     "ok": abs(got - expected) <= tol * max(1.0, abs(expected))})
    return all(r["ok"] for r in rows), rows
