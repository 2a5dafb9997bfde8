"""Command-line entry points: train, stylize, reconstruct, check.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import torch

from . import data, diagnostics
from .divergence import NonFiniteError
from .losses import IDENTITY_MODES
from .models import CriticSpec, GeneratorSpec
from .trainer import CheckpointError, TrainConfig, default_iterations, fit, load_checkpoint

log = logging.getLogger("cyclegan_qp")

DATA_ROOT_ENV = "CYCLEGAN_QP_DATA_ROOT"
EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
_DEFAULTS = TrainConfig()


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="cyclegan-qp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train both generators and critics")
    t.add_argument("--style", choices=data.STYLES, default=_DEFAULTS.style)
    t.add_argument("--data-root", default=os.environ.get(DATA_ROOT_ENV, _DEFAULTS.data_root),
                   help=f"dataset root holding <style>/trainA and <style>/trainB (env {DATA_ROOT_ENV})")
    t.add_argument("--out-dir", default=None, help="default: runs/<style>")
    t.add_argument("--iterations", type=int, default=None,
                   help=f"default {default_iterations('vangogh')} ({default_iterations('ukiyoe')} for ukiyoe)")
    t.add_argument("--batch-size", type=int, default=_DEFAULTS.batch_size)
    t.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    t.add_argument("--resume", action=argparse.BooleanOptionalAction, default=True)
    t.add_argument("--lambda", dest="lam", type=float, default=_DEFAULTS.lam)
    t.add_argument("--alpha", type=float, default=_DEFAULTS.alpha)
    t.add_argument("--beta", type=float, default=_DEFAULTS.beta)
    t.add_argument("--lr", type=float, default=_DEFAULTS.learning_rate)
    t.add_argument("--adam-beta1", type=float, default=_DEFAULTS.adam_beta1)
    t.add_argument("--adam-beta2", type=float, default=_DEFAULTS.adam_beta2)
    t.add_argument("--critic-steps", type=int, default=_DEFAULTS.critic_steps_per_gen_step)
    t.add_argument("--checkpoint-every", type=int, default=_DEFAULTS.checkpoint_every)
    t.add_argument("--crop-size", type=int, default=_DEFAULTS.crop_size)
    t.add_argument("--identity-mode", choices=IDENTITY_MODES, default=_DEFAULTS.identity_mode)
    t.add_argument("--base-width", type=int, default=_DEFAULTS.generator.base_width)
    t.add_argument("--residual-blocks", type=int, default=_DEFAULTS.generator.n_residual_blocks)
    t.add_argument("--upsample-mode", choices=("nearest_neighbor_conv", "transpose_conv"),
                   default=_DEFAULTS.generator.upsample_mode)
    t.add_argument("--critic-width", type=int, default=_DEFAULTS.critic.base_width)
    t.add_argument("--critic-layers", type=int, default=_DEFAULTS.critic.n_layers)
    t.add_argument("--device", default=_DEFAULTS.device)
    t.add_argument("--quiet", action="store_true", help="do not print per-iteration losses")

    size_help = ("square output size; the short side is resized to SIZE then centre-cropped. "
                 "Must be divisible by 2**n_down of the checkpoint's generator (4 by default)")
    for name, helptext in (("stylize", "translate one image"),
                           ("reconstruct", "translate one image and back again")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--checkpoint", required=True)
        s.add_argument("--input", required=True)
        s.add_argument("--output", required=True, help="output image (format from suffix, PNG recommended)")
        s.add_argument("--direction", choices=("rs", "sr"), default="rs",
                       help="rs: photo -> painting, sr: painting -> photo")
        s.add_argument("--size", type=int, default=1024, help=size_help)
        if name == "reconstruct":
            s.add_argument("--intermediate", default=None,
                           help="where to write the one-way translation (default <output stem>_translated)")

    c = sub.add_parser("check", help="run the numerical self-checks")
    c.add_argument("--report", default=None, help="also write the JSON report to this file")
    return p


def train_config_from_args(args):
    out_dir = args.out_dir or str(Path("runs") / args.style)
    return TrainConfig(
        lam=args.lam, alpha=args.alpha, beta=args.beta, learning_rate=args.lr,
        adam_beta1=args.adam_beta1, adam_beta2=args.adam_beta2, batch_size=args.batch_size,
        total_iterations=args.iterations, checkpoint_every=args.checkpoint_every, seed=args.seed,
        style=args.style, data_root=args.data_root, out_dir=out_dir,
        critic_steps_per_gen_step=args.critic_steps, crop_size=args.crop_size,
        identity_mode=args.identity_mode,
        generator=GeneratorSpec(base_width=args.base_width, n_residual_blocks=args.residual_blocks,
                                upsample_mode=args.upsample_mode),
        critic=CriticSpec(base_width=args.critic_width, n_layers=args.critic_layers),
        device=args.device,
    )


def _format_report(r):
    fields = " ".join(f"{k}={v:.4f}" for k, v in r.losses().items())
    return f"[{r.iteration:6d}] {fields} t={r.wall_time:.2f}s"


def cmd_train(args):
    try:
        cfg = train_config_from_args(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    base = Path(cfg.data_root) / cfg.style
    for sub in ("trainA", "trainB"):
        if not (base / sub).is_dir():
            raise UsageError(f"missing data directory: {base / sub}")
    ds = data.UnpairedDataset.from_root(cfg.data_root, cfg.style, crop_size=cfg.crop_size,
                                        flip_probability=cfg.flip_probability)
    callback = None if args.quiet else (lambda state, r: print(_format_report(r), flush=True))
    state = fit(cfg, ds, resume=args.resume, callback=callback)
    print(f"finished at iteration {state.iteration}; checkpoint in {cfg.out_dir}")
    return EXIT_OK


def _load_generators(args):
    if not Path(args.checkpoint).is_file():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    if not Path(args.input).is_file():
        raise UsageError(f"input image not found: {args.input}")
    state = load_checkpoint(args.checkpoint)
    m = state.cfg.generator.size_multiple
    if args.size < m or args.size % m:
        raise UsageError(f"--size must be a positive multiple of {m} for this checkpoint, got {args.size}")
    fwd, back = (state.g_rs, state.g_sr) if args.direction == "rs" else (state.g_sr, state.g_rs)
    return fwd.eval(), back.eval(), state.cfg.device


def cmd_stylize(args):
    fwd, _, dev = _load_generators(args)
    x = data.load_for_inference(args.input, args.size).to(dev)
    with torch.no_grad():
        y = fwd(x)
    data.save_image(y, args.output)
    print(f"wrote {args.output} ({args.size}x{args.size})")
    return EXIT_OK


def cmd_reconstruct(args):
    fwd, back, dev = _load_generators(args)
    out = Path(args.output)
    mid = Path(args.intermediate) if args.intermediate else out.with_name(f"{out.stem}_translated{out.suffix}")
    x = data.load_for_inference(args.input, args.size).to(dev)
    with torch.no_grad():
        y = fwd(x)
        z = back(y)
    err = float((z - x).abs().mean())
    data.save_image(y, mid)
    data.save_image(z, out)
    print(f"wrote {mid} and {out}")
    print(f"reconstruction mean-L1: {err:.6f}")
    return EXIT_OK


def run_checks():
    """All self-checks as one JSON-serialisable dict with a top-level ``passed`` flag."""
    t0 = time.perf_counter()
    qp = diagnostics.check_qp_analytics(trials=50, rng=np.random.default_rng(0))
    worked_ok, worked = diagnostics.qp_worked_examples()
    cb_ok, cb_rows = diagnostics.checkerboard_contrast(range(10))
    grads = diagnostics.loss_gradchecks(np.random.default_rng(1))
    gen = diagnostics.generator_gradcheck(rng=np.random.default_rng(2))
    results = {
        "qp_analytics": {"passed": qp.passed, "max_value_error": qp.max_value_error,
                         "failures": qp.failures[:5]},
        "qp_worked_examples": {"passed": worked_ok, "rows": worked},
        "checkerboard": {"passed": cb_ok, "rows": cb_rows},
        **{f"gradcheck_{k}": json.loads(v.to_json()) for k, v in grads.items()},
        "gradcheck_generator_float32": json.loads(gen.to_json()),
    }
    results["passed"] = all(v["passed"] for v in results.values())
    results["seconds"] = time.perf_counter() - t0
    return results


def cmd_check(args):
    results = run_checks()
    for name, r in results.items():
        if isinstance(r, dict):
            status = "PASS" if r["passed"] else "FAIL"
            detail = {k: v for k, v in r.items() if k not in ("passed", "rows", "failures") and v != ""}
            print(f"{status} {name} {json.dumps(detail)}")
    print(f"{'PASS' if results['passed'] else 'FAIL'} all ({results['seconds']:.1f}s)")
    if args.report:
        Path(args.report).write_text(json.dumps(results, indent=2))
    return EXIT_OK if results["passed"] else EXIT_RUNTIME


COMMANDS = {"train": cmd_train, "stylize": cmd_stylize, "reconstruct": cmd_reconstruct, "check": cmd_check}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteError as exc:
        print(f"error: training aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (CheckpointError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
