"""
candi-lab command-line interface

Subcommands: validate-formulas, corrupt-demo, train, sample, frontier,
compare, guide-demo, dissonance-demo. Primary outputs go to ``--out`` or
stdout, logs and errors to stderr. Exit codes: 0 success, 1 runtime error
(JSON error document on stderr), 2 usage error.
"""

import argparse
import json
import logging
import math
import sys
import time
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ValidationError

from ..services.classifiers import Classifier, class_indicator, classifier_from_dict
from ..services.denoisers import Denoiser, ExactBayesDenoiser, TinyDenoiser, corner_distribution, two_class_distribution
from ..services.samplers import generate, sequence_list
from ..services.training import train_with_history
from ..utils.file_formats import (
    load_checkpoint,
    load_distribution,
    read_frontier_csv,
    read_json_document,
    save_checkpoint,
    write_json_lines,
    write_table,
)
from ..utils.manifest import RunManifest
from .app import Settings, configure_logging, load_settings
from .config import RunConfig, describe_validation_error, load_config
from .corruption_analytics import validate_formulas_grid
from .errors import CandiLabError, ConfigError
from .eval_frontier import dominates, rank_at_temperature, sweep, tv_distance
from .hybrid_kernel import corruption_demo_records
from .models import KernelConfig, SampleSet, SamplerConfig, SamplerMode

logger = logging.getLogger(__name__)

MODES = [m.value for m in SamplerMode]


class UsageError(CandiLabError):
    """Arguments parse but do not make a valid invocation"""

    code = "usage_error"


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _ints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def _seed(text: str) -> int:
    value = int(text)
    if value < 0 or value >= 2**64:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _run_config(args) -> RunConfig:
    return load_config(args.config) if getattr(args, "config", None) else RunConfig.defaults()


def _pick(flag, configured):
    """Explicit flags win over the config file."""
    return configured if flag is None else flag


def _override(section: BaseModel, **flags) -> BaseModel:
    """Re-validate a config section with explicit flag values on top."""
    values = {**section.model_dump(), **{k: v for k, v in flags.items() if v is not None}}
    try:
        return type(section).model_validate(values)
    except ValidationError as e:
        raise UsageError(describe_validation_error(e))


# --- subcommand handlers ----------------------------------------------------------


def cmd_validate_formulas(args, settings: Settings) -> RunManifest:
    frame = validate_formulas_grid(args.vocab_list, args.sigma_min, args.sigma_max, args.grid_points,
                                   args.samples, args.seed, settings.threads)
    write_table(frame, args.out)
    return RunManifest(command="validate-formulas", seed=args.seed, config={
        "vocab_list": args.vocab_list, "sigma_min": args.sigma_min, "sigma_max": args.sigma_max,
        "grid_points": args.grid_points, "samples": args.samples,
    })


def cmd_corrupt_demo(args, settings: Settings) -> RunManifest:
    config = _run_config(args)
    section = _override(config.kernel, vocab=args.vocab, seq_len=args.seq_len,
                        rank_min=args.rank_min, rank_max=args.rank_max)
    # shape used when neither flags nor the config set one
    kernel_cfg = section.to_kernel_config(vocab=8, seq_len=16)
    records = corruption_demo_records(kernel_cfg, args.times, args.draws, args.seed, vocab=kernel_cfg.vocab)
    write_json_lines(records, args.out)
    return RunManifest(command="corrupt-demo", seed=args.seed,
                       config={"kernel": kernel_cfg.to_dict(), "times": args.times, "draws": args.draws})


def cmd_train(args, settings: Settings) -> RunManifest:
    config = _run_config(args)
    section = _override(config.train, steps=args.steps, learning_rate=args.lr, batch_size=args.batch_size,
                        seed=args.seed, lam=args.lam)
    out = _pick(args.out, config.paths.out)
    if out is None:
        raise UsageError("train needs --out (or paths.out in the config) for the checkpoint")

    dist = load_distribution(_pick(args.distribution, config.paths.distribution))
    kernel_cfg = config.kernel.to_kernel_config(dist.vocab, dist.seq_len)
    params, history = train_with_history(dist, section.to_train_config(), kernel_cfg)
    save_checkpoint(params, out)

    manifest = RunManifest(command="train", seed=section.seed,
                           config={"kernel": kernel_cfg.to_dict(), "train": section.model_dump()})
    manifest.add_artifact(out)
    logger.info(f"Held-out loss {history.initial_eval_loss:.4f} -> {history.final_eval_loss:.4f}")
    return manifest


def _sampler_setup(args, config: RunConfig):
    dist = load_distribution(_pick(args.distribution, config.paths.distribution))
    kernel_cfg = config.kernel.to_kernel_config(dist.vocab, dist.seq_len)
    section = _override(config.sampler, mode=args.mode, nfe=args.nfe, seed=args.seed, num_samples=args.num_samples,
                        temperature=getattr(args, "temperature", None),
                        guidance_weight=getattr(args, "guidance_weight", None))
    checkpoint = _pick(args.checkpoint, config.paths.checkpoint)
    denoiser = _denoiser(dist, kernel_cfg, checkpoint)
    return dist, kernel_cfg, section, denoiser


def _denoiser(dist, kernel_cfg: KernelConfig, checkpoint: Optional[str]) -> Denoiser:
    if checkpoint is None:
        return ExactBayesDenoiser(dist, kernel_cfg, strict=False)
    return TinyDenoiser(load_checkpoint(checkpoint), kernel_cfg)


def _classifier(path: Optional[str]) -> Optional[Classifier]:
    if path is None:
        return None
    try:
        return classifier_from_dict(read_json_document(path))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"{path}: invalid classifier document: {e}")


def cmd_sample(args, settings: Settings) -> RunManifest:
    config = _run_config(args)
    dist, kernel_cfg, section, denoiser = _sampler_setup(args, config)
    sampler_cfg = section.to_sampler_config(kernel_cfg)
    classifier = _classifier(_pick(args.classifier, config.paths.classifier))
    if sampler_cfg.guidance_weight != 0.0 and classifier is None:
        raise UsageError("--guidance-weight needs --classifier")

    tokens = generate(denoiser, sampler_cfg, section.num_samples, classifier, settings.threads)
    out = _pick(args.out, config.paths.out)
    write_json_lines(({"tokens": seq, "mode": sampler_cfg.mode.value, "nfe": sampler_cfg.nfe,
                       "temperature": sampler_cfg.temperature, "seed": sampler_cfg.seed}
                      for seq in sequence_list(tokens)), out)

    manifest = RunManifest(command="sample", seed=sampler_cfg.seed,
                           config={**sampler_cfg.to_dict(), "num_samples": section.num_samples})
    if out is not None:
        manifest.add_artifact(out)
    return manifest


def cmd_frontier(args, settings: Settings) -> RunManifest:
    config = _run_config(args)
    dist, kernel_cfg, section, denoiser = _sampler_setup(args, config)
    base_cfg = section.to_sampler_config(kernel_cfg)

    def sampler(cfg: SamplerConfig, n: int) -> np.ndarray:
        return generate(denoiser, cfg, n)

    frontier = sweep(sampler, base_cfg, args.temps, section.num_samples, dist, section.seed, settings.threads)
    out = _pick(args.out, config.paths.out)
    write_table(frontier.to_frame(), out)

    manifest = RunManifest(command="frontier", seed=section.seed,
                           config={**base_cfg.to_dict(), "temps": args.temps, "num_samples": section.num_samples})
    if out is not None:
        manifest.add_artifact(out)
    return manifest


def cmd_compare(args, settings: Settings) -> RunManifest:
    a, b = read_frontier_csv(args.a), read_frontier_csv(args.b)
    verdict = dominates(a, b)
    sys.stdout.write(f"dominates: {verdict.value}\n")
    shared = sorted({p.temperature for p in a.points} & {p.temperature for p in b.points})
    for tau in shared:
        logger.info(f"At temperature {tau}: lower coherence {rank_at_temperature(a, b, tau).value}")
    return RunManifest(command="compare", config={"a": args.a, "b": args.b, "verdict": verdict.value})


def cmd_guide_demo(args, settings: Settings) -> RunManifest:
    dist = two_class_distribution()
    kernel_cfg = KernelConfig(vocab=dist.vocab, seq_len=dist.seq_len)
    denoiser = ExactBayesDenoiser(dist, kernel_cfg, strict=False)
    classifier = class_indicator(dist.seq_len, dist.vocab, position=0, tokens=(0, 1))

    records = []
    for w in args.weights:
        cfg = SamplerConfig(kernel_cfg=kernel_cfg, nfe=args.nfe, guidance_weight=w,
                            mode=SamplerMode(args.mode), seed=args.seed)
        tokens = generate(denoiser, cfg, args.num_samples, classifier, settings.threads)
        hits = np.isin(tokens[:, 0], (0, 1))
        fraction = float(hits.mean())
        records.append({"weight": w, "target_fraction": fraction,
                        "std_err": math.sqrt(fraction * (1.0 - fraction) / len(hits))})
        logger.info(f"Guidance weight {w}: target fraction {fraction:.4f}")
    write_json_lines(records, args.out)

    manifest = RunManifest(command="guide-demo", seed=args.seed, config={
        "weights": args.weights, "nfe": args.nfe, "num_samples": args.num_samples, "mode": args.mode})
    if args.out is not None:
        manifest.add_artifact(args.out)
    return manifest


def cmd_dissonance_demo(args, settings: Settings) -> RunManifest:
    records = []
    for vocab in args.vocabs:
        dist = corner_distribution(vocab)
        kernel_cfg = KernelConfig(vocab=vocab, seq_len=dist.seq_len)
        denoiser = ExactBayesDenoiser(dist, kernel_cfg, strict=False)
        for mode in (SamplerMode.GAUSSIAN_ODE, SamplerMode.HYBRID_EXACT):
            cfg = SamplerConfig(kernel_cfg=kernel_cfg, nfe=args.nfe, mode=mode, seed=args.seed)
            tokens = generate(denoiser, cfg, args.num_samples, threads=settings.threads)
            tv = tv_distance(SampleSet(tokens, cfg), dist)
            records.append({"vocab": vocab, "mode": mode.value, "nfe": args.nfe, "tv": tv})
            logger.info(f"v={vocab} {mode.value}: TV {tv:.4f}")
    write_json_lines(records, args.out)

    manifest = RunManifest(command="dissonance-demo", seed=args.seed, config={
        "vocabs": args.vocabs, "nfe": args.nfe, "num_samples": args.num_samples})
    if args.out is not None:
        manifest.add_artifact(args.out)
    return manifest


# --- parser -----------------------------------------------------------------------------


def _sampling_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run config JSON")
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--nfe", type=_positive_int)
    parser.add_argument("--num-samples", type=_positive_int)
    parser.add_argument("--seed", type=_seed)
    parser.add_argument("--distribution", help="distribution JSON path or builtin:<name>")
    parser.add_argument("--checkpoint", help="trained denoiser checkpoint; exact oracle when omitted")
    parser.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="candi-lab", description="Hybrid continuous-discrete diffusion lab")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG")
    parser.add_argument("--manifest", help="write the run manifest JSON here")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-formulas", help="analytic vs Monte Carlo corruption rates")
    p.add_argument("--vocab-list", type=_ints, default=[5, 50, 500])
    p.add_argument("--sigma-min", type=float, default=math.sqrt(0.1))
    p.add_argument("--sigma-max", type=float, default=math.sqrt(10.0))
    p.add_argument("--grid-points", type=_positive_int, default=8)
    p.add_argument("--samples", type=_positive_int, default=5000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_validate_formulas)

    p = sub.add_parser("corrupt-demo", help="empirical statistics of the forward kernel")
    p.add_argument("--config")
    p.add_argument("--vocab", type=int)
    p.add_argument("--seq-len", type=int)
    p.add_argument("--rank-min", type=float)
    p.add_argument("--rank-max", type=float)
    p.add_argument("--times", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--draws", type=_positive_int, default=1000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_corrupt_demo)

    p = sub.add_parser("train", help="train the tiny denoiser")
    p.add_argument("--config")
    p.add_argument("--distribution")
    p.add_argument("--steps", type=_positive_int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--lam", type=float)
    p.add_argument("--out", help="checkpoint path")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("sample", help="generate sequences")
    _sampling_flags(p)
    p.add_argument("--temperature", type=float)
    p.add_argument("--guidance-weight", type=float)
    p.add_argument("--classifier", help="classifier JSON {kind, weights, bias}")
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("frontier", help="temperature sweep to a frontier CSV")
    _sampling_flags(p)
    p.add_argument("--temps", type=_floats, default=[0.25, 0.5, 1.0])
    p.set_defaults(handler=cmd_frontier)

    p = sub.add_parser("compare", help="frontier dominance")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("guide-demo", help="target-class fraction against guidance weight")
    p.add_argument("--weights", type=_floats, default=[0.0, 1.0, 2.0, 4.0])
    p.add_argument("--mode", choices=[SamplerMode.HYBRID_EXACT.value, SamplerMode.HYBRID_APPROX.value,
                                      SamplerMode.GAUSSIAN_ODE.value], default=SamplerMode.HYBRID_EXACT.value)
    p.add_argument("--nfe", type=_positive_int, default=16)
    p.add_argument("--num-samples", type=_positive_int, default=10000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_guide_demo)

    p = sub.add_parser("dissonance-demo", help="Gaussian ODE vs hybrid sampling across vocabulary sizes")
    p.add_argument("--vocabs", type=_ints, default=[4, 512])
    p.add_argument("--nfe", type=_positive_int, default=64)
    p.add_argument("--num-samples", type=_positive_int, default=10000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_dissonance_demo)

    return parser


def _report(document: dict) -> None:
    sys.stderr.write(json.dumps(document) + "\n")


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        settings = load_settings()
    except ConfigError as e:
        _report(e.to_dict())
        return 1
    configure_logging("DEBUG" if args.verbose else settings.log_level)

    started = time.perf_counter()
    try:
        manifest = args.handler(args, settings)
    except UsageError as e:
        sys.stderr.write(f"{parser.prog} {args.command}: error: {e}\n")
        return 2
    except CandiLabError as e:
        logger.debug("Command failed", exc_info=True)
        _report(e.to_dict())
        return 1
    except OSError as e:
        _report({"success": False, "error": "io_error", "message": str(e)})
        return 1

    manifest.duration_s = round(time.perf_counter() - started, 6)
    try:
        manifest.emit(args.manifest)
    except OSError as e:
        _report({"success": False, "error": "io_error", "message": str(e)})
        return 1
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))
