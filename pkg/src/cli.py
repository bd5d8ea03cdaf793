"""Ponto de entrada ``ca3d``: geração de dados, treino, tradução, avaliação, verificação e ablação.

Códigos de saída: 0 sucesso, 1 E/S, 2 uso, 3 falha numérica, 4 verificação.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from pydantic import ValidationError

from . import settings
from .errors import CA3DError, UsageError, VerificationError
from .models.config import RunConfig
from .services.ablation import run_ablation
from .services.checkpoints import load_checkpoint
from .services.dataset import dataset_generate, phantom_spec_for
from .services.diffusion import Direction
from .services.geometry import ProjectionModel
from .services.metrics import write_report
from .services.training import apply_ablation, train
from .services.translation_service import evaluate_split, load_input_image, translate_image, write_translation
from .services.verification import run_geometry_checks

logger = logging.getLogger("ca3d")


def _load_config(path: Optional[str]) -> RunConfig:
    if path is not None and not Path(path).is_file():
        raise CA3DError(f"config file not found: {path}")
    return RunConfig.load(Path(path) if path else None)


def _sampling_options(args: argparse.Namespace) -> Tuple[int, float]:
    """Flags explícitas vencem; senão valem ``sampling_steps`` e ``guidance_scale`` do arquivo."""
    config = _load_config(args.config)
    steps = config.sampling_steps if args.steps is None else args.steps
    guidance = config.guidance_scale if args.guidance is None else args.guidance
    return steps, guidance


def _seeds(raw: str) -> List[int]:
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"--seeds expects comma-separated integers, got {raw!r}") from None


# ---------------------------------------------------------------------- #
#  Comandos                                                              #
# ---------------------------------------------------------------------- #


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    summary = dataset_generate(
        args.out,
        args.count,
        phantom_spec_for(args.size),
        args.seed,
        p_lo=config.p_lo,
        p_hi=config.p_hi,
        export_pgm=args.export_pgm,
    )
    splits = summary.splits
    print(f"{summary.path}\ttrain={splits['train']}\tval={splits['val']}\ttest={splits['test']}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = apply_ablation(_load_config(args.config), no_caca=args.no_caca, no_im3d=args.no_im3d)
    log_path = args.log or f"{args.out}.log.tsv"
    result = train(args.data, config, args.steps, args.out, log_path)
    print(f"loss\t{result.initial_loss:.6f}\t{result.final_loss:.6f}\t{result.checkpoint}")
    return 0


def cmd_translate(args: argparse.Namespace) -> int:
    steps, guidance = _sampling_options(args)
    model, sched, _ = load_checkpoint(args.ckpt)
    image = load_input_image(args.input)
    translated = translate_image(
        model,
        sched,
        image,
        args.direction,
        steps=steps,
        guidance=guidance,
        seed=args.seed,
        volume_source=args.volume_source,
    )
    pgm_path, container_path = write_translation(args.out, translated)
    print(f"{pgm_path}\t{container_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    if args.ground_truth:
        mode = "ground-truth"
    elif args.copy_reference:
        mode = "copy-reference"
    else:
        mode = "model"
    steps, guidance = _sampling_options(args)
    model = sched = None
    if mode == "model":
        if not args.ckpt:
            raise UsageError("eval: --ckpt is required unless --ground-truth or --copy-reference is given")
        model, sched, _ = load_checkpoint(args.ckpt)
    reports = evaluate_split(
        args.data,
        args.split,
        model=model,
        sched=sched,
        steps=steps,
        guidance=guidance,
        seed=args.seed,
        mode=mode,
        volume_source=args.volume_source,
    )
    write_report(args.out, reports)
    for report in reports:
        print(f"{report.direction}\tpsnr={report.psnr_mean:.4f}\tssim={report.ssim_mean:.4f}")
    return 0


def cmd_verify_geometry(args: argparse.Namespace) -> int:
    model = ProjectionModel(theta=ProjectionModel().theta + args.perturb_theta)
    checks = run_geometry_checks(seed=args.seed, model=model)
    for check in checks:
        print(check.render())
    failed = [check.name for check in checks if not check.passed]
    if failed:
        raise VerificationError(f"{len(failed)} geometry check(s) failed: {', '.join(failed)}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    summary = run_ablation(
        args.data,
        _load_config(args.config),
        args.steps,
        _seeds(args.seeds),
        args.out,
        sampling_steps=args.sampling_steps,
    )
    sys.stdout.write(summary.render())
    return 0


# ---------------------------------------------------------------------- #
#  Parser                                                                #
# ---------------------------------------------------------------------- #


def _add_sampling_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Arquivo key = value com sampling_steps e guidance_scale padrão")
    parser.add_argument("--steps", type=int, help="Passos de amostragem (padrão: sampling_steps)")
    parser.add_argument("--guidance", type=float, help="Escala de CFG (padrão: guidance_scale)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--volume-source",
        choices=("reference+target", "reference"),
        default="reference+target",
        help="Latentes usadas para montar o volume 3D na amostragem",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ca3d", description="Tradução entre vistas CC e MLO por difusão")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="Gera pares sintéticos CC/MLO")
    gen.add_argument("--out", required=True)
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--size", type=int, default=32)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--config", help="Arquivo key = value (percentis de normalização)")
    gen.add_argument("--export-pgm", action="store_true", help="Exporta cada vista também em PGM")
    gen.set_defaults(handler=cmd_gen_data)

    tr = commands.add_parser("train", help="Treina o denoiser")
    tr.add_argument("--data", required=True)
    tr.add_argument("--config")
    tr.add_argument("--out", required=True)
    tr.add_argument("--steps", type=int, required=True)
    tr.add_argument("--no-caca", action="store_true", help="Desliga o viés de colunas")
    tr.add_argument("--no-im3d", action="store_true", help="Desliga a injeção do volume 3D")
    tr.add_argument("--log", help="Log TSV (padrão: <out>.log.tsv)")
    tr.set_defaults(handler=cmd_train)

    tl = commands.add_parser("translate", help="Traduz uma imagem para a outra vista")
    tl.add_argument("--ckpt", required=True)
    tl.add_argument("--input", required=True)
    tl.add_argument("--direction", choices=[d.label for d in Direction], required=True)
    tl.add_argument("--out", required=True)
    _add_sampling_flags(tl)
    tl.set_defaults(handler=cmd_translate)

    ev = commands.add_parser("eval", help="Avalia PSNR/SSIM nos dois sentidos")
    ev.add_argument("--ckpt")
    ev.add_argument("--data", required=True)
    ev.add_argument("--split", choices=("train", "val", "test"), default="test")
    ev.add_argument("--out", required=True)
    diagnostics = ev.add_mutually_exclusive_group()
    diagnostics.add_argument("--ground-truth", action="store_true", help="Compara o alvo consigo mesmo")
    diagnostics.add_argument("--copy-reference", action="store_true", help="Linha de base: copia a referência")
    _add_sampling_flags(ev)
    ev.set_defaults(handler=cmd_eval)

    vg = commands.add_parser("verify-geometry", help="Roda os oráculos de geometria")
    vg.add_argument("--seed", type=int, default=0)
    vg.add_argument("--perturb-theta", type=float, default=0.0, help=argparse.SUPPRESS)
    vg.set_defaults(handler=cmd_verify_geometry)

    ab = commands.add_parser("ablate", help="Treina e avalia as quatro variantes de ablação")
    ab.add_argument("--data", required=True)
    ab.add_argument("--config")
    ab.add_argument("--steps", type=int, required=True)
    ab.add_argument("--seeds", default="0,1,2")
    ab.add_argument("--out", required=True)
    ab.add_argument("--sampling-steps", type=int)
    ab.set_defaults(handler=cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=settings.CA3D_LOG_LEVEL,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args = build_parser().parse_args(argv)
        return args.handler(args)
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else UsageError.exit_code
    except ValidationError as exc:
        logger.error("❌ %s", exc)
        return UsageError.exit_code
    except CA3DError as exc:
        logger.error("❌ %s", exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("❌ I/O error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
