import argparse
import sys
from pathlib import Path
from typing import List, Tuple

from cpolab import runs
from cpolab.config import MODELS, RESOLVED_NAME, RunConfig
from cpolab.console import console
from cpolab.errors import CpolabError, QuadratureError, ValidationError


def _print_help_and_exit(parser):
    parser.print_help(sys.stdout)
    sys.exit(0)


def _consume_global_flags(argv: List[str]) -> Tuple[str | None, List[str]]:
    """
    Extract the global --theme <name> flag from argv no matter where it is
    placed, and return (theme, remaining_argv).
    """
    theme = None
    out: List[str] = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a == "--theme" and i + 1 < len(argv):
            theme = argv[i + 1]
            i += 2
            continue
        out.append(a)
        i += 1
    return theme, out


def _add_run_flags(p: argparse.ArgumentParser, *, model: bool = False) -> None:
    p.add_argument("--config", default=None, help="Run configuration file (default: built-in defaults)")
    p.add_argument("--out", default=None, help="Output directory (overrides [run] out_dir)")
    p.add_argument("--workers", type=int, default=None, help="Worker threads (overrides [run] workers)")
    p.add_argument("--reproducible", action="store_true", help="Leave timestamps out of every output file")
    if model:
        p.add_argument("--model", choices=MODELS, default=None, help="Spectrum model (overrides [run] model)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpolab",
        description="cpolab – CPO and EIT spectra and memories in a three-level Λ vapor",
    )
    parser.add_argument("--theme", choices=["current", "neon", "retro"], help="Choose console output theme")

    subparsers = parser.add_subparsers(dest="command")

    spectrum_p = subparsers.add_parser("spectrum", help="Probe transmission spectra (one file per gradient)")
    _add_run_flags(spectrum_p, model=True)

    memory_p = subparsers.add_parser("memory", help="Write/store/read runs: decay curves and retrieved pulses")
    _add_run_flags(memory_p)

    sweep_p = subparsers.add_parser("sweep", help="CPO and EIT linewidths against magnetic field gradient")
    _add_run_flags(sweep_p)

    fit_p = subparsers.add_parser("fit", help="Fit the first two columns of a text file")
    fit_p.add_argument("input", help="Two-column input file (comma or whitespace separated)")
    fit_p.add_argument("--model", choices=runs.FIT_MODELS, default="lorentzian", help="Fit model")
    fit_p.add_argument("--out", default=".", help="Directory for the fit report (default: .)")
    fit_p.add_argument("--reproducible", action="store_true", help="Leave the timestamp out of the report")

    return parser


def _load_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig.defaults()
    overrides = {"out_dir": args.out, "workers": args.workers}
    if getattr(args, "model", None) is not None:
        overrides["model"] = args.model
    return config.with_run(**overrides)


def _dispatch(args) -> int:
    if args.command == "fit":
        runs.run_fit(Path(args.input), args.model, Path(args.out), reproducible=bool(args.reproducible))
        return 0

    config = _load_config(args)
    ctx = runs.RunContext.prepare(config, reproducible=bool(args.reproducible))
    console.info(f"config hash {config.digest[:12]}, output in {ctx.out_dir}")
    if args.command == "spectrum":
        runs.run_spectrum(ctx)
    elif args.command == "memory":
        runs.run_memory(ctx)
    elif args.command == "sweep":
        runs.run_sweep(ctx)
    return 0


def run_from_args(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)

    theme, argv = _consume_global_flags(argv)
    if theme:
        console.set_theme(theme)

    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        _print_help_and_exit(parser)

    try:
        return _dispatch(args)
    except ValidationError as e:
        for d in e.diagnostics:
            console.error(str(d))
        if "unknown_key" in e.codes:
            console.tip(f"every accepted key is listed in the {RESOLVED_NAME} written by any run")
        return e.exit_code
    except QuadratureError as e:
        console.error(str(e))
        console.tip("raise [quadrature] velocity_nodes")
        return e.exit_code
    except CpolabError as e:
        console.error(str(e))
        return e.exit_code


def main():
    sys.exit(run_from_args())
