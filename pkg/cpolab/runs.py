"""
Batch drivers behind the CLI subcommands. Each writes its files into the
output directory next to the resolved configuration and returns the paths
it wrote.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .analysis import fit_exponential, fit_lorentzian, linear_fit
from .config import RunConfig
from .console import console
from .errors import ConfigIOError, Diagnostic, ValidationError
from .floquet import linewidth_vs_gradient, transmission_spectrum
from .memory import StorageExperiment, decay_curve, eit_dephasing_kernel
from .params import MHZ, DecayCurve, SpectrumTrace, validate
from .pool import Progress
from .rate_eq import rate_spectrum
from .textio import format_header_value, read_table, write_table, write_text

FIT_MODELS = ("lorentzian", "exponential", "linear")
US = 1e-6


@dataclass(frozen=True)
class RunContext:
    config: RunConfig
    out_dir: Path
    reproducible: bool = False

    @classmethod
    def prepare(cls, config: RunConfig, reproducible: bool = False) -> "RunContext":
        out = config.out_dir
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigIOError(out, e.strerror or str(e)) from e
        config.write_resolved(out)
        return cls(config, out, reproducible)

    def header(self, **extra: object) -> Dict[str, object]:
        head: Dict[str, object] = {"program": f"cpolab {__version__}", "config_hash": self.config.digest}
        head.update(extra)
        return head

    @property
    def comments(self) -> List[str]:
        if self.reproducible:
            return []
        return [f"created {datetime.now(timezone.utc).strftime('%Y-%m-%dT%H:%M:%SZ')}"]

    def progress(self, prefix: str) -> Optional[Progress]:
        return lambda done, total: console.progress(done, total, prefix)


def _tag(value: float) -> str:
    return f"{value:g}".replace("-", "m").replace(".", "p")


def _validated(config: RunConfig, polarization=None):
    checked = validate(config.params, config.drive(polarization))
    for w in checked.warnings:
        console.warn(str(w))
    return checked


def _write_trace(ctx: RunContext, path: Path, trace: SpectrumTrace) -> Path:
    head = ctx.header(model=trace.model)
    if trace.model == "floquet":
        # velocity_nodes is the configured key; velocity_groups counts tail nodes too
        head.update(velocity_nodes=ctx.config.values["quadrature"]["velocity_nodes"],
                    velocity_groups=trace.velocity_nodes, z_nodes=trace.z_nodes)
    head.update(trace.metadata)
    data = np.column_stack([trace.deltas_MHz, trace.transmission])
    return write_table(path, ("delta_MHz", "transmission"), data, head, ctx.comments)


def run_spectrum(ctx: RunContext) -> List[Path]:
    """One transmission trace per configured gradient (rate model: a single trace)."""
    config = ctx.config
    checked = _validated(config)
    pol = checked.drive.polarization.value
    if config.model == "rate":
        console.info(f"rate-equation spectrum, {config.deltas.size} detunings")
        trace = rate_spectrum(config.params, checked.drive, config.deltas)
        path = _write_trace(ctx, ctx.out_dir / f"spectrum_rate_{pol}.csv", trace)
        console.success(f"wrote {path}")
        return [path]

    written = []
    for g in config.gradients:
        console.section(f"floquet spectrum, {pol}, {g:g} mG/cm", timestamp=not ctx.reproducible)
        trace = transmission_spectrum(config.params, checked.drive, config.environment(g), config.deltas,
                                      config.spectrum_options, workers=config.workers,
                                      check_convergence=config.check_convergence, progress=ctx.progress("spectrum"))
        written.append(_write_trace(ctx, ctx.out_dir / f"spectrum_floquet_{pol}_g{_tag(g)}.csv", trace))
        console.success(f"wrote {written[-1]}")
    return written


def _write_decay(ctx: RunContext, path: Path, curve: DecayCurve, gradient: float) -> Path:
    head = ctx.header(memory=curve.memory, db_dz_mG_cm=gradient,
                      tau_us=None if curve.tau is None else curve.tau / US)
    data = np.column_stack([curve.storage_times / US, curve.amplitudes])
    return write_table(path, ("t_s_us", "amplitude"), data, head, ctx.comments)


def run_memory(ctx: RunContext) -> List[Path]:
    """
    Decay curve per memory and gradient, full retrieved pulses at the
    requested storage times, and the EIT dephasing-kernel envelope.
    """
    config = ctx.config
    _validated(config)
    params, seq = config.params, config.sequence
    written: List[Path] = []
    for g in config.gradients:
        env = config.environment(g)
        for memory in config.memories:
            console.section(f"{memory.value} memory, {g:g} mG/cm", timestamp=not ctx.reproducible)
            experiment = StorageExperiment(params, config.drive(), env, seq, memory, config.memory_options)
            curve = decay_curve(params, config.drive(), env, config.storage_times, memory, seq,
                                config.memory_options, workers=config.workers,
                                progress=ctx.progress(memory.value), experiment=experiment)
            if curve.tau is None:
                console.warn(f"{memory.value}: exponential fit did not converge")
            else:
                console.info(f"{memory.value}: tau = {curve.tau / US:.3f} us")
            written.append(_write_decay(ctx, ctx.out_dir / f"decay_{memory.value}_g{_tag(g)}.csv", curve, g))

            for t_s in config.pulse_storage_times:
                pulse = experiment.retrieve(float(t_s))
                head = ctx.header(memory=memory.value, db_dz_mG_cm=g, storage_us=t_s / US,
                                  readout_us=seq.readout_window / US, peak_amplitude=pulse.peak_amplitude)
                name = f"pulse_{memory.value}_g{_tag(g)}_ts{_tag(t_s / US)}.csv"
                written.append(write_table(ctx.out_dir / name, ("t_us", "signal"),
                                           np.column_stack([pulse.times / US, pulse.signal]), head, ctx.comments))

        t = config.storage_times
        kernel = np.abs(eit_dephasing_kernel(env, t)) * np.exp(-params.gamma_t * t)
        written.append(write_table(ctx.out_dir / f"kernel_g{_tag(g)}.csv", ("t_s_us", "envelope"),
                                   np.column_stack([t / US, kernel]), ctx.header(db_dz_mG_cm=g), ctx.comments))
    console.success(f"wrote {len(written)} files to {ctx.out_dir}")
    return written


def run_sweep(ctx: RunContext) -> List[Path]:
    """CPO and EIT linewidths against field gradient, with straight-line fits."""
    config = ctx.config
    checked = _validated(config)
    console.section(f"linewidth sweep over {len(config.sweep_gradients)} gradients", timestamp=not ctx.reproducible)
    sweep = linewidth_vs_gradient(config.params, checked.drive, config.environment(), config.sweep_gradients,
                                  config.deltas, config.spectrum_options, workers=config.workers,
                                  progress=ctx.progress("sweep"))
    written = []
    for row in sweep.rows:
        if not np.isfinite(row.cpo_fwhm):
            console.warn(f"CPO fit failed at {row.gradient_mG_cm:g} mG/cm")
        if not np.isfinite(row.eit_fwhm):
            console.warn(f"EIT fit failed at {row.gradient_mG_cm:g} mG/cm")
        written.append(_write_trace(ctx, ctx.out_dir / f"sweep_trace_g{_tag(row.gradient_mG_cm)}.csv", row.trace))

    head = ctx.header(polarization=checked.drive.polarization.value)
    for name, fit in (("cpo", sweep.cpo_fit), ("eit", sweep.eit_fit)):
        head[f"{name}_slope_MHz_per_mG_cm"] = None if fit is None else fit.slope / MHZ
        head[f"{name}_intercept_MHz"] = None if fit is None else fit.intercept / MHZ
        head[f"{name}_r_squared"] = None if fit is None else fit.r_squared
    data = np.array([[r.gradient_mG_cm, r.cpo_fwhm / MHZ, r.eit_fwhm / MHZ, r.cpo_height,
                      r.eit_homogeneous_fwhm / MHZ, r.two_photon_spread / MHZ] for r in sweep.rows])
    columns = ("gradient_mG_cm", "cpo_fwhm_MHz", "eit_fwhm_MHz", "cpo_height",
               "eit_homogeneous_fwhm_MHz", "two_photon_spread_MHz")
    written.append(write_table(ctx.out_dir / "sweep_linewidths.csv", columns, data, head, ctx.comments))
    if sweep.eit_fit is not None:
        console.info(f"EIT width slope {sweep.eit_fit.slope / MHZ * 1e3:.3f} kHz per mG/cm "
                     f"(r^2 = {sweep.eit_fit.r_squared:.3f})")
    console.success(f"wrote {written[-1]}")
    return written


def run_fit(input_path: Path, model: str, out_dir: Path, *, reproducible: bool = False) -> Path:
    """
    Fit the first two columns of `input_path` and write a `key=value` report
    named after the input. Units are those of the file.
    """
    if model not in FIT_MODELS:
        raise ValidationError(Diagnostic("bad_value", f"fit model must be one of {FIT_MODELS}, got {model!r}"))
    table = read_table(input_path)
    x, y = table.column(0), table.column(1)

    report: Dict[str, object] = {"input": Path(input_path).name, "model": model}
    if model == "lorentzian":
        fit = fit_lorentzian(x, y)
        report.update(center=fit.center, fwhm=fit.fwhm, amplitude=fit.amplitude, offset=fit.offset,
                      residual_norm=fit.residual_norm, converged=fit.converged)
        summary = f"center {fit.center:.6g}, FWHM {fit.fwhm:.6g}"
    elif model == "exponential":
        fit = fit_exponential(DecayCurve(x, y, "input"))
        report.update(amplitude=fit.amplitude, tau=fit.tau, offset=fit.offset,
                      residual_norm=fit.residual_norm, converged=fit.converged)
        summary = f"tau {fit.tau:.6g}"
    else:
        fit = linear_fit(x, y)
        report.update(slope=fit.slope, intercept=fit.intercept, r_squared=fit.r_squared, stderr=fit.stderr,
                      converged=True)
        summary = f"slope {fit.slope:.6g}, intercept {fit.intercept:.6g}, r^2 {fit.r_squared:.4f}"

    if not report["converged"]:
        console.warn(f"{model} fit did not converge; values are the last iterate")
    console.info(f"{model} fit of {report['input']}: {summary}")

    lines = [] if reproducible else [f"# created {datetime.now(timezone.utc).strftime('%Y-%m-%dT%H:%M:%SZ')}"]
    lines += [f"{k}={format_header_value(v)}" for k, v in report.items()]
    path = Path(out_dir) / f"fit_{Path(input_path).stem}_{model}.txt"
    write_text(path, "\n".join(lines) + "\n")
    console.success(f"wrote {path}")
    return path

