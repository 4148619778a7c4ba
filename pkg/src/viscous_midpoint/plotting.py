"""Figures for the command line runner.

Each figure is written twice: as a gnuplot script that reads the CSV sitting
next to it, and as a PNG rendered with matplotlib's Agg backend.
"""
from __future__ import annotations

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write_text  # noqa: E402


def _gnuplot(path: Path, csv_name: str, title: str, xlabel: str, ylabel: str, plot: str,
             logscale: str | None = None) -> None:
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
    ]
    if logscale:
        lines.append(f"set logscale {logscale}")
    lines += [
        "set terminal pngcairo size 900,600",
        f"set output '{path.stem}_gnuplot.png'",
        f"plot {plot.format(csv=csv_name)}",
        "",
    ]
    atomic_write_text(path, "\n".join(lines))


def _save(fig, path: Path) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    fig.savefig(tmp, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    os.replace(tmp, path)


def energy_plot(out: Path, traj) -> list[Path]:
    """Energy history of one run."""
    script = out / "energy.gnuplot"
    _gnuplot(script, "trajectory.csv", "discrete energy", "t", "E", "'{csv}' using 2:3 with lines",
             logscale="y")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    E = traj.ledger.E
    ax.semilogy(traj.times, np.where(E > 0, E, np.nan), lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel("E")
    ax.set_title(f"{traj.model_label}  {traj.scheme.value}  dt={traj.dt:g}")
    ax.grid(True, which="both", alpha=0.3)
    png = out / "energy.png"
    _save(fig, png)
    return [script, png]


def decay_plot(out: Path, report) -> list[Path]:
    """Energy histories of a dt sweep with their fitted envelopes."""
    script = out / "decay.gnuplot"
    plots = ", ".join(
        f"'{{csv}}' using 2:($1=={m.dt!r} ? $4 : 1/0) with lines title 'dt={m.dt:g}'"
        for m in report.members
    )
    _gnuplot(script, "sweep_energies.csv", f"energy decay, {report.scheme.value}", "t", "E", plots,
             logscale="y")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for m in report.members:
        t = m.dt * np.arange(m.energies.size)
        line, = ax.semilogy(t, np.where(m.energies > 0, m.energies, np.nan), lw=1.0,
                            label=f"dt={m.dt:g}, nu={m.fit.nu0:.3g}")
        ax.semilogy(t, m.fit.envelope(m.energies[0], t), ls="--", lw=0.8, color=line.get_color())
    ax.set_xlabel("t")
    ax.set_ylabel("E")
    ax.set_title(f"energy decay, {report.scheme.value}")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    png = out / "decay.png"
    _save(fig, png)
    return [script, png]


def hautus_plot(out: Path, report) -> list[Path]:
    script = out / "hautus.gnuplot"
    _gnuplot(script, "hautus.csv", "Hautus form", "omega", "kappa", "'{csv}' using 1:2 with lines",
             logscale="y")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.semilogy(report.omega_grid, np.maximum(report.kappa, np.finfo(float).tiny), lw=0.8)
    ax.axvline(report.argmin, color="k", ls=":", lw=0.8)
    ax.set_xlabel("omega")
    ax.set_ylabel("kappa")
    ax.set_title(f"kappa_min = {report.kappa_min:.4g} at omega = {report.argmin:.4g}")
    ax.grid(True, which="both", alpha=0.3)
    png = out / "hautus.png"
    _save(fig, png)
    return [script, png]


def transfer_plot(out: Path, reports) -> list[Path]:
    script = out / "transfer.gnuplot"
    plots = ", ".join(
        f"'{{csv}}' using 2:($1=={r.beta!r} ? $3 : 1/0) with lines title 'beta={r.beta:g}'"
        for r in reports
    )
    _gnuplot(script, "transfer.csv", "transfer function norm", "omega", "|H|", plots)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for r in reports:
        ax.plot(r.omega_grid, r.norms, lw=0.8, label=f"beta={r.beta:g}")
    ax.set_xlabel("omega")
    ax.set_ylabel("|H(beta + i omega)|")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    png = out / "transfer.png"
    _save(fig, png)
    return [script, png]


def spectrum_plot(out: Path, decomp) -> list[Path]:
    script = out / "spectrum.gnuplot"
    _gnuplot(script, "spectrum.csv", "frequencies", "index", "mu", "'{csv}' using 1:2 with points")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(np.arange(decomp.frequencies.size), decomp.frequencies, ".", ms=3)
    ax.set_xlabel("index")
    ax.set_ylabel("mu")
    ax.grid(True, alpha=0.3)
    png = out / "spectrum.png"
    _save(fig, png)
    return [script, png]
