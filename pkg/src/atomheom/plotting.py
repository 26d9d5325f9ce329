"""Figure rendering for the report path.

Every report-producing subcommand writes PNG figures next to its CSV
output: absorption spectra with the scaled golden-rule reference overlaid
as colored stick lines (one color per series), and normalized overlays for
the truncation study.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .spectroscopy import Spectrum, StickSpectrum

SERIES_COLORS = {
    "Lyman": "tab:red",
    "Balmer": "tab:blue",
    "Paschen": "tab:green",
    "Brackett": "tab:purple",
}


def _stick_overlay(ax, sticks: StickSpectrum, scale: float) -> None:
    seen = set()
    for line in sticks.lines:
        color = SERIES_COLORS.get(line.series, "tab:gray")
        label = line.series if line.series not in seen else None
        seen.add(line.series)
        ax.vlines(line.omega, 0.0, line.weight * scale, color=color, label=label,
                  linewidth=1.2)


def render_spectrum_figure(path: Path, spectrum: Spectrum,
                           sticks: StickSpectrum | None = None,
                           title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(spectrum.frequencies, spectrum.intensities, color="black", linewidth=1.0,
            label="hierarchy")
    if sticks is not None and sticks.lines:
        peak = float(np.max(np.abs(spectrum.intensities)))
        tallest = max(abs(line.weight) for line in sticks.lines)
        scale = 0.9 * peak / tallest if tallest > 0 else 1.0
        _stick_overlay(ax, sticks, scale)
    ax.set_xlabel(r"$\omega$ (a.u.)")
    ax.set_ylabel("intensity (arb.)")
    ax.set_xlim(0.0, 0.6)
    if title:
        ax.set_title(title)
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_absorption_report(out_dir: Path, spectra: dict[str, Spectrum],
                             stick_sets: dict[str, StickSpectrum]) -> None:
    for comp, spectrum in spectra.items():
        render_spectrum_figure(
            out_dir / f"absorption_{comp}.png",
            spectrum,
            sticks=stick_sets.get(comp),
            title=f"I_{comp}",
        )
    if len(spectra) > 1:
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        for comp, spectrum in spectra.items():
            ax.plot(spectrum.frequencies, spectrum.intensities, linewidth=1.0,
                    label=f"I_{comp}")
        ax.set_xlabel(r"$\omega$ (a.u.)")
        ax.set_ylabel("intensity (arb.)")
        ax.set_xlim(0.0, 0.6)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out_dir / "absorption_all.png", dpi=150)
        plt.close(fig)


def render_stick_report(out_dir: Path, stick_sets: dict[str, StickSpectrum]) -> None:
    for comp, sticks in stick_sets.items():
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        _stick_overlay(ax, sticks, scale=1.0)
        ax.set_xlabel(r"$\omega$ (a.u.)")
        ax.set_ylabel("golden-rule weight")
        ax.set_xlim(0.0, 0.6)
        if sticks.lines:
            ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out_dir / f"golden_rule_{comp}.png", dpi=150)
        plt.close(fig)


def render_truncation_report(out_dir: Path, normalized: dict[int, Spectrum],
                             component: str) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for n_max, spectrum in sorted(normalized.items()):
        ax.plot(spectrum.frequencies, spectrum.intensities, linewidth=1.0,
                label=f"n_max = {n_max}")
    ax.set_xlabel(r"$\omega$ (a.u.)")
    ax.set_ylabel("normalized intensity")
    ax.set_xlim(0.0, 0.6)
    ax.set_title(f"I_{component}, normalized")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_dir / "truncation_study.png", dpi=150)
    plt.close(fig)
