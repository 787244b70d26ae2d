"""Data series for the three rate/efficiency figures.

fig3: rate vs tested efficiency for several (yield, error rate) pairs.
fig4: rate vs tested efficiency when it equals the trusted ceiling.
fig5: faint-laser efficiency estimate vs mean photon number.

The default parameter sets for fig3 and the error rates of fig4 are
harness choices, not published values.
"""
from __future__ import annotations

import math

import numpy as np

from .estimation import ReceiverAssumptions, eta_e_faint_laser, eta_t_faint_laser
from .estimation import _eta_t_faint_raw
from .keyrate import KeyRateInputs, rate_estimated, rate_estimated_etamax

FIG3_PAIRS = ((1.0, 0.0), (0.9, 0.0), (0.7, 0.0), (1.0, 0.02), (0.9, 0.02))
FIG4_DELTAS = (0.0, 0.02, 0.05)
FIG5_DETECTORS = ((0.1, 2e-5), (0.4, 2e-5))

FIG3_COLUMNS = ("q_bar", "delta_bar", "eta_e_bar", "rate", "status")
FIG4_COLUMNS = ("delta_bar", "eta_e_bar", "rate", "status")
FIG5_COLUMNS = ("eta", "dark_rate", "mu", "q_t", "eta_e_raw", "eta_e")


def faint_laser_click_probability(mu: float, eta: float, d: float) -> float:
    """Test-gate click probability for a Poisson source, each photon detected
    independently with probability ``eta``, OR-ed with dark counts ``d``."""
    return 1.0 - (1.0 - d) * math.exp(-mu * eta)


def fig3_rows(pairs=FIG3_PAIRS, points: int = 101) -> list[tuple]:
    rows = []
    for q, delta in pairs:
        for eta_e in np.linspace(0.0, 1.0, points):
            r = rate_estimated(KeyRateInputs(q_bar=q, delta_bar=delta, eta_e_bar=float(eta_e)))
            rows.append((q, delta, float(eta_e), r.rate, r.status))
    return rows


def fig4_rows(deltas=FIG4_DELTAS, points: int = 100) -> list[tuple]:
    rows = []
    for delta in deltas:
        for eta in np.linspace(1.0 / points, 1.0, points):
            eta = float(eta)
            r = rate_estimated_etamax(
                KeyRateInputs(q_bar=1.0, delta_bar=delta, eta_e_bar=eta, eta_max=eta)
            )
            rows.append((delta, eta, r.rate, r.status))
    return rows


def fig5_mu_grid(mu_min: float = 1e-4, mu_max: float = 0.5, points: int = 81) -> np.ndarray:
    return np.geomspace(mu_min, mu_max, points)


def fig5_rows(
    detectors=FIG5_DETECTORS,
    mu_min: float = 1e-4,
    mu_max: float = 0.5,
    points: int = 81,
) -> list[tuple]:
    a = ReceiverAssumptions()
    rows = []
    for eta, d in detectors:
        for mu in fig5_mu_grid(mu_min, mu_max, points):
            mu = float(mu)
            q_t = faint_laser_click_probability(mu, eta, d)
            raw = _eta_t_faint_raw(q_t, mu, d, a.eps_tot())
            est = eta_e_faint_laser(eta_t_faint_laser(q_t, mu, d, a), 0.0)
            rows.append((eta, d, mu, q_t, raw, est))
    return rows


def plot_svg(path, series: dict[str, tuple[list[float], list[float]]], xlabel: str,
             ylabel: str, logx: bool = False) -> None:
    """Write a plain line chart. Output is byte-stable for identical input."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "qkdcal", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for label, (x, y) in series.items():
            ax.plot(x, y, label=label)
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.axhline(0.0, color="grey", lw=0.5)
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
