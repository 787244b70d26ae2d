"""Compare what Eve actually learned with the leakage bound."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import OutOfRegimeError
from ..keyrate import (
    KeyRateInputs,
    eta_bar_from_eta_e,
    privacy_amp_bound,
    rate_constant_eta,
    rate_estimated_etamax,
)
from .session import SessionResult

# Allowed numerical slack for the exact (non-statistical) comparison.
EXACT_TOL = 1e-12


def leakage_fraction(q_bar: float, eta_bar: float, delta_bar: float) -> float:
    """Bound on the fraction of sifted bits Eve may know; 1 when out of regime."""
    if q_bar == 0.0:
        return 1.0
    eta_bar = min(1.0, max(0.0, eta_bar))
    try:
        return min(1.0, privacy_amp_bound(q_bar, eta_bar, delta_bar) / q_bar)
    except OutOfRegimeError:
        return 1.0


@dataclass(frozen=True)
class EveReport:
    eve_known_fraction: float
    known_stderr: float
    bound: float
    true_bound: float
    rate: float
    rate_secure: bool
    naive_rate: float | None

    @property
    def violates_true_bound(self) -> bool:
        """Eve knows more than the bound at the session's true parameters."""
        return self.eve_known_fraction > self.true_bound + EXACT_TOL

    @property
    def exceeds_bound(self) -> bool:
        """Eve knows more than the bound from ``bound_inputs``, beyond 3 standard errors."""
        return self.eve_known_fraction > self.bound + 3.0 * self.known_stderr + EXACT_TOL

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["violates_true_bound"] = self.violates_true_bound
        d["exceeds_bound"] = self.exceeds_bound
        return d


def eve_information(
    result: SessionResult,
    bound_inputs: KeyRateInputs,
    nominal_eta: float | None = None,
) -> EveReport:
    """Set Eve's simulated knowledge against the leakage bound.

    ``bound_inputs`` supplies the tested efficiency; the average efficiency of
    detected states is recovered from it by assuming undetected states sit at
    ``eta_max``. ``nominal_eta`` (e.g. the datasheet efficiency) gives the rate
    an operator who skipped calibration would claim.
    """
    n = result.counts.sifted_bits
    k = result.eve_known_fraction
    stderr = math.sqrt(k * (1.0 - k) / n) if n else 0.0
    q = bound_inputs.q_bar
    if q > 0:
        eta_bar = eta_bar_from_eta_e(q, bound_inputs.eta_e_bar, bound_inputs.eta_max)
        bound = leakage_fraction(q, eta_bar, bound_inputs.delta_bar)
        r = rate_estimated_etamax(bound_inputs)
        rate, secure = r.rate, r.secure
    else:
        bound, rate, secure = 1.0, 0.0, False
    true_bound = leakage_fraction(
        result.counts.q_bar if result.counts.signal_gates else 0.0,
        result.sifted_eta_bar,
        result.counts.delta_bar,
    )
    naive = None
    if nominal_eta is not None:
        naive = rate_constant_eta(nominal_eta, result.counts.delta_bar)
    return EveReport(
        eve_known_fraction=k,
        known_stderr=stderr,
        bound=bound,
        true_bound=true_bound,
        rate=rate,
        rate_secure=secure,
        naive_rate=naive,
    )
