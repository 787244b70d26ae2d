"""Asymptotic secret-key-rate bounds for BB84 with a calibrated receiver.

All rates are per sifted bit and all leakage terms are per pulse; the number
of pulses never appears explicitly.

Rates that can fail for a structural reason (no key gain possible, or an
error rate too large for the entropy bound) are returned as
:class:`RateResult`, which keeps the raw value separate from the verdict.

Typical usage::

    >>> from qkdcal.keyrate import KeyRateInputs, rate_estimated
    >>> res = rate_estimated(KeyRateInputs(q_bar=1.0, delta_bar=0.0, eta_e_bar=0.5))
    >>> res.rate, res.secure
    (0.5, True)
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DomainError, NoDataError, OutOfRegimeError, ValidationError

MIXTURE_TOL = 1e-12

STATUS_OK = "ok"
STATUS_NO_KEY_GAIN = "no_key_gain"
STATUS_OUT_OF_REGIME = "out_of_regime"


def _check_prob(name: str, x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {x!r}")


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy in bits, with h(0) = h(1) = 0."""
    _check_prob("x", x)
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


@dataclass(frozen=True)
class RateResult:
    """Key rate together with the reason it may not be usable.

    Attributes
    ----------
    rate : float
        Raw bound value. May be negative when ``status`` is ``"ok"``; forced
        to 0.0 otherwise.
    status : str
        ``"ok"``, ``"no_key_gain"`` (q + eta_E <= 1 style threshold failed)
        or ``"out_of_regime"`` (entropy argument above 1/2).
    """

    rate: float
    status: str = STATUS_OK

    @property
    def in_regime(self) -> bool:
        return self.status != STATUS_OUT_OF_REGIME

    @property
    def secure(self) -> bool:
        return self.status == STATUS_OK and self.rate > 0.0

    def __float__(self) -> float:
        return self.rate


@dataclass(frozen=True)
class KeyRateInputs:
    """Observed session averages plus the trusted efficiency ceiling.

    Attributes
    ----------
    q_bar : float
        Average yield, the fraction of signal gates with a detection.
    delta_bar : float
        Average error rate of the sifted key.
    eta_e_bar : float
        Estimated lower bound on the average minimum single-photon
        detection efficiency.
    eta_max : float
        Trusted upper limit on single-photon efficiency, in (0, 1].
    """

    q_bar: float
    delta_bar: float
    eta_e_bar: float
    eta_max: float = 1.0

    def __post_init__(self) -> None:
        for name in ("q_bar", "delta_bar", "eta_e_bar", "eta_max"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")
        if self.eta_max <= 0.0:
            raise ValidationError("eta_max must be positive")

    @property
    def exceeds_eta_max(self) -> bool:
        """True if the estimate beats the trusted ceiling (an attack indicator)."""
        return self.eta_e_bar > self.eta_max


@dataclass(frozen=True)
class EveMixture:
    """Eve's mixture over receiver states: rows of (p, q, eta, delta)."""

    components: tuple[tuple[float, float, float, float], ...]

    def __post_init__(self) -> None:
        comps = tuple(tuple(float(v) for v in c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValidationError("mixture needs at least one component")
        for c in comps:
            if len(c) != 4:
                raise ValidationError(f"component must be (p, q, eta, delta), got {c!r}")
            if any(not (0.0 <= v <= 1.0) for v in c):
                raise ValidationError(f"component values must lie in [0, 1]: {c!r}")
        total = math.fsum(c[0] for c in comps)
        if abs(total - 1.0) > MIXTURE_TOL:
            raise ValidationError(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "EveMixture":
        return cls(tuple(tuple(r) for r in rows))


def mixture_averages(m: EveMixture) -> tuple[float, float, float]:
    """Return (q_bar, eta_bar, delta_bar) of a mixture, detection-weighted.

    A mixture that never yields a detection returns (0, 0, 0).
    """
    q_bar = math.fsum(p * q for p, q, _, _ in m.components)
    if q_bar == 0.0:
        return 0.0, 0.0, 0.0
    eta_bar = math.fsum(p * q * eta for p, q, eta, _ in m.components) / q_bar
    delta_bar = math.fsum(p * q * d for p, q, _, d in m.components) / q_bar
    return q_bar, eta_bar, delta_bar


def mixture_leakage(m: EveMixture) -> float:
    """Per-pulse privacy amplification actually needed for a given mixture."""
    return math.fsum(
        p * (q - eta * q * (1.0 - binary_entropy(d))) for p, q, eta, d in m.components
    )


def tightness_mixture(q_bar: float, eta_bar: float, delta_bar: float) -> EveMixture:
    """Two-state attack that saturates :func:`privacy_amp_bound`.

    A fraction ``eta_bar`` of the detections happen in a perfectly sensitive
    state carrying all the errors; the rest happen in a blind state with no
    errors.
    """
    for name, v in (("q_bar", q_bar), ("eta_bar", eta_bar), ("delta_bar", delta_bar)):
        _check_prob(name, v)
    if eta_bar == 0.0:
        if delta_bar > 0.0:
            raise OutOfRegimeError("delta_bar > 0 with eta_bar = 0")
        return EveMixture(((1.0, q_bar, 0.0, 0.0),))
    if 2.0 * delta_bar > eta_bar:
        raise OutOfRegimeError(f"delta_bar={delta_bar} exceeds eta_bar/2={eta_bar / 2}")
    return EveMixture(
        (
            (eta_bar, q_bar, 1.0, delta_bar / eta_bar),
            (1.0 - eta_bar, q_bar, 0.0, 0.0),
        )
    )


def privacy_amp_bound(q_bar: float, eta_bar: float, delta_bar: float) -> float:
    """Upper bound on per-pulse privacy amplification from averaged parameters.

    Raises :class:`OutOfRegimeError` when ``delta_bar > eta_bar / 2``; the
    caller must then assume leakage equal to ``q_bar``.
    """
    for name, v in (("q_bar", q_bar), ("eta_bar", eta_bar), ("delta_bar", delta_bar)):
        _check_prob(name, v)
    if 2.0 * delta_bar > eta_bar:
        raise OutOfRegimeError(f"delta_bar={delta_bar} exceeds eta_bar/2={eta_bar / 2}")
    if eta_bar == 0.0:
        return q_bar
    return q_bar * (1.0 - eta_bar * (1.0 - binary_entropy(delta_bar / eta_bar)))


def rate_constant_eta(eta: float, delta_bar: float) -> float:
    """Rate for a receiver whose efficiency parameter is fixed at ``eta``."""
    _check_prob("eta", eta)
    _check_prob("delta_bar", delta_bar)
    h = binary_entropy(delta_bar)
    return eta * (1.0 - h) - h


def rate_avg_eta(q_bar: float, eta_bar: float, delta_bar: float) -> RateResult:
    """Rate bound in terms of the detection-weighted average efficiency."""
    _check_prob("q_bar", q_bar)
    _check_prob("eta_bar", eta_bar)
    _check_prob("delta_bar", delta_bar)
    if 2.0 * delta_bar > eta_bar:
        return RateResult(0.0, STATUS_OUT_OF_REGIME)
    h = binary_entropy(delta_bar)
    if eta_bar == 0.0:
        return RateResult(-h)
    return RateResult(eta_bar * (1.0 - binary_entropy(delta_bar / eta_bar)) - h)


def eta_e_from_eta_bar(q_bar: float, eta_bar: float, eta_max: float = 1.0) -> float:
    """Worst-case tested efficiency when undetected states sit at ``eta_max``."""
    return q_bar * eta_bar + (1.0 - q_bar) * eta_max


def eta_bar_from_eta_e(q_bar: float, eta_e_bar: float, eta_max: float = 1.0) -> float:
    """Inverse of :func:`eta_e_from_eta_bar`. Result may be negative."""
    if q_bar <= 0.0:
        raise NoDataError("q_bar must be positive")
    return (eta_e_bar - (1.0 - q_bar) * eta_max) / q_bar


def _rate_from_estimate(q: float, d: float, eta_e: float, eta_max: float) -> RateResult:
    if q <= 0.0:
        raise NoDataError("q_bar = 0: no detections to extract key from")
    excess = q + eta_e / eta_max - 1.0
    if excess <= 0.0:
        return RateResult(0.0, STATUS_NO_KEY_GAIN)
    arg = d * q / excess
    if arg > 0.5:
        return RateResult(0.0, STATUS_OUT_OF_REGIME)
    scale = eta_max * (excess / q)
    return RateResult(scale * (1.0 - binary_entropy(arg)) - binary_entropy(d))


def rate_estimated(inputs: KeyRateInputs) -> RateResult:
    """Rate from the yield, error rate and tested efficiency (no ceiling).

    Key gain needs ``q_bar + eta_e_bar > 1``.
    """
    return _rate_from_estimate(inputs.q_bar, inputs.delta_bar, inputs.eta_e_bar, 1.0)


def rate_estimated_etamax(inputs: KeyRateInputs) -> RateResult:
    """As :func:`rate_estimated` but trusting that efficiency never exceeds
    ``inputs.eta_max``.

    At ``eta_e_bar == eta_max`` this equals ``rate_constant_eta(eta_e_bar, delta_bar)``
    for every yield.
    """
    return _rate_from_estimate(
        inputs.q_bar, inputs.delta_bar, inputs.eta_e_bar, inputs.eta_max
    )
