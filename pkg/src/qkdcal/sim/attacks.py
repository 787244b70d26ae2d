"""Eavesdropping strategies, one dataclass per kind.

Each strategy decides, per gate, the receiver state Eve forces, what light
she lets through and whether she learns the bit Bob records. Eve never
knows which gates are test gates.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar, Union

from ..errors import ValidationError

BASIS_POLICIES = ("random", "z", "x")


def _prob(name: str, v: float) -> None:
    if not (0.0 <= v <= 1.0):
        raise ValidationError(f"{name} must lie in [0, 1], got {v!r}")


@dataclass(frozen=True)
class Honest:
    """No eavesdropper; a lossy channel with intrinsic bit error ``error``."""

    kind: ClassVar[str] = "honest"
    loss: float = 0.0
    error: float = 0.0

    def __post_init__(self) -> None:
        _prob("loss", self.loss)
        _prob("error", self.error)


@dataclass(frozen=True)
class Blinding:
    """Blind the detector on a random ``blind_fraction`` of gates.

    On blinded gates Eve intercepts Alice's photon, measures it in a basis
    chosen by ``eve_basis_policy`` and resends a bright trigger of
    ``trigger_intensity``. Other gates pass Alice's photon through a channel
    with ``loss`` and ``error``.
    """

    kind: ClassVar[str] = "blinding"
    blind_fraction: float = 1.0
    trigger_intensity: float = 1.5
    eve_basis_policy: str = "random"
    loss: float = 0.0
    error: float = 0.0

    def __post_init__(self) -> None:
        _prob("blind_fraction", self.blind_fraction)
        _prob("loss", self.loss)
        _prob("error", self.error)
        if not self.trigger_intensity > 0:
            raise ValidationError("trigger_intensity must be positive")
        if self.eve_basis_policy not in BASIS_POLICIES:
            raise ValidationError(f"eve_basis_policy must be one of {BASIS_POLICIES}")


@dataclass(frozen=True)
class Tightness:
    """Attack that meets the averaged leakage bound with equality.

    A fraction ``q_bar * eta_bar`` of gates run with the receiver perfectly
    sensitive, passing Alice's photon with error rate
    ``delta_bar / eta_bar``. A fraction ``2 * q_bar * (1 - eta_bar)`` run
    blinded with intercept-resend triggers (only the half where Bob picks
    Eve's basis click). The rest receive vacuum with the receiver sensitive.
    """

    kind: ClassVar[str] = "tightness"
    eta_bar_target: float = 0.5
    delta_bar_target: float = 0.0
    q_bar_target: float = 0.5
    trigger_intensity: float = 1.5

    def __post_init__(self) -> None:
        _prob("eta_bar_target", self.eta_bar_target)
        _prob("delta_bar_target", self.delta_bar_target)
        _prob("q_bar_target", self.q_bar_target)
        if self.eta_bar_target <= 0.0:
            raise ValidationError("eta_bar_target must be positive")
        if 2.0 * self.delta_bar_target > self.eta_bar_target:
            raise ValidationError("tightness targets need delta_bar <= eta_bar / 2")
        if self.sensitive_fraction + self.blind_fraction > 1.0 + 1e-12:
            raise ValidationError(
                "targets unreachable: q_bar*eta_bar + 2*q_bar*(1-eta_bar) exceeds 1"
            )

    @property
    def sensitive_fraction(self) -> float:
        return self.q_bar_target * self.eta_bar_target

    @property
    def blind_fraction(self) -> float:
        return 2.0 * self.q_bar_target * (1.0 - self.eta_bar_target)

    @property
    def sensitive_error(self) -> float:
        return self.delta_bar_target / self.eta_bar_target


@dataclass(frozen=True)
class TimeShift:
    """Delay every pulse by ``shift`` (fraction of the gate, relative to its centre)."""

    kind: ClassVar[str] = "time_shift"
    shift: float = -0.4
    loss: float = 0.0
    error: float = 0.0

    def __post_init__(self) -> None:
        _prob("loss", self.loss)
        _prob("error", self.error)
        if not (-1.0 <= self.shift <= 1.0):
            raise ValidationError("shift must lie in [-1, 1]")


AttackStrategy = Union[Honest, Blinding, Tightness, TimeShift]

ATTACKS: dict[str, type] = {
    cls.kind: cls for cls in (Honest, Blinding, Tightness, TimeShift)
}


def make_attack(kind: str, **params) -> AttackStrategy:
    try:
        cls = ATTACKS[kind]
    except KeyError:
        raise ValidationError(f"unknown attack kind {kind!r}") from None
    return cls(**params)
