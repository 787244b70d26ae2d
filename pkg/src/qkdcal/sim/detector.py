"""Gated single-photon detector with a trapezoidal efficiency profile."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError


@dataclass(frozen=True)
class DetectorModel:
    """Logical detector seen through bit-mapped gating.

    Gate time runs over [0, 1]. Efficiency rises linearly over ``rise``,
    holds a plateau (the inner gate), then falls over ``fall``. Across the
    plateau it drifts linearly from ``eta_plateau`` down to
    ``eta_plateau - plateau_tilt``, so the in-gate spread is ``plateau_tilt``.

    A blinded detector ignores single photons and has no dark counts, but
    clicks on any bright pulse at or above ``blind_click_threshold``.
    ``superlinearity`` is the extra click probability when a test pulse
    coincides with light from the channel.

    With ``bit_mapped_gating`` off, the two physical detectors are assumed
    fully mismatched at the edges: only the bit-0 detector responds during the
    rise and only the bit-1 detector during the fall.
    """

    eta_plateau: float = 1.0
    rise: float = 0.2
    fall: float = 0.2
    plateau_tilt: float = 0.0
    dark_rate: float = 0.0
    blindable: bool = True
    blind_click_threshold: float | None = 1.0
    superlinearity: float = 0.0
    bit_mapped_gating: bool = True

    def __post_init__(self) -> None:
        for name in ("eta_plateau", "dark_rate", "superlinearity", "plateau_tilt"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} must lie in [0, 1], got {v!r}")
        if self.rise < 0 or self.fall < 0 or self.rise + self.fall >= 1.0:
            raise ValidationError("rise and fall must be non-negative and leave a plateau")
        if self.plateau_tilt > self.eta_plateau:
            raise ValidationError("plateau_tilt larger than eta_plateau")
        if self.blindable and self.blind_click_threshold is None:
            raise ValidationError("a blindable detector needs blind_click_threshold")
        if self.blind_click_threshold is not None and not self.blind_click_threshold > 0:
            raise ValidationError("blind_click_threshold must be positive")

    @property
    def inner_start(self) -> float:
        return self.rise

    @property
    def inner_end(self) -> float:
        return 1.0 - self.fall

    @property
    def inner_min(self) -> float:
        """Smallest single-photon efficiency inside the inner gate."""
        return self.eta_plateau - self.plateau_tilt

    def in_gate(self, t):
        t = np.asarray(t, dtype=float)
        return (t >= 0.0) & (t <= 1.0)

    def in_inner(self, t):
        t = np.asarray(t, dtype=float)
        return (t >= self.inner_start) & (t <= self.inner_end)

    def eta(self, t):
        """Single-photon efficiency at in-gate time ``t`` (0 outside the gate)."""
        t = np.asarray(t, dtype=float)
        a, b = self.inner_start, self.inner_end
        top = self.eta_plateau
        low = self.inner_min
        plateau = top - self.plateau_tilt * (t - a) / (b - a)
        rising = top * t / a if a > 0 else np.full_like(t, top)
        falling = low * (1.0 - t) / self.fall if self.fall > 0 else np.full_like(t, low)
        out = np.where(t < a, rising, np.where(t > b, falling, plateau))
        return np.where(self.in_gate(t), out, 0.0)


@dataclass(frozen=True)
class Pulse:
    """Light reaching the detector within one gate.

    ``photons`` counts single-photon-level quanta; ``intensity`` is a bright
    classical component in units of the blinding threshold scale.
    """

    photons: int = 0
    intensity: float = 0.0
    time: float = 0.5


def respond(photons, intensity, t, blinded, det: DetectorModel, u_photon, u_dark):
    """Vectorised click decision. ``u_*`` are uniform draws of matching shape."""
    photons = np.asarray(photons)
    intensity = np.asarray(intensity, dtype=float)
    blinded = np.asarray(blinded, dtype=bool)
    eta_t = det.eta(t)
    p_photon = 1.0 - (1.0 - eta_t) ** photons
    live = ~blinded & ((u_photon < p_photon) | (intensity > 0.0) | (u_dark < det.dark_rate))
    thr = det.blind_click_threshold if det.blind_click_threshold is not None else np.inf
    forced = blinded & (intensity >= thr)
    return live | forced


def detector_respond(
    incident: Pulse, det: DetectorModel, blinded: bool, rng: np.random.Generator
) -> bool:
    """Whether the detector clicks during one gate.

    An unblinded detector clicks with probability ``1 - (1 - eta(t))**k`` for
    ``k`` photons, OR-ed with a dark count; any bright component clicks it.
    A blinded one only clicks on bright light at or above threshold.
    """
    if blinded and not det.blindable:
        blinded = False
    u = rng.random(2)
    return bool(
        respond(incident.photons, incident.intensity, incident.time, blinded, det, u[0], u[1])
    )


def bitmap_gate_assign(
    detection_time: float,
    rng: np.random.Generator,
    *,
    detector: int,
    mapping: int,
    det: DetectorModel | None = None,
) -> int | None:
    """Bit value Bob records for a click of physical ``detector``.

    ``mapping`` is the per-gate random detector-to-bit assignment. Clicks in
    the inner gate decode through it; clicks on the gate edges get a fresh
    uniformly random bit. Times outside the gate record nothing.
    """
    det = det or DetectorModel()
    if not det.in_gate(detection_time):
        return None
    if det.in_inner(detection_time):
        return detector ^ mapping
    return int(rng.integers(2))
