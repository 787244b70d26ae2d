"""Lower bounds on the tested detection efficiency from calibration counts.

Bob fires an internal test source at random gates. The click frequency of
those gates, corrected by the component tolerances in
:class:`ReceiverAssumptions`, lower-bounds the single-photon efficiency of
the receiver over the tested state space. That bound becomes ``eta_e_bar``
in :class:`~qkdcal.keyrate.KeyRateInputs`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any

from scipy import stats

from .errors import DomainError, NoDataError, ValidationError
from .keyrate import KeyRateInputs, rate_estimated_etamax

DEFLECTING = "deflecting"
NON_DEFLECTING = "non_deflecting"
SINGLE_PHOTON = "single_photon"
POISSON = "poisson"

DEFAULT_DARK_CONFIDENCE = 1.0 - 1e-6


def _clamp01(x: float) -> tuple[float, bool]:
    if x < 0.0:
        return 0.0, True
    if x > 1.0:
        return 1.0, True
    return x, False


@dataclass(frozen=True)
class ReceiverAssumptions:
    """Trusted tolerances of Bob's modified receiver.

    Attributes
    ----------
    eps_e : float
        Largest change in test click probability caused by Eve's light when
        the deflector is active.
    eps_omega : float
        Efficiency spread across the filter passband.
    eps_t : float
        Efficiency spread inside the inner gate.
    eps_i : float
        Efficiency spread across field shapes and polarisations.
    eps_s : float
        Detector superlinearity bound; replaces ``eps_e`` when testing
        without deflection.
    zeta_omega : float
        Fraction of detections caused by out-of-band light.
    zeta_k : float
        Fraction of detections in a spatial mode other than the fibre mode.
    q_omega : float
        Bound on the click probability of any out-of-band pulse.
    """

    eps_e: float = 0.0
    eps_omega: float = 0.0
    eps_t: float = 0.0
    eps_i: float = 0.0
    eps_s: float = 0.0
    zeta_omega: float = 0.0
    zeta_k: float = 0.0
    q_omega: float = 0.0

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} must lie in [0, 1], got {v!r}")
        for mode in (DEFLECTING, NON_DEFLECTING):
            if self.eps_tot(mode) > 1.0:
                raise ValidationError(f"eps_tot exceeds 1 in {mode} mode")

    def eps_tot(self, mode: str = DEFLECTING) -> float:
        if mode == DEFLECTING:
            disturbance = self.eps_e
        elif mode == NON_DEFLECTING:
            disturbance = self.eps_s
        else:
            raise ValidationError(f"unknown test mode {mode!r}")
        return disturbance + self.eps_omega + self.eps_t + self.eps_i


@dataclass(frozen=True)
class TestSourceConfig:
    """Bob's internal calibration source.

    ``dark_calibration_fraction`` of the test gates are run with the source
    off (and Eve deflected) to measure the dark count rate. ``extinction_leak``
    is the probability that Eve's pulse slips past the deflector during a
    test gate. ``p_test`` defaults to 0.1 for convenience only; pick it for
    the statistics you need.
    """

    __test__ = False  # not a pytest class

    kind: str = SINGLE_PHOTON
    mu: float | None = None
    p_test: float = 0.1
    deflecting: bool = True
    dark_calibration_fraction: float = 0.0
    extinction_leak: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in (SINGLE_PHOTON, POISSON):
            raise ValidationError(f"unknown source kind {self.kind!r}")
        if self.kind == POISSON:
            if self.mu is None or not self.mu > 0.0 or not math.isfinite(self.mu):
                raise ValidationError("poisson source needs mu > 0")
        if not (0.0 < self.p_test < 1.0):
            raise ValidationError("p_test must lie in (0, 1)")
        if not (0.0 <= self.dark_calibration_fraction < 1.0):
            raise ValidationError("dark_calibration_fraction must lie in [0, 1)")
        if not (0.0 <= self.extinction_leak <= 1.0):
            raise ValidationError("extinction_leak must lie in [0, 1]")

    @property
    def mode(self) -> str:
        return DEFLECTING if self.deflecting else NON_DEFLECTING


@dataclass(frozen=True)
class TestCounts:
    """Raw tallies from one session."""

    __test__ = False

    test_gates: int = 0
    test_clicks: int = 0
    dark_gates: int = 0
    dark_clicks: int = 0
    signal_gates: int = 0
    signal_clicks: int = 0
    sifted_errors: int = 0
    sifted_bits: int = 0

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValidationError(f"{name} must be a non-negative integer")
        pairs = (
            ("test_clicks", "test_gates"),
            ("dark_clicks", "dark_gates"),
            ("signal_clicks", "signal_gates"),
            ("sifted_errors", "sifted_bits"),
            ("sifted_bits", "signal_clicks"),
        )
        for small, big in pairs:
            if getattr(self, small) > getattr(self, big):
                raise ValidationError(f"{small} exceeds {big}")

    def __add__(self, other: "TestCounts") -> "TestCounts":
        return TestCounts(
            **{k: getattr(self, k) + getattr(other, k) for k in self.__dataclass_fields__}
        )

    @property
    def q_bar(self) -> float:
        if self.signal_gates == 0:
            raise NoDataError("no signal gates")
        return self.signal_clicks / self.signal_gates

    @property
    def delta_bar(self) -> float:
        if self.sifted_bits == 0:
            return 0.0
        return self.sifted_errors / self.sifted_bits

    @property
    def q_t(self) -> float:
        if self.test_gates == 0:
            raise NoDataError("no test gates")
        return self.test_clicks / self.test_gates

    def as_dict(self) -> dict[str, int]:
        return {k: int(getattr(self, k)) for k in self.__dataclass_fields__}


def zeta_total(delta_bar: float, a: ReceiverAssumptions) -> float:
    """Fraction of detections that may come from outside the tested states."""
    value, _ = _clamp01(_zeta_raw(delta_bar, a))
    return value


def _zeta_raw(delta_bar: float, a: ReceiverAssumptions) -> float:
    if not (0.0 <= delta_bar <= 1.0):
        raise DomainError(f"delta_bar must lie in [0, 1], got {delta_bar!r}")
    # Bit-mapped gating: an edge detection is wrong half the time, so at most
    # 2*delta of the detections fell outside the inner gate.
    return 2.0 * delta_bar + max(a.zeta_omega, a.zeta_k)


def _eta_t_single_raw(
    q_t: float, a: ReceiverAssumptions, mode: str, q_bar: float | None
) -> float:
    if not (0.0 <= q_t <= 1.0):
        raise DomainError(f"q_t must lie in [0, 1], got {q_t!r}")
    if mode == NON_DEFLECTING:
        if q_bar is None:
            raise DomainError("non-deflecting mode needs q_bar")
        if q_t < q_bar:
            warnings.warn(
                "test click rate below signal yield: no efficiency information",
                RuntimeWarning,
                stacklevel=3,
            )
            return 0.0
        q_t = q_t - q_bar
    return q_t - a.eps_tot(mode)


def eta_t_single_photon(
    q_t: float,
    a: ReceiverAssumptions,
    mode: str = DEFLECTING,
    q_bar: float | None = None,
) -> float:
    """Lower bound on the tested single-photon efficiency, single-photon source.

    In non-deflecting mode ``q_t`` is the raw click rate of test gates (signal
    and test pulse together) and ``q_bar`` is subtracted from it.
    """
    value, _ = _clamp01(_eta_t_single_raw(q_t, a, mode, q_bar))
    return value


def eta_e_single_photon(eta_t: float, zeta: float) -> float:
    """Average minimum efficiency over detections: ``(1 - zeta) * eta_t``."""
    for name, v in (("eta_t", eta_t), ("zeta", zeta)):
        if not (0.0 <= v <= 1.0):
            raise DomainError(f"{name} must lie in [0, 1], got {v!r}")
    return (1.0 - zeta) * eta_t


def _eta_t_faint_raw(q_t: float, mu: float, d: float, eps_tot: float) -> float:
    if not mu > 0.0:
        raise DomainError(f"mu must be positive, got {mu!r}")
    for name, v in (("q_t", q_t), ("d", d)):
        if not (0.0 <= v <= 1.0):
            raise DomainError(f"{name} must lie in [0, 1], got {v!r}")
    # 1 - eps + (1-d)/mu - (1-q_t) e^mu / mu, rearranged so the two O(1/mu)
    # terms cancel analytically instead of in floating point.
    return 1.0 - eps_tot + (q_t - d) / mu - (1.0 - q_t) * math.expm1(mu) / mu


def eta_t_faint_laser(
    q_t: float,
    mu: float,
    d: float,
    a: ReceiverAssumptions,
    mode: str = DEFLECTING,
    q_bar: float | None = None,
) -> float:
    """Lower bound on the tested single-photon efficiency, Poisson source.

    Vacuum components may click only through dark counts and multiphoton
    components are assumed to click with certainty, so the single-photon
    term is isolated from ``q_t`` in the worst case. Clamped to [0, 1].
    """
    if mode == NON_DEFLECTING:
        if q_bar is None:
            raise DomainError("non-deflecting mode needs q_bar")
        q_t = max(0.0, q_t - q_bar)
    value, _ = _clamp01(_eta_t_faint_raw(q_t, mu, d, a.eps_tot(mode)))
    return value


def eta_t_faint_laser_small_mu(
    q_t: float, mu: float, d: float, a: ReceiverAssumptions, mode: str = DEFLECTING
) -> float:
    """Leading terms of :func:`eta_t_faint_laser` in small ``mu``.

    Accurate to O(mu**2) + O(mu * q_t). Cross-check only.
    """
    return (q_t - d) / mu + q_t - mu / 2.0 - a.eps_tot(mode)


def eta_e_faint_laser(eta_t: float, zeta: float) -> float:
    """Same weighting as :func:`eta_e_single_photon`, applied to a faint-laser bound."""
    return eta_e_single_photon(eta_t, zeta)


@dataclass(frozen=True)
class DarkCountEstimate:
    point: float
    upper: float
    confidence: float


def dark_count_bound(
    counts: TestCounts, confidence: float = DEFAULT_DARK_CONFIDENCE
) -> DarkCountEstimate:
    """Dark count rate per gate from source-off calibration gates.

    ``upper`` is the exact one-sided binomial (Clopper-Pearson) upper limit
    at the given confidence.
    """
    n, k = counts.dark_gates, counts.dark_clicks
    if n == 0:
        raise NoDataError("no dark calibration gates")
    if not (0.0 < confidence < 1.0):
        raise DomainError("confidence must lie in (0, 1)")
    upper = 1.0 if k == n else float(stats.beta.ppf(confidence, k + 1, n - k))
    return DarkCountEstimate(point=k / n, upper=upper, confidence=confidence)


@dataclass
class EstimateResult:
    """Output of :func:`estimate_pipeline`."""

    inputs: KeyRateInputs
    diagnostics: dict[str, Any] = field(default_factory=dict)


def estimate_pipeline(
    counts: TestCounts,
    source: TestSourceConfig,
    a: ReceiverAssumptions,
    eta_max: float = 1.0,
    dark_rate: float | None = None,
    conservative_dark: bool = False,
    dark_confidence: float = DEFAULT_DARK_CONFIDENCE,
) -> EstimateResult:
    """Turn raw session counts into :class:`KeyRateInputs`.

    The dark count rate comes from ``dark_rate`` if given, otherwise from the
    source-off calibration gates (point estimate, or the binomial upper limit
    when ``conservative_dark`` is set). With no calibration gates it is 0.
    """
    mode = source.mode
    q_bar = counts.q_bar
    delta_bar = counts.delta_bar
    q_t = counts.q_t
    diag: dict[str, Any] = {
        "mode": mode,
        "source": source.kind,
        "q_bar": q_bar,
        "delta_bar": delta_bar,
        "q_t": q_t,
        "q_t_stderr": math.sqrt(q_t * (1.0 - q_t) / counts.test_gates),
        "eps_tot": a.eps_tot(mode),
        "clamped": [],
    }
    clamped: list[str] = diag["clamped"]

    zeta_raw = _zeta_raw(delta_bar, a)
    zeta, hit = _clamp01(zeta_raw)
    if hit:
        clamped.append("zeta")
    diag["zeta"] = zeta
    if q_bar > 0.0 and a.q_omega > 0.0:
        diag["zeta_omega_consistent"] = a.zeta_omega <= a.q_omega / q_bar

    if source.kind == SINGLE_PHOTON:
        raw = _eta_t_single_raw(q_t, a, mode, q_bar)
        slope = 1.0
    else:
        if dark_rate is None:
            if counts.dark_gates > 0:
                dc = dark_count_bound(counts, dark_confidence)
                raw_d = dc.upper if conservative_dark else dc.point
                diag["dark_point"] = dc.point
                diag["dark_upper"] = dc.upper
                if mode == NON_DEFLECTING:
                    # Eve is not removed during calibration, so her yield rides along.
                    raw_d = max(0.0, raw_d - q_bar)
            else:
                raw_d = 0.0
        else:
            raw_d = dark_rate
        diag["dark_rate"] = raw_d
        mu = float(source.mu)  # type: ignore[arg-type]
        q_t_eff = q_t if mode == DEFLECTING else max(0.0, q_t - q_bar)
        raw = _eta_t_faint_raw(q_t_eff, mu, raw_d, a.eps_tot(mode))
        slope = 1.0 / mu + math.expm1(mu) / mu
    eta_t, hit = _clamp01(raw)
    if hit:
        clamped.append("eta_t")
    diag["eta_t_raw"] = raw
    diag["eta_t"] = eta_t

    eta_e = eta_e_single_photon(eta_t, zeta)
    diag["eta_e_bar"] = eta_e
    # Only the q_t sampling error is propagated; zeta is treated as exact.
    diag["eta_e_stderr"] = (1.0 - zeta) * slope * diag["q_t_stderr"]

    inputs = KeyRateInputs(
        q_bar=q_bar, delta_bar=delta_bar, eta_e_bar=eta_e, eta_max=eta_max
    )
    diag["exceeds_eta_max"] = inputs.exceeds_eta_max
    return EstimateResult(inputs=inputs, diagnostics=diag)


def analyze(result: EstimateResult) -> dict[str, Any]:
    """Key rate verdict for a pipeline result, as a flat dict."""
    r = rate_estimated_etamax(result.inputs) if result.inputs.q_bar > 0 else None
    return {
        "rate": 0.0 if r is None else r.rate,
        "status": "no_data" if r is None else r.status,
        "secure": False if r is None else r.secure,
    }
