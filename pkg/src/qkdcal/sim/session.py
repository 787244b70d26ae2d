"""Gate-by-gate Monte-Carlo run of BB84 with random receiver self-tests.

Gates are simulated in fixed-size blocks with numpy. Each block draws from
its own Philox stream keyed by ``(seed, block_index)``, so results do not
depend on how blocks are scheduled and ``workers > 1`` is bit-identical to a
serial run.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..estimation import POISSON, TestCounts, TestSourceConfig
from ..keyrate import KeyRateInputs, eta_e_from_eta_bar
from .attacks import AttackStrategy, Blinding, Honest, Tightness, TimeShift
from .detector import DetectorModel

BLOCK_SIZE = 1 << 16
GATE_CENTRE = 0.5

GATE_KINDS = ("signal", "test", "dark")
ATTACK_STATES = ("pass", "blind", "sensitive", "vacuum")
PASS, BLIND, SENSITIVE, VACUUM = range(4)


@dataclass
class SessionResult:
    """Aggregated statistics of one session.

    ``eve_known_fraction`` is the fraction of sifted bits Eve knows exactly.
    ``true_eta_bar`` averages the receiver's minimum efficiency over detected
    signal gates; ``sifted_eta_bar`` does the same over sifted bits. Clicks
    from light arriving outside the inner gate count with efficiency 0.
    """

    counts: TestCounts
    eve_known_fraction: float
    sifted_known: int
    true_eta_bar: float
    sifted_eta_bar: float
    sifted_ones: int
    edge_sifted: int
    edge_errors: int
    trace: dict[str, np.ndarray] | None = field(default=None, repr=False)

    @property
    def sifted_bit_mean(self) -> float:
        n = self.counts.sifted_bits
        return self.sifted_ones / n if n else float("nan")

    def true_inputs(self, eta_max: float = 1.0) -> KeyRateInputs:
        """Rate inputs with the tested efficiency set by the worst-case relation."""
        q = self.counts.q_bar
        return KeyRateInputs(
            q_bar=q,
            delta_bar=self.counts.delta_bar,
            eta_e_bar=min(1.0, eta_e_from_eta_bar(q, self.true_eta_bar, eta_max)),
            eta_max=eta_max,
        )


@dataclass
class _Block:
    counts: TestCounts
    sifted_known: int
    eta_detected_sum: float
    eta_sifted_sum: float
    sifted_ones: int
    edge_sifted: int
    edge_errors: int
    trace: dict[str, np.ndarray] | None


def _validate(n_gates: int, det: DetectorModel, src: TestSourceConfig, atk) -> None:
    if int(n_gates) != n_gates or n_gates < 1:
        raise ValidationError("n_gates must be a positive integer")
    if not isinstance(det, DetectorModel):
        raise ValidationError("det must be a DetectorModel")
    if not isinstance(src, TestSourceConfig):
        raise ValidationError("src must be a TestSourceConfig")
    if not isinstance(atk, (Honest, Blinding, Tightness, TimeShift)):
        raise ValidationError(f"unsupported attack {atk!r}")
    if isinstance(atk, Tightness):
        if not det.blindable:
            raise ValidationError("tightness attack needs a blindable detector")
        thr = det.blind_click_threshold
        if not (thr <= atk.trigger_intensity < 2 * thr):
            raise ValidationError(
                "tightness trigger must click only in Eve's basis: "
                "threshold <= intensity < 2*threshold"
            )


def _block_rng(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


def _simulate_block(
    start: int,
    size: int,
    seed: int,
    block: int,
    det: DetectorModel,
    src: TestSourceConfig,
    atk: AttackStrategy,
    want_trace: bool,
) -> _Block:
    rng = _block_rng(seed, block)
    n = size

    # Gate schedule.
    is_test = rng.random(n) < src.p_test
    is_dark = is_test & (rng.random(n) < src.dark_calibration_fraction)
    is_signal = ~is_test

    # Alice and Bob.
    a_basis = rng.integers(0, 2, n, dtype=np.int8)
    a_bit = rng.integers(0, 2, n, dtype=np.int8)
    b_basis = rng.integers(0, 2, n, dtype=np.int8)
    basis_match = a_basis == b_basis

    # What Eve does on each gate.
    state = np.full(n, PASS, dtype=np.int8)
    carrier = np.ones(n, dtype=np.int64)  # Alice's photon reaches the receiver
    t_sig = np.full(n, GATE_CENTRE)
    flip_p = np.zeros(n)
    trigger = np.zeros(n, dtype=bool)
    trigger_intensity = 0.0
    u_state = rng.random(n)
    if isinstance(atk, (Honest, TimeShift, Blinding)):
        carrier = (rng.random(n) >= atk.loss).astype(np.int64)
        flip_p[:] = atk.error
    if isinstance(atk, TimeShift):
        t_sig[:] = GATE_CENTRE + atk.shift
    if isinstance(atk, Blinding):
        blind = u_state < atk.blind_fraction
        state[blind] = BLIND
        trigger_intensity = atk.trigger_intensity
        policy = atk.eve_basis_policy
    elif isinstance(atk, Tightness):
        s_frac, b_frac = atk.sensitive_fraction, atk.blind_fraction
        sens = u_state < s_frac
        blind = (u_state >= s_frac) & (u_state < s_frac + b_frac)
        state[:] = VACUUM
        state[sens] = SENSITIVE
        state[blind] = BLIND
        carrier = sens.astype(np.int64)
        flip_p[sens] = atk.sensitive_error
        trigger_intensity = atk.trigger_intensity
        policy = "random"
    is_blind_state = state == BLIND
    if trigger_intensity > 0:
        # Intercept-resend on blinded gates: Eve measures Alice's photon.
        carrier[is_blind_state] = 0
        trigger = is_blind_state.copy()
        if policy == "random":
            e_basis = rng.integers(0, 2, n, dtype=np.int8)
        else:
            e_basis = np.full(n, 0 if policy == "z" else 1, dtype=np.int8)
        e_bit = np.where(e_basis == a_basis, a_bit, rng.integers(0, 2, n, dtype=np.int8))
    else:
        e_basis = np.zeros(n, dtype=np.int8)
        e_bit = np.zeros(n, dtype=np.int8)
    blinded = is_blind_state & det.blindable

    # Efficiency of the receiver state; Eve's "sensitive" and "vacuum" states
    # put it at unity everywhere.
    forced_eta = (state == SENSITIVE) | (state == VACUUM)
    if forced_eta.any():
        perfect = DetectorModel(
            eta_plateau=1.0,
            rise=det.rise,
            fall=det.fall,
            dark_rate=det.dark_rate,
            blindable=det.blindable,
            blind_click_threshold=det.blind_click_threshold,
            bit_mapped_gating=det.bit_mapped_gating,
        )

    def eff(t):
        e = det.eta(t)
        if forced_eta.any():
            e = np.where(forced_eta, perfect.eta(t), e)
        return e

    # Value the signal photon would show in Bob's basis, after channel errors.
    rand_bit = rng.integers(0, 2, n, dtype=np.int8)
    value = np.where(basis_match, a_bit, rand_bit)
    value = value ^ (rng.random(n) < flip_p).astype(np.int8)

    sig_inner = det.in_inner(t_sig)
    sig_edge = det.in_gate(t_sig) & ~sig_inner
    if not det.bit_mapped_gating:
        # Fully mismatched edges: only the detector matching the edge responds.
        edge_ok = np.where(t_sig < det.inner_start, value == 0, value == 1)
        carrier = np.where(sig_edge & ~edge_ok, 0, carrier)

    # Signal-path response (bit decided below).
    u_ph = rng.random(n)
    u_dk = rng.random(n)
    eta_sig = eff(t_sig)
    p_photon = 1.0 - (1.0 - eta_sig) ** carrier
    photon_click = ~blinded & (u_ph < p_photon)
    dark_click = ~blinded & (u_dk < det.dark_rate)
    thr = det.blind_click_threshold if det.blind_click_threshold is not None else np.inf
    trig_match = trigger & (b_basis == e_basis)
    trig_click = trigger & np.where(
        blinded,
        np.where(b_basis == e_basis, trigger_intensity >= thr, trigger_intensity / 2 >= thr),
        True,
    )
    sig_click = photon_click | trig_click | dark_click

    # Bit Bob records on a signal-path click.
    u_edge_bit = rng.integers(0, 2, n, dtype=np.int8)
    noise_bit = rng.integers(0, 2, n, dtype=np.int8)
    decodes = sig_inner if det.bit_mapped_gating else det.in_gate(t_sig)
    photon_bit = np.where(decodes, value, u_edge_bit)
    # Mismatched-basis triggers and dark counts hit a random detector.
    bit = np.where(
        trig_click,
        np.where(trig_match, e_bit, noise_bit),
        np.where(photon_click, photon_bit, noise_bit),
    )
    known = (trig_click & trig_match) | (
        photon_click & sig_edge & (not det.bit_mapped_gating)
    )
    photon_inner = photon_click & ~trig_click & sig_inner
    state_eta = np.where(
        blinded,
        0.0,
        np.where(forced_eta, 1.0, det.inner_min),
    )
    # Minimum efficiency of the receiver for the light that caused each click;
    # anything outside the tested state space gets 0.
    click_eta = np.where(photon_inner | (~photon_click & ~trig_click), state_eta, 0.0)
    click_eta = np.where(trig_click & ~blinded, state_eta, click_eta)

    # Test gates.
    t_test = rng.uniform(det.inner_start, det.inner_end, n)
    if src.kind == POISSON:
        k_test = rng.poisson(src.mu, n)
    else:
        k_test = np.ones(n, dtype=np.int64)
    k_test = np.where(is_dark, 0, k_test)
    test_photon = ~blinded & (rng.random(n) < 1.0 - (1.0 - eff(t_test)) ** k_test)
    test_dark = ~blinded & (rng.random(n) < det.dark_rate)
    channel_present = (carrier > 0) | trigger
    if src.deflecting:
        leak = rng.random(n) < src.extinction_leak
        from_channel = leak & (photon_click | trig_click)
        bonus = np.zeros(n, dtype=bool)
    else:
        from_channel = photon_click | trig_click
        bonus = channel_present & (k_test > 0) & (rng.random(n) < det.superlinearity)
    test_click = test_photon | test_dark | from_channel | bonus

    click = np.where(is_signal, sig_click, test_click)

    # Tallies.
    sig_det = is_signal & sig_click
    sifted = sig_det & basis_match
    errors = sifted & (bit != a_bit)
    edge = sifted & photon_click & ~trig_click & sig_edge
    src_on = is_test & ~is_dark
    counts = TestCounts(
        test_gates=int(src_on.sum()),
        test_clicks=int((src_on & test_click).sum()),
        dark_gates=int(is_dark.sum()),
        dark_clicks=int((is_dark & test_click).sum()),
        signal_gates=int(is_signal.sum()),
        signal_clicks=int(sig_det.sum()),
        sifted_errors=int(errors.sum()),
        sifted_bits=int(sifted.sum()),
    )
    trace = None
    if want_trace:
        kind = np.where(is_dark, 2, np.where(is_test, 1, 0)).astype(np.int8)
        trace = {
            "gate_index": np.arange(start, start + n, dtype=np.int64),
            "gate_kind": kind,
            "attack_state": state,
            "click": click.astype(np.int8),
            "in_gate_time": np.where(is_test, t_test, t_sig),
            "bit": np.where(sig_det, bit, -1).astype(np.int8),
            "basis_match": basis_match.astype(np.int8),
            "error": errors.astype(np.int8),
        }
    return _Block(
        counts=counts,
        sifted_known=int((sifted & known).sum()),
        eta_detected_sum=math.fsum(click_eta[sig_det]),
        eta_sifted_sum=math.fsum(click_eta[sifted]),
        sifted_ones=int((sifted & (bit == 1)).sum()),
        edge_sifted=int(edge.sum()),
        edge_errors=int((edge & errors).sum()),
        trace=trace,
    )


def run_session(
    n_gates: int,
    det: DetectorModel,
    src: TestSourceConfig,
    atk: AttackStrategy,
    seed: int,
    *,
    trace: bool = False,
    workers: int = 1,
) -> SessionResult:
    """Simulate ``n_gates`` gates and return aggregated counts.

    Each gate is a test gate with probability ``src.p_test`` and otherwise a
    signal gate sifted by basis agreement. Deterministic in ``seed``.
    """
    _validate(n_gates, det, src, atk)
    if int(seed) != seed or seed < 0:
        raise ValidationError("seed must be a non-negative integer")
    n_gates, seed = int(n_gates), int(seed)
    starts = list(range(0, n_gates, BLOCK_SIZE))
    jobs = [
        (s, min(BLOCK_SIZE, n_gates - s), seed, i, det, src, atk, trace)
        for i, s in enumerate(starts)
    ]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(lambda j: _simulate_block(*j), jobs))
    else:
        blocks = [_simulate_block(*j) for j in jobs]

    counts = blocks[0].counts
    for b in blocks[1:]:
        counts = counts + b.counts
    known = sum(b.sifted_known for b in blocks)
    n_sift = counts.sifted_bits
    n_det = counts.signal_clicks
    eta_det = math.fsum(b.eta_detected_sum for b in blocks)
    eta_sift = math.fsum(b.eta_sifted_sum for b in blocks)
    merged = None
    if trace:
        merged = {k: np.concatenate([b.trace[k] for b in blocks]) for k in blocks[0].trace}
    return SessionResult(
        counts=counts,
        eve_known_fraction=known / n_sift if n_sift else 0.0,
        sifted_known=known,
        true_eta_bar=eta_det / n_det if n_det else 0.0,
        sifted_eta_bar=eta_sift / n_sift if n_sift else 0.0,
        sifted_ones=sum(b.sifted_ones for b in blocks),
        edge_sifted=sum(b.edge_sifted for b in blocks),
        edge_errors=sum(b.edge_errors for b in blocks),
        trace=merged,
    )
