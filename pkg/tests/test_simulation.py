import math
import random

import numpy as np
import pytest

from qkdcal.errors import ValidationError
from qkdcal.estimation import ReceiverAssumptions, TestSourceConfig, estimate_pipeline
from qkdcal.keyrate import KeyRateInputs, eta_e_from_eta_bar, rate_estimated
from qkdcal.sim import (
    BLOCK_SIZE,
    Blinding,
    DetectorModel,
    Honest,
    Pulse,
    Tightness,
    TimeShift,
    bitmap_gate_assign,
    detector_respond,
    eve_information,
    read_trace,
    run_session,
    write_trace,
)
from qkdcal.sim.detector import respond


def within_3sigma(observed, p, n):
    return abs(observed - p) <= 3 * math.sqrt(p * (1 - p) / n) + 1e-15


# --- detector -----------------------------------------------------------------


def test_profile_shape():
    det = DetectorModel(eta_plateau=0.8, rise=0.2, fall=0.2)
    assert det.eta(0.5) == pytest.approx(0.8)
    assert det.eta(0.1) == pytest.approx(0.4)
    assert det.eta(0.9) == pytest.approx(0.4)
    assert det.eta(1.2) == 0.0
    assert bool(det.in_inner(0.5)) and not bool(det.in_inner(0.1))


def test_plateau_spread_bounded_by_tilt():
    det = DetectorModel(eta_plateau=0.6, plateau_tilt=0.05)
    t = np.linspace(det.inner_start, det.inner_end, 101)
    e = det.eta(t)
    assert e.max() - e.min() <= 0.05 + 1e-12
    assert det.inner_min == pytest.approx(0.55)


def test_single_photon_click_probability():
    det = DetectorModel(eta_plateau=0.4)
    rng = np.random.default_rng(1)
    n = 10**5
    clicks = sum(detector_respond(Pulse(photons=1), det, False, rng) for _ in range(n))
    assert within_3sigma(clicks / n, 0.4, n)


def test_dark_count_rate():
    det = DetectorModel(dark_rate=2e-5)
    rng = np.random.default_rng(2)
    n = 10**6
    u = rng.random((2, n))
    clicks = respond(0, 0.0, 0.5, False, det, u[0], u[1]).sum()
    assert within_3sigma(clicks / n, 2e-5, n)


def test_multiphoton_clicks_at_least_as_often_as_single():
    det = DetectorModel(eta_plateau=0.3)
    for k in range(1, 6):
        assert 1 - (1 - 0.3) ** k >= 0.3
    rng = np.random.default_rng(3)
    n = 20000
    u = rng.random((2, n))
    one = respond(1, 0.0, 0.5, False, det, u[0], u[1]).mean()
    three = respond(3, 0.0, 0.5, False, det, u[0], u[1]).mean()
    assert three >= one


def test_blinded_detector():
    det = DetectorModel(dark_rate=0.5, blind_click_threshold=1.0)
    rng = np.random.default_rng(4)
    for _ in range(1000):
        assert not detector_respond(Pulse(photons=1), det, True, rng)
        assert detector_respond(Pulse(intensity=1.0), det, True, rng)
        assert not detector_respond(Pulse(intensity=0.9), det, True, rng)


def test_bitmap_centre_follows_mapping():
    rng = np.random.default_rng(5)
    for detector in (0, 1):
        for mapping in (0, 1):
            assert bitmap_gate_assign(0.5, rng, detector=detector, mapping=mapping) == (
                detector ^ mapping
            )
    assert bitmap_gate_assign(1.5, rng, detector=0, mapping=0) is None


def test_bitmap_edge_bits_are_coin_flips():
    rng = np.random.default_rng(6)
    n = 10**5
    errors = 0
    for _ in range(n):
        value, mapping = int(rng.integers(2)), int(rng.integers(2))
        t = float(rng.uniform(0.0, 0.2))
        errors += bitmap_gate_assign(t, rng, detector=value ^ mapping, mapping=mapping) != value
    assert within_3sigma(errors / n, 0.5, n)


# --- sessions -------------------------------------------------------------------


def test_lossless_honest_session():
    n = 200_000
    r = run_session(n, DetectorModel(), TestSourceConfig(p_test=0.2), Honest(), seed=1)
    c = r.counts
    assert c.q_bar == 1.0 and c.delta_bar == 0.0 and c.q_t == 1.0
    assert within_3sigma(c.sifted_bits / c.signal_clicks, 0.5, c.signal_clicks)
    assert within_3sigma(c.test_gates / n, 0.2, n)
    assert r.eve_known_fraction == 0.0


def test_lossy_honest_session_yield():
    r = run_session(
        400_000, DetectorModel(eta_plateau=0.1), TestSourceConfig(p_test=0.1),
        Honest(loss=0.9), seed=2,
    )
    assert within_3sigma(r.counts.q_bar, 0.01, r.counts.signal_gates)
    assert within_3sigma(r.counts.q_t, 0.1, r.counts.test_gates)


def test_intrinsic_error_rate():
    r = run_session(200_000, DetectorModel(), TestSourceConfig(), Honest(error=0.03), seed=3)
    assert within_3sigma(r.counts.delta_bar, 0.03, r.counts.sifted_bits)


def test_tightness_session_known_fraction():
    r = run_session(400_000, DetectorModel(), TestSourceConfig(), Tightness(0.5, 0.0, 0.5), seed=4)
    n = r.counts.sifted_bits
    assert within_3sigma(r.eve_known_fraction, 0.5, n)
    assert within_3sigma(r.counts.q_bar, 0.5, r.counts.signal_gates)


def test_tightness_with_errors_meets_bound():
    atk = Tightness(eta_bar_target=0.6, delta_bar_target=0.03, q_bar_target=0.5)
    r = run_session(400_000, DetectorModel(), TestSourceConfig(), atk, seed=5)
    rep = eve_information(r, r.true_inputs())
    assert not rep.violates_true_bound
    # Only the blinded share is known bit-for-bit; the rest of the bound is
    # what error correction on the noisy share can reveal.
    assert abs(rep.eve_known_fraction - 0.4) <= 3 * rep.known_stderr
    assert rep.eve_known_fraction < rep.bound
    assert within_3sigma(r.counts.delta_bar, 0.03, r.counts.sifted_bits)


def test_determinism_and_trace():
    args = (
        150_000,
        DetectorModel(eta_plateau=0.5, dark_rate=1e-3),
        TestSourceConfig(kind="poisson", mu=0.2, dark_calibration_fraction=0.1),
        Blinding(blind_fraction=0.3),
    )
    a = run_session(*args, seed=9, trace=True)
    b = run_session(*args, seed=9, trace=True)
    c = run_session(*args, seed=9, trace=True, workers=3)
    assert a.counts == b.counts == c.counts
    assert a.eve_known_fraction == c.eve_known_fraction
    for k in a.trace:
        assert np.array_equal(a.trace[k], b.trace[k])
        assert np.array_equal(a.trace[k], c.trace[k])
    assert run_session(*args, seed=10).counts != a.counts
    assert 150_000 > BLOCK_SIZE


def test_trace_matches_counts(tmp_path):
    r = run_session(3000, DetectorModel(eta_plateau=0.7), TestSourceConfig(p_test=0.3),
                    Honest(error=0.1), seed=12, trace=True)
    path = tmp_path / "trace.tsv"
    write_trace(r.trace, path)
    header = path.read_text().splitlines()[0].split("\t")
    assert header == [
        "gate_index", "gate_kind", "attack_state", "click", "in_gate_time", "bit",
        "basis_match", "error",
    ]
    recs = read_trace(path)
    assert len(recs) == 3000
    sig = [x for x in recs if x["gate_kind"] == "signal"]
    assert len(sig) == r.counts.signal_gates
    assert sum(x["click"] for x in sig) == r.counts.signal_clicks
    assert sum(x["error"] for x in sig) == r.counts.sifted_errors
    assert sum(x["click"] and x["basis_match"] for x in sig) == r.counts.sifted_bits
    test = [x for x in recs if x["gate_kind"] == "test"]
    assert sum(x["click"] for x in test) == r.counts.test_clicks


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_gates=0),
        dict(atk=Tightness(0.5, 0.0, 0.5, trigger_intensity=2.5)),
        dict(det=DetectorModel(blindable=False), atk=Tightness(0.5, 0.0, 0.5)),
        dict(seed=-1),
    ],
)
def test_session_validation(kwargs):
    args = dict(n_gates=10, det=DetectorModel(), src=TestSourceConfig(), atk=Honest(), seed=0)
    args.update(kwargs)
    with pytest.raises(ValidationError):
        run_session(args["n_gates"], args["det"], args["src"], args["atk"], args["seed"])


def test_attack_validation():
    with pytest.raises(ValidationError):
        Tightness(eta_bar_target=0.2, delta_bar_target=0.2, q_bar_target=0.5)
    with pytest.raises(ValidationError):
        Tightness(eta_bar_target=0.1, q_bar_target=0.9)
    with pytest.raises(ValidationError):
        Blinding(eve_basis_policy="psychic")


# --- faint laser and non-deflecting testing ------------------------------------


def test_faint_laser_honest_click_rate():
    src = TestSourceConfig(kind="poisson", mu=0.3, p_test=0.5)
    r = run_session(400_000, DetectorModel(eta_plateau=0.4, dark_rate=1e-3), src, Honest(), seed=13)
    p = 1 - (1 - 1e-3) * math.exp(-0.3 * 0.4)
    assert within_3sigma(r.counts.q_t, p, r.counts.test_gates)


def test_non_deflecting_superlinearity_bound_holds():
    eps_s = 0.02
    det = DetectorModel(eta_plateau=0.5, superlinearity=eps_s)
    n = 400_000
    on = run_session(n, det, TestSourceConfig(p_test=0.5, deflecting=False),
                     Honest(loss=0.5), seed=14)
    off = run_session(n, det, TestSourceConfig(p_test=0.5), Honest(loss=0.5), seed=14)
    q, q_t, q_t_prime = on.counts.q_bar, off.counts.q_t, on.counts.q_t
    slack = 3 * math.sqrt(0.25 / on.counts.test_gates) * 3
    assert q_t_prime <= q + q_t + eps_s + slack
    assert q_t_prime > q + q_t - q * q_t - slack
    est = estimate_pipeline(on.counts, TestSourceConfig(p_test=0.5, deflecting=False),
                            ReceiverAssumptions(eps_s=eps_s))
    assert not rate_estimated(est.inputs).secure


def test_extinction_leak_perturbs_test_rate_by_at_most_leak():
    leak = 0.05
    det = DetectorModel(eta_plateau=0.5)
    atk = Blinding(blind_fraction=0.0, loss=0.0)
    n = 400_000
    r = run_session(n, det, TestSourceConfig(p_test=0.5, extinction_leak=leak), atk, seed=15)
    assert r.counts.q_t - 0.5 <= leak + 3 * math.sqrt(0.25 / r.counts.test_gates)


# --- attacks versus the bound ---------------------------------------------------


def test_honest_eve_knows_nothing():
    r = run_session(50_000, DetectorModel(eta_plateau=0.3), TestSourceConfig(), Honest(0.5, 0.02),
                    seed=16)
    rep = eve_information(r, r.true_inputs())
    assert rep.eve_known_fraction == 0.0 <= rep.bound


def test_full_blinding_fools_uncalibrated_operator():
    r = run_session(200_000, DetectorModel(), TestSourceConfig(), Blinding(blind_fraction=1.0),
                    seed=17)
    est = estimate_pipeline(r.counts, TestSourceConfig(), ReceiverAssumptions())
    rep = eve_information(r, est.inputs, nominal_eta=1.0)
    assert r.eve_known_fraction == 1.0
    assert r.counts.delta_bar == 0.0
    assert rep.naive_rate > 0.9
    assert not rep.rate_secure
    assert est.inputs.eta_e_bar == 0.0


def test_detector_without_blinding_exposes_intercept_resend():
    det = DetectorModel(blindable=False, blind_click_threshold=None)
    runs = [
        run_session(200_000, det, TestSourceConfig(), Blinding(blind_fraction=1.0), seed=s)
        for s in range(4)
    ]
    total = sum((r.counts for r in runs[1:]), runs[0].counts)
    assert within_3sigma(total.delta_bar, 0.25, total.sifted_bits)
    for r in runs:
        assert not eve_information(r, r.true_inputs()).violates_true_bound


@pytest.mark.parametrize("gating", [True, False])
def test_time_shift_attack(gating):
    det = DetectorModel(bit_mapped_gating=gating)
    r = run_session(200_000, det, TestSourceConfig(), TimeShift(shift=-0.4), seed=19)
    n = r.counts.sifted_bits
    if gating:
        assert within_3sigma(r.counts.delta_bar, 0.5, n)
        assert within_3sigma(r.sifted_bit_mean, 0.5, n)
        assert r.eve_known_fraction == 0.0
        est = estimate_pipeline(r.counts, TestSourceConfig(), ReceiverAssumptions())
        assert not rate_estimated(est.inputs).secure
    else:
        # Without gating the early-edge detector mismatch leaks every bit silently.
        assert r.counts.delta_bar == 0.0
        assert r.sifted_bit_mean == 0.0
        assert r.eve_known_fraction == 1.0
    assert not eve_information(r, r.true_inputs()).violates_true_bound


def _random_config(rng: random.Random, gating_only: bool = False):
    eta_p = rng.uniform(0.05, 1.0)
    tilt = rng.uniform(0.0, 0.1) * eta_p
    det = DetectorModel(
        eta_plateau=eta_p,
        plateau_tilt=tilt,
        dark_rate=rng.choice([0.0, 1e-4, 1e-2]),
        bit_mapped_gating=True if gating_only else rng.random() < 0.7,
    )
    src = TestSourceConfig(
        kind="single_photon",
        p_test=rng.uniform(0.1, 0.6),
    )
    kind = rng.choice(["honest", "blinding", "tightness", "time_shift"])
    if kind == "honest":
        atk = Honest(loss=rng.random(), error=rng.uniform(0, 0.1))
    elif kind == "blinding":
        atk = Blinding(
            blind_fraction=rng.random(),
            trigger_intensity=rng.choice([0.5, 1.5, 2.5]),
            eve_basis_policy=rng.choice(["random", "z", "x"]),
            loss=rng.random(),
            error=rng.uniform(0, 0.05),
        )
    elif kind == "tightness":
        eta = rng.uniform(0.2, 1.0)
        q = rng.uniform(0.05, 1.0 / (2 - eta))
        atk = Tightness(eta_bar_target=eta, delta_bar_target=rng.uniform(0, eta / 2), q_bar_target=q)
    else:
        atk = TimeShift(shift=rng.uniform(-0.45, 0.45), loss=rng.random() * 0.5)
    return det, src, atk, ReceiverAssumptions(eps_t=tilt)


def test_eve_never_beats_true_bound_in_random_configurations():
    rng = random.Random(20)
    for i in range(1000):
        det, src, atk, _ = _random_config(rng)
        r = run_session(4000, det, src, atk, seed=i)
        if r.counts.signal_clicks == 0:
            continue
        rep = eve_information(r, r.true_inputs())
        assert not rep.violates_true_bound, (det, atk, rep)


def test_estimate_is_a_lower_bound_in_random_scenarios():
    rng = random.Random(21)
    checked = 0
    for i in range(1000):
        det, src, atk, a = _random_config(rng, gating_only=True)
        r = run_session(6000, det, src, atk, seed=10_000 + i)
        if r.counts.signal_clicks == 0:
            continue
        est = estimate_pipeline(r.counts, src, a)
        q = r.counts.q_bar
        true_eta_e = eta_e_from_eta_bar(q, r.true_eta_bar)
        slack = 3 * est.diagnostics["q_t_stderr"] + 1e-12
        assert est.inputs.eta_e_bar <= true_eta_e + slack, (det, atk, est.diagnostics)
        if isinstance(atk, Honest):
            assert est.inputs.eta_e_bar <= q * det.inner_min + (1 - q) + slack
        checked += 1
    assert checked > 900


def test_calibration_catches_blinding_across_seeds():
    det = DetectorModel()
    src = TestSourceConfig(p_test=0.5)
    flagged = 0
    seeds = range(40)
    for s in seeds:
        r = run_session(200_000, det, src, Blinding(blind_fraction=0.6, loss=0.7), seed=s)
        assert r.counts.test_gates >= 99_000
        assert r.counts.delta_bar < 0.01
        est = estimate_pipeline(r.counts, src, ReceiverAssumptions())
        flagged += not rate_estimated(est.inputs).secure
    assert flagged == len(seeds)


def test_pipeline_on_honest_simulation():
    src = TestSourceConfig(p_test=0.3)
    r = run_session(300_000, DetectorModel(eta_plateau=0.4), src, Honest(loss=0.2), seed=22)
    est = estimate_pipeline(r.counts, src, ReceiverAssumptions())
    assert abs(est.inputs.eta_e_bar - 0.4) <= 3 * est.diagnostics["eta_e_stderr"]
    # A 0.4-efficiency receiver without a ceiling cannot produce key here.
    assert not rate_estimated(est.inputs).secure
    with_ceiling = KeyRateInputs(
        est.inputs.q_bar, est.inputs.delta_bar, est.inputs.eta_e_bar, eta_max=0.41
    )
    from qkdcal.keyrate import rate_estimated_etamax

    assert rate_estimated_etamax(with_ceiling).secure
