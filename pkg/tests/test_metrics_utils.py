import numpy as np
import pytest

from utils.errors import DegeneratePowerError, InvalidInputError
from utils.geometry_utils import ArrayConfig, ChannelStats, channel_covariance
from utils.metrics_utils import (AN_ID, COMMON_ID, EXTRA_ID, BeamformerSet, ChannelSet, RateAllocation,
                                 common_rate_budget, common_secrecy_budget, common_sinr, eaves_common_sinr,
                                 eaves_private_sinr, eaves_rates, evaluate, fit_allocation, power_allocation,
                                 private_id, private_sinr, rate, security_constraint_satisfied, trace_product)
from tests.conftest import NOISE, receiver


def _identity_channel(n=2, gain=1.0):
    return ChannelStats(covariance=gain * np.eye(n), los_coeff=0.0, nlos_coeff=gain, los_vector=np.ones(n))


def _diag_set():
    return BeamformerSet(
        w_private=[np.diag([1.0, 0.0]), np.diag([0.0, 2.0])],
        w_common=np.diag([0.5, 0.5]),
        w_extra=np.diag([0.25, 0.25]),
    )


def test_trace_product_matches_numpy(rng):
    A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    B = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    assert trace_product(A, B) == pytest.approx(float(np.real(np.trace(A @ B))))


def test_beamformer_set_power_and_ids():
    bf = _diag_set()
    assert bf.n_tx == 2 and bf.n_users == 2
    assert bf.total_power == pytest.approx(1.0 + 2.0 + 1.0 + 0.5)
    assert list(bf.matrices()) == [COMMON_ID, "W_1", "W_2", EXTRA_ID]
    assert private_id(0) == "W_1"


def test_beamformer_set_rejects_bad_matrices():
    with pytest.raises(InvalidInputError):
        BeamformerSet(w_private=[])
    with pytest.raises(InvalidInputError):
        BeamformerSet(w_private=[np.array([[1.0, 1.0], [0.0, 1.0]])])
    with pytest.raises(InvalidInputError):
        BeamformerSet(w_private=[np.eye(2)], w_common=np.eye(3))


def test_an_excluded_from_power_but_reported():
    bf = BeamformerSet(w_private=[np.eye(2)], w_an=0.5 * np.eye(2))
    assert bf.total_power == pytest.approx(2.0)
    assert power_allocation(bf)[AN_ID] == pytest.approx(1.0)
    assert AN_ID not in bf.matrices()


def test_is_psd():
    assert _diag_set().is_psd()
    assert not BeamformerSet(w_private=[np.diag([1.0, -0.5])]).is_psd()


def test_sinr_formulas_on_identity_channel():
    bf = _diag_set()
    ch = _identity_channel()
    # every trace is just the matrix power
    assert common_sinr(bf, ch, 1.0) == pytest.approx(1.0 / (3.0 + 0.5 + 1.0))
    assert private_sinr(bf, ch, 0, 1.0) == pytest.approx(1.0 / (2.0 + 0.5 + 1.0))
    assert private_sinr(bf, ch, 1, 0.5) == pytest.approx(2.0 / (1.0 + 0.5 + 0.5))
    assert eaves_private_sinr(bf, ch, 0, 1.0) == pytest.approx(1.0 / (1.0 + 2.0 + 0.5 + 1.0))


def test_sdma_set_has_zero_common_sinr():
    bf = BeamformerSet(w_private=[np.eye(2)])
    assert common_sinr(bf, _identity_channel(), 1.0) == 0.0
    assert eaves_common_sinr(bf, _identity_channel(), 1.0) == 0.0


def test_zero_noise_and_zero_interference_is_infinite():
    bf = BeamformerSet(w_private=[np.eye(2)])
    assert private_sinr(bf, _identity_channel(), 0, 0.0) == float("inf")


def test_sinr_input_validation():
    bf = _diag_set()
    with pytest.raises(InvalidInputError):
        private_sinr(bf, _identity_channel(), 2, 1.0)
    with pytest.raises(InvalidInputError):
        common_sinr(bf, _identity_channel(), -1.0)


def test_artificial_noise_only_hurts_eavesdroppers():
    array = ArrayConfig(n_tx=4, n_rx=4)
    users = [receiver(60.0, -45.0)]
    eaves = [receiver(100.0, 10.0)]
    channels = ChannelSet.from_geometry(users, eaves, array, NOISE, NOISE)
    base = BeamformerSet(w_private=[0.3 * np.eye(4)], w_common=0.2 * np.eye(4))
    jammed = BeamformerSet(w_private=base.w_private, w_common=base.w_common, w_an=0.5 * np.eye(4))

    common_plain, private_plain = eaves_rates(base, channels)
    common_an, private_an = eaves_rates(jammed, channels, include_an=True)
    assert np.all(common_an < common_plain)
    assert np.all(private_an < private_plain)

    h = channels.users[0]
    assert private_sinr(jammed, h, 0, NOISE) == pytest.approx(private_sinr(base, h, 0, NOISE))


def test_evaluate_secrecy_and_ratios():
    array = ArrayConfig(n_tx=4, n_rx=4)
    users = [receiver(60.0, -45.0), receiver(80.0, 40.0)]
    eaves = [receiver(150.0, 0.0)]
    channels = ChannelSet.from_geometry(users, eaves, array, NOISE, NOISE)
    bf = BeamformerSet(
        w_private=[0.2 * np.outer(c.los_vector, c.los_vector.conj()) / 4 for c in channels.users],
        w_common=0.1 * np.eye(4),
        w_extra=0.05 * np.eye(4),
    )
    report = evaluate(bf, RateAllocation((0.5, 0.25), (0.1, 0.1)), channels)

    np.testing.assert_allclose(report.total_rates, np.array([0.5, 0.25]) + report.private_rates)
    leak = report.eaves_private_rates.max(axis=1)
    np.testing.assert_allclose(report.secrecy_rates, 0.1 + np.maximum(report.private_rates - leak, 0.0))
    np.testing.assert_allclose(report.urpr, report.total_rates / bf.total_power)
    assert report.eaves_private_rates.shape == (2, 1)
    assert report.min_rate == pytest.approx(report.total_rates.min())
    assert set(report.to_dict()) >= {"urpr", "usrpr", "total_power", "secrecy_rates"}


def test_evaluate_without_eavesdroppers():
    array = ArrayConfig(n_tx=3, n_rx=3)
    channels = ChannelSet.from_geometry([receiver(60.0, 0.0)], [], array, NOISE, NOISE)
    report = evaluate(BeamformerSet(w_private=[np.eye(3)]), RateAllocation((0.0,)), channels)
    assert report.eaves_common_rates.size == 0
    assert report.common_security_margin == float("inf")
    np.testing.assert_allclose(report.secrecy_rates, report.private_rates)
    assert security_constraint_satisfied(report)


def test_evaluate_zero_power_is_flagged():
    array = ArrayConfig(n_tx=2, n_rx=2)
    channels = ChannelSet.from_geometry([receiver(60.0, 0.0)], [], array, NOISE, NOISE)
    bf = BeamformerSet.zeros(2, 1)
    report = evaluate(bf, RateAllocation.zeros(1), channels)
    assert report.degenerate_power
    np.testing.assert_allclose(report.urpr, 0.0)
    with pytest.raises(DegeneratePowerError):
        evaluate(bf, RateAllocation((0.5,)), channels)


def test_evaluate_rejects_mismatched_users():
    array = ArrayConfig(n_tx=2, n_rx=2)
    channels = ChannelSet.from_geometry([receiver(60.0, 0.0)], [], array, NOISE, NOISE)
    with pytest.raises(InvalidInputError):
        evaluate(BeamformerSet.zeros(2, 2), RateAllocation.zeros(2), channels)


def test_rate_allocation_validation():
    with pytest.raises(InvalidInputError):
        RateAllocation((0.1, -0.2))
    with pytest.raises(InvalidInputError):
        RateAllocation((0.1, 0.2), (0.1,))


def test_channel_set_validation():
    ch = channel_covariance(receiver(60.0, 0.0), ArrayConfig(2, 2))
    with pytest.raises(InvalidInputError):
        ChannelSet(users=[])
    with pytest.raises(InvalidInputError):
        ChannelSet(users=[ch], user_noise=[])
    with pytest.raises(InvalidInputError):
        ChannelSet(users=[ch], user_noise=[-1.0])


def test_common_budgets():
    assert common_rate_budget([1.5, 0.75, 2.0]) == 0.75
    with pytest.raises(InvalidInputError):
        common_rate_budget([])


def test_common_secrecy_budget_clips_at_zero():
    array = ArrayConfig(n_tx=2, n_rx=2)
    # eavesdropper sits where the user is and is closer, so the margin is negative
    channels = ChannelSet.from_geometry([receiver(100.0, 0.0)], [receiver(50.0, 0.0)], array, NOISE, NOISE)
    bf = BeamformerSet(w_private=[0.1 * np.eye(2)], w_common=np.ones((2, 2)))
    report = evaluate(bf, RateAllocation.zeros(1, secrecy=True), channels)
    assert report.common_security_margin < 0
    assert common_secrecy_budget(report) == 0.0
    assert not security_constraint_satisfied(report)


def test_fit_allocation_scales_proportionally():
    fitted = fit_allocation(RateAllocation((1.0, 3.0), (0.5, 0.5)), budget=2.0, secrecy_budget=0.5)
    assert fitted.common_parts == pytest.approx((0.5, 1.5))
    assert fitted.secrecy_common_parts == pytest.approx((0.25, 0.25))
    untouched = fit_allocation(RateAllocation((0.2, 0.3)), budget=1.0)
    assert untouched.common_parts == (0.2, 0.3)


def test_rate_is_log2():
    assert rate(3.0) == pytest.approx(2.0)
    assert rate(0.0) == 0.0
