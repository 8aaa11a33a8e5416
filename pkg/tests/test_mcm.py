import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsmgan.mcm import (
    McmConfig,
    assemble_inputs,
    build_mcm,
    load_mcm,
    residual_first_channel,
    save_mcm,
    slot_layout,
    zscore,
)

from oracles import brute_mcm


def test_zero_input_gives_zero_matrices():
    seq = build_mcm(np.zeros((3, 60)), McmConfig())
    assert not seq.matrices.any()


def test_constant_ones_have_unit_diagonal():
    seq = build_mcm(np.ones((4, 90)), McmConfig())
    valid = seq.matrices[seq.first_valid:]
    np.testing.assert_allclose(np.diagonal(valid, axis1=1, axis2=2), 1.0)


def test_hand_evaluated_inner_product():
    x = np.array([[1, 2, 3, 4, 5], [2, 2, 2, 2, 2]], dtype=float)
    seq = build_mcm(x, McmConfig(windows=(5,), step=5))
    assert seq.matrices[0, 0, 1, 0] == pytest.approx(6.0)
    assert seq.matrices[0, 1, 0, 0] == pytest.approx(6.0)
    assert seq.matrices[0, 0, 0, 0] == pytest.approx(55 / 5)


def test_matches_brute_force():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 73))
    cfg = McmConfig(windows=(3, 7, 12), step=4)
    np.testing.assert_allclose(build_mcm(x, cfg).matrices, brute_mcm(x, cfg.windows, cfg.step), atol=1e-12)


def test_short_series_rejected():
    with pytest.raises(ValueError):
        build_mcm(np.ones((2, 20)), McmConfig())


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), T=st.integers(30, 200), step=st.integers(1, 9), seed=st.integers(0, 10_000))
def test_symmetric_psd_and_step_count(n, T, step, seed):
    x = np.random.default_rng(seed).normal(size=(n, T))
    seq = build_mcm(x, McmConfig(step=step))
    assert seq.M == T // step
    mats = np.moveaxis(seq.matrices, -1, 1)
    assert np.array_equal(mats, np.swapaxes(mats, -1, -2))
    assert np.linalg.eigvalsh(mats).min() >= -1e-8


@pytest.mark.parametrize("kwargs", [dict(windows=(10, 5)), dict(windows=(0, 5)), dict(step=0),
                                    dict(history=-1), dict(smoothing_width=0),
                                    dict(seasonal_counts=(1,), seasonal_periods=())])
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        McmConfig(**kwargs)


def test_history_only_gives_five_slots():
    seq = build_mcm(np.random.default_rng(0).normal(size=(3, 300)), McmConfig())
    inputs = assemble_inputs(seq, McmConfig())
    assert inputs.slots.shape[1] == 5
    np.testing.assert_array_equal(inputs.target, seq.matrices[inputs.step_index])
    np.testing.assert_array_equal(inputs.slots[:, 0], seq.matrices[inputs.step_index - 4])


def _seasonal_setup(width):
    cfg = McmConfig(windows=(2, 4), step=2, history=2, seasonal_counts=(1,), seasonal_periods=(40,),
                    smoothing_width=width)
    seq = build_mcm(np.random.default_rng(1).normal(size=(3, 400)), cfg)
    return cfg, seq, assemble_inputs(seq, cfg)


def test_width_one_seasonal_slot_is_raw_lagged_step():
    cfg, seq, inputs = _seasonal_setup(1)
    assert inputs.slot_offsets == (20, 2, 1, 0)
    np.testing.assert_array_equal(inputs.slots[:, 0], seq.matrices[inputs.step_index - 20])


def test_smoothed_seasonal_slot_is_neighbour_mean():
    cfg, seq, inputs = _seasonal_setup(6)
    for row, t in enumerate(inputs.step_index):
        centre = t - 20
        expected = np.mean([seq.matrices[centre + d] for d in range(-3, 3)], axis=0)
        np.testing.assert_allclose(inputs.slots[row, 0], expected, atol=1e-12)


def test_first_target_has_full_history():
    cfg, seq, inputs = _seasonal_setup(6)
    assert inputs.step_index[0] - 20 - 3 == seq.first_valid


def test_holiday_slots_masked_and_target_never():
    cfg = McmConfig(windows=(2, 4), step=2, history=3, seasonal_counts=(1,), seasonal_periods=(40,),
                    smoothing_width=1)
    x = np.random.default_rng(2).normal(size=(2, 400))
    seq = build_mcm(x, cfg)
    bits = np.zeros(seq.M, dtype=bool)
    bits[100] = True
    inputs = assemble_inputs(seq, cfg, holidays=bits)
    for row, t in enumerate(inputs.step_index):
        for j, off in enumerate(inputs.slot_offsets):
            expected = off == 0 or not bits[t - off]
            assert inputs.mask[row, j] == expected
    assert inputs.mask[:, -1].all()
    assert not inputs.mask.all()
    assert assemble_inputs(seq, cfg, holidays=bits, use_mask=False).mask.all()


def test_seasonal_period_shorter_than_step_rejected():
    cfg = McmConfig(step=5, seasonal_counts=(1,), seasonal_periods=(3,))
    with pytest.raises(ValueError):
        slot_layout(cfg)


def test_residual_first_channel():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(2, 3, 3, 3))
    assert not residual_first_channel(x, x).any()
    np.testing.assert_array_equal(residual_first_channel(np.zeros_like(y), y), -y[..., 0])
    expected = np.array([[x[i, j, 0] - y[i, j, 0] for j in range(3)] for i in range(3)])
    np.testing.assert_array_equal(residual_first_channel(x, y), expected)
    with pytest.raises(ValueError):
        residual_first_channel(x, y[:2])


def test_zscore_uses_training_statistics():
    x = np.vstack([np.arange(10.0), np.full(10, 4.0)])
    z = zscore(x, 5)
    np.testing.assert_allclose(z[0, :5].mean(), 0.0, atol=1e-12)
    np.testing.assert_allclose(z[0, :5].std(), 1.0)
    assert np.all(z[1] == 0)


def test_persistence_roundtrip(tmp_path):
    seq = build_mcm(np.random.default_rng(4).normal(size=(3, 100)), McmConfig())
    seq.holiday_bits[3] = True
    save_mcm(seq, tmp_path / "mcm")
    back = load_mcm(tmp_path / "mcm")
    np.testing.assert_array_equal(back.matrices, seq.matrices)
    np.testing.assert_array_equal(back.holiday_bits, seq.holiday_bits)
    np.testing.assert_array_equal(back.step_timestamps, seq.step_timestamps)
    assert (back.step, back.first_valid) == (seq.step, seq.first_valid)


def test_two_seasonal_slots_per_period_by_default():
    cfg = McmConfig(seasonal_periods=(1440, 10080))
    assert cfg.seasonal_counts == (2, 2)
    assert cfg.n_slots == 4 + 1 + 4
    assert McmConfig().n_slots == 5
