"""Training loop, presets, serialization, and small end-to-end checks."""

from dataclasses import replace

import numpy as np
import pytest

from sliceq.dsp import make_prng
from sliceq.framing import FramingSpec
from sliceq.link import LinkConfig, SlicedSignal, resample_sliced, shape_drive, simulate_link
from sliceq.rxdsp import count_ber
from sliceq.training import (
    EqualizerSpec,
    TrainingDiverged,
    build_net,
    equalize,
    equalize_values,
    load_model,
    save_model,
    spec_from_dict,
    spec_to_dict,
    table_preset,
    train,
)


def _b2b_signal(n_symbols, seed, snr_db=np.inf, sps_out=None, length_km=0.0):
    config = LinkConfig(fiber_length_km=length_km, snr_db=snr_db)
    rng = make_prng(seed)
    bits = rng.integers(0, 2, n_symbols).astype(np.uint8)
    sliced = simulate_link(bits, config, rng)
    if sps_out is not None:
        sliced = resample_sliced(sliced, sps_out)
    return bits, sliced, config


class TestPresets:
    def test_symbol_mode_row(self):
        spec = table_preset("fnn", "sy")
        assert spec.framing.memory == 14
        assert spec.framing.features == 56
        assert (spec.n_hidden, spec.f_hidden, spec.f_out) == (10, "relu", "sigmoid")
        assert (spec.var_target, spec.learn_rate, spec.mini_batch) == (0.69, 1e-2, 1000)

    def test_sample_mode_row(self):
        spec = table_preset("cnn", "sa")
        assert spec.framing.memory == 49
        assert spec.n_filter_width == 49
        assert (spec.n_hidden, spec.f_hidden, spec.f_out) == (15, "sigmoid", "linear")
        assert (spec.var_target, spec.learn_rate, spec.mini_batch) == (0.17, 0.5e-2, 1800)

    def test_recurrent_rows_use_tanh(self):
        assert table_preset("gru", "sa").f_hidden == "tanh"
        assert table_preset("gru", "sy").f_hidden == "tanh"

    def test_spec_validation(self):
        framing = FramingSpec(mode="sy", context_symbols=3, sps=2, n_slices=4)
        with pytest.raises(ValueError):
            EqualizerSpec(arch="cnn", framing=framing, n_hidden=5,
                          f_hidden="sigmoid", f_out="sigmoid", var_target=0.69,
                          learn_rate=1e-2, mini_batch=100)  # no width
        with pytest.raises(ValueError):
            EqualizerSpec(arch="gru", framing=framing, n_hidden=5,
                          f_hidden="relu", f_out="sigmoid", var_target=0.69,
                          learn_rate=1e-2, mini_batch=100)
        with pytest.raises(ValueError):
            EqualizerSpec(arch="fnn", framing=framing, n_hidden=0,
                          f_hidden="relu", f_out="sigmoid", var_target=0.69,
                          learn_rate=1e-2, mini_batch=100)

    def test_spec_dict_round_trip(self):
        spec = table_preset("cnn", "sy", seed=11, epochs=42)
        assert spec_from_dict(spec_to_dict(spec)) == spec

    def test_parameter_counts_match_formulas(self):
        fnn = build_net(table_preset("fnn", "sy"))
        assert fnn.w_hidden.size == 14 * 4 * 10
        assert fnn.w_out.size == 10
        cnn = build_net(table_preset("cnn", "sy"))
        assert cnn.filters.size == 15 * 14 * 4
        assert cnn.w_out.size == (14 - 14 + 1) * 15


def _quick_sy_spec(**kw):
    kw.setdefault("epochs", 60)
    kw.setdefault("seed", 3)
    return table_preset("fnn", "sy", **kw)


class TestTrainSymbolMode:
    def test_back_to_back_recovers_bits(self):
        """Noiseless 0 km: the trained net must separate the rails fully."""
        bits, sliced, _ = _b2b_signal(12288, seed=101, sps_out=2)
        model = train(_quick_sy_spec(epochs=800), sliced, bits, n_train_units=6000)
        decided, sl = equalize(model, sliced)
        result = count_ber(decided[6000 - sl.start:], bits[6000:sl.stop])
        assert result.bits_counted > 5000
        assert result.ber == 0.0

    def test_loss_trace_decreases(self):
        bits, sliced, _ = _b2b_signal(8192, seed=102, sps_out=2)
        model = train(_quick_sy_spec(seed=7), sliced, bits, n_train_units=4000)
        trace = model.loss_trace
        assert trace.size >= 2
        assert trace[-1] < trace[0]
        smooth = np.convolve(trace, np.ones(min(10, trace.size)) / min(10, trace.size),
                             mode="valid")
        assert smooth[-1] <= smooth[0]

    def test_zero_learn_rate_leaves_parameters_at_init(self):
        bits, sliced, _ = _b2b_signal(4096, seed=103, sps_out=2)
        spec = replace(table_preset("fnn", "sy", seed=5, epochs=3), learn_rate=0.0)
        model = train(spec, sliced, bits, n_train_units=2000)
        fresh = build_net(spec)
        for name, p in model.net.params().items():
            assert np.array_equal(p, fresh.params()[name])

    def test_deterministic_given_seed(self):
        bits, sliced, _ = _b2b_signal(4096, seed=104, sps_out=2)
        spec = _quick_sy_spec(epochs=8)
        a = train(spec, sliced, bits, n_train_units=2000)
        b = train(spec, sliced, bits, n_train_units=2000)
        for name, p in a.net.params().items():
            assert np.array_equal(p, b.net.params()[name])
        assert a.rule == b.rule
        assert np.array_equal(a.loss_trace, b.loss_trace)

    def test_divergence_reported(self):
        bits, sliced, _ = _b2b_signal(4096, seed=105, sps_out=2)
        framing = FramingSpec(mode="sy", context_symbols=3, sps=2, n_slices=4)
        spec = EqualizerSpec(arch="fnn", framing=framing, n_hidden=10,
                             f_hidden="tanh", f_out="linear", var_target=0.69,
                             learn_rate=1e12, mini_batch=1000, epochs=40, seed=1)
        with pytest.raises(TrainingDiverged, match="epoch"):
            train(spec, sliced, bits, n_train_units=2000)

    def test_input_validation(self):
        bits, sliced, _ = _b2b_signal(2048, seed=106, sps_out=2)
        spec = _quick_sy_spec()
        with pytest.raises(ValueError):
            train(spec, sliced, bits, n_train_units=10 ** 6)
        sliced8 = _b2b_signal(512, seed=107)[1]
        with pytest.raises(ValueError):
            train(spec, sliced8, bits, n_train_units=100)


class TestTrainSampleMode:
    def test_back_to_back_recovers_bits(self):
        """Sample-rate regression, then matched filter, then decisions."""
        bits, sliced, config = _b2b_signal(4096, seed=201)
        drive = shape_drive(bits, config)
        spec = table_preset("fnn", "sa", seed=2, epochs=300)
        model = train(spec, sliced, bits, n_train_units=2048 * 8, drive=drive)
        assert model.mf_phase is not None
        decided, sl = equalize(model, sliced)
        start = max(sl.start, 2048)
        result = count_ber(decided[start - sl.start:], bits[start:sl.stop])
        assert result.bits_counted > 1500
        assert result.ber == 0.0

    def test_drive_required(self):
        bits, sliced, _ = _b2b_signal(1024, seed=202)
        spec = table_preset("fnn", "sa", epochs=2)
        with pytest.raises(ValueError, match="drive"):
            train(spec, sliced, bits, n_train_units=2048)


class TestModelSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        bits, sliced, _ = _b2b_signal(4096, seed=301, sps_out=2)
        model = train(_quick_sy_spec(epochs=6), sliced, bits, n_train_units=2000)
        path = tmp_path / "model.npz"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.spec == model.spec
        assert (loaded.offset, loaded.scale) == (model.offset, model.scale)
        assert loaded.rule == model.rule
        assert loaded.mf_phase == model.mf_phase
        for name, p in model.net.params().items():
            assert np.array_equal(p, loaded.net.params()[name])
        assert np.array_equal(loaded.loss_trace, model.loss_trace)

    def test_loaded_model_equalizes_identically(self, tmp_path):
        bits, sliced, _ = _b2b_signal(4096, seed=302, sps_out=2)
        model = train(_quick_sy_spec(epochs=6), sliced, bits, n_train_units=2000)
        path = tmp_path / "model.npz"
        save_model(model, path)
        loaded = load_model(path)
        a, sla = equalize(model, sliced)
        b, slb = equalize(loaded, sliced)
        assert sla == slb
        assert np.array_equal(a, b)

    def test_version_guard(self, tmp_path):
        bits, sliced, _ = _b2b_signal(4096, seed=303, sps_out=2)
        model = train(_quick_sy_spec(epochs=2), sliced, bits, n_train_units=2000)
        path = tmp_path / "model.npz"
        save_model(model, path)
        data = dict(np.load(path))
        data["format_version"] = np.int64(999)
        np.savez(path, **data)
        with pytest.raises(ValueError, match="format"):
            load_model(path)


class TestSliceOrderInvariance:
    def test_permuted_slices_with_permuted_weights_match(self):
        """Nothing in the pipeline privileges a slice ordering: permuting
        the slice axis and the first-layer weights together leaves the
        recovered bits untouched."""
        bits, sliced, _ = _b2b_signal(6144, seed=401, sps_out=2)
        model = train(_quick_sy_spec(epochs=10), sliced, bits, n_train_units=3000)
        perm = np.array([2, 0, 3, 1])
        permuted = SlicedSignal(slices=sliced.slices[perm], sps=sliced.sps,
                                sample_rate=sliced.sample_rate,
                                symbol_alignment=sliced.symbol_alignment)
        base_bits, sl_base = equalize(model, sliced)
        # feature layout is time-major: index = step * n_slices + slice,
        # so permuting the slice axis pairs feature (step, r) with the
        # weight row that previously served slice perm[r]
        w = model.net.w_hidden
        m = model.spec.framing.memory
        model.net.w_hidden[...] = w.reshape(m, 4, -1)[:, perm, :].reshape(w.shape)
        perm_bits, sl_perm = equalize(model, permuted)
        assert sl_perm == sl_base
        assert np.array_equal(perm_bits, base_bits)


class TestEqualizeContracts:
    def test_rate_mismatch_rejected(self):
        bits, sliced, _ = _b2b_signal(2048, seed=501, sps_out=2)
        model = train(_quick_sy_spec(epochs=2), sliced, bits, n_train_units=1000)
        sliced8 = _b2b_signal(2048, seed=501)[1]
        with pytest.raises(ValueError):
            equalize(model, sliced8)

    def test_values_align_with_slice(self):
        bits, sliced, _ = _b2b_signal(2048, seed=502, sps_out=2)
        model = train(_quick_sy_spec(epochs=2), sliced, bits, n_train_units=1000)
        values, sl = equalize_values(model, sliced)
        assert values.size == sl.stop - sl.start
        assert sl.start == model.spec.framing.context_symbols
