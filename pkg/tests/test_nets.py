"""Network kernel checks: brute-force forward oracles and gradient suite.

Every oracle here is a from-scratch nested-loop recomputation in plain
Python floats; none of them call back into the package's array code.
"""

import math

import numpy as np
import pytest

from sliceq.dsp import make_prng
from sliceq.nets import ConvNet, FeedforwardNet, GruNet, MultCounter, parameter_multiplies


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


def _act(name: str, z: float) -> float:
    if name == "sigmoid":
        return _sigmoid(z)
    if name == "tanh":
        return math.tanh(z)
    if name == "relu":
        return max(z, 0.0)
    return z


def _fnn_oracle(net: FeedforwardNet, frame: np.ndarray) -> float:
    x = [float(v) for v in frame.reshape(-1)]
    hidden = []
    for j in range(net.n_hidden):
        acc = float(net.b_hidden[j])
        for i in range(net.n_features):
            acc += x[i] * float(net.w_hidden[i, j])
        hidden.append(_act(net.f_hidden_name, acc))
    out = 0.0
    for j in range(net.n_hidden):
        out += hidden[j] * float(net.w_out[j, 0])
    return _act(net.f_out_name, out)


def _gru_oracle(net: GruNet, frame: np.ndarray) -> float:
    sign = -1.0 if net.variant == "verbatim" else 1.0
    nh, ns = net.n_hidden, net.n_slices
    h = [0.0] * nh
    o_sum = 0.0
    for t in range(frame.shape[0]):
        u = [float(v) for v in frame[t]]
        r, s, c = [0.0] * nh, [0.0] * nh, [0.0] * nh
        for j in range(nh):
            ar = float(net.b_r[j])
            as_ = float(net.b_s[j])
            v = float(net.b_h[j])
            ah = 0.0
            for i in range(ns):
                ar += u[i] * float(net.w_r[i, j])
                as_ += u[i] * float(net.w_s[i, j])
                ah += u[i] * float(net.w_h[i, j])
            for k in range(nh):
                ar += h[k] * float(net.u_r[k, j])
                as_ += h[k] * float(net.u_s[k, j])
                v += h[k] * float(net.u_h[k, j])
            r[j] = _sigmoid(ar)
            s[j] = _sigmoid(as_)
            c[j] = math.tanh(ah + r[j] * v)
        h = [(1.0 - s[j]) * h[j] + sign * s[j] * c[j] for j in range(nh)]
        if net.readout == "per_step_mean":
            o_sum += sum(h[j] * float(net.w_y[j, 0]) for j in range(nh))
    if net.readout == "per_step_mean":
        o = o_sum / frame.shape[0] + float(net.b_y[0])
    else:
        o = sum(h[j] * float(net.w_y[j, 0]) for j in range(nh)) + float(net.b_y[0])
    return _act(net.f_out_name, o)


def _cnn_oracle(net: ConvNet, frame: np.ndarray) -> float:
    maps = []
    for p in range(net.n_positions):
        for g in range(net.n_hidden):
            acc = float(net.bias[g])
            for w in range(net.width):
                for n in range(net.n_slices):
                    acc += float(frame[p + w, n]) * float(net.filters[g, w, n])
            maps.append((p, g, _act(net.f_hidden_name, acc)))
    out = 0.0
    for p, g, val in maps:
        out += val * float(net.w_out[p * net.n_hidden + g, 0])
    return _act(net.f_out_name, out)


class TestFeedforward:
    def test_zero_weights_linear_output(self):
        net = FeedforwardNet(3, 2, 2, "sigmoid", "linear", make_prng(1))
        for p in net.params().values():
            p[...] = 0.0
        y, _ = net.forward(np.ones((1, 3, 2)))
        assert y[0] == 0.0

    def test_hand_instance(self):
        """x=[1,2], W_h=[[0.5],[-0.25]], linear everywhere, W_out=[[2]] -> 0."""
        net = FeedforwardNet(2, 1, 1, "linear", "linear", make_prng(1))
        net.w_hidden[...] = np.array([[0.5], [-0.25]])
        net.b_hidden[...] = 0.0
        net.w_out[...] = np.array([[2.0]])
        y, _ = net.forward(np.array([1.0, 2.0]).reshape(1, 2, 1))
        assert y[0] == pytest.approx(2.0 * (1.0 * 0.5 + 2.0 * -0.25), abs=1e-15)

    def test_matches_nested_loop_oracle(self):
        """Vectorized forward equals plain-Python recomputation to 1e-12."""
        rng = make_prng(2)
        for _ in range(10):
            m = int(rng.integers(2, 7))
            ns = int(rng.integers(1, 5))
            nh = int(rng.integers(1, 4))
            fh = ("sigmoid", "tanh", "relu", "linear")[int(rng.integers(0, 4))]
            fo = ("linear", "sigmoid")[int(rng.integers(0, 2))]
            net = FeedforwardNet(m, ns, nh, fh, fo, rng)
            frame = rng.standard_normal((1, m, ns))
            y, _ = net.forward(frame)
            assert abs(y[0] - _fnn_oracle(net, frame[0])) < 1e-12


class TestGru:
    def test_all_zero_params_emit_readout_bias(self):
        """Zero weights freeze the state at 0, so the output is the bias."""
        net = GruNet(5, 3, 2, "linear", make_prng(3))
        for p in net.params().values():
            p[...] = 0.0
        net.b_y[...] = 0.7
        y, _ = net.forward(make_prng(4).standard_normal((2, 5, 3)))
        assert np.allclose(y, 0.7, atol=1e-15)

    def test_single_step_hand_arithmetic(self):
        """One step, one unit: gates computed longhand match the kernel."""
        net = GruNet(1, 1, 1, "linear", make_prng(5), variant="verbatim")
        net.w_r[...] = 0.3
        net.u_r[...] = 0.2
        net.b_r[...] = 0.1
        net.w_s[...] = -0.4
        net.u_s[...] = 0.5
        net.b_s[...] = 0.2
        net.w_h[...] = 0.7
        net.u_h[...] = -0.3
        net.b_h[...] = 0.05
        net.w_y[...] = 1.5
        net.b_y[...] = -0.2
        u = 0.9
        r = _sigmoid(u * 0.3 + 0.1)
        s = _sigmoid(u * -0.4 + 0.2)
        c = math.tanh(u * 0.7 + r * 0.05)
        h1 = (1.0 - s) * 0.0 - s * c
        expect = 1.5 * h1 - 0.2
        y, _ = net.forward(np.array([[[u]]]))
        assert y[0] == pytest.approx(expect, abs=1e-15)

    def test_matches_unrolled_oracle(self):
        """Two-step random instances match the scripted recomputation."""
        rng = make_prng(6)
        for variant in ("verbatim", "standard"):
            for readout in ("final_state", "per_step_mean"):
                for _ in range(5):
                    nh = int(rng.integers(1, 4))
                    ns = int(rng.integers(1, 4))
                    net = GruNet(2, ns, nh, "linear", rng, variant=variant, readout=readout)
                    frame = rng.standard_normal((1, 2, ns))
                    y, _ = net.forward(frame)
                    assert abs(y[0] - _gru_oracle(net, frame[0])) < 1e-12

    def test_variants_differ(self):
        """The verbatim state update really differs from the standard one."""
        rng = make_prng(7)
        a = GruNet(4, 2, 3, "linear", make_prng(8), variant="verbatim")
        b = GruNet(4, 2, 3, "linear", make_prng(8), variant="standard")
        frame = rng.standard_normal((1, 4, 2))
        ya, _ = a.forward(frame)
        yb, _ = b.forward(frame)
        assert abs(ya[0] - yb[0]) > 1e-6


class TestConv:
    def test_full_width_single_position(self):
        net = ConvNet(14, 4, 15, 14, "sigmoid", "sigmoid", make_prng(9))
        assert net.n_positions == 1
        y, cache = net.forward(make_prng(10).standard_normal((3, 14, 4)))
        assert cache[1].shape == (3, 1, 15)

    def test_all_ones_filter_sums_input(self):
        """One all-ones filter over constant input c: pre-act c*width*slices + bias."""
        net = ConvNet(6, 3, 1, 4, "linear", "linear", make_prng(11))
        net.filters[...] = 1.0
        net.bias[...] = 0.25
        net.w_out[...] = 1.0
        c = 0.8
        y, cache = net.forward(np.full((1, 6, 3), c))
        pre = cache[1]
        assert np.allclose(pre, c * 4 * 3 + 0.25, atol=1e-12)
        assert y[0] == pytest.approx(3 * (c * 12 + 0.25), abs=1e-12)

    def test_width_beyond_memory_rejected(self):
        with pytest.raises(ValueError):
            ConvNet(4, 2, 1, 5, "sigmoid", "linear", make_prng(12))

    def test_matches_nested_loop_oracle(self):
        rng = make_prng(13)
        for _ in range(10):
            m = int(rng.integers(3, 8))
            w = int(rng.integers(1, m + 1))
            ns = int(rng.integers(1, 4))
            nh = int(rng.integers(1, 4))
            net = ConvNet(m, ns, nh, w, "tanh", "linear", rng)
            frame = rng.standard_normal((1, m, ns))
            y, _ = net.forward(frame)
            assert abs(y[0] - _cnn_oracle(net, frame[0])) < 1e-12


def _numeric_gradients(net, frames, targets, eps=1e-5):
    """Central finite differences of the MSE loss for every parameter."""

    def loss() -> float:
        y, _ = net.forward(frames)
        return float(np.mean((y - targets) ** 2))

    grads = {}
    for name, p in net.params().items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            lp = loss()
            flat[i] = keep - eps
            lm = loss()
            flat[i] = keep
            gflat[i] = (lp - lm) / (2 * eps)
        grads[name] = g
    return grads


def _analytic_gradients(net, frames, targets):
    y, cache = net.forward(frames)
    dy = 2.0 * (y - targets) / y.size
    return net.backward(cache, dy)


def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / denom


def _gradient_instances(kind: str, count: int, seed: int):
    rng = make_prng(seed)
    for i in range(count):
        m = int(rng.integers(2, 7))
        ns = int(rng.integers(2, 5))
        nh = int(rng.integers(1, 4))
        fo = ("linear", "sigmoid")[i % 2]
        if kind == "fnn":
            fh = ("sigmoid", "tanh", "relu", "linear")[i % 4]
            net = FeedforwardNet(m, ns, nh, fh, fo, rng)
        elif kind == "cnn":
            fh = ("sigmoid", "tanh")[i % 2]
            w = int(rng.integers(1, m + 1))
            net = ConvNet(m, ns, nh, w, fh, fo, rng)
        else:
            variant = "verbatim" if kind == "gru_verbatim" else "standard"
            readout = ("final_state", "per_step_mean")[i % 2]
            net = GruNet(m, ns, nh, fo, rng, variant=variant, readout=readout)
        frames = rng.standard_normal((4, m, ns))
        targets = rng.standard_normal(4)
        yield net, frames, targets


@pytest.mark.parametrize("kind", ["fnn", "gru_verbatim", "gru_standard", "cnn"])
def test_gradients_match_finite_differences(kind):
    """Analytic gradients match central differences to 1e-4 relative."""
    worst = 0.0
    for net, frames, targets in _gradient_instances(kind, count=20, seed=1234):
        analytic = _analytic_gradients(net, frames, targets)
        numeric = _numeric_gradients(net, frames, targets)
        assert set(analytic) == set(numeric)
        for name in analytic:
            err = _relative_error(analytic[name], numeric[name])
            worst = max(worst, err)
            assert err < 1e-4, f"{kind} {name}: rel err {err:.2e}"
    assert worst < 1e-4


class TestInstrumentation:
    def test_fnn_multiplication_count(self):
        net = FeedforwardNet(14, 4, 10, "relu", "sigmoid", make_prng(20))
        counter = MultCounter()
        net.forward(make_prng(21).standard_normal((1, 14, 4)), counter)
        assert counter.count == 14 * 4 * 10 + 10

    def test_cnn_multiplication_count(self):
        net = ConvNet(14, 4, 15, 14, "sigmoid", "sigmoid", make_prng(22))
        counter = MultCounter()
        net.forward(make_prng(23).standard_normal((1, 14, 4)), counter)
        assert counter.count == 4 * 15 * 14 * 1 + 1 * 15 * 1

    def test_gru_multiplication_count_scales_with_batch(self):
        net = GruNet(6, 4, 1, "linear", make_prng(24))
        counter = MultCounter()
        net.forward(make_prng(25).standard_normal((5, 6, 4)), counter)
        assert counter.count == 5 * (6 * 3 * (4 * 1 + 1 * 1) + 1)

    def test_parameter_multiplies_audit(self):
        fnn = FeedforwardNet(49, 4, 10, "sigmoid", "linear", make_prng(26))
        assert parameter_multiplies(fnn) == 49 * 4 * 10 + 10
        cnn = ConvNet(14, 4, 15, 14, "sigmoid", "sigmoid", make_prng(27))
        assert parameter_multiplies(cnn) == 4 * 15 * 14 * 1 + 15
        gru = GruNet(6, 4, 1, "sigmoid", make_prng(28), readout="per_step_mean")
        assert parameter_multiplies(gru) == 3 * (4 * 1 + 1 * 1) * 6 + 1 * 1 * 6


class TestTrainingStep:
    def test_sgd_step_moves_parameters(self):
        rng = make_prng(30)
        net = FeedforwardNet(4, 2, 3, "tanh", "linear", rng)
        frames = rng.standard_normal((8, 4, 2))
        targets = rng.standard_normal(8)
        before = {k: v.copy() for k, v in net.params().items()}
        grads = _analytic_gradients(net, frames, targets)
        net.sgd_step(grads, lr=0.1)
        after = net.params()
        assert all(not np.array_equal(before[k], after[k]) for k in before)

    def test_zero_learning_rate_freezes(self):
        rng = make_prng(31)
        net = GruNet(3, 2, 2, "sigmoid", rng)
        frames = rng.standard_normal((4, 3, 2))
        targets = rng.standard_normal(4)
        before = {k: v.copy() for k, v in net.params().items()}
        grads = _analytic_gradients(net, frames, targets)
        net.sgd_step(grads, lr=0.0)
        assert all(np.array_equal(before[k], v) for k, v in net.params().items())
