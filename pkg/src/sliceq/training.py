"""Mini-batch SGD training and inference for the framed equalizers.

A samples-to-sample (sa) equalizer regresses the transmitted pulse-shaped
waveform one sample at a time and hands its output to a matched filter;
a samples-to-symbol (sy) equalizer maps a whole symbol's frame straight
to the symbol value. Both train on mean squared error with plain SGD and
stop early on a held-out span.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .dsp import make_prng
from .framing import FrameSet, FramingSpec, valid_indices
from .link import SlicedSignal
from .nets import ConvNet, FeedforwardNet, GruNet
from .rxdsp import (
    DecisionRule,
    fit_decision_rule,
    hard_decide,
    matched_filter_downsample,
    search_phase,
)

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

#: inference batch size; fixed so repeated runs chunk identically
CHUNK = 8192

ARCHS = ("fnn", "gru", "cnn")
HIDDEN_ACTS = ("sigmoid", "tanh", "relu")
OUT_ACTS = ("linear", "sigmoid")


class TrainingDiverged(RuntimeError):
    """Loss left the reals; reported with the epoch and learning rate."""


@dataclass(frozen=True, slots=True)
class EqualizerSpec:
    """Architecture plus every training knob needed to reproduce a model."""

    arch: str
    framing: FramingSpec
    n_hidden: int
    f_hidden: str
    f_out: str
    var_target: float
    learn_rate: float
    mini_batch: int
    n_filter_width: int | None = None
    epochs: int = 400
    seed: int = 0
    gru_variant: str = "verbatim"
    gru_readout: str = "final_state"

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.n_hidden < 1:
            raise ValueError(f"n_hidden must be >= 1, got {self.n_hidden}")
        if self.f_hidden not in HIDDEN_ACTS:
            raise ValueError(f"unknown hidden activation {self.f_hidden!r}")
        if self.f_out not in OUT_ACTS:
            raise ValueError(f"unknown output activation {self.f_out!r}")
        if self.arch == "cnn":
            if self.n_filter_width is None:
                raise ValueError("cnn needs n_filter_width")
            if not 1 <= self.n_filter_width <= self.framing.memory:
                raise ValueError(
                    f"n_filter_width must be in [1, {self.framing.memory}], "
                    f"got {self.n_filter_width}")
        elif self.n_filter_width is not None:
            raise ValueError(f"{self.arch} takes no filter width")
        if self.arch == "gru" and self.f_hidden != "tanh":
            raise ValueError("the recurrent cell's candidate activation is tanh")
        if self.var_target <= 0:
            raise ValueError(f"var_target must be positive, got {self.var_target}")
        if self.learn_rate < 0:
            raise ValueError(f"learn_rate must be >= 0, got {self.learn_rate}")
        if self.mini_batch < 1:
            raise ValueError(f"mini_batch must be >= 1, got {self.mini_batch}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


#: per-mode training knobs shared by every architecture
_MODE_PRESET = {
    "sa": dict(sps=8, f_out="linear", var_target=0.17, learn_rate=0.5e-2,
               mini_batch=1800),
    "sy": dict(sps=2, f_out="sigmoid", var_target=0.69, learn_rate=1e-2,
               mini_batch=1000),
}

_ARCH_PRESET = {
    "fnn": dict(n_hidden=10, f_hidden={"sa": "sigmoid", "sy": "relu"}),
    "gru": dict(n_hidden=10, f_hidden={"sa": "tanh", "sy": "tanh"}),
    "cnn": dict(n_hidden=15, f_hidden={"sa": "sigmoid", "sy": "sigmoid"}),
}


def table_preset(arch: str, mode: str, *, seed: int = 0, epochs: int = 400,
                 context_symbols: int = 3, n_slices: int = 4) -> EqualizerSpec:
    """The tuned working point for one (architecture, framing) pair."""
    if arch not in ARCHS:
        raise ValueError(f"unknown arch {arch!r}")
    if mode not in _MODE_PRESET:
        raise ValueError(f"unknown mode {mode!r}")
    m = _MODE_PRESET[mode]
    a = _ARCH_PRESET[arch]
    framing = FramingSpec(mode=mode, context_symbols=context_symbols,
                          sps=m["sps"], n_slices=n_slices)
    width = framing.memory if arch == "cnn" else None
    return EqualizerSpec(arch=arch, framing=framing, n_hidden=a["n_hidden"],
                         f_hidden=a["f_hidden"][mode], f_out=m["f_out"],
                         var_target=m["var_target"], learn_rate=m["learn_rate"],
                         mini_batch=m["mini_batch"], n_filter_width=width,
                         epochs=epochs, seed=seed)


def build_net(spec: EqualizerSpec):
    """Fresh, seeded network for the spec (same seed, same weights)."""
    rng = make_prng(spec.seed)
    f = spec.framing
    if spec.arch == "fnn":
        return FeedforwardNet(f.memory, f.n_slices, spec.n_hidden,
                              spec.f_hidden, spec.f_out, rng)
    if spec.arch == "gru":
        return GruNet(f.memory, f.n_slices, spec.n_hidden, spec.f_out, rng,
                      variant=spec.gru_variant, readout=spec.gru_readout)
    return ConvNet(f.memory, f.n_slices, spec.n_hidden, spec.n_filter_width,
                   spec.f_hidden, spec.f_out, rng)


@dataclass(slots=True)
class TrainedModel:
    """Network plus the fitted front/back ends needed to recover bits."""

    spec: EqualizerSpec
    net: object
    offset: float
    scale: float
    rule: DecisionRule
    mf_phase: int | None
    mf_alpha: float
    mf_span: int
    loss_trace: NDArray[np.float64]
    val_trace: NDArray[np.float64]


def _normalized(sliced: SlicedSignal, offset: float, scale: float) -> SlicedSignal:
    return SlicedSignal(slices=(sliced.slices - offset) * scale, sps=sliced.sps,
                        sample_rate=sliced.sample_rate,
                        symbol_alignment=sliced.symbol_alignment)


def _forward_chunks(net, frames: FrameSet, units: NDArray) -> NDArray[np.float64]:
    outs = []
    for lo in range(0, units.size, CHUNK):
        y, _ = net.forward(frames.gather(units[lo:lo + CHUNK]))
        outs.append(y)
    return np.concatenate(outs) if outs else np.zeros(0)


def _span_samples(spec: FramingSpec, units: NDArray, alignment: int) -> tuple[int, int]:
    """Half-open sample range covered by the frames of a unit range."""
    if spec.mode == "sa":
        lo = int(units[0]) - spec.context_samples
    else:
        lo = alignment + (int(units[0]) - spec.context_symbols) * spec.sps
    return lo, lo + (units.size - 1) * spec.current_width + spec.memory


def train(spec: EqualizerSpec, sliced: SlicedSignal, bits: NDArray, *,
          n_train_units: int, drive: NDArray | None = None,
          mf_alpha: float = 0.1, mf_span: int = 64,
          patience: int = 20) -> TrainedModel:
    """Fit one equalizer on the leading span of a sliced signal.

    `bits` is the transmitted symbol stream. In sy mode the bits are the
    regression targets; in sa mode the target is `drive`, the transmitted
    pulse-shaped waveform at the signal's sample rate (standardized to
    zero mean and unit variance over the training span), and the bits
    only calibrate the decision stage. `n_train_units` counts frames
    (samples for sa, symbols for sy); everything after the training span
    is left untouched for evaluation.
    """
    framing = spec.framing
    if sliced.sps != framing.sps:
        raise ValueError(f"signal at {sliced.sps} sps, spec expects {framing.sps}")
    if sliced.n_slices != framing.n_slices:
        raise ValueError("slice-count mismatch between signal and spec")
    bits = np.asarray(bits)

    units_all = valid_indices(sliced, framing)
    if n_train_units < 2:
        raise ValueError(f"n_train_units must be >= 2, got {n_train_units}")
    if n_train_units > len(units_all):
        raise ValueError(f"asked for {n_train_units} training units, "
                         f"only {len(units_all)} fit the signal")
    train_units = np.arange(units_all.start, units_all.start + n_train_units)

    if framing.mode == "sa":
        if drive is None:
            raise ValueError("sa training needs the transmitted waveform as drive")
        drive = np.asarray(drive, dtype=np.float64)
        if drive.size != sliced.n_samples:
            raise ValueError("drive length must match the sliced signal")
        # standardize the regression target on the training span so the
        # optimizer works at one scale no matter how the transmit drive
        # is normalized; the decision stage below is fitted on the same
        # scale and absorbs the affine change at evaluation time
        t_mu = float(np.mean(drive[train_units]))
        t_sd = float(np.std(drive[train_units]))
        if t_sd <= 0:
            raise ValueError("sa target has zero variance on the training span")
        targets_all = (drive - t_mu) / t_sd
    else:
        targets_all = bits.astype(np.float64)

    # scalar affine front end fitted on the span the training frames see
    lo, hi = _span_samples(framing, train_units, sliced.symbol_alignment)
    block = sliced.slices[:, max(lo, 0):hi]
    mu = float(np.mean(block))
    var = float(np.var(block))
    if var <= 0:
        raise ValueError("training span has zero variance")
    scale = float(np.sqrt(spec.var_target / var))

    signal = _normalized(sliced, mu, scale)
    frames = FrameSet(signal, framing)
    net = build_net(spec)
    rng = make_prng(spec.seed)

    n_val = min(16384, n_train_units // 4)
    sgd_units = train_units[:n_train_units - n_val]
    val_units = train_units[n_train_units - n_val:]
    val_targets = targets_all[val_units] if n_val else None

    loss_trace, val_trace = [], []
    best_val = np.inf
    best_epoch = -1
    best_params = {k: v.copy() for k, v in net.params().items()}
    # overflow during a diverging run is detected below via isfinite and
    # raised as a typed error, so numpy need not warn about it
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(spec.epochs):
            order = rng.permutation(sgd_units)
            sq_sum = 0.0
            for b in range(0, order.size, spec.mini_batch):
                batch = order[b:b + spec.mini_batch]
                y, cache = net.forward(frames.gather(batch))
                err = y - targets_all[batch]
                sq_sum += float(err @ err)
                grads = net.backward(cache, 2.0 * err / err.size)
                net.sgd_step(grads, spec.learn_rate)
            epoch_loss = sq_sum / order.size
            if n_val:
                val_err = _forward_chunks(net, frames, val_units) - val_targets
                val_loss = float(val_err @ val_err) / val_err.size
            else:
                val_loss = epoch_loss
            loss_trace.append(epoch_loss)
            val_trace.append(val_loss)
            if not (np.isfinite(epoch_loss) and np.isfinite(val_loss)):
                raise TrainingDiverged(
                    f"loss diverged at epoch {epoch} (learn rate {spec.learn_rate})")
            if val_loss < best_val:
                best_val = val_loss
                best_epoch = epoch
                best_params = {k: v.copy() for k, v in net.params().items()}
            elif epoch - best_epoch >= patience:
                logger.info("early stop at epoch %d (best %d, val %.3e)",
                            epoch, best_epoch, best_val)
                break
    for name, value in net.params().items():
        value[...] = best_params[name]

    y_train = _forward_chunks(net, frames, train_units)
    if framing.mode == "sy":
        rule = fit_decision_rule(y_train, bits[train_units])
        mf_phase = None
    else:
        waveform = np.zeros(sliced.n_samples)
        waveform[train_units] = y_train
        sps = framing.sps
        # keep clear of the zeroed edges and the matched-filter transient
        t_lo = -(-int(train_units[0]) // sps) + mf_span // 2 + 1
        t_hi = int(train_units[-1] + 1) // sps - mf_span // 2 - 1
        if t_hi - t_lo < 16:
            raise ValueError("training span too short to calibrate the decision stage")
        region = slice(t_lo, t_hi)
        mf_phase = search_phase(waveform, sps, mf_alpha, bits, span=mf_span,
                                region=region)
        vals = matched_filter_downsample(waveform, sps, mf_alpha, mf_span, mf_phase)
        n = min(vals.size, bits.size)
        rule = fit_decision_rule(vals[:n][region], bits[:n][region])

    return TrainedModel(spec=spec, net=net, offset=mu, scale=scale, rule=rule,
                        mf_phase=mf_phase, mf_alpha=mf_alpha, mf_span=mf_span,
                        loss_trace=np.asarray(loss_trace),
                        val_trace=np.asarray(val_trace))


def equalize_values(model: TrainedModel, sliced: SlicedSignal) -> tuple[NDArray, slice]:
    """Soft per-symbol values and the symbol range they align with.

    The returned array matches `reference[returned_slice]` element for
    element. Edge symbols whose frames (or matched-filter support) would
    run off the signal are excluded.
    """
    spec = model.spec
    framing = spec.framing
    if sliced.sps != framing.sps:
        raise ValueError(f"signal at {sliced.sps} sps, model expects {framing.sps}")
    signal = _normalized(sliced, model.offset, model.scale)
    frames = FrameSet(signal, framing)
    units = np.arange(frames.indices.start, frames.indices.stop)
    y = _forward_chunks(model.net, frames, units)
    if framing.mode == "sy":
        return y, slice(frames.indices.start, frames.indices.stop)
    sps = framing.sps
    waveform = np.zeros(sliced.n_samples)
    waveform[units] = y
    vals = matched_filter_downsample(waveform, sps, model.mf_alpha,
                                     model.mf_span, model.mf_phase)
    guard = framing.context_symbols + model.mf_span // 2 + 1
    n_sym = vals.size
    if n_sym <= 2 * guard:
        raise ValueError("signal too short for the sample-mode guards")
    return vals[guard:n_sym - guard], slice(guard, n_sym - guard)


def equalize(model: TrainedModel, sliced: SlicedSignal) -> tuple[NDArray[np.uint8], slice]:
    """Recovered bits plus the symbol range they cover."""
    values, sl = equalize_values(model, sliced)
    return hard_decide(values, model.rule), sl


def spec_to_dict(spec: EqualizerSpec) -> dict:
    f = spec.framing
    return {
        "arch": spec.arch,
        "framing": {"mode": f.mode, "context_symbols": f.context_symbols,
                    "sps": f.sps, "n_slices": f.n_slices},
        "n_hidden": spec.n_hidden,
        "n_filter_width": spec.n_filter_width,
        "f_hidden": spec.f_hidden,
        "f_out": spec.f_out,
        "var_target": spec.var_target,
        "learn_rate": spec.learn_rate,
        "mini_batch": spec.mini_batch,
        "epochs": spec.epochs,
        "seed": spec.seed,
        "gru_variant": spec.gru_variant,
        "gru_readout": spec.gru_readout,
    }


def spec_from_dict(data: dict) -> EqualizerSpec:
    f = data["framing"]
    framing = FramingSpec(mode=f["mode"], context_symbols=f["context_symbols"],
                          sps=f["sps"], n_slices=f["n_slices"])
    width = data.get("n_filter_width")
    return EqualizerSpec(arch=data["arch"], framing=framing,
                         n_hidden=data["n_hidden"],
                         n_filter_width=None if width is None else int(width),
                         f_hidden=data["f_hidden"], f_out=data["f_out"],
                         var_target=data["var_target"],
                         learn_rate=data["learn_rate"],
                         mini_batch=data["mini_batch"], epochs=data["epochs"],
                         seed=data["seed"],
                         gru_variant=data.get("gru_variant", "verbatim"),
                         gru_readout=data.get("gru_readout", "final_state"))


def save_model(model: TrainedModel, path) -> None:
    """Flat, versioned archive; loading restores every tensor bit-exact."""
    payload = {
        "format_version": np.int64(MODEL_FORMAT_VERSION),
        "spec_json": np.frombuffer(
            json.dumps(spec_to_dict(model.spec), sort_keys=True).encode(),
            dtype=np.uint8),
        "offset": np.float64(model.offset),
        "scale": np.float64(model.scale),
        "rule_threshold": np.float64(model.rule.threshold),
        "rule_scale": np.float64(model.rule.scale),
        "rule_offset": np.float64(model.rule.offset),
        "mf_phase": np.int64(-1 if model.mf_phase is None else model.mf_phase),
        "mf_alpha": np.float64(model.mf_alpha),
        "mf_span": np.int64(model.mf_span),
        "loss_trace": model.loss_trace,
        "val_trace": model.val_trace,
    }
    for name, value in model.net.params().items():
        payload[f"param_{name}"] = value
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_model(path) -> TrainedModel:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {version}")
        spec = spec_from_dict(json.loads(bytes(data["spec_json"]).decode()))
        net = build_net(spec)
        for name, value in net.params().items():
            saved = data[f"param_{name}"]
            if saved.shape != value.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{saved.shape} vs {value.shape}")
            value[...] = saved
        phase = int(data["mf_phase"])
        rule = DecisionRule(threshold=float(data["rule_threshold"]),
                            scale=float(data["rule_scale"]),
                            offset=float(data["rule_offset"]))
        return TrainedModel(spec=spec, net=net, offset=float(data["offset"]),
                            scale=float(data["scale"]), rule=rule,
                            mf_phase=None if phase < 0 else phase,
                            mf_alpha=float(data["mf_alpha"]),
                            mf_span=int(data["mf_span"]),
                            loss_trace=data["loss_trace"].copy(),
                            val_trace=data["val_trace"].copy())
