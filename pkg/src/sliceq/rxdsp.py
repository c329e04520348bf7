"""Classic receiver DSP.

Matched filtering with sampling-phase search, data-driven hard decisions,
guarded BER counting, an 11-tap LMS feedforward equalizer baseline, and
required-SNR extraction at the KP4 FEC threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .dsp import design_rrc, fir_apply

KP4_BER = 2.24e-4
FFE_TAP_LIMIT = 1e6


@dataclass(slots=True)
class DecisionRule:
    """Affine normalization plus a threshold, fitted on training data only.

    A raw value v maps to (v - offset) * scale; the fitted scale puts the
    class means at 0 and 1, so the threshold lives at 0.5 regardless of
    the physical signal scaling (and survives inverted constellations,
    where scale comes out negative).
    """

    threshold: float
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.threshold) and math.isfinite(self.scale) and math.isfinite(self.offset)):
            raise ValueError("decision rule parameters must be finite")


def fit_decision_rule(values: NDArray, bits: NDArray) -> DecisionRule:
    """Midpoint-of-class-means rule from a labeled training stretch."""
    v = np.asarray(values, dtype=np.float64)
    b = np.asarray(bits)
    if v.size != b.size or v.size == 0:
        raise ValueError("values and bits must be equal-length and non-empty")
    ones = b != 0
    if not ones.any() or ones.all():
        # degenerate single-class data: decide everything as that class
        # (scale 0 maps all values to 0; the threshold picks the side)
        return DecisionRule(threshold=-1.0 if ones.all() else 1.0, scale=0.0, offset=0.0)
    m0 = float(v[~ones].mean())
    m1 = float(v[ones].mean())
    if m1 == m0:
        return DecisionRule(threshold=0.5, scale=0.0, offset=m0)
    return DecisionRule(threshold=0.5, scale=1.0 / (m1 - m0), offset=m0)


def hard_decide(values: NDArray, rule: DecisionRule) -> NDArray[np.uint8]:
    """bit = 1 iff normalized value exceeds the threshold (ties go to 0)."""
    norm = (np.asarray(values, dtype=np.float64) - rule.offset) * rule.scale
    return (norm > rule.threshold).astype(np.uint8)


@dataclass(slots=True)
class BerResult:
    errors: int
    bits_counted: int
    ber: float
    fingerprint: str = ""


def count_ber(decided: NDArray, reference: NDArray, guard: int = 0, fingerprint: str = "") -> BerResult:
    """Error ratio over the guard-trimmed region."""
    d = np.asarray(decided)
    r = np.asarray(reference)
    if d.size != r.size:
        raise ValueError(f"length mismatch: {d.size} decided vs {r.size} reference")
    if guard < 0 or d.size - 2 * guard < 1:
        raise ValueError(f"guard {guard} leaves no bits out of {d.size}")
    region = slice(guard, d.size - guard) if guard else slice(None)
    errors = int(np.sum(d[region] != r[region]))
    counted = d[region].size
    return BerResult(errors=errors, bits_counted=counted, ber=errors / counted, fingerprint=fingerprint)


def matched_filter(samples: NDArray, sps: int, rrc_alpha: float, span: int = 64) -> NDArray[np.float64]:
    """RRC matched filter at the working rate (completes the Nyquist pair)."""
    if sps < 1:
        raise ValueError(f"sps must be >= 1, got {sps}")
    return fir_apply(np.asarray(samples, dtype=np.float64), design_rrc(rrc_alpha, span, sps))


def matched_filter_downsample(
    samples: NDArray, sps: int, rrc_alpha: float, span: int = 64, phase: int = 0
) -> NDArray[np.float64]:
    """Matched filter, then one sample per symbol at the given phase."""
    if not 0 <= phase < sps:
        raise ValueError(f"phase must be in [0, {sps}), got {phase}")
    return matched_filter(samples, sps, rrc_alpha, span)[phase::sps]


def search_phase(
    samples: NDArray,
    sps: int,
    rrc_alpha: float,
    reference_bits: NDArray,
    span: int = 64,
    guard: int = 0,
    region: slice | None = None,
) -> int:
    """Sampling phase minimizing BER against the training reference.

    Each candidate phase gets its own fitted decision rule, so the search
    is insensitive to the absolute signal scale. `region` restricts the
    evaluation to a symbol-index window (defaults to the guarded full
    range). Ties in error count break toward the widest normalized class
    separation (a clean eye decides perfectly at several phases; the
    widest one is the robust choice), then to the lowest phase.
    """
    ref = np.asarray(reference_bits)
    filtered = matched_filter(samples, sps, rrc_alpha, span)
    best_phase, best_key = 0, None
    for phase in range(sps):
        vals = filtered[phase::sps]
        n = min(vals.size, ref.size)
        sel = region if region is not None else (slice(guard, n - guard) if guard else slice(0, n))
        v, r = vals[:n][sel], ref[:n][sel]
        rule = fit_decision_rule(v, r)
        errors = int(np.sum(hard_decide(v, rule) != r))
        ones, zeros = v[r == 1], v[r == 0]
        if ones.size and zeros.size:
            spread = math.sqrt(float(np.var(ones) + np.var(zeros))) + 1e-12
            separation = float(ones.mean() - zeros.mean()) / spread
        else:
            separation = 0.0
        key = (errors, -separation)
        if best_key is None or key < best_key:
            best_phase, best_key = phase, key
    return best_phase


@dataclass(slots=True)
class FfeState:
    """Symbol-spaced feedforward equalizer taps with the LMS step size."""

    taps: NDArray[np.float64]
    step_size: float = 1e-3

    def __post_init__(self) -> None:
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.size % 2 != 1:
            raise ValueError(f"tap count must be odd, got {self.taps.size}")
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("taps must be finite")

    @property
    def n_taps(self) -> int:
        return int(self.taps.size)


def ffe_init(n_taps: int = 11, step_size: float = 1e-3) -> FfeState:
    return FfeState(np.zeros(n_taps), step_size)


def ffe_lms_train(values: NDArray, reference: NDArray, state: FfeState, n_train: int = 50000) -> FfeState:
    """Sample-recursive LMS adaptation: w += mu * e_k * x_k.

    Walks min(n_train, available) symbols; raises if any tap magnitude
    passes 1e6 (step size too large).
    """
    v = np.asarray(values, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    n = min(v.size, r.size, n_train)
    half = state.n_taps // 2
    taps = state.taps.copy()
    mu = state.step_size
    for k in range(half, n - half):
        x = v[k - half : k + half + 1]
        e = r[k] - float(taps @ x)
        taps += mu * e * x
        if abs(taps[np.argmax(np.abs(taps))]) > FFE_TAP_LIMIT:
            raise ValueError(f"LMS diverged at symbol {k}: reduce step size {mu}")
    return FfeState(taps, mu)


def ffe_apply(values: NDArray, state: FfeState) -> NDArray[np.float64]:
    """Run the equalizer over the whole sequence with "same" alignment."""
    return np.convolve(np.asarray(values, dtype=np.float64), state.taps[::-1], mode="same")


def reference_receiver(
    samples: NDArray,
    bits: NDArray,
    sps: int,
    rrc_alpha: float,
    span: int,
    n_train: int,
    guard: int,
) -> tuple[BerResult, int, DecisionRule]:
    """Unequalized receiver: matched filter, phase search, hard decision.

    Phase and decision rule are fitted on the first n_train symbols after
    the leading guard; BER is counted on the remaining symbols up to the
    trailing guard.
    """
    ref = np.asarray(bits)
    train = slice(guard, guard + n_train)
    test = slice(guard + n_train, ref.size - guard)
    if test.stop - test.start < 1:
        raise ValueError("no test symbols left after training span and guards")
    phase = search_phase(samples, sps, rrc_alpha, ref, span=span, region=train)
    vals = matched_filter_downsample(samples, sps, rrc_alpha, span=span, phase=phase)[: ref.size]
    rule = fit_decision_rule(vals[train], ref[train])
    result = count_ber(hard_decide(vals[test], rule), ref[test])
    return result, phase, rule


def ffe_receiver(
    samples: NDArray,
    bits: NDArray,
    sps: int,
    rrc_alpha: float,
    span: int,
    n_train: int,
    guard: int,
    n_taps: int = 11,
    step_size: float = 1e-3,
    n_train_ffe: int = 50000,
) -> tuple[BerResult, FfeState, int]:
    """LMS feedforward equalizer on the single-photodiode receiver output."""
    ref = np.asarray(bits)
    train = slice(guard, guard + n_train)
    test = slice(guard + n_train, ref.size - guard)
    if test.stop - test.start < 1:
        raise ValueError("no test symbols left after training span and guards")
    phase = search_phase(samples, sps, rrc_alpha, ref, span=span, region=train)
    vals = matched_filter_downsample(samples, sps, rrc_alpha, span=span, phase=phase)[: ref.size]
    state = ffe_lms_train(vals[train], ref[train], ffe_init(n_taps, step_size), n_train=n_train_ffe)
    equalized = ffe_apply(vals, state)
    rule = fit_decision_rule(equalized[train], ref[train])
    result = count_ber(hard_decide(equalized[test], rule), ref[test])
    return result, state, phase


def required_snr_at_threshold(curve, threshold_ber: float = KP4_BER) -> float | None:
    """SNR where the BER waterfall crosses the threshold.

    Linear interpolation in log10(BER) between the bracketing grid points.
    Zero-BER points are clamped to 1e-12 for the logarithm. Returns None
    when the curve never reaches the threshold (no-reach), and the lowest
    grid SNR when the curve is already below it there.
    """
    pts = sorted((float(s), max(float(b), 1e-12)) for s, b in curve)
    if not pts:
        raise ValueError("empty curve")
    log_thr = math.log10(threshold_ber)
    if pts[0][1] <= threshold_ber:
        return pts[0][0]
    for (s0, b0), (s1, b1) in zip(pts, pts[1:]):
        if b0 > threshold_ber >= b1:
            t = (math.log10(b0) - log_thr) / (math.log10(b0) - math.log10(b1))
            return s0 + t * (s1 - s0)
    return None


def snr_penalty_at_kp4(curve, reference_required_snr_db: float) -> float | None:
    """Extra SNR needed versus the reference receiver; None means no-reach."""
    required = required_snr_at_threshold(curve, KP4_BER)
    if required is None:
        return None
    return required - reference_required_snr_db
