"""Deterministic signal-processing primitives.

Seedable PRNG, random bit generation, RRC filter design, FIR and
DFT-domain filtering, and integer-ratio resampling. Everything here is a
pure function of its inputs, so parallel sweep workers can call freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.signal import fftconvolve

_MT_N = 624


def _mt_key_from_seed(seed: int) -> NDArray[np.uint32]:
    """Classic MT19937 key schedule (init_genrand / init_by_array).

    Matches the reference implementation bit for bit, so streams can be
    checked against any independent MT19937 (e.g. CPython's random).
    Seeds below 2**32 use init_genrand; wider seeds are split into
    32-bit words and fed to init_by_array.
    """
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")

    def genrand_key(s: int) -> list[int]:
        mt = [0] * _MT_N
        mt[0] = s & 0xFFFFFFFF
        for i in range(1, _MT_N):
            mt[i] = (1812433253 * (mt[i - 1] ^ (mt[i - 1] >> 30)) + i) & 0xFFFFFFFF
        return mt

    if seed < 2**32:
        mt = genrand_key(seed)
        return np.array(mt, dtype=np.uint32)

    words = []
    s = seed
    while s > 0:
        words.append(s & 0xFFFFFFFF)
        s >>= 32
    mt = genrand_key(19650218)
    i, j = 1, 0
    for _ in range(max(_MT_N, len(words))):
        mt[i] = ((mt[i] ^ ((mt[i - 1] ^ (mt[i - 1] >> 30)) * 1664525)) + words[j] + j) & 0xFFFFFFFF
        i += 1
        j += 1
        if i >= _MT_N:
            mt[0] = mt[_MT_N - 1]
            i = 1
        if j >= len(words):
            j = 0
    for _ in range(_MT_N - 1):
        mt[i] = ((mt[i] ^ ((mt[i - 1] ^ (mt[i - 1] >> 30)) * 1566083941)) - i) & 0xFFFFFFFF
        i += 1
        if i >= _MT_N:
            mt[0] = mt[_MT_N - 1]
            i = 1
    mt[0] = 0x80000000
    return np.array(mt, dtype=np.uint32)


def make_prng(seed: int) -> np.random.Generator:
    """Deterministic MT19937 generator with the classic seeding schedule.

    Identical seeds give bit-identical streams across runs and platforms.
    Raw 32-bit words are reachable via rng.bit_generator.random_raw().
    """
    bg = np.random.MT19937()
    bg.state = {
        "bit_generator": "MT19937",
        "state": {"key": _mt_key_from_seed(seed), "pos": _MT_N},
    }
    return np.random.Generator(bg)


def generate_bits(rng: np.random.Generator, n: int) -> NDArray[np.uint8]:
    """n equiprobable bits in {0, 1}."""
    if n < 1:
        raise ValueError(f"bit count must be >= 1, got {n}")
    return rng.integers(0, 2, size=n, dtype=np.uint8)


@dataclass(slots=True)
class FirFilter:
    """Real FIR taps plus a human-readable tag."""

    taps: NDArray[np.float64]
    description: str = ""

    def __post_init__(self) -> None:
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.size == 0:
            raise ValueError("empty filter")
        energy = float(np.sum(self.taps**2))
        if not np.isfinite(energy) or energy <= 0.0:
            raise ValueError(f"filter energy must be finite and positive, got {energy}")


def design_rrc(alpha: float, span_symbols: int, sps: int) -> FirFilter:
    """Unit-energy root-raised-cosine filter.

    Closed-form impulse response with the t=0 and t=1/(4 alpha)
    singularities patched by their analytic limits. Tap count is
    span_symbols*sps + 1 (odd, symmetric).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"roll-off must be in (0, 1], got {alpha}")
    if span_symbols < 2 or span_symbols % 2 != 0:
        raise ValueError(f"span must be a positive even symbol count, got {span_symbols}")
    if sps < 1:
        raise ValueError(f"sps must be >= 1, got {sps}")

    n = span_symbols * sps + 1
    t = (np.arange(n) - (n - 1) / 2) / sps  # in symbol periods
    taps = np.empty(n, dtype=np.float64)

    at = 4.0 * alpha * t
    sing0 = np.isclose(t, 0.0)
    sing1 = np.isclose(np.abs(at), 1.0)
    regular = ~(sing0 | sing1)

    tr = t[regular]
    num = np.sin(np.pi * tr * (1 - alpha)) + 4 * alpha * tr * np.cos(np.pi * tr * (1 + alpha))
    den = np.pi * tr * (1 - (4 * alpha * tr) ** 2)
    taps[regular] = num / den
    taps[sing0] = 1.0 - alpha + 4.0 * alpha / np.pi
    if np.any(sing1):
        k = np.pi / (4.0 * alpha)
        taps[sing1] = (alpha / np.sqrt(2.0)) * ((1 + 2 / np.pi) * np.sin(k) + (1 - 2 / np.pi) * np.cos(k))

    taps /= np.sqrt(np.sum(taps**2))
    return FirFilter(taps, f"rrc alpha={alpha} span={span_symbols} sps={sps}")


def fir_apply(signal: NDArray, fir: FirFilter) -> NDArray:
    """Linear convolution with "same" alignment.

    For symmetric odd-length taps the group delay cancels, so sample k of
    the output corresponds to sample k of the input.
    """
    x = np.asarray(signal)
    if x.size == 0:
        raise ValueError("empty signal")
    return fftconvolve(x, fir.taps.astype(x.dtype, copy=False), mode="same")


def dft_filter(signal: NDArray, sample_rate: float, transfer) -> NDArray[np.complex128]:
    """Apply transfer(f) in the DFT domain over the full signal length.

    f is the two-sided DFT grid in Hz, spanning [-fs/2, fs/2). Signals
    here stay below a few million samples, so one block is enough.
    """
    x = np.asarray(signal, dtype=np.complex128)
    if x.size < 2:
        raise ValueError(f"signal length must be >= 2, got {x.size}")
    if sample_rate <= 0:
        raise ValueError(f"sample_rate must be positive, got {sample_rate}")
    f = np.fft.fftfreq(x.size, d=1.0 / sample_rate)
    gain = np.asarray(transfer(f), dtype=np.complex128)
    return np.fft.ifft(np.fft.fft(x) * gain)


def upsample_zero_insert(symbols: NDArray, sps: int) -> NDArray:
    """Insert sps-1 zeros after each symbol."""
    if sps < 1:
        raise ValueError(f"sps must be >= 1, got {sps}")
    x = np.asarray(symbols)
    out = np.zeros(x.size * sps, dtype=np.float64 if not np.iscomplexobj(x) else np.complex128)
    out[::sps] = x
    return out


def resample(signal: NDArray, sps_from: int, sps_to: int, phase: int = 0) -> NDArray:
    """Integer-factor decimation with a brick-wall anti-alias low-pass.

    Only integer ratios are supported (8 -> 2 is the required path). The
    low-pass is applied in the DFT domain at the new Nyquist frequency,
    then every factor-th sample starting at `phase` is kept.
    """
    if sps_from < 1 or sps_to < 1:
        raise ValueError(f"rates must be >= 1, got {sps_from} -> {sps_to}")
    x = np.asarray(signal)
    if sps_from == sps_to:
        return x.copy()
    if sps_from % sps_to != 0:
        raise ValueError(f"unsupported ratio {sps_from} -> {sps_to}: integer factor required")
    factor = sps_from // sps_to
    if not 0 <= phase < factor:
        raise ValueError(f"phase must be in [0, {factor}), got {phase}")

    was_real = not np.iscomplexobj(x)
    n = x.size
    cutoff = 0.5 / factor  # cycles per input sample
    f = np.fft.fftfreq(n)
    gain = (np.abs(f) < cutoff).astype(np.complex128)
    y = np.fft.ifft(np.fft.fft(np.asarray(x, dtype=np.complex128)) * gain)
    y = y[phase::factor]
    return y.real if was_real else y
