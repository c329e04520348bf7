"""Input framing for the two equalizer families.

A frame is a window of sliced receiver samples feeding one network
evaluation. Sample-to-sample mode centers the window on one sample and
regresses that sample; samples-to-symbol mode stacks whole symbol groups
and classifies the middle symbol. Window length in samples is
memory = 2 * context_symbols * sps + current_width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .link import SlicedSignal


@dataclass(slots=True)
class FramingSpec:
    mode: str  # "sa" (samples to sample) or "sy" (samples to symbol)
    context_symbols: int = 3
    sps: int = 8
    n_slices: int = 4

    def __post_init__(self) -> None:
        if self.mode not in ("sa", "sy"):
            raise ValueError(f"mode must be 'sa' or 'sy', got {self.mode!r}")
        if self.context_symbols < 0:
            raise ValueError(f"context_symbols must be >= 0, got {self.context_symbols}")
        if self.sps < 1 or self.n_slices < 1:
            raise ValueError("sps and n_slices must be >= 1")

    @property
    def current_width(self) -> int:
        """Samples spanned by the unit being equalized (1 or sps)."""
        return 1 if self.mode == "sa" else self.sps

    @property
    def context_samples(self) -> int:
        """One-sided context in samples."""
        return self.context_symbols * self.sps

    @property
    def memory(self) -> int:
        """Total window length in samples: 2 * context + current unit."""
        return 2 * self.context_samples + self.current_width

    @property
    def features(self) -> int:
        """Flattened feature-vector length."""
        return self.memory * self.n_slices


def _frame_start(spec: FramingSpec, index: int, alignment: int) -> int:
    if spec.mode == "sa":
        return index - spec.context_samples
    return alignment + (index - spec.context_symbols) * spec.sps


def frame_window(sliced: SlicedSignal, spec: FramingSpec, index: int) -> NDArray[np.float64]:
    """One frame as a (memory, n_slices) matrix, time-major.

    `index` is a sample index in "sa" mode and a symbol index in "sy"
    mode. Raises IndexError when the window would leave the signal.
    """
    if sliced.n_slices != spec.n_slices:
        raise ValueError(f"signal has {sliced.n_slices} slices, spec expects {spec.n_slices}")
    start = _frame_start(spec, index, sliced.symbol_alignment)
    stop = start + spec.memory
    if start < 0 or stop > sliced.n_samples:
        raise IndexError(f"frame at index {index} spans samples [{start}, {stop}) outside the signal")
    return sliced.slices[:, start:stop].T.astype(np.float64, copy=True)


def frame_sa(sliced: SlicedSignal, spec: FramingSpec, k: int) -> NDArray[np.float64]:
    """Flattened sample-centered frame: [x_{k-L} .. x_k .. x_{k+L}]."""
    if spec.mode != "sa":
        raise ValueError("frame_sa requires an 'sa' spec")
    return frame_window(sliced, spec, k).reshape(-1)


def frame_sy(sliced: SlicedSignal, spec: FramingSpec, t: int) -> NDArray[np.float64]:
    """Flattened symbol-group frame: [x_{t-K} .. x_t .. x_{t+K}]."""
    if spec.mode != "sy":
        raise ValueError("frame_sy requires a 'sy' spec")
    return frame_window(sliced, spec, t).reshape(-1)


def valid_indices(sliced: SlicedSignal, spec: FramingSpec) -> range:
    """Unit indices whose frames fit entirely inside the signal."""
    if spec.mode == "sa":
        return range(spec.context_samples, sliced.n_samples - spec.context_samples)
    first = spec.context_symbols
    last = (sliced.n_samples - sliced.symbol_alignment) // spec.sps - spec.context_symbols - 1
    return range(first, last + 1)


class FrameSet:
    """Strided view over all frames of a signal, gathered per batch.

    The underlying sliding-window view costs no memory; gather() copies
    only the requested rows as a (batch, memory, n_slices) block.
    """

    def __init__(self, sliced: SlicedSignal, spec: FramingSpec):
        if sliced.n_slices != spec.n_slices:
            raise ValueError(f"signal has {sliced.n_slices} slices, spec expects {spec.n_slices}")
        self.spec = spec
        self.alignment = sliced.symbol_alignment
        self.indices = valid_indices(sliced, spec)
        # windows[i, j, w] = slices[j, i + w]
        self._windows = np.lib.stride_tricks.sliding_window_view(sliced.slices.T, spec.memory, axis=0)

    def gather(self, unit_indices: NDArray) -> NDArray[np.float64]:
        """Frames for the given unit indices, shape (batch, memory, n_slices)."""
        idx = np.asarray(unit_indices, dtype=np.int64)
        if self.spec.mode == "sa":
            starts = idx - self.spec.context_samples
        else:
            starts = self.alignment + (idx - self.spec.context_symbols) * self.spec.sps
        if starts.size and (int(starts.min()) < 0 or int(starts.max()) >= self._windows.shape[0]):
            raise IndexError("requested frames fall outside the signal")
        return np.ascontiguousarray(self._windows[starts].transpose(0, 2, 1), dtype=np.float64)
