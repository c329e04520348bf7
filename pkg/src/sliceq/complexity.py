"""Real-multiplications-per-symbol accounting for the equalizer zoo.

Exact integer arithmetic throughout. The counts cover weight-application
multiplies only; additions, activations and gating products are free.

A samples-to-sample equalizer emits one value per input sample, so its
per-symbol cost is the per-run cost times the oversampling factor. A
samples-to-symbol equalizer runs once per symbol and the two figures
coincide.
"""

import csv
import io
import logging
import operator
from dataclasses import dataclass

from .framing import FramingSpec

logger = logging.getLogger(__name__)

ARCHS = ("fnn", "gru", "cnn")

#: oversampling at which each framing mode consumes the sliced waveforms
DEFAULT_SPS = {"sa": 8, "sy": 2}


def _count(name: str, value, minimum: int = 1) -> int:
    try:
        value = operator.index(value)
    except TypeError:
        raise ValueError(f"{name} must be an integer, got {value!r}") from None
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def cc_fnn(memory: int, n_slices: int, n_hidden: int, n_out: int) -> int:
    """Multiplies for one pass of a single-hidden-layer dense net."""
    m = _count("memory", memory)
    n = _count("n_slices", n_slices)
    nh = _count("n_hidden", n_hidden)
    no = _count("n_out", n_out)
    return m * n * nh + nh * no


def cc_gru(memory: int, n_slices: int, n_hidden: int, n_out: int) -> int:
    """Multiplies for one pass of a single-layer GRU over ``memory`` steps.

    Three gate blocks of (input + recurrent) matrices per step, plus an
    output projection charged once per step.
    """
    m = _count("memory", memory)
    n = _count("n_slices", n_slices)
    nh = _count("n_hidden", n_hidden)
    no = _count("n_out", n_out)
    return 3 * (n * nh + nh * nh) * m + nh * no * m


def cc_cnn(memory: int, n_slices: int, n_hidden: int, width: int, n_out: int) -> int:
    """Multiplies for one pass of a single valid-convolution layer net."""
    m = _count("memory", memory)
    n = _count("n_slices", n_slices)
    nh = _count("n_hidden", n_hidden)
    nw = _count("width", width)
    no = _count("n_out", n_out)
    if nw > m:
        raise ValueError(f"width {nw} exceeds memory {m}")
    positions = m - nw + 1
    return n * nh * nw * positions + positions * nh * no


def cc_ffe(n_taps: int) -> int:
    """Multiplies per symbol of a linear feedforward equalizer."""
    return _count("n_taps", n_taps) + 1


@dataclass(frozen=True, slots=True)
class ComplexityReport:
    """One realized equalizer geometry with its multiply counts."""

    arch: str
    mode: str
    memory: int
    n_hidden: int
    n_width: int | None
    n_out: int
    n_slices: int
    sps: int
    cc_per_unit: int
    cc_per_symbol: int

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.mode not in ("sa", "sy"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.cc_per_symbol < self.cc_per_unit:
            raise ValueError("per-symbol count cannot undercut per-run count")


def report_for(arch: str, mode: str, memory: int, n_hidden: int, *,
               sps: int, n_slices: int = 4, n_out: int = 1) -> ComplexityReport:
    """Build the count report for one concrete geometry.

    Convolutional nets are realized full-width (one filter position), so
    their window equals the frame memory.
    """
    if arch == "fnn":
        width = None
        unit = cc_fnn(memory, n_slices, n_hidden, n_out)
    elif arch == "gru":
        width = None
        unit = cc_gru(memory, n_slices, n_hidden, n_out)
    elif arch == "cnn":
        width = memory
        unit = cc_cnn(memory, n_slices, n_hidden, width, n_out)
    else:
        raise ValueError(f"unknown arch {arch!r}")
    sps = _count("sps", sps)
    per_symbol = unit * sps if mode == "sa" else unit
    return ComplexityReport(arch=arch, mode=mode, memory=memory,
                            n_hidden=n_hidden, n_width=width, n_out=n_out,
                            n_slices=n_slices, sps=sps, cc_per_unit=unit,
                            cc_per_symbol=per_symbol)


def _memory_for(mode: str, context_symbols: int, sps: int, n_slices: int) -> int:
    return FramingSpec(mode=mode, context_symbols=context_symbols,
                       sps=sps, n_slices=n_slices).memory


def realize_under_budget(arch: str, mode: str, budget: int, *,
                         sps: int | None = None, n_slices: int = 4,
                         n_out: int = 1, context_symbols: int = 3,
                         gru_context_range: tuple = (0, 1, 2, 3)) -> list[ComplexityReport]:
    """Enumerate geometries whose per-symbol count lands near ``budget``.

    Returns every candidate within +/-20% of the budget plus the overall
    closest one, sorted so the head of the list is the pick: smallest
    |cc - budget| first, ties broken toward staying under budget. Hidden
    width is swept; the frame context is fixed except for the recurrent
    net, whose step count dominates its cost and is swept too. An
    unreachable budget (below the smallest realizable count) yields an
    empty list.
    """
    budget = _count("budget", budget)
    if sps is None:
        sps = DEFAULT_SPS[mode]

    if arch == "gru":
        memories = sorted({_memory_for(mode, k, sps, n_slices)
                           for k in gru_context_range})
    else:
        memories = [_memory_for(mode, context_symbols, sps, n_slices)]

    floor = min(report_for(arch, mode, m, 1, sps=sps, n_slices=n_slices,
                           n_out=n_out).cc_per_symbol for m in memories)
    if budget < floor:
        logger.warning("budget %d below smallest achievable count %d for %s/%s",
                       budget, floor, mode, arch)
        return []

    candidates: list[ComplexityReport] = []
    for memory in memories:
        n_hidden = 1
        while True:
            rep = report_for(arch, mode, memory, n_hidden, sps=sps,
                             n_slices=n_slices, n_out=n_out)
            candidates.append(rep)
            # counts grow monotonically in the hidden width, so once a
            # branch clears the +20% band nothing further can qualify
            if 5 * rep.cc_per_symbol > 6 * budget:
                break
            n_hidden += 1

    def distance(rep: ComplexityReport):
        cc = rep.cc_per_symbol
        return (abs(cc - budget), 1 if cc > budget else 0, cc,
                rep.memory, rep.n_hidden)

    best = min(candidates, key=distance)
    in_band = [rep for rep in candidates
               if 4 * budget <= 5 * rep.cc_per_symbol <= 6 * budget]
    if best not in in_band:
        in_band.append(best)
    return sorted(in_band, key=distance)


def budget_table(mode: str, budgets, archs=ARCHS, **kwargs) -> str:
    """CSV table of the chosen realization per (budget, architecture)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["budget", "arch", "mode", "memory", "n_hidden",
                     "n_width", "cc_per_unit", "cc_per_symbol"])
    for budget in budgets:
        for arch in archs:
            picks = realize_under_budget(arch, mode, budget, **kwargs)
            if not picks:
                writer.writerow([budget, arch, mode, "", "", "", "", ""])
                continue
            top = picks[0]
            writer.writerow([budget, arch, mode, top.memory, top.n_hidden,
                             "" if top.n_width is None else top.n_width,
                             top.cc_per_unit, top.cc_per_symbol])
    return out.getvalue()
