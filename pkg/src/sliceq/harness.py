"""Experiment orchestration: seeded sweeps, persistence, and plots.

Every sweep point is an independent task with a seed derived from the
master seed and the point's coordinates, so results do not depend on
execution order or worker count, and a run is reproducible from its
config file alone.
"""

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from . import __version__
from .complexity import cc_ffe, realize_under_budget, report_for
from .dsp import generate_bits, make_prng
from .link import LinkConfig, resample_sliced, shape_drive, simulate_link, single_pd
from .rxdsp import (
    KP4_BER,
    count_ber,
    ffe_receiver,
    reference_receiver,
    required_snr_at_threshold,
)
from .training import (
    EqualizerSpec,
    equalize,
    spec_from_dict,
    spec_to_dict,
    table_preset,
    train,
)

logger = logging.getLogger(__name__)

CONFIG_FORMAT_VERSION = 1
SNR_STEP_DB = 1.0
SNR_CAP_DB = 30.0
#: symbols appended beyond train+test so framing and filter guards never
#: eat into the measurement span
EDGE_PAD_SYMBOLS = 160
#: symbols between the training span and the measured test span
SPAN_GUARD_SYMBOLS = 64

REFERENCE_ID = "pd-uneq"
B2B_REFERENCE_ID = "pd-b2b"
FFE_ID = "ffe11"

PROFILES = {
    "fast": dict(n_train_symbols=2 ** 16, n_test_symbols=2 ** 13, epoch_cap=300),
    "paper": dict(n_train_symbols=2 ** 19, n_test_symbols=2 ** 16, epoch_cap=None),
}


@dataclass(slots=True)
class ExperimentConfig:
    """Everything a sweep needs; round-trips losslessly through JSON."""

    link: LinkConfig = field(default_factory=LinkConfig)
    equalizers: list = field(default_factory=list)
    distances_km: list = field(default_factory=lambda: [0.0, 20.0, 40.0, 60.0, 74.0])
    snr_grid_db: list = field(default_factory=lambda: [8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0])
    budgets: list = field(default_factory=lambda: [100, 500, 1000, 1500])
    n_train_symbols: int = 2 ** 19
    n_test_symbols: int = 2 ** 16
    epoch_cap: int | None = None
    master_seed: int = 1
    out_dir: str = "results"
    include_reference: bool = True
    include_ffe: bool = True

    def __post_init__(self):
        if self.n_train_symbols < 1 or self.n_test_symbols < 1:
            raise ValueError("train/test symbol counts must be positive")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")


def default_config(profile: str = "fast", seed: int = 1,
                   out_dir: str = "results") -> ExperimentConfig:
    """Two-equalizer comparison config with profile-sized splits."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    p = PROFILES[profile]
    return ExperimentConfig(
        equalizers=[table_preset("fnn", "sa"), table_preset("fnn", "sy")],
        n_train_symbols=p["n_train_symbols"],
        n_test_symbols=p["n_test_symbols"],
        epoch_cap=p["epoch_cap"],
        master_seed=seed,
        out_dir=out_dir,
    )


def apply_profile(config: ExperimentConfig, profile: str) -> ExperimentConfig:
    """Override the execution-size knobs of a config with a profile's."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    p = PROFILES[profile]
    return replace(config, n_train_symbols=p["n_train_symbols"],
                   n_test_symbols=p["n_test_symbols"], epoch_cap=p["epoch_cap"])


def _link_to_dict(link: LinkConfig) -> dict:
    return {
        "baud_rate": link.baud_rate,
        "sim_sps": link.sim_sps,
        "rrc_alpha": link.rrc_alpha,
        "rrc_span": link.rrc_span,
        "fiber_length_km": link.fiber_length_km,
        "dispersion_ps_nm_km": link.dispersion_ps_nm_km,
        "wavelength_nm": link.wavelength_nm,
        "n_slices": link.n_slices,
        "slice_3db_bw_ghz": link.slice_3db_bw_ghz,
        "slice_spacing_ghz": link.slice_spacing_ghz,
        "slice_filter_order": link.slice_filter_order,
        "snr_db": None if math.isinf(link.snr_db) else link.snr_db,
        "mzm_model": link.mzm_model,
    }


def _link_from_dict(data: dict) -> LinkConfig:
    kwargs = dict(data)
    if kwargs.get("snr_db") is None:
        kwargs["snr_db"] = math.inf
    return LinkConfig(**kwargs)


def config_to_json(config: ExperimentConfig) -> str:
    payload = {
        "format_version": CONFIG_FORMAT_VERSION,
        "link": _link_to_dict(config.link),
        "equalizers": [spec_to_dict(s) for s in config.equalizers],
        "distances_km": list(config.distances_km),
        "snr_grid_db": list(config.snr_grid_db),
        "budgets": list(config.budgets),
        "n_train_symbols": config.n_train_symbols,
        "n_test_symbols": config.n_test_symbols,
        "epoch_cap": config.epoch_cap,
        "master_seed": config.master_seed,
        "out_dir": config.out_dir,
        "include_reference": config.include_reference,
        "include_ffe": config.include_ffe,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def config_from_json(text: str) -> ExperimentConfig:
    data = json.loads(text)
    version = data.get("format_version")
    if version != CONFIG_FORMAT_VERSION:
        raise ValueError(f"unsupported config format {version!r}")
    return ExperimentConfig(
        link=_link_from_dict(data["link"]),
        equalizers=[spec_from_dict(d) for d in data["equalizers"]],
        distances_km=[float(d) for d in data["distances_km"]],
        snr_grid_db=[float(s) for s in data["snr_grid_db"]],
        budgets=[int(b) for b in data["budgets"]],
        n_train_symbols=int(data["n_train_symbols"]),
        n_test_symbols=int(data["n_test_symbols"]),
        epoch_cap=None if data.get("epoch_cap") is None else int(data["epoch_cap"]),
        master_seed=int(data["master_seed"]),
        out_dir=data["out_dir"],
        include_reference=bool(data.get("include_reference", True)),
        include_ffe=bool(data.get("include_ffe", True)),
    )


def config_fingerprint(config: ExperimentConfig) -> str:
    """Hash of the experiment content; where outputs land is not identity."""
    payload = json.loads(config_to_json(config))
    payload.pop("out_dir")
    text = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def derive_seed(master_seed: int, *coords) -> int:
    """Stable 64-bit seed for one sweep point; distinct coords, distinct seed."""
    text = "|".join([str(master_seed)] + [repr(c) for c in coords])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


@dataclass(slots=True)
class SweepRecord:
    kind: str  # point | reference | failure | skipped
    distance_km: float
    snr_db: float
    equalizer: str
    framing: str  # sa | sy | -
    cc_per_symbol: int
    ber: float
    errors: int
    bits: int
    train_loss_final: float
    seed: int
    wall_time_s: float
    error: str = ""


@dataclass(slots=True)
class PenaltyRecord:
    distance_km: float
    equalizer: str
    required_snr_db: float | None
    penalty_db: float | None
    no_reach: bool


@dataclass(slots=True)
class SweepResult:
    kind: str
    records: list
    penalties: list
    config_fingerprint: str
    master_seed: int


@dataclass(slots=True)
class PointTask:
    """One self-contained sweep point, picklable for worker processes."""

    receiver: str  # nn | ffe | ref
    label: str
    link: LinkConfig
    spec: EqualizerSpec | None
    distance_km: float
    snr_db: float
    n_train: int
    n_test: int
    data_seed: int
    model_seed: int
    cc_per_symbol: int


def _nn_point(task: PointTask) -> tuple:
    spec = task.spec
    rng = make_prng(task.data_seed)
    n_total = task.n_train + task.n_test + EDGE_PAD_SYMBOLS
    bits = generate_bits(rng, n_total)
    config = replace(task.link, fiber_length_km=task.distance_km, snr_db=task.snr_db)
    sliced = simulate_link(bits, config, rng)
    if spec.framing.sps != config.sim_sps:
        sliced = resample_sliced(sliced, spec.framing.sps)
    drive = shape_drive(bits, config) if spec.framing.mode == "sa" else None
    spec = replace(spec, seed=task.model_seed)
    units = task.n_train * (spec.framing.sps if spec.framing.mode == "sa" else 1)
    model = train(spec, sliced, bits, n_train_units=units, drive=drive)
    decided, sl = equalize(model, sliced)
    s0 = task.n_train + SPAN_GUARD_SYMBOLS
    s1 = min(sl.stop, s0 + task.n_test)
    result = count_ber(decided[s0 - sl.start:s1 - sl.start], bits[s0:s1])
    return result, float(model.loss_trace[-1])


def _classic_point(task: PointTask) -> tuple:
    rng = make_prng(task.data_seed)
    n_total = task.n_train + task.n_test + 2 * SPAN_GUARD_SYMBOLS
    bits = generate_bits(rng, n_total)
    config = replace(task.link, fiber_length_km=task.distance_km, snr_db=task.snr_db)
    pd = single_pd(config)
    sliced = simulate_link(bits, pd, rng)
    samples = sliced.slices[0]
    if task.receiver == "ffe":
        result, _, _ = ffe_receiver(samples, bits, pd.sim_sps, pd.rrc_alpha,
                                    pd.rrc_span, task.n_train, SPAN_GUARD_SYMBOLS)
    else:
        result, _, _ = reference_receiver(samples, bits, pd.sim_sps, pd.rrc_alpha,
                                          pd.rrc_span, task.n_train, SPAN_GUARD_SYMBOLS)
    return result, math.nan


def run_point(task: PointTask) -> SweepRecord:
    """Execute one sweep point; failures come back as typed records."""
    t0 = time.perf_counter()
    framing = task.spec.framing.mode if task.spec is not None else "-"
    try:
        if task.receiver == "nn":
            result, loss = _nn_point(task)
        else:
            result, loss = _classic_point(task)
        return SweepRecord(kind="point", distance_km=task.distance_km,
                           snr_db=task.snr_db, equalizer=task.label,
                           framing=framing, cc_per_symbol=task.cc_per_symbol,
                           ber=result.ber, errors=result.errors,
                           bits=result.bits_counted, train_loss_final=loss,
                           seed=task.data_seed,
                           wall_time_s=time.perf_counter() - t0)
    except Exception as exc:  # crash isolation: the sweep must go on
        logger.warning("point %s @ %g km / %g dB failed: %s",
                       task.label, task.distance_km, task.snr_db, exc)
        return SweepRecord(kind="failure", distance_km=task.distance_km,
                           snr_db=task.snr_db, equalizer=task.label,
                           framing=framing, cc_per_symbol=task.cc_per_symbol,
                           ber=math.nan, errors=0, bits=0,
                           train_loss_final=math.nan, seed=task.data_seed,
                           wall_time_s=time.perf_counter() - t0,
                           error=f"{type(exc).__name__}: {exc}")


def _run_tasks(tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [run_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_point, tasks))


def _spec_labels(specs: list) -> list:
    """One unique id per configured equalizer (duplicates get a #n tag)."""
    labels, seen = [], {}
    for spec in specs:
        base = f"{spec.arch}-{spec.framing.mode}"
        seen[base] = seen.get(base, 0) + 1
        labels.append(base if seen[base] == 1 else f"{base}#{seen[base]}")
    return labels


def _spec_cc(spec: EqualizerSpec) -> int:
    return report_for(spec.arch, spec.framing.mode, spec.framing.memory,
                      spec.n_hidden, sps=spec.framing.sps,
                      n_slices=spec.framing.n_slices).cc_per_symbol


def _capped(spec: EqualizerSpec, epoch_cap: int | None) -> EqualizerSpec:
    if epoch_cap is None or spec.epochs <= epoch_cap:
        return spec
    return replace(spec, epochs=epoch_cap)


def _make_task(config: ExperimentConfig, receiver: str, label: str,
               spec: EqualizerSpec | None, distance: float, snr: float,
               cc: int) -> PointTask:
    data_seed = derive_seed(config.master_seed, "data", label, distance, snr)
    model_seed = derive_seed(config.master_seed, "model", label, distance, snr)
    return PointTask(receiver=receiver, label=label, link=config.link,
                     spec=spec, distance_km=distance, snr_db=snr,
                     n_train=config.n_train_symbols, n_test=config.n_test_symbols,
                     data_seed=data_seed, model_seed=model_seed, cc_per_symbol=cc)


def _record_sort_key(rec: SweepRecord):
    return (rec.distance_km, rec.snr_db, rec.equalizer)


def run_ber_vs_snr(config: ExperimentConfig, distance_km: float,
                   workers: int = 1) -> SweepResult:
    """BER over the SNR grid at one distance, with classic references."""
    if not config.snr_grid_db:
        raise ValueError("snr grid is empty")
    tasks = []
    for snr in config.snr_grid_db:
        if config.include_reference:
            tasks.append(_make_task(config, "ref", REFERENCE_ID, None,
                                    distance_km, snr, 0))
            tasks.append(_make_task(config, "ref", B2B_REFERENCE_ID, None,
                                    0.0, snr, 0))
        if config.include_ffe:
            tasks.append(_make_task(config, "ffe", FFE_ID, None,
                                    distance_km, snr, cc_ffe(11)))
        for spec, label in zip(config.equalizers, _spec_labels(config.equalizers)):
            spec = _capped(spec, config.epoch_cap)
            tasks.append(_make_task(config, "nn", label, spec,
                                    distance_km, snr, _spec_cc(spec)))
    records = sorted(_run_tasks(tasks, workers), key=_record_sort_key)
    for rec in records:
        if rec.kind == "point" and rec.equalizer in (REFERENCE_ID, B2B_REFERENCE_ID):
            rec.kind = "reference"
    return SweepResult(kind="ber_vs_snr", records=records, penalties=[],
                       config_fingerprint=config_fingerprint(config),
                       master_seed=config.master_seed)


def _curve(records_by_snr: dict) -> list:
    return [(snr, ber) for snr, ber in sorted(records_by_snr.items())
            if not math.isnan(ber)]


def run_penalty_vs_distance(config: ExperimentConfig,
                            workers: int = 1) -> SweepResult:
    """Required SNR at the KP4 threshold per (equalizer, distance).

    The penalty reference is the unequalized single-photodiode receiver
    at zero distance. Grids extend upward in 1 dB steps (up to a cap)
    until each curve's threshold crossing is bracketed; curves that never
    cross are marked no-reach.
    """
    if not config.distances_km:
        raise ValueError("distance list is empty")
    if not config.snr_grid_db:
        raise ValueError("snr grid is empty")

    subjects = [("ref", B2B_REFERENCE_ID, None, 0.0)]
    eq_labels = _spec_labels(config.equalizers)
    for distance in config.distances_km:
        if config.include_ffe:
            subjects.append(("ffe", FFE_ID, None, distance))
        for spec, label in zip(config.equalizers, eq_labels):
            spec = _capped(spec, config.epoch_cap)
            subjects.append(("nn", label, spec, distance))

    curves = {i: {} for i in range(len(subjects))}
    pending = {i: sorted(config.snr_grid_db) for i in range(len(subjects))}
    all_records = []
    while any(pending.values()):
        tasks, owners = [], []
        for i, snrs in pending.items():
            receiver, label, spec, distance = subjects[i]
            cc = _spec_cc(spec) if spec is not None else (
                cc_ffe(11) if receiver == "ffe" else 0)
            for snr in snrs:
                tasks.append(_make_task(config, receiver, label, spec,
                                        distance, snr, cc))
                owners.append(i)
        batch = _run_tasks(tasks, workers)
        for i, rec in zip(owners, batch):
            curves[i][rec.snr_db] = rec.ber
            all_records.append(rec)
        pending = {}
        for i in range(len(subjects)):
            curve = _curve(curves[i])
            if not curve:
                continue
            if required_snr_at_threshold(curve) is not None:
                continue
            top = max(curves[i])
            if top + SNR_STEP_DB <= SNR_CAP_DB:
                pending[i] = [top + SNR_STEP_DB]

    reference_required = required_snr_at_threshold(_curve(curves[0]))
    penalties = []
    for i, (receiver, label, spec, distance) in enumerate(subjects):
        if i == 0:
            continue
        required = required_snr_at_threshold(_curve(curves[i]))
        if required is None or reference_required is None:
            penalties.append(PenaltyRecord(distance_km=distance, equalizer=label,
                                           required_snr_db=required,
                                           penalty_db=None, no_reach=True))
        else:
            penalties.append(PenaltyRecord(distance_km=distance, equalizer=label,
                                           required_snr_db=required,
                                           penalty_db=required - reference_required,
                                           no_reach=False))
    penalties.sort(key=lambda p: (p.distance_km, p.equalizer))
    records = sorted(all_records, key=_record_sort_key)
    return SweepResult(kind="penalty_vs_distance", records=records,
                       penalties=penalties,
                       config_fingerprint=config_fingerprint(config),
                       master_seed=config.master_seed)


def _context_from_memory(memory: int, mode: str, sps: int) -> int:
    q = 1 if mode == "sa" else sps
    k2, rem = divmod(memory - q, 2 * sps)
    if rem:
        raise ValueError(f"memory {memory} not realizable at {sps} sps in {mode} mode")
    return k2


def run_complexity_scan(config: ExperimentConfig, workers: int = 1) -> SweepResult:
    """Train the closest realization under each budget at one link point.

    Uses the first configured distance and the highest configured SNR as
    the operating point; unreachable budgets become skipped records.
    """
    if not config.budgets:
        raise ValueError("budget list is empty")
    if not config.distances_km or not config.snr_grid_db:
        raise ValueError("need a distance and an snr to scan budgets at")
    distance = config.distances_km[0]
    snr = max(config.snr_grid_db)

    tasks, skipped = [], []
    eq_labels = _spec_labels(config.equalizers)
    for budget in config.budgets:
        for base, base_label in zip(config.equalizers, eq_labels):
            base = _capped(base, config.epoch_cap)
            picks = realize_under_budget(base.arch, base.framing.mode, budget,
                                         sps=base.framing.sps,
                                         n_slices=base.framing.n_slices,
                                         context_symbols=base.framing.context_symbols)
            label = f"{base_label}@{budget}"
            if not picks:
                skipped.append(SweepRecord(
                    kind="skipped", distance_km=distance, snr_db=snr,
                    equalizer=label, framing=base.framing.mode,
                    cc_per_symbol=0, ber=math.nan, errors=0, bits=0,
                    train_loss_final=math.nan, seed=0, wall_time_s=0.0,
                    error=f"no realization under budget {budget}"))
                continue
            top = picks[0]
            framing = replace(base.framing, context_symbols=_context_from_memory(
                top.memory, base.framing.mode, base.framing.sps))
            spec = replace(base, framing=framing, n_hidden=top.n_hidden,
                           n_filter_width=top.n_width)
            tasks.append(_make_task(config, "nn", label, spec, distance, snr,
                                    top.cc_per_symbol))
    records = sorted(_run_tasks(tasks, workers) + skipped, key=_record_sort_key)
    return SweepResult(kind="complexity_scan", records=records, penalties=[],
                       config_fingerprint=config_fingerprint(config),
                       master_seed=config.master_seed)


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".12g")
    return str(value)


def records_csv(result: SweepResult) -> str:
    """Deterministic CSV of every record; wall time stays out of it.

    Wall time varies run to run, so it lives in run_meta.json instead;
    everything here is a pure function of (config, master seed).
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["kind", "distance_km", "snr_db", "equalizer", "framing",
                     "cc_per_symbol", "ber", "errors", "bits",
                     "train_loss_final", "seed", "error"])
    for r in result.records:
        writer.writerow([r.kind, _fmt(r.distance_km), _fmt(r.snr_db),
                         r.equalizer, r.framing, r.cc_per_symbol, _fmt(r.ber),
                         r.errors, r.bits, _fmt(r.train_loss_final), r.seed,
                         r.error])
    return out.getvalue()


def penalties_csv(result: SweepResult) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["distance_km", "equalizer", "required_snr_db",
                     "penalty_db", "no_reach"])
    for p in result.penalties:
        writer.writerow([_fmt(p.distance_km), p.equalizer,
                         "" if p.required_snr_db is None else _fmt(p.required_snr_db),
                         "" if p.penalty_db is None else _fmt(p.penalty_db),
                         int(p.no_reach)])
    return out.getvalue()


def _plot_groups(records: list, x_attr: str):
    groups = {}
    for rec in records:
        if rec.kind in ("failure", "skipped") or math.isnan(rec.ber):
            continue
        groups.setdefault(rec.equalizer, []).append(
            (getattr(rec, x_attr), max(rec.ber, 1e-7)))
    return {k: sorted(v) for k, v in sorted(groups.items())}


def _render_svg(result: SweepResult, path) -> None:
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = result.config_fingerprint
    from matplotlib.backends.backend_svg import FigureCanvasSVG
    from matplotlib.figure import Figure

    fig = Figure(figsize=(7, 5))
    FigureCanvasSVG(fig)
    ax = fig.add_subplot(111)

    if result.kind == "penalty_vs_distance" and result.penalties:
        series = {}
        for p in result.penalties:
            series.setdefault(p.equalizer, []).append(p)
        for label, points in sorted(series.items()):
            points.sort(key=lambda p: p.distance_km)
            xs = [p.distance_km for p in points if not p.no_reach]
            ys = [p.penalty_db for p in points if not p.no_reach]
            ax.plot(xs, ys, marker="o", label=label)
            nx = [p.distance_km for p in points if p.no_reach]
            if nx:
                ax.plot(nx, [SNR_CAP_DB] * len(nx), linestyle="none",
                        marker="x", markersize=9, label=f"{label} (no reach)")
        ax.set_xlabel("distance [km]")
        ax.set_ylabel("SNR penalty at KP4 [dB]")
    else:
        x_attr = "cc_per_symbol" if result.kind == "complexity_scan" else "snr_db"
        for label, points in _plot_groups(result.records, x_attr).items():
            xs = [p[0] for p in points]
            ys = [p[1] for p in points]
            ax.semilogy(xs, ys, marker="o", label=label)
        ax.axhline(KP4_BER, color="gray", linestyle=":", label="KP4 threshold")
        ax.set_xlabel("RMPS" if x_attr == "cc_per_symbol" else "SNR [dB]")
        ax.set_ylabel("BER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title(result.kind.replace("_", " "))
    fig.savefig(path, metadata={"Date": None})


def emit_outputs(result: SweepResult, out_dir) -> list:
    """Write CSV, SVG, and run metadata; returns the created paths."""
    if not result.records and not result.penalties:
        raise ValueError("nothing to emit: empty sweep result")
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    csv_path = os.path.join(out_dir, f"{result.kind}.csv")
    with open(csv_path, "w", newline="") as fh:
        fh.write(records_csv(result))
    paths.append(csv_path)

    if result.penalties:
        pen_path = os.path.join(out_dir, "penalties.csv")
        with open(pen_path, "w", newline="") as fh:
            fh.write(penalties_csv(result))
        paths.append(pen_path)

    svg_path = os.path.join(out_dir, f"{result.kind}.svg")
    _render_svg(result, svg_path)
    paths.append(svg_path)

    meta_path = os.path.join(out_dir, "run_meta.json")
    meta = {
        "package_version": __version__,
        "kind": result.kind,
        "config_fingerprint": result.config_fingerprint,
        "master_seed": result.master_seed,
        "records": len(result.records),
        "wall_time_s": {f"{r.equalizer}@{_fmt(r.distance_km)}km/{_fmt(r.snr_db)}dB":
                        round(r.wall_time_s, 3) for r in result.records},
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(meta_path)
    return paths
