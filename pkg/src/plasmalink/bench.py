"""Experiment driver: seeded, configurable runs emitting CSV artifacts.

Three studies are wired up:

  run_ser_sweep          SER vs SNR for every receiver and pilot interval
  run_learning_snapshots six checkpoints of the curve during training
                         (raw pilots, two pretraining states, two EM states,
                         final decisions)
  run_fading_estimation  per-sample channel-gain estimates and RMSE per SNR

Every output is reproducible byte-for-byte from (config, seed): cells draw
their seeds from a documented SeedSequence key (base seed, cell role,
SNR in millidecibels, pilot interval, trial index), so editing the SNR or
interval grids never shifts the other cells' random streams.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .baselines import (
    DnnTrainConfig,
    genie_ml,
    pilot_interp_ml,
    supervised_dnn,
)
from .em import EmSchedule, demodulate, extract_fading_curve, fit
from .exceptions import ConfigError
from .link import (
    build_constellation,
    build_frame,
    save_sequence_csv,
    snr_to_noise_variance,
    transmit,
)
from .net import decode_curve, encode
from .physics import (
    DensityTrajectory,
    channel_gain,
    density_trajectory,
    reference_channel_params,
)
from .seeding import ROLES

__all__ = [
    "ExperimentConfig",
    "SerStats",
    "config_to_text",
    "config_from_text",
    "load_config",
    "save_config",
    "build_channel",
    "cell_seed",
    "compute_ser",
    "run_ser_sweep",
    "run_learning_snapshots",
    "run_fading_estimation",
]

RECEIVER_NAMES = ("smn", "genie_ml", "pilot_interp_ml", "supervised_dnn")


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat, fully serializable description of one experiment.

    Densities are per cubic meter internally; the text format also accepts
    *_per_cm3 keys (scaled by 1e6 on read) so the two unit conventions can
    never be silently confused.
    """

    # channel
    carrier_freq_hz: float = 9e9
    collision_freq_hz: float = 20e9
    frequencies_are_angular: bool = False
    n_e_min: float = 1e22
    n_e_max: float = 6e23
    sheath_thickness_m: float | None = None  # None: calibrate to gain_floor
    gain_floor: float = 0.05
    standard_drude_loss: bool = False
    # density trajectory
    profile: str = "sinusoid"
    oscillation_freq_hz: float = 20e3
    phase_offset_rad: float = 0.0
    symbol_rate_hz: float = 1e6
    constant_level: float | None = None
    # link
    bits_per_symbol: int = 2
    frame_length: int = 4096
    pilot_intervals: tuple = (256,)
    snr_db: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0)
    snr_reference: str = "transmit"  # or "received": mean received energy
    snr_is_ebn0: bool = False        # relabel: Es/N0 = value + 10log10(bits)
    # curve model training
    pretrain_steps: int = 2000
    em_iterations: int = 10
    mstep_steps: int = 100
    learning_rate: float = 1e-3
    init_std: float = 0.1
    hidden_units: int = 4
    # supervised classifier baseline
    dnn_hidden: int = 16
    dnn_steps: int = 2000
    dnn_learning_rate: float = 1e-3
    # harness
    receivers: tuple = RECEIVER_NAMES
    trials: int = 10
    seed: int = 0
    workers: int = 1
    out_dir: str = ""

    def __post_init__(self):
        if self.profile not in ("sinusoid", "linear_sweep", "constant"):
            raise ConfigError(f"unknown profile {self.profile!r}")
        if self.snr_reference not in ("transmit", "received"):
            raise ConfigError(
                f"snr_reference must be transmit or received, "
                f"got {self.snr_reference!r}")
        unknown = set(self.receivers) - set(RECEIVER_NAMES)
        if unknown:
            raise ConfigError(f"unknown receivers {sorted(unknown)}")
        if self.trials < 1 or self.workers < 1:
            raise ConfigError("trials and workers must be >= 1")

    def schedule(self) -> EmSchedule:
        return EmSchedule(pretrain_steps=self.pretrain_steps,
                          em_iterations=self.em_iterations,
                          mstep_steps=self.mstep_steps,
                          learning_rate=self.learning_rate)

    def dnn_config(self) -> DnnTrainConfig:
        return DnnTrainConfig(hidden_units=self.dnn_hidden,
                              steps=self.dnn_steps,
                              learning_rate=self.dnn_learning_rate,
                              init_std=self.init_std)

    def resolve_out_dir(self) -> Path:
        out = self.out_dir or os.environ.get("PLASMALINK_OUTDIR", ".")
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        return path


# ---------------------------------------------------------------------------
# config text format: one "key = value" per line, '#' comments


_LIST_FIELDS = {"pilot_intervals", "snr_db", "receivers"}
_OPTIONAL_FLOAT_FIELDS = {"sheath_thickness_m", "constant_level"}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def config_to_text(config: ExperimentConfig) -> str:
    lines = ["# experiment config v1"]
    for f in fields(config):
        lines.append(f"{f.name} = {_format_value(getattr(config, f.name))}")
    return "\n".join(lines) + "\n"


def _parse_scalar(name: str, text: str, kind):
    try:
        if kind is bool:
            if text not in ("true", "false"):
                raise ValueError(text)
            return text == "true"
        return kind(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def config_from_text(text: str) -> ExperimentConfig:
    """Parse the key=value format; unknown keys are errors, not warnings."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    defaults = ExperimentConfig()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        name, _, val = line.partition("=")
        name, val = name.strip(), val.strip()

        if name in ("n_e_min_per_m3", "n_e_max_per_m3",
                    "n_e_min_per_cm3", "n_e_max_per_cm3"):
            target = "n_e_min" if "min" in name else "n_e_max"
            scale = 1e6 if name.endswith("per_cm3") else 1.0
            if target in values:
                raise ConfigError(f"line {lineno}: {target} given twice "
                                  "(mixed density units?)")
            values[target] = scale * _parse_scalar(name, val, float)
            continue
        if name not in types:
            raise ConfigError(f"line {lineno}: unknown key {name!r}")
        if name in _OPTIONAL_FLOAT_FIELDS:
            values[name] = None if val in ("none", "auto") \
                else _parse_scalar(name, val, float)
        elif name in _LIST_FIELDS:
            items = [v.strip() for v in val.split(",") if v.strip()]
            if name == "receivers":
                values[name] = tuple(items)
            elif name == "pilot_intervals":
                values[name] = tuple(_parse_scalar(name, v, int)
                                     for v in items)
            else:
                values[name] = tuple(_parse_scalar(name, v, float)
                                     for v in items)
        else:
            kind = type(getattr(defaults, name))
            values[name] = _parse_scalar(name, val, kind)
    return replace(defaults, **values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return config_from_text(path.read_text())


def save_config(path, config: ExperimentConfig) -> None:
    Path(path).write_text(config_to_text(config))


def _archive_config(out_dir: Path, config: ExperimentConfig) -> None:
    """Archived copy is location-independent: the output path is not part
    of the experiment, so it is blanked before writing."""
    save_config(out_dir / "config.txt", replace(config, out_dir=""))


# ---------------------------------------------------------------------------
# channel and cell plumbing


def build_channel(config: ExperimentConfig):
    """Channel params (calibrating z if unset) and the gain sequence."""
    params = reference_channel_params(
        carrier_freq=config.carrier_freq_hz,
        collision_freq=config.collision_freq_hz,
        density_range=(config.n_e_min, config.n_e_max),
        sheath_thickness=config.sheath_thickness_m,
        frequencies_are_angular=config.frequencies_are_angular,
        standard_drude_loss=config.standard_drude_loss,
        gain_floor=config.gain_floor)
    traj = DensityTrajectory(profile_kind=config.profile,
                             oscillation_freq=config.oscillation_freq_hz,
                             phase_offset=config.phase_offset_rad,
                             length=config.frame_length,
                             symbol_rate=config.symbol_rate_hz,
                             constant_level=config.constant_level)
    gains = channel_gain(density_trajectory(traj, params), params)
    return params, gains


def _symbol_energy(config: ExperimentConfig, gains: np.ndarray) -> float:
    """Energy the SNR is referenced to (unit transmit vs mean received)."""
    if config.snr_reference == "received":
        return float(np.mean(np.abs(gains) ** 2))
    return 1.0


def _es_n0_db(config: ExperimentConfig, snr_db: float) -> float:
    if config.snr_is_ebn0:
        return snr_db + 10.0 * np.log10(config.bits_per_symbol)
    return snr_db


def cell_seed(base_seed: int, snr_db: float, interval: int,
              trial: int) -> int:
    """Per-cell seed keyed by values, not grid positions."""
    snr_key = int(round(snr_db * 1000)) & 0xFFFFFFFF
    seq = np.random.SeedSequence(
        [base_seed, ROLES["cell"], snr_key, interval, trial])
    return int(seq.generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class SerStats:
    errors: int
    total: int

    @property
    def ser(self) -> float:
        return self.errors / self.total


def compute_ser(decisions: np.ndarray, truth: np.ndarray,
                payload_positions: np.ndarray) -> SerStats:
    """Symbol errors over payload positions only; pilots never counted."""
    if len(decisions) != len(truth):
        raise ValueError(f"decisions length {len(decisions)} != truth "
                         f"length {len(truth)}")
    errs = int(np.sum(decisions[payload_positions]
                      != truth[payload_positions]))
    return SerStats(errors=errs, total=len(payload_positions))


# ---------------------------------------------------------------------------
# CSV helpers


def _write_csv(path, schema: str, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def save_trace_csv(path, trace) -> None:
    rows = [[r.phase, r.iteration, _fmt(r.elbo_before_e),
             _fmt(r.elbo_after_e), _fmt(r.loss_before_m),
             _fmt(r.loss_after_m), _fmt(r.noise_variance)] for r in trace]
    _write_csv(path, "elbo_trace v1",
               ["phase", "iteration", "elbo_before_e", "elbo_after_e",
                "loss_before_m", "loss_after_m", "noise_variance"], rows)


def save_weights_csv(path, weights: np.ndarray) -> None:
    k = weights.shape[1]
    rows = [[i] + [_fmt(w) for w in weights[i]]
            for i in range(weights.shape[0])]
    _write_csv(path, "posterior_matrix v1",
               ["index"] + [f"w{j}" for j in range(k)], rows)


# ---------------------------------------------------------------------------
# study 1: SER sweep


def _run_cell(config: ExperimentConfig, gains: np.ndarray, es: float,
              snr_db: float, interval: int, trial: int) -> dict:
    """All receivers on one simulated frame; returns receiver -> SerStats."""
    seed = cell_seed(config.seed, snr_db, interval, trial)
    const = build_constellation(config.bits_per_symbol)
    frame = build_frame(config.frame_length, interval, rng_seed=seed,
                        order=const.order)
    var = snr_to_noise_variance(_es_n0_db(config, snr_db), symbol_energy=es)
    rx = transmit(frame, const, gains, var, rng_seed=seed)

    out = {}
    for receiver in config.receivers:
        try:
            if receiver == "smn":
                result = fit(rx, frame, const, config.schedule(),
                             rng_seed=seed, hidden_units=config.hidden_units,
                             init_std=config.init_std)
                decisions = demodulate(result.weights)
            elif receiver == "genie_ml":
                decisions = genie_ml(rx, const).decisions
            elif receiver == "pilot_interp_ml":
                decisions = pilot_interp_ml(rx, frame, const).decisions
            else:
                decisions = supervised_dnn(rx, frame, const, rng_seed=seed,
                                           config=config.dnn_config()).decisions
            out[receiver] = compute_ser(decisions, frame.symbols,
                                        frame.payload_positions)
        except Exception as exc:  # cell isolation: record, keep sweeping
            out[receiver] = f"failed: {type(exc).__name__}: {exc}"
    return out


def _cell_worker(args):
    return args[3:], _run_cell(*args)


def run_ser_sweep(config: ExperimentConfig):
    """SER per (receiver, SNR, interval), aggregated over trials.

    Writes ser_sweep.csv plus the archived config; failed cells keep their
    row with empty numeric fields and the failure reason in `status`.
    """
    out_dir = config.resolve_out_dir()
    _archive_config(out_dir, config)
    _, gains = build_channel(config)
    es = _symbol_energy(config, gains)

    jobs = [(config, gains, es, snr, interval, trial)
            for snr in config.snr_db
            for interval in config.pilot_intervals
            for trial in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = dict(pool.map(_cell_worker, jobs))
    else:
        results = dict(_cell_worker(j) for j in jobs)

    records = []
    for snr in config.snr_db:
        for interval in config.pilot_intervals:
            for receiver in config.receivers:
                errors = total = 0
                failures = []
                for trial in range(config.trials):
                    stats = results[(snr, interval, trial)][receiver]
                    if isinstance(stats, SerStats):
                        errors += stats.errors
                        total += stats.total
                    else:
                        failures.append(f"trial {trial}: {stats}")
                status = "ok" if not failures else "; ".join(failures)
                util = 1.0 - 1.0 / interval
                records.append({
                    "receiver": receiver, "snr_db": snr,
                    "pilot_interval": interval, "trials": config.trials,
                    "payload_symbols": total, "errors": errors,
                    "ser": errors / total if total else float("nan"),
                    "bandwidth_utilization": util, "status": status,
                })

    rows = [[r["receiver"], _fmt(r["snr_db"]), r["pilot_interval"],
             r["trials"], r["payload_symbols"], r["errors"],
             _fmt(r["ser"]), _fmt(r["bandwidth_utilization"]), r["status"]]
            for r in records]
    _write_csv(out_dir / "ser_sweep.csv", "ser_sweep v1",
               ["receiver", "snr_db", "pilot_interval", "trials",
                "payload_symbols", "errors", "ser",
                "bandwidth_utilization", "status"], rows)
    return records


# ---------------------------------------------------------------------------
# study 2: learning-process snapshots


def _pilot_lam_span(model, rx, frame):
    """Curve-coordinate range of the labeled pilot samples."""
    y = rx.iq()[frame.pilot_positions]
    labels = frame.symbols[frame.pilot_positions]
    lam = np.array([encode(model, k, y[i:i + 1])[0]
                    for i, k in enumerate(labels)])
    return float(lam.min()), float(lam.max())


def run_learning_snapshots(config: ExperimentConfig, grid_size: int = 201):
    """Six training states at the first (SNR, interval) of the config.

    Snapshot 0 is the raw received data (no curves); 1 and 2 are two
    pretraining states; 3 and 4 are two EM states; 5 is the final state
    whose decisions are also written out. Emits received.csv,
    snapshot_manifest.csv, snapshot_curves.csv, decisions.csv, trace.csv
    and the archived config.
    """
    out_dir = config.resolve_out_dir()
    _archive_config(out_dir, config)
    _, gains = build_channel(config)
    es = _symbol_energy(config, gains)
    snr = config.snr_db[0]
    interval = config.pilot_intervals[0]
    seed = cell_seed(config.seed, snr, interval, 0)

    const = build_constellation(config.bits_per_symbol)
    frame = build_frame(config.frame_length, interval, rng_seed=seed,
                        order=const.order)
    var = snr_to_noise_variance(_es_n0_db(config, snr), symbol_energy=es)
    rx = transmit(frame, const, gains, var, rng_seed=seed)
    save_sequence_csv(out_dir / "received.csv", frame, rx)

    schedule = config.schedule()
    pre_steps = sorted({max(1, schedule.pretrain_steps // 8),
                        max(1, schedule.pretrain_steps)})
    em_iters = sorted({1, max(2, schedule.em_iterations // 2)}
                      & set(range(1, schedule.em_iterations + 1)) or {1})
    captured = []

    def pretrain_hook(step, model):
        if step in pre_steps:
            captured.append(("pretrain", step, model))

    def em_hook(iteration, model, weights):
        if iteration in em_iters and iteration != schedule.em_iterations:
            captured.append(("em", iteration, model))

    result = fit(rx, frame, const, schedule, rng_seed=seed,
                 hidden_units=config.hidden_units, init_std=config.init_std,
                 pretrain_hook=pretrain_hook, em_hook=em_hook)
    captured.append(("final", schedule.em_iterations, result.model))

    manifest = [[0, "raw", 0, 0]]
    curve_rows = []
    for sid, (phase, step, model) in enumerate(captured, start=1):
        lo, hi = _pilot_lam_span(model, rx, frame)
        grid = np.linspace(lo, hi, grid_size)
        curves = decode_curve(model, grid)
        manifest.append([sid, phase, step, curves.shape[0] * grid_size])
        for k in range(curves.shape[0]):
            for gi in range(grid_size):
                curve_rows.append([sid, k, _fmt(grid[gi]),
                                   _fmt(curves[k, gi, 0]),
                                   _fmt(curves[k, gi, 1])])

    _write_csv(out_dir / "snapshot_manifest.csv", "snapshot_manifest v1",
               ["snapshot", "phase", "step", "curve_points"], manifest)
    _write_csv(out_dir / "snapshot_curves.csv", "snapshot_curves v1",
               ["snapshot", "symbol", "lam", "I", "Q"], curve_rows)

    decisions = demodulate(result.weights)
    _write_csv(out_dir / "decisions.csv", "decisions v1",
               ["index", "decision", "truth"],
               [[i, int(decisions[i]), int(frame.symbols[i])]
                for i in range(len(frame))])
    save_trace_csv(out_dir / "trace.csv", result.trace)
    save_weights_csv(out_dir / "weights.csv", result.weights)
    return result, frame, rx


# ---------------------------------------------------------------------------
# study 3: fading estimation


def run_fading_estimation(config: ExperimentConfig):
    """Per-sample gain estimates and RMSE for every configured SNR.

    Uses the first pilot interval; writes fading.csv (per-sample traces)
    and fading_summary.csv (per-SNR RMSE) plus the archived config.
    """
    out_dir = config.resolve_out_dir()
    _archive_config(out_dir, config)
    _, gains = build_channel(config)
    es = _symbol_energy(config, gains)
    const = build_constellation(config.bits_per_symbol)
    interval = config.pilot_intervals[0]

    sample_rows = []
    summary_rows = []
    summaries = []
    for snr in config.snr_db:
        seed = cell_seed(config.seed, snr, interval, 0)
        frame = build_frame(config.frame_length, interval, rng_seed=seed,
                            order=const.order)
        var = snr_to_noise_variance(_es_n0_db(config, snr),
                                    symbol_energy=es)
        rx = transmit(frame, const, gains, var, rng_seed=seed)
        result = fit(rx, frame, const, config.schedule(), rng_seed=seed,
                     hidden_units=config.hidden_units,
                     init_std=config.init_std)
        estimate = extract_fading_curve(result.model, rx, result.weights,
                                        const, frame=frame)
        err = estimate.estimates - rx.true_gains
        rmse = float(np.sqrt(np.mean(np.abs(err) ** 2)))
        summaries.append({"snr_db": snr, "rmse": rmse,
                          "samples": len(rx)})
        summary_rows.append([_fmt(snr), _fmt(rmse), len(rx)])
        for i in range(len(rx)):
            sample_rows.append([
                _fmt(snr), i,
                _fmt(rx.true_gains[i].real), _fmt(rx.true_gains[i].imag),
                _fmt(estimate.estimates[i].real),
                _fmt(estimate.estimates[i].imag),
                _fmt(abs(err[i]))])

    _write_csv(out_dir / "fading.csv", "fading v1",
               ["snr_db", "index", "true_I", "true_Q", "est_I", "est_Q",
                "abs_error"], sample_rows)
    _write_csv(out_dir / "fading_summary.csv", "fading_summary v1",
               ["snr_db", "rmse", "samples"], summary_rows)
    return summaries
