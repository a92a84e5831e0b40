"""Command-line front end for the experiment studies.

Subcommands:

  ser-sweep         SER vs SNR table for the configured receivers
  snapshots         training-process curve snapshots at one operating point
  fading            per-sample fading-estimate traces and RMSE per SNR
  validate-physics  dispersion self-consistency oracle over 1000 densities
  selftest          fast end-to-end invariant battery

Exit status: 0 on success, 1 on a failed check, 2 on usage or config
errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .baselines import genie_ml, qpsk_theory_ser
from .bench import (
    ExperimentConfig,
    cell_seed,
    load_config,
    run_fading_estimation,
    run_learning_snapshots,
    run_ser_sweep,
)
from .em import demodulate, e_step, elbo, fit
from .exceptions import ConfigError
from .link import build_constellation, build_frame, snr_to_noise_variance, transmit
from .net import collect_params, init_model, loss_and_gradients, with_params
from .physics import (
    attenuation_phase_coefficients,
    dielectric_coefficient,
    reference_channel_params,
)

__all__ = ["main"]


def _parse_floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers: {text!r}") from None


def _parse_ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers: {text!r}") from None


def _add_run_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="config file (key = value lines)")
    sub.add_argument("--seed", type=int, help="override base seed")
    sub.add_argument("--outdir", help="override output directory")
    sub.add_argument("--snr", help="override SNR list, e.g. 0,4,8 (dB)")
    sub.add_argument("--intervals", help="override pilot intervals, e.g. 16,256")
    sub.add_argument("--trials", type=int, help="override trials per cell")
    sub.add_argument("--receivers", help="override receiver list, comma-separated")
    sub.add_argument("--workers", type=int, help="override worker count")


def _resolve_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.outdir is not None:
        overrides["out_dir"] = args.outdir
    if args.snr is not None:
        overrides["snr_db"] = _parse_floats(args.snr)
    if args.intervals is not None:
        overrides["pilot_intervals"] = _parse_ints(args.intervals)
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.receivers is not None:
        overrides["receivers"] = tuple(
            r.strip() for r in args.receivers.split(",") if r.strip())
    if args.workers is not None:
        overrides["workers"] = args.workers
    return replace(config, **overrides)


def _cmd_ser_sweep(args) -> int:
    config = _resolve_config(args)
    records = run_ser_sweep(config)
    width = max(len(r["receiver"]) for r in records)
    for r in records:
        print(f"{r['receiver']:{width}s}  snr={r['snr_db']:5.1f} dB  "
              f"interval={r['pilot_interval']:4d}  ser={r['ser']:.5f}  "
              f"({r['errors']}/{r['payload_symbols']})"
              + ("" if r["status"] == "ok" else f"  [{r['status']}]"))
    print(f"wrote ser_sweep.csv to {config.resolve_out_dir()}")
    return 0


def _cmd_snapshots(args) -> int:
    config = _resolve_config(args)
    run_learning_snapshots(config)
    print(f"wrote snapshot files to {config.resolve_out_dir()}")
    return 0


def _cmd_fading(args) -> int:
    config = _resolve_config(args)
    summaries = run_fading_estimation(config)
    for s in summaries:
        print(f"snr={s['snr_db']:5.1f} dB  rmse={s['rmse']:.5f}  "
              f"({s['samples']} samples)")
    print(f"wrote fading files to {config.resolve_out_dir()}")
    return 0


def _cmd_validate_physics(args) -> int:
    """Dispersion self-consistency: the split coefficients must rebuild
    the complex propagation constant (omega/c) sqrt(eps_r)."""
    params = reference_channel_params()
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    lo, hi = params.density_range
    density = 10.0 ** rng.uniform(np.log10(lo), np.log10(hi), 1000)
    eps = dielectric_coefficient(density, params)
    alpha, beta = attenuation_phase_coefficients(density, params)
    reference = (params.carrier_angular_freq / 299792458.0) * np.sqrt(eps)
    rebuilt = beta - 1j * alpha
    rel = np.abs(rebuilt - reference) / np.abs(reference)
    worst = float(rel.max())
    print(f"1000 densities in [{lo:.3g}, {hi:.3g}] per m^3: "
          f"max relative error {worst:.3e}")
    if worst < 1e-10:
        print("validate-physics: pass")
        return 0
    print("validate-physics: FAIL (tolerance 1e-10)")
    return 1


def _selftest_checks():
    """Yield (name, callable) pairs; each callable raises on failure."""

    def physics_consistency():
        params = reference_channel_params()
        density = np.logspace(22, np.log10(6e23), 200)
        eps = dielectric_coefficient(density, params)
        alpha, beta = attenuation_phase_coefficients(density, params)
        ref = (params.carrier_angular_freq / 299792458.0) * np.sqrt(eps)
        np.testing.assert_allclose(beta - 1j * alpha, ref, rtol=1e-10)

    def constellation_energy():
        for bits in (1, 2, 3, 4):
            const = build_constellation(bits)
            np.testing.assert_allclose(np.abs(const.points), 1.0, atol=1e-12)

    def noise_calibration():
        const = build_constellation(2)
        frame = build_frame(4096, 256, rng_seed=7, order=const.order)
        var = snr_to_noise_variance(10.0)
        rx = transmit(frame, const, np.ones(4096, dtype=complex), var,
                      rng_seed=7)
        noise = rx.samples - const.points[frame.symbols]
        measured = np.mean(np.abs(noise) ** 2)
        se = var / np.sqrt(len(noise))
        assert abs(measured - var) < 5 * se, (measured, var)

    def gradient_check():
        const = build_constellation(2)
        model = init_model(const, rng_seed=3)
        rng = np.random.default_rng(3)
        y = rng.normal(size=(32, 2))
        w = rng.uniform(0.1, 1.0, size=(32, 4))
        w /= w.sum(axis=1, keepdims=True)
        _, grads = loss_and_gradients(model, y, w)
        params = collect_params(model)
        flat_g = np.concatenate([g.ravel() for g in grads])
        idx = rng.choice(flat_g.size, size=10, replace=False)
        h = 1e-5  # larger step: FD roundoff must stay below the 1e-6 floor
        for i in idx:
            def shifted(delta):
                moved, pos = [], 0
                for p in params:
                    block = p.ravel().copy()
                    if pos <= i < pos + block.size:
                        block[i - pos] += delta
                    moved.append(block.reshape(p.shape))
                    pos += block.size
                loss, _ = loss_and_gradients(with_params(model, moved), y, w)
                return loss
            fd = (shifted(h) - shifted(-h)) / (2 * h)
            denom = max(abs(fd), abs(flat_g[i]), 1e-6)
            assert abs(fd - flat_g[i]) / denom < 1e-4, (i, fd, flat_g[i])

    def em_soundness():
        const = build_constellation(2)
        frame = build_frame(256, 16, rng_seed=5, order=const.order)
        rx = transmit(frame, const, np.ones(256, dtype=complex),
                      snr_to_noise_variance(8.0), rng_seed=5)
        model = init_model(const, rng_seed=5)
        before = elbo(model, rx, e_step(model, rx, frame))
        w = e_step(model, rx, frame)
        after = elbo(model, rx, w)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-9)
        assert after >= before - 1e-9, (before, after)

    def genie_noiseless():
        const = build_constellation(2)
        frame = build_frame(512, 16, rng_seed=9, order=const.order)
        rx = transmit(frame, const, np.full(512, 0.6 + 0.2j), 0.0,
                      rng_seed=9)
        decisions = genie_ml(rx, const).decisions
        assert np.array_equal(decisions, frame.symbols)

    def theory_curve():
        vals = [qpsk_theory_ser(x) for x in (0.0, 4.0, 8.0)]
        assert all(a > b for a, b in zip(vals, vals[1:])), vals

    def quick_fit():
        const = build_constellation(2)
        config = ExperimentConfig(frame_length=512, pilot_intervals=(16,),
                                  snr_db=(20.0,), pretrain_steps=500,
                                  em_iterations=5, mstep_steps=60,
                                  snr_reference="received",
                                  standard_drude_loss=True)
        from .bench import build_channel
        _, gains = build_channel(config)
        es = float(np.mean(np.abs(gains) ** 2))
        seed = cell_seed(config.seed, 20.0, 16, 0)
        frame = build_frame(512, 16, rng_seed=seed, order=const.order)
        rx = transmit(frame, const, gains,
                      snr_to_noise_variance(20.0, symbol_energy=es),
                      rng_seed=seed)
        result = fit(rx, frame, const, config.schedule(), rng_seed=seed)
        decisions = demodulate(result.weights)
        errs = np.sum(decisions[frame.payload_positions]
                      != frame.symbols[frame.payload_positions])
        assert errs / len(frame.payload_positions) < 0.35, errs

    return [
        ("physics-consistency", physics_consistency),
        ("constellation-energy", constellation_energy),
        ("noise-calibration", noise_calibration),
        ("gradient-check", gradient_check),
        ("em-soundness", em_soundness),
        ("genie-noiseless", genie_noiseless),
        ("theory-curve", theory_curve),
        ("quick-fit", quick_fit),
    ]


def _cmd_selftest(args) -> int:
    failures = 0
    for name, check in _selftest_checks():
        try:
            check()
        except Exception as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"ok   {name}")
    if failures:
        print(f"selftest: {failures} check(s) failed")
        return 1
    print("selftest: all checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plasmalink",
        description="plasma-sheath channel simulator and receiver benchmarks")
    subs = parser.add_subparsers(dest="command", required=True)

    sweep = subs.add_parser("ser-sweep", help="SER vs SNR study")
    _add_run_flags(sweep)
    sweep.set_defaults(func=_cmd_ser_sweep)

    snaps = subs.add_parser("snapshots", help="training-process snapshots")
    _add_run_flags(snaps)
    snaps.set_defaults(func=_cmd_snapshots)

    fading = subs.add_parser("fading", help="fading-estimation study")
    _add_run_flags(fading)
    fading.set_defaults(func=_cmd_fading)

    phys = subs.add_parser("validate-physics",
                           help="dispersion self-consistency oracle")
    phys.add_argument("--seed", type=int, help="density sampling seed")
    phys.set_defaults(func=_cmd_validate_physics)

    selftest = subs.add_parser("selftest", help="fast invariant battery")
    selftest.set_defaults(func=_cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
