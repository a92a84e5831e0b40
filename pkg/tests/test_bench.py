"""Tests for the experiment driver: config format, sweeps, snapshots, CLI."""

import numpy as np
import pytest

from plasmalink.bench import (
    ExperimentConfig,
    SerStats,
    _es_n0_db,
    _symbol_energy,
    build_channel,
    cell_seed,
    compute_ser,
    config_from_text,
    config_to_text,
    load_config,
    run_fading_estimation,
    run_learning_snapshots,
    run_ser_sweep,
)
from plasmalink.cli import main
from plasmalink.em import demodulate
from plasmalink.exceptions import ConfigError
from plasmalink.link import load_sequence_csv


def quick_config(**overrides):
    base = dict(frame_length=512, pilot_intervals=(16,), snr_db=(14.0,),
                pretrain_steps=150, em_iterations=2, mstep_steps=30,
                dnn_steps=200, trials=1, snr_reference="received",
                standard_drude_loss=True)
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfigFormat:
    def test_round_trip(self):
        config = quick_config(snr_db=(0.0, 3.5), receivers=("genie_ml",),
                              sheath_thickness_m=1e-5, seed=9, workers=2)
        assert config_from_text(config_to_text(config)) == config

    def test_defaults_round_trip(self):
        config = ExperimentConfig()
        assert config_from_text(config_to_text(config)) == config

    def test_density_unit_suffixes(self):
        config = config_from_text("n_e_min_per_cm3 = 1e16\n"
                                  "n_e_max_per_m3 = 5e23\n")
        assert config.n_e_min == 1e22
        assert config.n_e_max == 5e23

    def test_mixed_density_units_rejected(self):
        with pytest.raises(ConfigError, match="twice"):
            config_from_text("n_e_min_per_m3 = 1e22\n"
                             "n_e_min_per_cm3 = 1e16\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            config_from_text("snr_floor = 3\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="bad value"):
            config_from_text("trials = many\n")

    def test_optional_fields_none_and_auto(self):
        for token in ("none", "auto"):
            config = config_from_text(f"sheath_thickness_m = {token}\n")
            assert config.sheath_thickness_m is None
        config = config_from_text("sheath_thickness_m = 2.5e-5\n")
        assert config.sheath_thickness_m == 2.5e-5

    def test_comments_and_blank_lines_ignored(self):
        config = config_from_text("# a comment\n\nseed = 4  # trailing\n")
        assert config.seed == 4

    def test_validation(self):
        with pytest.raises(ConfigError, match="profile"):
            ExperimentConfig(profile="square")
        with pytest.raises(ConfigError, match="snr_reference"):
            ExperimentConfig(snr_reference="antenna")
        with pytest.raises(ConfigError, match="receivers"):
            ExperimentConfig(receivers=("smn", "zf"))
        with pytest.raises(ConfigError, match=">= 1"):
            ExperimentConfig(trials=0)

    def test_missing_file_message_names_path(self, tmp_path):
        with pytest.raises(ConfigError, match="nowhere.txt"):
            load_config(tmp_path / "nowhere.txt")


class TestSnrPlumbing:
    def test_symbol_energy_reference(self):
        gains = np.array([1.0, 0.5j])
        assert _symbol_energy(quick_config(snr_reference="transmit"),
                              gains) == 1.0
        assert _symbol_energy(quick_config(snr_reference="received"),
                              gains) == pytest.approx(0.625, rel=1e-12)

    def test_ebn0_relabeling(self):
        config = quick_config(snr_is_ebn0=True)
        expect = 8.0 + 10 * np.log10(2)  # QPSK: Es = 2 Eb
        assert _es_n0_db(config, 8.0) == pytest.approx(expect, rel=1e-12)
        assert _es_n0_db(quick_config(), 8.0) == 8.0

    def test_cell_seed_keyed_by_values(self):
        assert cell_seed(0, 14.0, 256, 3) == cell_seed(0, 14.0, 256, 3)
        keys = {cell_seed(0, snr, iv, t)
                for snr in (0.0, 14.0) for iv in (16, 256) for t in (0, 1)}
        assert len(keys) == 8


class TestComputeSer:
    def test_identical_sequences(self):
        truth = np.arange(8) % 4
        stats = compute_ser(truth, truth, np.arange(8))
        assert stats.errors == 0 and stats.ser == 0.0

    def test_all_different_payload(self):
        truth = np.zeros(100, dtype=int)
        stats = compute_ser(truth + 1, truth, np.arange(100))
        assert stats.errors == 100 and stats.ser == 1.0

    def test_pilots_excluded(self):
        truth = np.array([0, 1, 2, 3])
        wrong = np.array([9, 1, 9, 3])
        stats = compute_ser(wrong, truth, np.array([1, 3]))
        assert stats == SerStats(errors=0, total=2)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length"):
            compute_ser(np.zeros(3, dtype=int), np.zeros(4, dtype=int),
                        np.arange(2))


class TestSerSweep:
    def test_sweep_output(self, tmp_path):
        config = quick_config(out_dir=str(tmp_path),
                              receivers=("genie_ml", "pilot_interp_ml"),
                              snr_db=(8.0, 14.0), trials=2)
        records = run_ser_sweep(config)
        assert len(records) == 4  # 2 receivers x 2 SNRs x 1 interval
        by_key = {(r["receiver"], r["snr_db"]): r for r in records}
        for snr in (8.0, 14.0):
            genie = by_key[("genie_ml", snr)]
            interp = by_key[("pilot_interp_ml", snr)]
            assert genie["ser"] <= interp["ser"]
            assert genie["status"] == "ok"
            # 512-symbol frame at interval 16 has 32 pilots
            assert genie["payload_symbols"] == 2 * (512 - 32)
            assert genie["bandwidth_utilization"] == 1 - 1 / 16

        text = (tmp_path / "ser_sweep.csv").read_text().splitlines()
        assert text[0] == "# schema: ser_sweep v1"
        assert text[1].startswith("receiver,snr_db,")
        assert len(text) == 2 + len(records)
        archived = load_config(tmp_path / "config.txt")
        assert archived == ExperimentConfig(**{
            **config.__dict__, "out_dir": ""})

    def test_utilization_at_default_interval(self, tmp_path):
        config = quick_config(out_dir=str(tmp_path), frame_length=4096,
                              pilot_intervals=(256,),
                              receivers=("genie_ml",))
        records = run_ser_sweep(config)
        util = records[0]["bandwidth_utilization"]
        assert util == 255 / 256
        assert abs(util - 0.996) < 1e-3

    def test_failed_cell_recorded_not_raised(self, tmp_path):
        # Interval = frame length leaves a single pilot: the interpolator
        # needs two, so its cell fails while the genie's still runs.
        config = quick_config(out_dir=str(tmp_path), frame_length=256,
                              pilot_intervals=(256,),
                              receivers=("genie_ml", "pilot_interp_ml"))
        records = run_ser_sweep(config)
        by_name = {r["receiver"]: r for r in records}
        assert by_name["genie_ml"]["status"] == "ok"
        assert "ConfigError" in by_name["pilot_interp_ml"]["status"]
        assert np.isnan(by_name["pilot_interp_ml"]["ser"])

    def test_rerun_is_byte_identical(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            run_ser_sweep(quick_config(out_dir=str(out),
                                       receivers=("genie_ml", "smn")))
        assert (out_a / "ser_sweep.csv").read_bytes() == \
               (out_b / "ser_sweep.csv").read_bytes()
        assert (out_a / "config.txt").read_bytes() == \
               (out_b / "config.txt").read_bytes()

    def test_worker_pool_matches_serial(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run_ser_sweep(quick_config(out_dir=str(out_a), trials=2,
                                   receivers=("genie_ml",)))
        run_ser_sweep(quick_config(out_dir=str(out_b), trials=2,
                                   receivers=("genie_ml",), workers=2))
        assert (out_a / "ser_sweep.csv").read_bytes() == \
               (out_b / "ser_sweep.csv").read_bytes()


class TestSnapshots:
    def test_six_snapshots_and_consistency(self, tmp_path):
        # em_iterations must exceed the mid-EM checkpoint for all six
        # states (raw, 2 pretrain, 2 EM, final) to be distinct.
        config = quick_config(out_dir=str(tmp_path), em_iterations=4)
        result, frame, rx = run_learning_snapshots(config)

        manifest = (tmp_path / "snapshot_manifest.csv").read_text()
        lines = manifest.splitlines()
        assert lines[0] == "# schema: snapshot_manifest v1"
        rows = [line.split(",") for line in lines[2:]]
        assert len(rows) == 6
        assert rows[0][1] == "raw" and rows[0][3] == "0"
        assert rows[1][1] == "pretrain" and rows[5][1] == "final"
        assert all(int(r[3]) > 0 for r in rows[1:])

        # curves file only references snapshots 1..5
        curve_lines = (tmp_path / "snapshot_curves.csv").read_text()
        snap_ids = {line.split(",")[0]
                    for line in curve_lines.splitlines()[2:]}
        assert snap_ids == {"1", "2", "3", "4", "5"}

        # final decisions in the file equal argmax of the final posterior
        expect = demodulate(result.weights)
        dec_lines = (tmp_path / "decisions.csv").read_text().splitlines()
        got = np.array([int(line.split(",")[1]) for line in dec_lines[2:]])
        np.testing.assert_array_equal(got, expect)

        # the received dump round-trips through the link reader
        frame2, rx2 = load_sequence_csv(tmp_path / "received.csv")
        np.testing.assert_array_equal(frame2.symbols, frame.symbols)
        np.testing.assert_allclose(rx2.samples, rx.samples, rtol=1e-15)

        # posterior dump rows are stochastic
        w_lines = (tmp_path / "weights.csv").read_text().splitlines()
        w = np.array([[float(v) for v in line.split(",")[1:]]
                      for line in w_lines[2:]])
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-9)

    def test_trace_csv_written(self, tmp_path):
        config = quick_config(out_dir=str(tmp_path))
        result, _, _ = run_learning_snapshots(config)
        lines = (tmp_path / "trace.csv").read_text().splitlines()
        assert lines[0] == "# schema: elbo_trace v1"
        assert len(lines) == 2 + len(result.trace)


class TestFadingEstimation:
    def test_summary_and_samples(self, tmp_path):
        config = quick_config(out_dir=str(tmp_path), snr_db=(20.0, 5.0),
                              pretrain_steps=400, em_iterations=3,
                              mstep_steps=50)
        summaries = run_fading_estimation(config)
        assert [s["snr_db"] for s in summaries] == [20.0, 5.0]
        assert all(np.isfinite(s["rmse"]) for s in summaries)
        assert all(s["samples"] == 512 for s in summaries)

        lines = (tmp_path / "fading.csv").read_text().splitlines()
        assert lines[0] == "# schema: fading v1"
        assert len(lines) == 2 + 2 * 512
        # RMSE in the summary file matches the per-sample rows
        errs = [float(line.split(",")[6]) for line in lines[2:2 + 512]]
        rmse = float(np.sqrt(np.mean(np.square(errs))))
        assert rmse == pytest.approx(summaries[0]["rmse"], rel=1e-12)


class TestCli:
    def test_ser_sweep_exit_zero(self, tmp_path, capsys):
        code = main(["ser-sweep", "--snr", "14", "--intervals", "16",
                     "--trials", "1", "--receivers", "genie_ml",
                     "--outdir", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "ser_sweep.csv").exists()
        assert "genie_ml" in capsys.readouterr().out

    def test_missing_config_exit_two(self, tmp_path, capsys):
        code = main(["ser-sweep", "--config",
                     str(tmp_path / "absent.txt")])
        assert code == 2
        assert "absent.txt" in capsys.readouterr().err

    def test_config_file_drives_run(self, tmp_path, capsys):
        config = quick_config(receivers=("genie_ml",))
        (tmp_path / "run.txt").write_text(config_to_text(config))
        code = main(["ser-sweep", "--config", str(tmp_path / "run.txt"),
                     "--outdir", str(tmp_path)])
        assert code == 0
        archived = load_config(tmp_path / "config.txt")
        assert archived.frame_length == 512
        assert archived.snr_reference == "received"

    def test_unknown_subcommand_exit_two(self):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 2

    def test_validate_physics_passes(self, capsys):
        assert main(["validate-physics"]) == 0
        assert "pass" in capsys.readouterr().out

    def test_bad_override_exit_two(self, capsys):
        code = main(["ser-sweep", "--snr", "ten"])
        assert code == 2
        assert "comma-separated" in capsys.readouterr().err
