"""End-to-end command-line behaviour: files, determinism, exit codes."""

import csv
import json
import os

import numpy as np
import pytest

from echo_gfa import __version__
from echo_gfa.cli import (
    EXIT_CONFIG,
    EXIT_NUMERIC,
    EXIT_OK,
    THREADS_ENV,
    gamma_tag,
    main,
    read_curve,
    write_curve,
)
from echo_gfa.curves import FidelityCurve, TimeGrid
from echo_gfa.echo import EchoSetup, fidelity_curve
from echo_gfa.rmt import EnsembleConfig, build_realization


def write_config(path, **overrides):
    data = {
        "dim": 8,
        "beta": 1,
        "master_seed": 3,
        "lambda": 0.1,
        "gamma_list": [0.05, 0.2],
        "grid": {"dt": 0.05, "n_steps": 40},
        "n_run": 4,
        "n_batch": 2,
        "method": "auto",
    }
    data.update(overrides)
    data = {k: v for k, v in data.items() if v is not None}
    path.write_text(json.dumps(data))
    return path


def write_general_config(path, **overrides):
    data = {
        "dim": 4,
        "beta": 2,
        "master_seed": 5,
        "lambda": 0.1,
        "coupling_strength": 0.3,
        "kernel": {"kind": "delta", "c0": 1.0},
        "grid": {"dt": 0.05, "n_steps": 40},
        "n_draws": 3,
    }
    data.update(overrides)
    data = {k: v for k, v in data.items() if v is not None}
    path.write_text(json.dumps(data))
    return path


def read_payloads(out_dir):
    """Data files (not the manifest) as raw bytes, keyed by name."""
    return {
        p.name: p.read_bytes()
        for p in sorted(out_dir.iterdir())
        if p.name != "manifest.json"
    }


class TestCurveIO:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        grid = TimeGrid(dt=0.1, n_steps=30)
        curve = FidelityCurve(
            grid,
            rng.standard_normal(31) * 1e-3 + 1j * rng.standard_normal(31),
            stderr_re=np.abs(rng.standard_normal(31)) * 1e-7,
            stderr_im=np.abs(rng.standard_normal(31)) * 1e-7,
        )
        for fmt, name in (("csv", "c.csv"), ("json", "c.json")):
            path = tmp_path / name
            write_curve(path, curve, fmt)
            back = read_curve(path)
            assert back.grid == grid
            assert np.array_equal(back.values, curve.values)
            assert np.array_equal(back.stderr_re, curve.stderr_re)
            assert np.array_equal(back.stderr_im, curve.stderr_im)

    def test_missing_file_is_config_error(self, tmp_path):
        from echo_gfa.cli import ConfigError

        with pytest.raises(ConfigError, match="missing kernel input"):
            read_curve(tmp_path / "nope.csv")

    def test_header_checked(self, tmp_path):
        from echo_gfa.cli import ConfigError

        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n0,1\n")
        with pytest.raises(ConfigError, match="header"):
            read_curve(bad)


class TestSimulate:
    def test_unperturbed_run_is_flat(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", **{"lambda": 0.0})
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        for tag in ("0.05", "0.2"):
            with open(out / f"f_sim_gamma_{tag}.csv", newline="") as fh:
                rows = list(csv.DictReader(fh))
            re_f = np.array([float(r["re_f"]) for r in rows])
            im_f = np.array([float(r["im_f"]) for r in rows])
            assert np.max(np.abs(re_f - 1.0)) < 1e-9
            assert np.max(np.abs(im_f)) < 1e-9

    def test_expected_files_and_manifest(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        names = {p.name for p in out.iterdir()}
        expected = {"manifest.json", "f_lambda.csv", "f_bar.csv"}
        for tag in ("0.05", "0.2"):
            expected |= {
                f"f_sim_gamma_{tag}.csv",
                f"phi_gamma_{tag}.csv",
                f"f_theory_gamma_{tag}.csv",
                f"first_order_gamma_{tag}.csv",
                f"diff_sim_gamma_{tag}.csv",
                f"diff_theory_gamma_{tag}.csv",
            }
        assert names == expected
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["package_version"] == __version__
        assert manifest["config"]["master_seed"] == 3
        assert set(manifest["files"]) == {n[:-4] for n in names - {"manifest.json"}}
        assert manifest["alpha"]["0.2"] == pytest.approx(2.0)

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", str(cfg), "--out", str(out1)])
        main(["simulate", "--config", str(cfg), "--out", str(out2)])
        assert read_payloads(out1) == read_payloads(out2)

    def test_thread_count_does_not_change_bytes(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", n_run=5, n_batch=2)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", str(cfg), "--out", str(out1), "--threads", "1"])
        main(["simulate", "--config", str(cfg), "--out", str(out2), "--threads", "3"])
        assert read_payloads(out1) == read_payloads(out2)

    def test_threads_env_fallback(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path / "c.json", n_run=3, n_batch=1)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", str(cfg), "--out", str(out1), "--threads", "2"])
        monkeypatch.setenv(THREADS_ENV, "2")
        main(["simulate", "--config", str(cfg), "--out", str(out2)])
        assert read_payloads(out1) == read_payloads(out2)

    def test_seed_override_changes_data(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", str(cfg), "--out", str(out1), "--seed", "11"])
        main(["simulate", "--config", str(cfg), "--out", str(out2), "--seed", "12"])
        a = (out1 / "f_lambda.csv").read_bytes()
        b = (out2 / "f_lambda.csv").read_bytes()
        assert a != b

    def test_json_format_matches_csv_values(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", n_run=2, n_batch=1)
        out_c, out_j = tmp_path / "c", tmp_path / "j"
        main(["simulate", "--config", str(cfg), "--out", str(out_c), "--format", "csv"])
        main(["simulate", "--config", str(cfg), "--out", str(out_j), "--format", "json"])
        a = read_curve(out_c / "f_sim_gamma_0.05.csv")
        b = read_curve(out_j / "f_sim_gamma_0.05.json")
        assert np.array_equal(a.values, b.values)

    def test_initial_state_from_file(self, tmp_path):
        rho = np.zeros((8, 8), dtype=complex)
        rho[0, 0] = rho[1, 1] = 0.5
        rho[0, 1] = rho[1, 0] = 0.25
        np.save(tmp_path / "rho.npy", rho)
        cfg = write_config(
            tmp_path / "c.json",
            initial_state="rho.npy",
            gamma_list=[0.0],
            n_run=2,
            n_batch=1,
        )
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        # with G = 0 the simulated channel reproduces the echo of that state
        sim = read_curve(out / "f_sim_gamma_0.csv")
        base = read_curve(out / "f_lambda.csv")
        assert np.max(np.abs(sim.values - base.values)) < 1e-12


class TestTheory:
    def test_zero_rate_matches_baseline(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", gamma_list=[0.0], n_run=2, n_batch=1)
        out = tmp_path / "out"
        assert main(["theory", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        f = read_curve(out / "f_lambda.csv")
        th = read_curve(out / "f_theory_gamma_0.csv")
        assert np.array_equal(f.values, th.values)

    def test_kernels_reuse_reproduces_simulate_theory(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        sim_out = tmp_path / "sim"
        main(["simulate", "--config", str(cfg), "--out", str(sim_out)])
        th_out = tmp_path / "th"
        rc = main(
            ["theory", "--config", str(cfg), "--out", str(th_out),
             "--kernels", str(sim_out)]
        )
        assert rc == EXIT_OK
        for tag in ("0.05", "0.2"):
            a = (sim_out / f"f_theory_gamma_{tag}.csv").read_bytes()
            b = (th_out / f"f_theory_gamma_{tag}.csv").read_bytes()
            assert a == b
        manifest = json.loads((th_out / "manifest.json").read_text())
        assert manifest["kernel_source"] == str(sim_out)

    def test_missing_kernel_directory(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        rc = main(
            ["theory", "--config", str(cfg), "--out", str(tmp_path / "o"),
             "--kernels", str(tmp_path / "absent")]
        )
        assert rc == EXIT_CONFIG

    def test_denormalised_kernel_is_numeric_error(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        kdir = tmp_path / "k"
        kdir.mkdir()
        grid = TimeGrid(dt=0.05, n_steps=40)
        ones = FidelityCurve(grid, np.ones(41, dtype=complex))
        write_curve(kdir / "f_lambda.csv", ones, "csv")
        write_curve(
            kdir / "f_bar.csv", FidelityCurve(grid, np.full(41, 0.5, dtype=complex)), "csv"
        )
        rc = main(
            ["theory", "--config", str(cfg), "--out", str(tmp_path / "o"),
             "--kernels", str(kdir)]
        )
        assert rc == EXIT_NUMERIC

    def test_first_order_accuracy_tracks_rate(self, tmp_path):
        # the one-step iterate is near-exact at tiny damping, visibly off at
        # strong damping on the same kernels
        cfg = write_config(
            tmp_path / "c.json",
            dim=16,
            gamma_list=[0.00195, 0.1],
            grid={"dt": 0.02, "n_steps": 500},
            n_run=8,
            n_batch=1,
        )
        out = tmp_path / "out"
        assert main(["theory", "--config", str(cfg), "--out", str(out)]) == EXIT_OK

        def gap(tag):
            th = read_curve(out / f"f_theory_gamma_{tag}.csv")
            fo = read_curve(out / f"first_order_gamma_{tag}.csv")
            return np.max(np.abs(th.values - fo.values))

        assert gap("0.1") > 50 * gap("0.00195")


class TestGeneral:
    def test_zero_strength_equals_closed_system(self, tmp_path):
        cfg = write_general_config(
            tmp_path / "g.json", coupling_strength=0.0, n_draws=1
        )
        out = tmp_path / "out"
        assert main(["general", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        got = read_curve(out / "f_general.csv")
        real = build_realization(EnsembleConfig(dim=4, beta=2, master_seed=5))
        expected = fidelity_curve(
            real, EchoSetup(lam=0.1, grid=TimeGrid(dt=0.05, n_steps=40))
        )
        assert np.max(np.abs(got.values - expected.values)) < 1e-9

    def test_narrow_exponential_approaches_delta(self, tmp_path):
        delta_out, exp_out = tmp_path / "d", tmp_path / "e"
        cfg_d = write_general_config(tmp_path / "d.json")
        main(["general", "--config", str(cfg_d), "--out", str(delta_out)])
        cfg_e = write_general_config(
            tmp_path / "e.json",
            kernel={"kind": "exponential", "tau_c": 1e-3, "c0": 1.0},
        )
        main(["general", "--config", str(cfg_e), "--out", str(exp_out)])
        a = read_curve(delta_out / "f_general.csv")
        b = read_curve(exp_out / "f_general.csv")
        assert np.max(np.abs(a.values - b.values)) < 5e-3

    def test_manifest_records_reduction_rate(self, tmp_path):
        cfg = write_general_config(tmp_path / "g.json")
        out = tmp_path / "out"
        main(["general", "--config", str(cfg), "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        # strength^2 * dim * c0 = 0.09 * 4 * 1
        assert manifest["reduction_rate"] == pytest.approx(0.36)
        assert (out / "f_rmt_reference.csv").is_file()

    def test_fixed_coupling_file(self, tmp_path):
        v = np.diag([1.0, -1.0, 0.5, -0.5]).astype(complex)
        np.save(tmp_path / "v.npy", v)
        cfg = write_general_config(
            tmp_path / "g.json", coupling_file="v.npy", n_draws=1
        )
        out = tmp_path / "out"
        assert main(["general", "--config", str(cfg), "--out", str(out)]) == EXIT_OK

    def test_coupling_file_requires_single_draw(self, tmp_path):
        np.save(tmp_path / "v.npy", np.eye(4))
        cfg = write_general_config(
            tmp_path / "g.json", coupling_file="v.npy", n_draws=5
        )
        assert main(["general", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


class TestValidateAndErrors:
    def test_packaged_presets_validate(self, capsys):
        for preset in ("fig1.json", "fig2.json"):
            assert main(["validate-config", "--config", preset]) == EXIT_OK
            assert "config OK" in capsys.readouterr().out

    def test_missing_config_lists_presets(self, tmp_path, capsys):
        rc = main(["validate-config", "--config", str(tmp_path / "none.json")])
        assert rc == EXIT_CONFIG
        assert "fig1.json" in capsys.readouterr().err

    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        data = json.loads(cfg.read_text())
        data["surprise"] = 1
        cfg.write_text(json.dumps(data))
        assert main(["validate-config", "--config", str(cfg)]) == EXIT_CONFIG

    def test_step_size_violation_rejected_up_front(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.json", gamma_list=[50.0], grid={"dt": 0.05, "n_steps": 10}
        )
        assert main(["validate-config", "--config", str(cfg)]) == EXIT_CONFIG

    def test_unwritable_output_is_io_error(self, tmp_path):
        from echo_gfa.cli import EXIT_IO

        cfg = write_config(tmp_path / "c.json", n_run=1, n_batch=1, gamma_list=[0.0])
        blocker = tmp_path / "blocked"
        blocker.write_text("")  # a file where the output directory should go
        rc = main(["simulate", "--config", str(cfg), "--out", str(blocker / "sub")])
        assert rc == EXIT_IO

    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            main([])

    def test_console_script_installed(self):
        import shutil
        import subprocess

        exe = shutil.which("echo-gfa")
        assert exe is not None
        proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "simulate" in proc.stdout
