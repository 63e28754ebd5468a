"""Configuration files, snapshots, the diagnostics CSV and the command line."""

from __future__ import annotations

import csv
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import CONFIG_DIR, random_state
from tamed_mhd import SolverConfig, TamingFunction, run
from tamed_mhd.cli import EXIT_ASSERTION, EXIT_OK, main
from tamed_mhd.io import (
    ConfigError,
    Snapshot,
    SnapshotError,
    dump_config,
    load_config,
    load_snapshot,
    parse_config,
    read_diagnostics_csv,
    save_snapshot,
    snapshot_bytes,
    write_diagnostics_csv,
)
from tamed_mhd.measures import DiagnosticsRecord
from tamed_mhd.operators import recover_pressures


class TestConfig:
    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.toml")), ids=lambda p: p.stem)
    def test_shipped_configs_round_trip(self, path):
        cfg = load_config(path)
        text = dump_config(cfg)
        assert parse_config(text) == cfg
        assert dump_config(parse_config(text)) == text

    @settings(max_examples=30, deadline=None)
    @given(
        st.sampled_from([8, 16, 32]),
        st.floats(0.01, 100.0),
        st.one_of(st.none(), st.floats(1e-5, 1e-2)),
        st.integers(0, 2**31),
        st.sampled_from(["etd_rk2", "if_rk4"]),
    )
    def test_dump_parse_fixed_point(self, n, threshold, dt, seed, integrator):
        cfg = SolverConfig(n=n, threshold=threshold, dt=dt, seed=seed, integrator=integrator)
        assert parse_config(dump_config(cfg)) == cfg

    def test_missing_keys_take_defaults(self):
        assert parse_config("[grid]\nn = 16\n") == SolverConfig(n=16)

    def test_auto_step(self):
        assert parse_config('[time]\ndt = "auto"\n').dt is None
        assert 'dt = "auto"' in dump_config(SolverConfig(dt=None))

    @pytest.mark.parametrize(
        "text",
        [
            "[grid]\nsize = 16\n",
            "[mesh]\nn = 16\n",
            "[grid]\nn = 16.5\n",
            "[taming]\nenabled = 1\n",
            '[time]\ndt = "fast"\n',
            "[grid]\nn = 7\n",
            "[grid\n",
        ],
    )
    def test_rejects_bad_input(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)


class TestSnapshot:
    def _snap(self, grid, rng, pressures=True):
        s = random_state(grid, rng, amplitude=2.0).replace(t=0.25)
        pr = recover_pressures(s, TamingFunction(1.0)) if pressures else None
        return Snapshot.from_state(s, 1.0, pr)

    @pytest.mark.parametrize("pressures", [True, False])
    def test_byte_identical_round_trip(self, tmp_path, grid8, rng, pressures):
        snap = self._snap(grid8, rng, pressures)
        path = tmp_path / "a.tmhd"
        save_snapshot(path, snap)
        raw = path.read_bytes()
        assert len(raw) == Snapshot.byte_length(8, pressures)
        back = load_snapshot(path)
        assert snapshot_bytes(back) == raw
        assert back.t == 0.25 and back.threshold == 1.0
        assert np.array_equal(back.fields, snap.fields)

    def test_state_round_trip(self, tmp_path, grid8, rng):
        snap = self._snap(grid8, rng)
        save_snapshot(tmp_path / "a.tmhd", snap)
        state = load_snapshot(tmp_path / "a.tmhd").state()
        assert np.allclose(state.physical(), snap.fields, atol=1e-14)

    def test_header_layout(self, tmp_path, grid8, rng):
        raw = snapshot_bytes(self._snap(grid8, rng))
        assert raw[:5] == b"TMHD1"
        assert int.from_bytes(raw[5:7], "little") == 1
        assert [int.from_bytes(raw[7 + 4 * i:11 + 4 * i], "little") for i in range(3)] == [8, 8, 8]

    @pytest.mark.parametrize(
        "corrupt",
        [
            lambda b: b"XMHD1" + b[5:],
            lambda b: b[:5] + (2).to_bytes(2, "little") + b[7:],
            lambda b: b[:-8],
            lambda b: b + b"\x00",
            lambda b: b[:10],
        ],
        ids=["magic", "version", "truncated", "trailing", "header"],
    )
    def test_rejects_corruption(self, tmp_path, grid8, rng, corrupt):
        path = tmp_path / "bad.tmhd"
        path.write_bytes(corrupt(snapshot_bytes(self._snap(grid8, rng))))
        with pytest.raises(SnapshotError):
            load_snapshot(path)

    def test_rejects_lone_pressure(self, grid8):
        with pytest.raises(SnapshotError):
            Snapshot(grid8, 0.0, 1.0, np.zeros((6, 8, 8, 8)), p=np.zeros((8, 8, 8)))

    def test_initial_data_from_file(self, tmp_path, grid8, rng):
        snap = self._snap(grid8, rng)
        save_snapshot(tmp_path / "init.tmhd", snap)
        cfg = SolverConfig(n=8, initial="file", initial_path=str(tmp_path / "init.tmhd"))
        assert np.allclose(cfg.initial_state().physical(), snap.fields, atol=1e-14)


class TestDiagnosticsCsv:
    def test_format(self, tmp_path):
        traj = run(SolverConfig(n=8, initial="taylor_green", t_end=0.02, dt=0.01))
        path = tmp_path / "d.csv"
        write_diagnostics_csv(path, traj.records)
        raw = path.read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")
        rows = list(csv.reader(raw.decode().splitlines()))
        assert len(rows[0]) == 15 and rows[0] == list(DiagnosticsRecord.columns())
        assert all(len(r) == 15 for r in rows)
        assert read_diagnostics_csv(path) == traj.records

    def test_seventeen_significant_digits(self, tmp_path):
        rec = DiagnosticsRecord(*([0.1] + [1.0 / 3.0] * 14))
        write_diagnostics_csv(tmp_path / "d.csv", [rec])
        line = (tmp_path / "d.csv").read_text().splitlines()[1]
        assert line.split(",")[1] == "0.33333333333333331"
        assert read_diagnostics_csv(tmp_path / "d.csv") == [rec]

    def test_rejects_wrong_header(self, tmp_path):
        (tmp_path / "d.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_diagnostics_csv(tmp_path / "d.csv")


def _cli(*args: str) -> int:
    return main([str(a) for a in args])


class TestCli:
    def test_run_zero(self, tmp_path, capsys):
        assert _cli("run", "--config", CONFIG_DIR / "zero.toml", "--out", tmp_path) == EXIT_OK
        records = read_diagnostics_csv(tmp_path / "diagnostics.csv")
        assert [r.t for r in records] == pytest.approx([0.0, 0.01, 0.02, 0.03], abs=1e-15)
        assert all(v == 0.0 for r in records for v in r.values()[1:])
        assert "seed = " in (tmp_path / "config.toml").read_text()
        assert load_config(tmp_path / "config.toml") == load_config(CONFIG_DIR / "zero.toml")
        assert (tmp_path / "final.tmhd").exists()
        assert "run complete" in capsys.readouterr().out

    def test_run_is_deterministic(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text('[grid]\nn = 8\n[time]\nt_end = 0.02\n[initial]\nkind = "random_band"\nseed = 3\n')
        for out in ("a", "b"):
            assert _cli("run", "--config", cfg, "--out", tmp_path / out) == EXIT_OK
        assert (tmp_path / "a" / "diagnostics.csv").read_bytes() == (tmp_path / "b" / "diagnostics.csv").read_bytes()
        assert (tmp_path / "a" / "final.tmhd").read_bytes() == (tmp_path / "b" / "final.tmhd").read_bytes()

    def test_run_writes_snapshots(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text('[grid]\nn = 8\n[time]\nt_end = 0.02\ndt = 0.01\n[output]\nsnapshots = true\n')
        assert _cli("run", "--config", cfg, "--out", tmp_path) == EXIT_OK
        assert sorted(p.name for p in tmp_path.glob("snapshot_*.tmhd")) == [f"snapshot_000{i}.tmhd" for i in range(3)]

    def test_bad_config_exits_two(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[grid]\nsize = 8\n")
        assert _cli("run", "--config", cfg, "--out", tmp_path) == EXIT_ASSERTION
        assert "valid_config" in capsys.readouterr().err

    def test_diagnose_clean_snapshot(self, tmp_path, capsys):
        assert _cli("run", "--config", CONFIG_DIR / "zero.toml", "--out", tmp_path) == EXIT_OK
        snap = Snapshot.from_state(SolverConfig(n=16, initial="orszag_tang_3d").initial_state(), 1.0)
        save_snapshot(tmp_path / "ot.tmhd", snap)
        assert _cli("diagnose", "--snapshot", tmp_path / "ot.tmhd") == EXIT_OK
        assert "all identities hold" in capsys.readouterr().out

    def test_diagnose_names_broken_divergence(self, tmp_path, grid16, capsys):
        fields = SolverConfig(n=16, initial="orszag_tang_3d").initial_state().physical()
        x = grid16.mesh
        fields[3] += 0.1 * np.sin(x[0])
        save_snapshot(tmp_path / "bad.tmhd", Snapshot(grid16, 0.0, 1.0, fields))
        assert _cli("diagnose", "--snapshot", tmp_path / "bad.tmhd") == EXIT_ASSERTION
        assert "invariant 'divergence_free_B' violated" in capsys.readouterr().err

    def test_diagnose_unreadable_snapshot(self, tmp_path, capsys):
        (tmp_path / "x.tmhd").write_bytes(b"garbage")
        assert _cli("diagnose", "--snapshot", tmp_path / "x.tmhd") == EXIT_ASSERTION
        assert "valid_snapshot" in capsys.readouterr().err

    def test_galerkin_mode_range(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[grid]\nn = 8\n[time]\nt_end = 0.01\n")
        assert _cli("galerkin", "--config", cfg, "--modes", 503, "--out", tmp_path) == EXIT_ASSERTION
        assert "galerkin_modes" in capsys.readouterr().err
        assert _cli("galerkin", "--config", cfg, "--modes", 0, "--out", tmp_path) == EXIT_ASSERTION

    def test_galerkin_full_basis(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text('[grid]\nn = 8\n[time]\nt_end = 0.01\n[initial]\nkind = "random_band"\nk_max = 2.0\n')
        assert _cli("galerkin", "--config", cfg, "--modes", 502, "--out", tmp_path) == EXIT_OK
        with open(tmp_path / "galerkin.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "z_norm_sq", "energy", "relative_difference"]
        assert len(rows) == 12 and float(rows[-1][3]) < 1e-6

    def test_sweep(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text('[grid]\nn = 8\n[time]\nt_end = 0.05\n[initial]\nkind = "taylor_green"\namplitude = 3.0\n'
                       "[output]\ninterval = 0.01\n")
        assert _cli("sweep-n", "--config", cfg, "--n-list", "1,4,64", "--out", tmp_path) == EXIT_OK
        out = capsys.readouterr().out
        assert "saturation N*: 64" in out
        with open(tmp_path / "sweep.csv") as fh:
            rows = list(csv.reader(fh))
        pi = [float(r[1]) for r in rows[1:]]
        assert pi == sorted(pi, reverse=True) and pi[-1] == 0.0

    def test_mild_check(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text('[grid]\nn = 8\n[initial]\nkind = "taylor_green"\n')
        assert _cli("mild-check", "--config", cfg, "--nodes", 32) == EXIT_OK
        assert "picard iterations" in capsys.readouterr().out

    def test_mild_check_reports_stalled_iteration(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text('[grid]\nn = 8\n[initial]\nkind = "orszag_tang_3d"\n')
        assert _cli("mild-check", "--config", cfg, "--nodes", 16, "--max-iterations", 1) == EXIT_ASSERTION
        assert "picard_convergence" in capsys.readouterr().err

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "tamed_mhd", "run", "--config", str(CONFIG_DIR / "zero.toml"), "--out", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
