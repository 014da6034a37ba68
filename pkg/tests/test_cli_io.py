"""Contract tests for configuration parsing, binary snapshots, CSV
persistence, run manifests, and the command-line entry points.

Format oracles are computed with the standard library (hashlib for content
hashes, struct for the snapshot header) so the package's writers are checked
against an independent encoding of the same contract.
"""

from __future__ import annotations

import filecmp
import hashlib
import json
import math
import shutil
import struct

import numpy as np
import pytest

from chemotaxis_lab import __version__
from chemotaxis_lab import cli_io
from chemotaxis_lab.cli_io import (
    OUTPUT_ROOT_ENV,
    SNAPSHOT_MAGIC,
    ConfigError,
    SnapshotFormatError,
    main,
    parse_config,
    read_diagnostics_csv,
    read_manifest,
    read_snapshot,
    write_diagnostics_csv,
    write_manifest,
    write_snapshot,
    write_summary_lines,
    write_verdict_csv,
)
from chemotaxis_lab.diagnostics import CSV_COLUMNS, DiagnosticsRecord
from chemotaxis_lab.experiments import DEFAULT_TRUNCATION_LEVELS, StudyVerdict


# ---------------------------------------------------------------------------
# config fixtures
# ---------------------------------------------------------------------------

MINIMAL_1D = """\
[grid]
dim = 1
cells = 16
lengths = 1.0

[solver]
dt = 0.001
t_end = 0.01

[regularization]
epsilon = 0.5

[scenario]
kind = constant
"""

RUN_2D = """\
# small laboratory run used by the CLI tests
[grid]
dim = 2
cells = 8 8
lengths = 1.0 1.0

[solver]
dt = 0.0005
t_end = 0.02

[regularization]
epsilon = 0.5

[scenario]
kind = gaussian
u_floor = 0.5
u_amplitude = 2.0
u_width = 0.15
v_base = 1.0
v_amplitude = 0.5
seed = 7

[output]
snapshot_every = 1
record_every = 2
"""

SWEEP_EPS_2D = RUN_2D + """
[sweep]
epsilons = 1.0 0.5
"""

SWEEP_TRUNC_2D = RUN_2D

REFINE_2D = """\
[grid]
dim = 2
cells = 8 8
lengths = 1.0 1.0

[solver]
dt = 0.00125
t_end = 0.04

[regularization]
epsilon = 0.5

[scenario]
kind = gaussian
seed = 7

[sweep]
cells = 8 16
"""


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("shape", [(5,), (4, 7), (3, 4, 5)])
def test_snapshot_round_trip_is_bit_exact(tmp_path, shape):
    rng = np.random.default_rng(11)
    u = rng.uniform(0.1, 3.0, size=shape)
    v = rng.uniform(0.2, 1.0, size=shape)
    path = tmp_path / "snap.rclb"
    write_snapshot(path, u, v, time=0.1875)
    snap = read_snapshot(path)
    np.testing.assert_array_equal(snap.u, u)
    np.testing.assert_array_equal(snap.v, v)
    assert snap.time == 0.1875
    assert snap.u.dtype == np.float64 and snap.v.dtype == np.float64


def test_snapshot_header_layout_matches_struct_oracle(tmp_path):
    """Header bytes decode with a hand-written struct unpacking."""
    u = np.arange(12.0).reshape(3, 4) + 0.5
    v = np.arange(12.0).reshape(3, 4) * 2.0 + 1.0
    path = tmp_path / "snap.rclb"
    write_snapshot(path, u, v, time=0.75)
    blob = path.read_bytes()
    assert blob[:5] == SNAPSHOT_MAGIC == b"RCLB1"
    version, dim, nfields = struct.unpack_from("<BBB", blob, 5)
    assert (version, dim, nfields) == (1, 2, 2)
    cells = struct.unpack_from("<2I", blob, 8)
    assert cells == (3, 4)
    (time,) = struct.unpack_from("<d", blob, 16)
    assert time == 0.75
    payload = np.frombuffer(blob, dtype="<f8", offset=24)
    np.testing.assert_array_equal(payload[:12], u.ravel(order="C"))
    np.testing.assert_array_equal(payload[12:], v.ravel(order="C"))
    assert len(blob) == 24 + 2 * 12 * 8


def _write_valid_snapshot(tmp_path):
    u = np.full((4, 4), 2.0)
    v = np.full((4, 4), 0.5)
    path = tmp_path / "snap.rclb"
    write_snapshot(path, u, v, time=0.5)
    return path


def test_snapshot_rejects_corrupted_magic(tmp_path):
    path = _write_valid_snapshot(tmp_path)
    blob = bytearray(path.read_bytes())
    blob[0] = ord("X")
    path.write_bytes(bytes(blob))
    with pytest.raises(SnapshotFormatError, match="magic"):
        read_snapshot(path)


def test_snapshot_rejects_unsupported_version(tmp_path):
    path = _write_valid_snapshot(tmp_path)
    blob = bytearray(path.read_bytes())
    blob[5] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(SnapshotFormatError, match="version"):
        read_snapshot(path)


def test_snapshot_rejects_truncated_payload(tmp_path):
    path = _write_valid_snapshot(tmp_path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(SnapshotFormatError, match="payload|truncat"):
        read_snapshot(path)


def test_snapshot_rejects_trailing_bytes(tmp_path):
    path = _write_valid_snapshot(tmp_path)
    path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
    with pytest.raises(SnapshotFormatError, match="payload|size"):
        read_snapshot(path)


def test_snapshot_rejects_short_header(tmp_path):
    path = tmp_path / "snap.rclb"
    path.write_bytes(b"RCLB1\x01")
    with pytest.raises(SnapshotFormatError):
        read_snapshot(path)


def test_snapshot_requires_matching_field_shapes(tmp_path):
    with pytest.raises(ValueError, match="shape"):
        write_snapshot(tmp_path / "x.rclb", np.zeros((4, 4)), np.zeros((4, 5)), time=0.0)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def test_parse_config_minimal_one_dimensional():
    cfg = parse_config(MINIMAL_1D)
    assert cfg.grid.cells == (16,) and cfg.grid.lengths == (1.0,)
    assert cfg.solver.dt == 0.001 and cfg.solver.t_end == 0.01
    assert cfg.solver.n_steps == 10
    assert cfg.epsilon == 0.5
    assert cfg.scenario.kind == "constant"
    assert cfg.seed == 0
    assert cfg.out_dir is None
    assert cfg.snapshot_every == 1 and cfg.record_every == 1
    assert cfg.trunc_levels == DEFAULT_TRUNCATION_LEVELS
    assert cfg.eps_ladder == () and cfg.refine_cells == ()
    assert cfg.config_hash == _sha(MINIMAL_1D)


def test_parse_config_full_run_settings():
    cfg = parse_config(RUN_2D)
    assert cfg.grid.cells == (8, 8)
    assert cfg.scenario.kind == "gaussian" and cfg.scenario.u_width == 0.15
    assert cfg.seed == 7
    assert cfg.snapshot_every == 1 and cfg.record_every == 2
    assert parse_config(SWEEP_EPS_2D).eps_ladder == (1.0, 0.5)
    assert parse_config(REFINE_2D).refine_cells == (8, 16)


def test_parse_config_reports_every_violation_at_once():
    text = """\
[grid]
dim = 5
cells = 2 2
lengths = 1.0 1.0

[solver]
dt = 0.001
dt = 0.002
t_end = 0.01

[regularization]
epsilon = 1.5

[scenario]
kind = constant
"""
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    err = info.value
    msg = str(err)
    assert len(err.violations) >= 4
    assert "dim" in msg
    assert "cells" in msg
    assert "epsilon" in msg
    assert "duplicate" in msg
    # the duplicate cites both definitions by line number
    assert "line 8" in msg and "line 7" in msg


def test_parse_config_syntax_error_cites_line():
    text = "[grid]\ndim = 1\nthis line has no separator\ncells = 16\nlengths = 1.0\n"
    with pytest.raises(ConfigError, match="line 3"):
        parse_config(text)


def test_parse_config_rejects_unknown_sections_and_keys():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(MINIMAL_1D + "\n[grud]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(MINIMAL_1D + "\ncols = 4\n")


def test_parse_config_rejects_keys_before_any_section():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("dim = 1\n" + MINIMAL_1D)


def test_parse_config_missing_required_keys_are_named():
    text = MINIMAL_1D.replace("dt = 0.001\n", "")
    with pytest.raises(ConfigError, match="solver.dt"):
        parse_config(text)


def test_parse_config_epsilon_range_is_open():
    for bad in ("1.0", "0.0", "1.5"):
        text = MINIMAL_1D.replace("epsilon = 0.5", f"epsilon = {bad}")
        with pytest.raises(ConfigError, match="epsilon"):
            parse_config(text)


def test_parse_config_bad_number_cites_key_and_line():
    text = MINIMAL_1D.replace("dt = 0.001", "dt = fast")
    with pytest.raises(ConfigError, match="dt"):
        parse_config(text)


def test_parse_config_timestep_must_divide_horizon():
    text = MINIMAL_1D.replace("dt = 0.001", "dt = 0.0003")
    with pytest.raises(ConfigError, match="t_end|multiple"):
        parse_config(text)


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------


def _sample_records():
    base = dict(
        step=0,
        time=0.0,
        mass_u=0.1 + 0.2,  # deliberately not representable exactly
        min_u=1e-300,
        max_v=1.5,
        entropy=-0.12345678901234567,
        grad_sqrt_v=2.0 / 3.0,
        energy=-0.12345678901234567 + 2.0 / 3.0,
        fisher=12345.678901234567,
        hessian_logv=3.0e-17,
        cross=0.0,
        u_logu_abs=float("nan"),
        grad_v_sq=7.0 / 11.0,
        feps_gradv=1.0 / 3.0,
        u_pow=2.0**0.5,
    )
    second = dict(base, step=3, time=0.0015, mass_u=0.30000000000000004)
    return [DiagnosticsRecord(**base), DiagnosticsRecord(**second)]


def test_diagnostics_csv_round_trip_preserves_bits(tmp_path):
    records = _sample_records()
    path = tmp_path / "diagnostics.csv"
    write_diagnostics_csv(path, records)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + len(records)
    back = read_diagnostics_csv(path)
    assert len(back) == len(records)
    for orig, got in zip(records, back):
        assert got.step == orig.step
        for name in CSV_COLUMNS[1:]:
            a, b = getattr(orig, name), getattr(got, name)
            assert (a == b) or (math.isnan(a) and math.isnan(b)), name


def test_verdict_csv_uses_full_precision(tmp_path):
    verdict = StudyVerdict(
        study="demo",
        columns=("epsilon", "l1_u"),
        rows=((1.0, float("nan")), (0.5, 1.2500000000000002e-3)),
        monotone={"l1_u": True},
        orders={},
        passed=True,
    )
    path = tmp_path / "demo.csv"
    write_verdict_csv(path, verdict)
    lines = path.read_text().splitlines()
    assert lines[0] == "epsilon,l1_u"
    assert lines[1].split(",")[0] == "1.0"
    assert math.isnan(float(lines[1].split(",")[1]))
    assert float(lines[2].split(",")[1]) == 1.2500000000000002e-3

    summary = tmp_path / "demo_summary.csv"
    write_summary_lines(summary, verdict.summary_lines())
    assert summary.read_text().splitlines() == list(verdict.summary_lines())


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


def test_manifest_contents_and_hash_oracle(tmp_path):
    path = write_manifest(
        tmp_path,
        config_text=MINIMAL_1D,
        command="run",
        timings={"wall_seconds": 1.5},
        extra={"passed": True},
    )
    data = json.loads(path.read_text())
    assert data["config_sha256"] == _sha(MINIMAL_1D)
    assert data["command"] == "run"
    assert data["package_version"] == __version__
    assert data["numpy_version"] == np.__version__
    assert data["timings"]["wall_seconds"] == 1.5
    assert data["passed"] is True
    assert read_manifest(tmp_path) == data


# ---------------------------------------------------------------------------
# CLI entry points
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    """One completed `run` invocation shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cli-run")
    cfg_path = root / "run.cfg"
    cfg_path.write_text(RUN_2D)
    out = root / "out"
    assert main(["run", str(cfg_path), "--out", str(out)]) == 0
    return cfg_path, out


def test_cli_run_writes_expected_artifacts(run_dir):
    cfg_path, out = run_dir
    assert (out / "manifest.json").is_file()
    assert (out / "config.cfg").read_text() == RUN_2D
    assert (out / "diagnostics.csv").is_file()
    snaps = sorted(out.glob("snap_*.rclb"))
    assert len(snaps) == 41  # every step of the 40-step run, plus t=0
    manifest = read_manifest(out)
    assert manifest["config_sha256"] == _sha(RUN_2D)
    assert manifest["command"] == "run"
    header = (out / "diagnostics.csv").read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)
    first = read_snapshot(snaps[0])
    last = read_snapshot(snaps[-1])
    assert last.time == pytest.approx(0.02)
    mass0 = float(np.sum(first.u))
    massT = float(np.sum(last.u))
    assert abs(massT - mass0) <= 1e-12 * mass0


def test_cli_run_missing_config_exits_two(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.cfg")]) == 2
    assert "nope.cfg" in capsys.readouterr().err


def test_cli_run_invalid_config_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(MINIMAL_1D.replace("epsilon = 0.5", "epsilon = 2.0"))
    assert main(["run", str(bad)]) == 2
    assert "epsilon" in capsys.readouterr().err


def test_cli_usage_errors_exit_two():
    assert main([]) == 2
    assert main(["frobnicate"]) == 2


def test_cli_default_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    cfg_text = MINIMAL_1D
    cfg_path = tmp_path / "a.cfg"
    cfg_path.write_text(cfg_text)
    assert main(["run", str(cfg_path)]) == 0
    derived = tmp_path / f"run-{_sha(cfg_text)[:12]}"
    assert (derived / "manifest.json").is_file()


def test_cli_audit_accepts_untampered_run(run_dir, capsys):
    cfg_path, out = run_dir
    assert main(["audit", str(out)]) == 0
    text = capsys.readouterr().out
    assert "mass" in text and "PASS" in text


def test_cli_audit_refuses_config_hash_mismatch(run_dir, tmp_path, capsys):
    _, out = run_dir
    altered = tmp_path / "altered.cfg"
    altered.write_text(RUN_2D + "\n# a trailing comment\n")
    assert main(["audit", str(out), "--config", str(altered)]) == 2
    assert "hash" in capsys.readouterr().err


def test_cli_audit_flags_tampered_mass(run_dir, tmp_path, capsys):
    _, out = run_dir
    copy = tmp_path / "tampered"
    shutil.copytree(out, copy)
    victim = sorted(copy.glob("snap_*.rclb"))[-1]
    snap = read_snapshot(victim)
    write_snapshot(victim, snap.u * 1.001, snap.v, time=snap.time)
    assert main(["audit", str(copy)]) == 1
    assert "mass" in capsys.readouterr().out.lower()


def test_cli_audit_requires_run_directory(tmp_path, capsys):
    assert main(["audit", str(tmp_path)]) == 2


def test_cli_verify_truncation_prints_axiom_table(tmp_path, capsys):
    cfg_path = tmp_path / "a.cfg"
    cfg_path.write_text(MINIMAL_1D)
    out = tmp_path / "trunc"
    assert main(["verify-truncation", str(cfg_path), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    for axiom in ("E1", "E2", "E3", "E4", "E5", "E6", "E7"):
        assert axiom in text
    assert (out / "truncation_axioms.txt").is_file()
    assert (out / "manifest.json").is_file()


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-sweep")
    cfg_path = root / "sweep.cfg"
    cfg_path.write_text(SWEEP_EPS_2D)
    out = root / "out"
    assert main(["sweep-eps", str(cfg_path), "--out", str(out)]) == 0
    return out


def test_cli_sweep_eps_emits_verdict_tables(sweep_dir):
    table = sweep_dir / "sweep_eps.csv"
    summary = sweep_dir / "sweep_eps_summary.csv"
    assert table.is_file() and summary.is_file()
    header = table.read_text().splitlines()[0]
    assert header.startswith("epsilon,")
    lines = summary.read_text().splitlines()
    assert lines, "summary must not be empty"
    for line in lines:
        assert len(line.split(",")) == 4
    assert lines[-1].startswith("sweep-eps,verdict,passed,")
    assert lines[-1].endswith("True")
    assert (sweep_dir / "manifest.json").is_file()


def test_cli_sweep_eps_requires_ladder(tmp_path, capsys):
    cfg_path = tmp_path / "nosweep.cfg"
    cfg_path.write_text(RUN_2D)
    assert main(["sweep-eps", str(cfg_path), "--out", str(tmp_path / "o")]) == 2
    assert "epsilons" in capsys.readouterr().err


def test_cli_sweep_trunc_runs_defect_ladder(tmp_path):
    cfg_path = tmp_path / "t.cfg"
    cfg_path.write_text(SWEEP_TRUNC_2D)
    out = tmp_path / "out"
    assert main(["sweep-trunc", str(cfg_path), "--out", str(out)]) == 0
    assert (out / "sweep_trunc.csv").is_file()
    lines = (out / "sweep_trunc_summary.csv").read_text().splitlines()
    assert lines[-1].endswith("True")


def test_cli_refine_runs_resolution_ladder(tmp_path):
    cfg_path = tmp_path / "r.cfg"
    cfg_path.write_text(REFINE_2D)
    out = tmp_path / "out"
    assert main(["refine", str(cfg_path), "--out", str(out)]) == 0
    table = (out / "refine.csv").read_text().splitlines()
    assert table[0].startswith("cells,dt,")
    assert len(table) == 3  # header + two rungs
    lines = (out / "refine_summary.csv").read_text().splitlines()
    assert lines[-1].endswith("True")


def test_cli_refine_requires_cells_ladder(tmp_path, capsys):
    cfg_path = tmp_path / "r.cfg"
    cfg_path.write_text(RUN_2D)
    assert main(["refine", str(cfg_path), "--out", str(tmp_path / "o")]) == 2
    assert "cells" in capsys.readouterr().err


def test_cli_report_data_flattens_summaries(sweep_dir, tmp_path):
    assert main(["report-data", str(sweep_dir)]) == 0
    report = sweep_dir / "report_data"
    metrics = (report / "metrics.csv").read_text().splitlines()
    summary_lines = (sweep_dir / "sweep_eps_summary.csv").read_text().splitlines()
    for line in summary_lines:
        assert line in metrics
    assert (report / "manifest.json").is_file()
    assert filecmp.cmp(report / "sweep_eps.csv", sweep_dir / "sweep_eps.csv", shallow=False)


def test_cli_report_data_copies_diagnostics(run_dir):
    _, out = run_dir
    assert main(["report-data", str(out)]) == 0
    report = out / "report_data"
    assert filecmp.cmp(report / "diagnostics.csv", out / "diagnostics.csv", shallow=False)


def test_cli_report_data_requires_manifest(tmp_path, capsys):
    assert main(["report-data", str(tmp_path)]) == 2
