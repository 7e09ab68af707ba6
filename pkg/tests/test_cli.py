from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np
import pytest

from beamrace import config as C
from beamrace.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_VALIDATION, OUTPUTS, build_parser, main
from beamrace.errors import ConfigError
from beamrace.export import atomic_write, emit_heatmap, heatmap_levels, pgm_p2, sidecar_path
from beamrace.optics import LatencyField, select_phase_offset
from beamrace.psychometrics import synthetic_trials, write_trials

from .test_optics import _oracle_field

GOLDEN = Path(__file__).parent / "golden"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def files(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


# --- config -----------------------------------------------------------------

def test_presets_load():
    for name in C.PRESETS:
        C.load_config(name)


def test_override_precedence(tmp_path):
    ini = tmp_path / "a.ini"
    ini.write_text("[pipeline]\nrender_lead_ms = 0.3\nseed = 4\n")
    cfg = C.load_config("camsicle72", ini, ["pipeline.seed=9"])
    assert cfg.get("pipeline", "render_lead_ms") == 300000
    assert cfg.get("pipeline", "seed") == 9
    assert cfg.get("display", "rows") == 3000


def test_unknown_key_names_line(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[camera]\nrows = 3160\nbogus = 1\n")
    with pytest.raises(ConfigError, match=r"bad.ini:3: unknown key 'bogus' in \[camera\]"):
        C.load_config("camsicle72", ini)


def test_bad_value_names_key_and_line(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[pipeline]\n\nrender_lead_ms = soon\n")
    with pytest.raises(ConfigError, match=r"bad.ini:3: .*render_lead_ms"):
        C.load_config("camsicle72", ini)


@pytest.mark.parametrize("text", ["rows = 3\n", "[nowhere]\nx = 1\n", "[camera]\nrows 3\n"])
def test_malformed_files(tmp_path, text):
    ini = tmp_path / "m.ini"
    ini.write_text(text)
    with pytest.raises(ConfigError, match="m.ini:"):
        C.load_config(None, ini)


def test_bad_override_syntax():
    with pytest.raises(ConfigError):
        C.load_config("testbed", overrides=["geometry.ipd_cm"])
    with pytest.raises(ConfigError):
        C.load_config("testbed", overrides=["geometry.nose_cm=1"])


# --- heatmaps ---------------------------------------------------------------

def test_heatmap_all_zero(tmp_path):
    fld = LatencyField(np.zeros((3, 4), dtype=np.int64), np.ones((3, 4), dtype=bool))
    pgm, side = emit_heatmap(fld, tmp_path / "z.pgm")
    assert pgm.read_text() == "P2\n4 3\n255\n0 0 0 0\n0 0 0 0\n0 0 0 0\n"
    assert "stat_max_ns 0" in side.read_text()
    assert side == sidecar_path(pgm) == tmp_path / "z.scale.txt"


def test_heatmap_two_levels(tmp_path):
    vals = np.array([[0, 700], [700, 0]], dtype=np.int64)
    fld = LatencyField(vals, np.ones_like(vals, dtype=bool))
    assert set(heatmap_levels(fld).ravel().tolist()) == {0, 255}
    emit_heatmap(fld, tmp_path / "t.pgm")
    assert (tmp_path / "t.pgm").read_text().splitlines()[3:] == ["0 255", "255 0"]


def test_heatmap_rounds_half_up_and_masks_invalid():
    vals = np.array([[1, 2, 4, 8]], dtype=np.int64)
    valid = np.array([[True, True, True, False]])
    # top = 4: 255/4 = 63.75, 127.5 -> 128, 255
    assert heatmap_levels(LatencyField(vals, valid)).tolist() == [[64, 128, 255, 0]]


def test_pgm_line_length():
    text = pgm_p2(np.full((2, 100), 255))
    assert max(len(ln) for ln in text.splitlines()) <= 70


def test_atomic_write_replaces_and_cleans(tmp_path):
    p = tmp_path / "x.txt"
    atomic_write(p, "one")
    atomic_write(p, b"two")
    assert p.read_text() == "two"
    assert [q.name for q in tmp_path.iterdir()] == ["x.txt"]
    mask = os.umask(0)
    os.umask(mask)
    assert (p.stat().st_mode & 0o777) == 0o666 & ~mask


def test_golden_latency_heatmap(tmp_path, capsys, camsicle):
    code, out, _ = run(["latency-field", "--out", tmp_path], capsys)
    assert code == EXIT_OK and "max 0.3849 ms" in out
    pgm = (tmp_path / "latency_field.pgm").read_bytes()
    # second route: heatmap of the row-by-row oracle field
    m = C.mapping(camsicle)
    raw = _oracle_field(m, C.camera_spec(camsicle).with_phase(0), C.display_spec(camsicle))
    fld = LatencyField(np.where(m.valid, raw, 0), m.valid)
    fld = fld.shifted(select_phase_offset(fld))
    assert pgm_p2(heatmap_levels(fld)).encode() == pgm
    assert hashlib.sha256(pgm).hexdigest() == (GOLDEN / "camsicle72_latency_field.pgm.sha256").read_text().strip()
    assert (tmp_path / "latency_field.scale.txt").read_text() == \
        (GOLDEN / "camsicle72_latency_field.scale.txt").read_text()
    head = (tmp_path / "latency_field.csv").read_text().splitlines()[:2]
    assert head[0] == "column,row,latency_ns"


# --- commands ---------------------------------------------------------------

def test_simulate_outputs_and_rerun(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    code, out, _ = run(["simulate", "--preset", "camsicle72", "--frames", 3, "--out", a], capsys)
    assert code == EXIT_OK
    assert "tears 0" in out and "mean latency" in out
    assert set(files(a)) == {"trace.csv", "latency.csv", "latency.pgm", "latency.scale.txt"}
    run(["simulate", "--preset", "camsicle72", "--frames", 3, "--out", b], capsys)
    assert files(a) == files(b)


def test_simulate_seeded_jitter_rerun(tmp_path, capsys):
    args = ["simulate", "--frames", 2, "--set", "pipeline.jitter=uniform",
            "--set", "pipeline.worst_case_ms=0.5", "--seed", 7, "--out"]
    run(args + [tmp_path / "a"], capsys)
    run(args + [tmp_path / "b"], capsys)
    assert files(tmp_path / "a") == files(tmp_path / "b")


def test_simulate_full_frame(tmp_path, capsys):
    code, out, _ = run(["simulate", "--mode", "full_frame", "--frames", 2, "--out", tmp_path], capsys)
    assert code == EXIT_OK and "mode full_frame" in out


def test_table19_prints_layout(capsys, tmp_path):
    code, out, _ = run(["table19", "--preset", "testbed", "--out", tmp_path], capsys)
    assert code == EXIT_OK
    lines = out.splitlines()
    assert "CoR" in lines[0] and "Visual Axis" in lines[0]
    body = lines[2:5]
    assert [ln.split()[0] for ln in body] == ["Head", "0-ms", "200-ms"]
    nums = [float(v) for ln in body for v in ln.split()[-2:]]
    assert len(nums) == 6 and nums[0] == 10.47
    assert (tmp_path / "table19.txt").read_text() in out


def test_geometry_outputs(tmp_path, capsys):
    code, out, _ = run(["geometry", "--out", tmp_path], capsys)
    assert code == EXIT_OK and "peak-to-peak" in out
    sweep = (tmp_path / "yaw_sweep.csv").read_text().splitlines()
    assert sweep[0] == "yaw_deg,left_x_cm,right_x_cm,separation_cm" and len(sweep) == 52
    assert (tmp_path / "disparity.csv").read_text().startswith("t_s,error_arcsec\n")


def test_psychofit(tmp_path, capsys):
    trials = tmp_path / "trials.csv"
    trials.write_text(write_trials(synthetic_trials(10, 0.5, 200, np.random.default_rng(0), lo=5, hi=15)))
    code, out, _ = run(["psychofit", "--trials", trials, "--out", tmp_path / "o"], capsys)
    assert code == EXIT_OK
    assert "converged     yes" in out and "threshold" in out.splitlines()[-1]
    curve = (tmp_path / "o" / "curve.csv").read_text().splitlines()
    assert curve[0] == "latency_ms,p_correct" and curve[1].startswith("5.0,")


def test_psychofit_all_correct(tmp_path, capsys):
    trials = tmp_path / "t.csv"
    trials.write_text("latency_ms,correct\n" + "".join(f"{x},1\n" for x in range(1, 30)))
    code, out, _ = run(["psychofit", "--trials", trials], capsys)
    assert code == EXIT_OK and "did not converge" in out


def test_sobol_command(capsys, tmp_path):
    code, out, _ = run(["sobol", "--n", 3], capsys)
    assert code == EXIT_OK
    assert out.splitlines()[:3] == ["12.5", "18.75", "6.25"]
    run(["sobol", "--n", 2, "--lo", 0, "--hi", 1, "--out", tmp_path], capsys)
    assert (tmp_path / "sobol.csv").read_text() == "latency_ms\n0.5\n0.75\n"


# --- failures ---------------------------------------------------------------

def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[camera]\nbogus = 1\n")
    code, _, err = run(["latency-field", "--config", bad, "--out", tmp_path], capsys)
    assert code == EXIT_CONFIG and "bad.ini:2" in err and "bogus" in err
    assert len(err.strip().splitlines()) == 1
    assert run(["table19", "--preset", "nope"], capsys)[0] == EXIT_CONFIG
    assert run(["frobnicate"], capsys)[0] == EXIT_CONFIG
    assert run(["sobol", "--set", "psychometrics.sobol_n=-1"], capsys)[0] == EXIT_VALIDATION
    assert run(["psychofit", "--trials", tmp_path / "missing.csv"], capsys)[0] == EXIT_IO
    assert run(["sobol", "--n", 2, "--out", "/proc/nope"], capsys)[0] == EXIT_IO


def test_late_phase_is_config_error(tmp_path, capsys):
    code, _, err = run(["simulate", "--set", "camera.phase_ms=0", "--frames", 1, "--out", tmp_path], capsys)
    assert code == EXIT_CONFIG and "phase" in err


def test_invalid_trials_is_validation_error(tmp_path, capsys):
    t = tmp_path / "t.csv"
    t.write_text("latency_ms,correct\n1,yes\n")
    assert run(["psychofit", "--trials", t], capsys)[0] == EXIT_VALIDATION


def test_help_documents_outputs():
    import re

    sub = next(a for a in build_parser()._actions if a.dest == "command")
    for name, text in OUTPUTS.items():
        helptext = " ".join(sub.choices[name].format_help().split())
        for fname in re.findall(r"[\w.]+\.(?:csv|pgm|txt)", text):
            assert fname in helptext
