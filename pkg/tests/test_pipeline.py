from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamrace.errors import ConfigError, ValidationError
from beamrace.optics import DistortionProfile, build_mapping
from beamrace.pipeline import (EVENT_KINDS, JitterModel, closed_form_latency, configure, detect_tearing,
                               led_pulse_probe, read_frame_buffer, simulate, validate, with_mode)
from beamrace.scanout import ScanSpec, display_emit_mid, display_emit_start, ms_to_ns
from beamrace.stress import run_stress

from .conftest import FRAME_72

MS = ms_to_ns(1)


def small_config(render_lead=ms_to_ns(0.5), slice_budget=MS, jitter=None, **kw):
    """120-row display fed through a mild barrel warp from a 160-row camera."""
    cam = ScanSpec("camera", 160, FRAME_72, MS)
    disp = ScanSpec("display", 120, FRAME_72, MS)
    cp = DistortionProfile("equidistant_fisheye", focal_scale=90.0)
    dp = DistortionProfile("radial_polynomial", focal_scale=80.0, coefficients=(1.0, 0.05))
    m = build_mapping(cp, dp, (100, 120), (140, 160))
    return configure(cam, disp, m, render_lead, slice_budget, jitter=jitter, **kw)


@pytest.fixture(scope="module")
def small():
    return small_config()


@pytest.fixture(scope="module")
def preset_run(preset_pipeline):
    return simulate(preset_pipeline, 10)


def test_small_config_slices(small):
    # 1 ms budget over a 115.74 us row period
    assert small.slice_rows == 8
    assert small.slice_bounds()[-1] == 120


def test_determinism(small):
    cfg = small_config(jitter=JitterModel("uniform", ms_to_ns(0.02), ms_to_ns(0.8), seed=3))
    a, b = simulate(cfg, 6), simulate(cfg, 6)
    assert a.events.tobytes() == b.events.tobytes()
    assert a.to_csv() == b.to_csv()
    assert np.array_equal(a.per_pixel_latency.values, b.per_pixel_latency.values)
    c = simulate(cfg, 6, seed=4)
    assert c.events.tobytes() != a.events.tobytes()


def test_preset_matches_closed_form(preset_pipeline, preset_run):
    assert preset_run.tear_count == 0
    expected = closed_form_latency(preset_pipeline)
    assert np.array_equal(preset_run.per_pixel_latency.values, expected.values)
    assert np.array_equal(preset_run.per_pixel_latency.valid, expected.valid)


def test_preset_phase_is_minimal(preset_pipeline):
    # the selected phase leaves zero slack somewhere and none negative
    fld = validate(preset_pipeline)
    assert fld.stat_min == 0


@given(lead=st.integers(ms_to_ns(0.8), ms_to_ns(3)), seed=st.integers(0, 2**16))
@settings(max_examples=15, deadline=None)
def test_closed_form_with_bounded_jitter(lead, seed):
    jit = JitterModel("uniform", ms_to_ns(0.05), ms_to_ns(0.8), seed=seed)
    cfg = small_config(render_lead=lead, jitter=jit)
    tr = simulate(cfg, 3)
    assert tr.tear_count == 0
    assert np.array_equal(tr.per_pixel_latency.values, closed_form_latency(cfg).values)


@given(lead=st.integers(0, ms_to_ns(2)), seed=st.integers(0, 2**16))
@settings(max_examples=15, deadline=None)
def test_latency_bounds_on_untorn_pixels(lead, seed):
    jit = JitterModel("spike", ms_to_ns(0.05), ms_to_ns(1.0), 0.3, seed=seed)
    cfg = small_config(render_lead=lead, jitter=jit)
    tr = simulate(cfg, 4)
    lat, valid = tr.per_pixel_latency.values, tr.per_pixel_latency.valid
    fresh = valid & ~tr.torn_rows[-1][:, None]
    assert (lat[fresh] >= 0).all()
    assert (lat[fresh] <= cfg.camera.frame_period + cfg.display.frame_period).all()


def test_full_frame_baseline(preset_pipeline, preset_run):
    full = simulate(with_mode(preset_pipeline, "full_frame"), 10)
    assert full.tear_count == 0
    disp = preset_pipeline.display
    # a whole camera frame must land before anything is shown
    assert full.mean_latency >= preset_pipeline.camera.frame_period
    assert full.mean_latency / preset_run.mean_latency >= 7.0
    # one composite per camera frame covering the whole display
    disp_ev = full.events_of("slice_dispatched")
    assert (disp_ev["row_start"] == 0).all() and (disp_ev["row_end"] == disp.rows - 1).all()


def test_full_frame_shows_newest_complete_frame(small):
    tr = simulate(with_mode(small, "full_frame"), 5)
    shown = tr.content_frame[:, 0]
    assert (np.diff(shown) >= 0).all()
    assert np.array_equal(tr.content_frame, np.repeat(shown[:, None], small.display.rows, axis=1))


def test_spike_always_missing_deadline_tears_every_slice(small):
    jit = JitterModel("spike", ms_to_ns(0.02), ms_to_ns(1.5), 1.0)
    cfg = small_config(render_lead=ms_to_ns(0.2), jitter=jit)
    tr = simulate(cfg, 4)
    n_slices = len(cfg.slice_bounds()) - 1
    assert tr.tear_count == 4 * n_slices
    assert tr.torn_rows.all()
    assert (tr.content_frame == -1).all()
    assert len(tr.events_of("tear")) == tr.tear_count


def test_tears_never_increase_with_lead():
    leads = [ms_to_ns(v) for v in (0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0)]
    for seed in range(8):
        counts = []
        for lead in leads:
            jit = JitterModel("uniform", ms_to_ns(0.02), ms_to_ns(0.9), seed=seed)
            counts.append(simulate(small_config(render_lead=lead, jitter=jit), 4).tear_count)
        assert all(b <= a for a, b in zip(counts, counts[1:])), counts
        assert counts[-1] == 0


def test_insufficient_buffer_rejected(small):
    bad = small_config(buffer_rows=small.buffer_rows - 1)
    with pytest.raises(ConfigError, match="buffer_rows"):
        simulate(bad, 1)
    simulate(small_config(buffer_rows=small.buffer_rows), 1)


def test_late_camera_phase_rejected(small):
    from dataclasses import replace

    late = replace(small, camera=small.camera.shifted(1))
    with pytest.raises(ConfigError, match="phase"):
        simulate(late, 1)


def test_bad_arguments():
    with pytest.raises(ValidationError):
        simulate(small_config(), 0)
    with pytest.raises(ValidationError):
        JitterModel("uniform", 10, 5)
    with pytest.raises(ValidationError):
        JitterModel("spike", 0, 5, 1.5)
    with pytest.raises(ValidationError):
        JitterModel("gaussian")


def test_events_sorted_and_one_emission_per_row(small):
    tr = simulate(small, 3)
    assert (np.diff(tr.events["time"]) >= 0).all()
    em = tr.events_of("row_emitted")
    for k in range(3):
        rows = em["row_start"][em["frame"] == k]
        assert np.array_equal(np.sort(rows), np.arange(small.display.rows))


def test_trace_csv(small):
    tr = simulate(small, 2)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "time_ns,kind,row_start,row_end,frame"
    assert len(lines) == len(tr.events) + 1
    assert {ln.split(",")[1] for ln in lines[1:]} <= set(EVENT_KINDS)


def test_detect_tearing_examples():
    assert detect_tearing([1, 2, 3, 4]) == []
    assert detect_tearing([1.0, 2.0, 3.0, 1.5, 4.0]) == [3]
    assert detect_tearing([5]) == []
    with pytest.raises(ValidationError):
        detect_tearing([])


@given(st.integers(2, 300), st.data())
def test_detect_tearing_finds_injected_drops(n, data):
    drops = data.draw(st.sets(st.integers(1, n - 1), max_size=n - 1))
    steps = np.ones(n, dtype=np.int64)
    idx = np.array(sorted(drops), dtype=np.int64)
    steps[idx] = -data.draw(st.integers(1, 5))
    ts = np.cumsum(steps)
    assert detect_tearing(ts) == sorted(drops)


@given(rows=st.integers(2, 200), write=st.integers(1, 50), read=st.integers(1, 80),
       start=st.integers(-10**5, 10**5), phase=st.integers(-10**4, 10**4))
def test_shared_buffer_flags_match_overlap(rows, write, read, start, phase):
    period = rows * 50 + 1
    got = read_frame_buffer(rows, period, write, start, read, write_phase=phase)
    assert detect_tearing(got.timestamps) == got.overlap


def test_shared_buffer_overrun_example():
    # reader scans faster than the writer and falls behind it mid-frame
    got = read_frame_buffer(100, 1000, 9, 200, 5)
    assert got.overlap != []
    assert detect_tearing(got.timestamps) == got.overlap
    clean = read_frame_buffer(100, 1000, 5, 0, 5, write_phase=-1)
    assert clean.overlap == []


def test_stress_harness_consistent():
    res = run_stress(rows=64, frames=30, reads=10, seed=1)
    assert res and all(r.consistent for r in res)


def one_row_slices():
    # a 1 ns budget fits no whole row, so every row is its own slice
    return small_config(slice_budget=1)


def test_led_probe_tie_breaks():
    cfg = one_row_slices()
    assert cfg.slice_rows == 1
    row, disp, lead = cfg.display.rows // 2, cfg.display, cfg.render_lead
    emit = display_emit_start(disp, row, 0)
    this_scan = display_emit_mid(disp, row, 0)
    assert led_pulse_probe(cfg, emit - lead - 1) == this_scan
    assert led_pulse_probe(cfg, emit - lead) == this_scan
    assert led_pulse_probe(cfg, emit - lead + 1) == this_scan + disp.frame_period


@given(st.integers(-3 * FRAME_72, 5 * FRAME_72))
def test_led_probe_matches_frame_scan(pulse):
    cfg = small_config()
    disp, row = cfg.display, cfg.display.rows // 2
    first = row - row % cfg.slice_rows
    k = -5
    while display_emit_start(disp, first, k) - cfg.render_lead < pulse:
        k += 1
    assert led_pulse_probe(cfg, pulse) == display_emit_mid(disp, row, k)
