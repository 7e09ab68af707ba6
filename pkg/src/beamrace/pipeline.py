"""Discrete-event model of a slice compositor racing the display scan.

Each display frame is cut into slices of ``rows_in_budget(display,
slice_budget)`` rows.  A slice is dispatched at its first row's emission
start minus the render lead and takes a jitter-sampled time to finish.
Rows whose slice finishes after they start emitting are torn: they keep
showing the previous frame's composite.

The full-frame baseline composites a camera frame once its last row has
landed, and the display shows the newest completed frame at vsync.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .errors import ConfigError, ValidationError
from .optics import (LatencyField, PixelMapping, advance_camera, buffer_latency_field,
                     required_buffer, select_phase_offset)
from .scanout import (ScanSpec, camera_mid, camera_ready, display_emit_mid, display_emit_start,
                      rows_in_budget)

EVENT_KINDS = ("row_written", "slice_dispatched", "slice_completed", "row_emitted", "tear")
EVENT_DTYPE = np.dtype([("time", "i8"), ("kind", "i1"), ("row_start", "i4"),
                        ("row_end", "i4"), ("frame", "i4")])


@dataclass(frozen=True)
class JitterModel:
    """Per-dispatch compositing duration, in ns.

    ``none`` always takes ``base_dispatch``; ``uniform`` draws an integer in
    [base_dispatch, worst_case]; ``spike`` takes ``worst_case`` with
    probability ``spike_probability`` and ``base_dispatch`` otherwise.
    """

    kind: Literal["none", "uniform", "spike"] = "none"
    base_dispatch: int = 0
    worst_case: int = 0
    spike_probability: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "spike"):
            raise ValidationError(f"unknown jitter kind {self.kind!r}")
        if self.base_dispatch < 0:
            raise ValidationError("base_dispatch must be nonnegative")
        if self.kind != "none" and self.worst_case < self.base_dispatch:
            raise ValidationError("worst_case must be >= base_dispatch")
        if not 0.0 <= self.spike_probability <= 1.0:
            raise ValidationError("spike_probability must lie in [0, 1]")

    @property
    def bound(self) -> int:
        """Longest possible dispatch."""
        return self.base_dispatch if self.kind == "none" else self.worst_case

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "none":
            return np.full(n, self.base_dispatch, dtype=np.int64)
        if self.kind == "uniform":
            return rng.integers(self.base_dispatch, self.worst_case, size=n, endpoint=True, dtype=np.int64)
        spikes = rng.random(n) < self.spike_probability
        return np.where(spikes, self.worst_case, self.base_dispatch).astype(np.int64)


@dataclass(frozen=True, eq=False)
class PipelineConfig:
    """Everything the simulator needs; durations in ns."""

    camera: ScanSpec
    display: ScanSpec
    mapping: PixelMapping
    render_lead: int
    slice_budget: int
    buffer_rows: int
    mode: Literal["sliced", "full_frame"] = "sliced"
    jitter: JitterModel = field(default_factory=JitterModel)

    def __post_init__(self):
        if self.camera.role != "camera" or self.display.role != "display":
            raise ValidationError("camera/display specs have the wrong roles")
        if self.render_lead < 0:
            raise ValidationError("render_lead must be nonnegative")
        if self.slice_budget <= 0:
            raise ValidationError("slice_budget must be positive")
        if self.buffer_rows < 0:
            raise ValidationError("buffer_rows must be nonnegative")
        if self.mode not in ("sliced", "full_frame"):
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.mapping.shape[0] != self.display.rows or self.mapping.camera_dims[1] != self.camera.rows:
            raise ValidationError("mapping dimensions do not match the scan specs")

    @property
    def slice_rows(self) -> int:
        return max(1, rows_in_budget(self.display, self.slice_budget))

    def slice_bounds(self) -> np.ndarray:
        """Slice start rows followed by the display row count."""
        return np.append(np.arange(0, self.display.rows, self.slice_rows), self.display.rows)

    def dispatch_field(self) -> LatencyField:
        """Slack between each pixel's source row landing and its slice dispatch."""
        return buffer_latency_field(self.mapping, self.camera, self.display,
                                    self.render_lead, self.slice_rows)


def operating_phase(camera: ScanSpec, display: ScanSpec, mapping: PixelMapping,
                    render_lead: int, slice_budget: int) -> tuple[int, int]:
    """Camera phase and buffer depth that let every slice dispatch on time.

    Returns ``(phase, buffer_rows)``: the latest camera trigger for which
    no pixel's source row lands after its slice deadline, and the rows that
    must then be retained.
    """
    slice_rows = max(1, rows_in_budget(display, slice_budget))
    base = camera.with_phase(0)
    fld = buffer_latency_field(mapping, base, display, render_lead, slice_rows)
    cam = advance_camera(base, select_phase_offset(fld))
    return cam.phase, required_buffer(fld.shifted(select_phase_offset(fld)), cam)


def configure(camera: ScanSpec, display: ScanSpec, mapping: PixelMapping, render_lead: int,
              slice_budget: int, jitter: JitterModel | None = None, mode="sliced",
              buffer_rows: int | None = None) -> PipelineConfig:
    """Build a config with the camera at its operating phase.

    ``buffer_rows`` defaults to the requirement at that phase.
    """
    phase, need = operating_phase(camera, display, mapping, render_lead, slice_budget)
    return PipelineConfig(
        camera=camera.with_phase(phase), display=display, mapping=mapping,
        render_lead=int(render_lead), slice_budget=int(slice_budget),
        buffer_rows=need if buffer_rows is None else int(buffer_rows),
        mode=mode, jitter=jitter or JitterModel(),
    )


def validate(config: PipelineConfig) -> LatencyField:
    """Check that buffering and phase support the sliced schedule.

    Raises :class:`ConfigError` when a source row would land after its
    slice deadline or when ``buffer_rows`` is below the requirement.
    """
    fld = config.dispatch_field()
    if fld.stat_min < 0:
        raise ConfigError(
            f"camera phase too late: a source row lands {-fld.stat_min} ns after its slice deadline")
    need = required_buffer(fld, config.camera)
    if config.buffer_rows < need:
        raise ConfigError(f"buffer_rows={config.buffer_rows} is below the required {need} camera rows")
    return fld


@dataclass(frozen=True, eq=False)
class SimTrace:
    """Result of :func:`simulate`.

    ``per_pixel_latency`` is the end-to-end (integration mid to emission
    mid) latency of the final simulated frame; ``frame_mean_latency`` holds
    the valid-pixel mean for every frame.
    """

    events: np.ndarray
    per_pixel_latency: LatencyField
    tear_count: int
    frame_mean_latency: np.ndarray
    torn_rows: np.ndarray
    content_frame: np.ndarray

    @property
    def mean_latency(self) -> float:
        return float(np.mean(self.frame_mean_latency))

    def events_of(self, kind: str) -> np.ndarray:
        return self.events[self.events["kind"] == EVENT_KINDS.index(kind)]

    def to_csv(self) -> str:
        lines = ["time_ns,kind,row_start,row_end,frame"]
        for e in self.events:
            lines.append(f"{e['time']},{EVENT_KINDS[e['kind']]},{e['row_start']},{e['row_end']},{e['frame']}")
        return "\n".join(lines) + "\n"


def _events(time, kind, row_start, row_end, frame):
    time = np.atleast_1d(np.asarray(time, dtype=np.int64))
    out = np.zeros(time.shape, dtype=EVENT_DTYPE)
    out["time"] = time
    out["kind"] = EVENT_KINDS.index(kind)
    out["row_start"] = row_start
    out["row_end"] = row_end
    out["frame"] = frame
    return out


def _e2e(config: PipelineConfig, src, valid, content_frame, frame):
    """End-to-end latency field for display frame ``frame``."""
    rows = np.arange(config.display.rows, dtype=np.int64)
    emit = display_emit_mid(config.display, rows, frame)[:, None]
    cam_frame = np.broadcast_to(content_frame[:, None], src.shape)
    mid = camera_mid(config.camera, np.where(valid, src, 0), cam_frame)
    return np.where(valid, emit - mid, 0)


def simulate(config: PipelineConfig, frames: int, seed: int | None = None) -> SimTrace:
    """Run the pipeline for ``frames`` display frames.

    ``seed`` overrides the jitter model's seed.  Configuration problems are
    reported as :class:`ConfigError` before anything is simulated.
    """
    if frames < 1:
        raise ValidationError("frames must be >= 1")
    rng = np.random.default_rng(config.jitter.seed if seed is None else seed)
    if config.mode == "full_frame":
        return _simulate_full_frame(config, frames, rng)
    validate(config)

    cam, disp = config.camera, config.display
    bounds = config.slice_bounds()
    starts, stops = bounds[:-1], bounds[1:]
    rows = np.arange(disp.rows, dtype=np.int64)
    slice_of_row = np.repeat(np.arange(len(starts)), stops - starts)
    src = config.mapping.source_rows()
    valid = config.mapping.valid
    # rows start out showing the composite of the frame before the run
    content = np.full(disp.rows, -1, dtype=np.int64)

    events, means, torn_all, content_all = [], [], [], []
    tears = 0
    latency = None
    cam_rows = np.arange(cam.rows, dtype=np.int64)
    for k in range(frames):
        events.append(_events(camera_ready(cam, cam_rows, k), "row_written", cam_rows, cam_rows, k))
        deadline = display_emit_start(disp, starts, k) - config.render_lead
        done = deadline + config.jitter.sample(rng, len(starts))
        emit = display_emit_start(disp, rows, k)
        torn = done[slice_of_row] > emit
        content = np.where(torn, content, k)
        events.append(_events(deadline, "slice_dispatched", starts, stops - 1, k))
        events.append(_events(done, "slice_completed", starts, stops - 1, k))
        events.append(_events(emit, "row_emitted", rows, rows, k))
        for j in np.flatnonzero(np.bincount(slice_of_row[torn], minlength=len(starts))):
            hit = np.flatnonzero(torn[starts[j]:stops[j]]) + starts[j]
            events.append(_events(done[j], "tear", hit[0], hit[-1], k))
            tears += 1
        lat = _e2e(config, src, valid, content, k)
        means.append(lat[valid].mean())
        torn_all.append(torn)
        content_all.append(content.copy())
        latency = lat

    ev = np.concatenate(events)
    ev = ev[np.lexsort((ev["row_start"], ev["kind"], ev["time"]))]
    return SimTrace(events=ev, per_pixel_latency=LatencyField(latency, valid), tear_count=tears,
                    frame_mean_latency=np.asarray(means), torn_rows=np.asarray(torn_all),
                    content_frame=np.asarray(content_all))


def _simulate_full_frame(config: PipelineConfig, frames: int, rng) -> SimTrace:
    cam, disp = config.camera, config.display
    rows = np.arange(disp.rows, dtype=np.int64)
    cam_rows = np.arange(cam.rows, dtype=np.int64)
    src = config.mapping.source_rows()
    valid = config.mapping.valid
    # camera frames that could be on screen during the run, oldest first
    first = -int(np.ceil((cam.frame_period + cam.scan_time + config.jitter.bound) / cam.frame_period)) - 2
    last = int(np.ceil((frames * disp.frame_period + abs(disp.phase - cam.phase)) / cam.frame_period)) + 1
    cframes = np.arange(first, last + 1, dtype=np.int64)
    ready = camera_ready(cam, cam.rows - 1, cframes)
    done = ready + config.jitter.sample(rng, len(cframes))

    events, means, content_all = [], [], []
    latency = None
    for k in range(frames):
        vsync = display_emit_start(disp, 0, k)
        shown = cframes[done <= vsync]
        if shown.size == 0:
            raise ValidationError("no camera frame completes before vsync; extend the history window")
        c = int(shown.max())
        content = np.full(disp.rows, c, dtype=np.int64)
        events.append(_events(camera_ready(cam, cam_rows, k), "row_written", cam_rows, cam_rows, k))
        events.append(_events(display_emit_start(disp, rows, k), "row_emitted", rows, rows, k))
        lat = _e2e(config, src, valid, content, k)
        means.append(lat[valid].mean())
        content_all.append(content)
        latency = lat
    used = (cframes >= 0) & (cframes < frames)
    events.append(_events(ready[used], "slice_dispatched", 0, disp.rows - 1, cframes[used]))
    events.append(_events(done[used], "slice_completed", 0, disp.rows - 1, cframes[used]))
    ev = np.concatenate(events)
    ev = ev[np.lexsort((ev["row_start"], ev["kind"], ev["time"]))]
    return SimTrace(events=ev, per_pixel_latency=LatencyField(latency, valid), tear_count=0,
                    frame_mean_latency=np.asarray(means),
                    torn_rows=np.zeros((frames, disp.rows), dtype=bool),
                    content_frame=np.asarray(content_all))


def closed_form_latency(config: PipelineConfig) -> LatencyField:
    """Predicted e2e latency per pixel for an untorn sliced run.

    The dispatch slack from the optics field plus the lead, the rest of the
    camera exposure after its midpoint, and half the display persistence.
    """
    fld = config.dispatch_field()
    cam, disp = config.camera, config.display
    extra = (config.render_lead + cam.integration - cam.integration // 2
             + cam.readout_delay + disp.integration // 2)
    lead_row = np.arange(disp.rows) % config.slice_rows
    scan = (display_emit_start(disp, np.arange(disp.rows), 0)
            - display_emit_start(disp, np.arange(disp.rows) - lead_row, 0))
    return LatencyField(np.where(fld.valid, fld.values + extra + scan[:, None], 0), fld.valid)


def detect_tearing(row_timestamps) -> list[int]:
    """Indices whose timestamp is earlier than the previous row's."""
    ts = np.asarray(row_timestamps)
    if ts.size == 0:
        raise ValidationError("timestamp sequence is empty")
    return (np.flatnonzero(np.diff(ts) < 0) + 1).tolist()


@dataclass(frozen=True)
class SharedBufferRead:
    """Row timestamps a reader saw in a single shared frame buffer."""

    timestamps: np.ndarray
    frames: np.ndarray
    overlap: list


def read_frame_buffer(rows: int, frame_period: int, write_row_period: int, read_start: int,
                      read_row_period: int, write_phase: int = 0) -> SharedBufferRead:
    """Scan a shared buffer while a rolling writer keeps overwriting it.

    The writer stores row ``i`` of frame ``f`` at
    ``f * frame_period + write_phase + i * write_row_period`` together with
    that write time as its timestamp.  The reader samples row ``i`` at
    ``read_start + i * read_row_period``.  ``overlap`` lists the rows where
    the reader fell onto an older frame than the row before it, i.e. where
    the writer overran the reader.
    """
    if rows < 1 or frame_period <= 0 or write_row_period <= 0 or read_row_period <= 0:
        raise ValidationError("rows and periods must be positive")
    if (rows - 1) * write_row_period >= frame_period:
        raise ValidationError("writer cannot finish a frame within one frame period")
    i = np.arange(rows, dtype=np.int64)
    t_read = read_start + i * read_row_period
    offset = write_phase + i * write_row_period
    frame = np.floor_divide(t_read - offset, frame_period)
    stamps = frame * frame_period + offset
    overlap = (np.flatnonzero(frame[1:] < frame[:-1]) + 1).tolist()
    return SharedBufferRead(timestamps=stamps, frames=frame, overlap=overlap)


def led_pulse_probe(config: PipelineConfig, pulse_time: int) -> int:
    """Emission midpoint at which a pulse at ``pulse_time`` reaches the centre pixel.

    The pulse is visible in the first frame whose dispatch of the slice
    holding the centre row happens at or after the pulse becomes available.
    """
    row = config.display.rows // 2
    disp = config.display
    first = row - row % config.slice_rows
    deadline0 = display_emit_start(disp, first, 0) - config.render_lead
    # smallest k with deadline0 + k * frame_period >= pulse_time
    k = -((deadline0 - int(pulse_time)) // disp.frame_period)
    return int(display_emit_mid(disp, row, k))


def with_mode(config: PipelineConfig, mode: str) -> PipelineConfig:
    return replace(config, mode=mode)
