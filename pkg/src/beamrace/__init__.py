"""Rolling-scan passthrough latency simulation, stereo latency geometry and
psychometric threshold fitting."""

from .compositor import CameraRows, ColorParams, composite_frame, composite_slice
from .errors import BeamraceError, ConfigError, MissingRowError, ValidationError
from .geometry import (HeadTrajectory, RigGeometry, StereoProjection, disparity_error_trace,
                       pose_eyes, project_point, stereo_pair, table19_report)
from .optics import (DistortionProfile, LatencyField, PixelMapping, advance_camera,
                     buffer_latency_field, build_mapping, required_buffer, select_phase_offset)
from .pipeline import (JitterModel, PipelineConfig, SimTrace, configure, detect_tearing,
                       led_pulse_probe, simulate)
from .psychometrics import PsychometricFit, TrialRecord, fit_logistic, threshold_at
from .scanout import (RowTimes, ScanSpec, camera_row_times, display_emit_mid, hz_to_period_ns,
                      ms_to_ns, rows_in_budget)
from .sobol import sobol_latencies

__version__ = "0.1.0"
