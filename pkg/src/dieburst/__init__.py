"""Simulation and analysis of particle-burst coincidences in multi-die
superconducting resonator chips: ray/box geometry, solid-angle double-hit
probabilities with a Monte Carlo cross-check, resonator transmission
modeling and fitting, synthetic I/Q trace generation, and threshold-based
burst detection with cross-channel coincidence classification.
"""

__version__ = "0.1.0"

from .coincidence import (
    CoincidenceReport,
    QuadratureSpec,
    double_hit_probability,
    mc_double_hit,
    pair_probability,
    solid_angle_of_rect,
)
from .detect import (
    Baseline,
    BurstStatistics,
    CoincidentEvent,
    Detection,
    baseline_stats,
    burst_statistics,
    coincidence_group,
    phase_normalize,
    recovery_time,
    threshold_trigger,
)
from .errors import DieburstError
from .geometry import (
    BoxHit,
    DieBox,
    Layout,
    Ray,
    RectFace,
    load_layout,
    ray_box_intersection,
    sample_direction_cos_zenith,
    sample_direction_isotropic,
    sample_point_on_face,
    save_layout,
)
from .mkid import (
    LumpedElements,
    MkidParams,
    fit_s21_sweep,
    load_mkid_fixture,
    resonant_frequency,
    s21,
    shifted_frequency,
    synthesize_sweep,
    total_inductance_for_frequency,
)
from .tracegen import (
    BurstDistribution,
    BurstEvent,
    ChannelTrace,
    GroundTruthLog,
    TraceConfig,
    min_detectable_shift,
    read_trace_bin,
    read_trace_csv,
    simulate_experiment,
    synthesize_trace,
    write_trace_bin,
    write_trace_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
