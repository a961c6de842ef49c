"""Synthesize multi-channel I/Q traces of burst events with known ground truth.

A burst at time t0 pulls the channel's resonant frequency down by
``peak_shift`` instantly (one-sample onset) and recovers exponentially with
constant ``tau``; overlapping bursts add in the frequency shift. The trace
is the hanger transmission evaluated at the probe frequency along the
shifted resonance, plus white Gaussian noise per quadrature.

Seed splitting in :func:`simulate_experiment`: the master seed spawns
``2 + n_channels`` child streams via ``numpy.random.SeedSequence`` - child
0 drives ray geometry, child 1 draws burst magnitudes and arrival times,
and child ``2 + i`` adds noise to the i-th channel (dies in layout order,
channels in their listed order). Identical inputs and seed reproduce every
trace bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import EventOutOfWindowError, InvalidLayoutError
from .geometry import Layout
from .mkid import MkidParams
from .coincidence import ANGULAR_MODELS, sample_entering_rays


@dataclass
class BurstEvent:
    """One burst on one die: onset, peak frequency pull (Hz), recovery constant (s)."""

    t0: float
    peak_shift: float
    tau: float
    die_id: str = ""

    def __post_init__(self):
        if not self.peak_shift > 0:
            raise ValueError("peak_shift must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")


@dataclass
class TraceConfig:
    """Sampling grid and noise level for synthesized traces.

    ``probe_freq`` of None probes each channel at its own resonant
    frequency. Defaults (1 MHz sampling, 10 ms span) are assumptions sized
    to resolve millisecond recoveries, not measured values.
    """

    sample_rate: float = 1e6
    duration: float = 10e-3
    noise_sigma: float = 0.0
    probe_freq: float | None = None

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


@dataclass
class ChannelTrace:
    """Uniformly sampled I/Q series for one channel.

    ``params`` and ``probe_freq`` are carried along when known (always, for
    synthesized traces) so downstream analysis can invert the resonator
    model; they are optional metadata, not part of the sample data.
    """

    label: str
    sample_rate: float
    i: np.ndarray
    q: np.ndarray
    params: MkidParams | None = None
    probe_freq: float | None = None

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        if self.i.shape != self.q.shape or self.i.ndim != 1:
            raise ValueError("i and q must be 1-D arrays of equal length")

    @property
    def n_samples(self) -> int:
        return self.i.size

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.i.size) / self.sample_rate

    def complex_values(self) -> np.ndarray:
        return self.i + 1j * self.q


@dataclass
class ParticleImpact:
    """Ground truth for one particle: bursts per struck die, affected channels."""

    t0: float
    bursts: list[BurstEvent]
    channels: list[str]

    @property
    def die_ids(self) -> list[str]:
        return [b.die_id for b in self.bursts]

    @property
    def kind(self) -> str:
        return "double-die" if len(self.bursts) >= 2 else "single-die"


@dataclass
class GroundTruthLog:
    impacts: list[ParticleImpact] = field(default_factory=list)

    def class_counts(self) -> dict:
        counts: dict[str, int] = {}
        for imp in self.impacts:
            counts[imp.kind] = counts.get(imp.kind, 0) + 1
        return counts

    def fraction_double(self) -> float:
        if not self.impacts:
            return 0.0
        return self.class_counts().get("double-die", 0) / len(self.impacts)

    def to_dict(self) -> dict:
        return {
            "impacts": [
                {
                    "t0": imp.t0,
                    "kind": imp.kind,
                    "channels": list(imp.channels),
                    "bursts": [
                        {"die_id": b.die_id, "t0": b.t0, "peak_shift_hz": b.peak_shift, "tau_s": b.tau}
                        for b in imp.bursts
                    ],
                }
                for imp in self.impacts
            ]
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GroundTruthLog":
        impacts = []
        for entry in doc["impacts"]:
            bursts = [
                BurstEvent(t0=b["t0"], peak_shift=b["peak_shift_hz"], tau=b["tau_s"], die_id=b["die_id"])
                for b in entry["bursts"]
            ]
            impacts.append(ParticleImpact(t0=entry["t0"], bursts=bursts, channels=list(entry["channels"])))
        return cls(impacts=impacts)


@dataclass
class BurstDistribution:
    """Log-normal magnitude and recovery draws for simulated bursts.

    Medians and log-space sigmas are config knobs; the defaults give
    kilohertz-scale pulls with millisecond-scale recoveries and substantial
    event-to-event spread.
    """

    median_shift: float = 2e3
    sigma_log_shift: float = 0.5
    median_tau: float = 1e-3
    sigma_log_tau: float = 0.25

    def draw(self, rng: np.random.Generator, n: int):
        shifts = rng.lognormal(np.log(self.median_shift), self.sigma_log_shift, n)
        taus = rng.lognormal(np.log(self.median_tau), self.sigma_log_tau, n)
        return shifts, taus


def _burst_spans(events: list[BurstEvent], n: int, dt: float) -> list[tuple[int, int]]:
    """Merged sample intervals where at least one burst tail is non-zero."""
    raw = []
    for ev in events:
        lo = max(0, int(np.ceil((ev.t0 / dt) * (1.0 - 1e-12))))
        hi = min(n, int(np.ceil((ev.t0 + kernels.BURST_TAIL_CUTOFF * ev.tau) / dt)))
        if lo < hi:
            raw.append((lo, hi))
    raw.sort()
    merged = []
    for lo, hi in raw:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def synthesize_trace(
    params: MkidParams,
    events: list[BurstEvent],
    cfg: TraceConfig,
    seed=0,
) -> ChannelTrace:
    """Build one channel's I/Q trace from its burst list.

    The resonance trajectory is f0(t) = f0 - sum of one-sided exponential
    pulls (tails truncated 50 recovery constants after onset); the trace is
    S21 evaluated at the probe frequency along that trajectory plus
    per-quadrature Gaussian noise (I drawn before Q). ``seed`` may be an
    int, SeedSequence, or Generator.
    """
    n = cfg.n_samples
    dt = 1.0 / cfg.sample_rate
    for ev in events:
        if not (0.0 <= ev.t0 <= cfg.duration):
            raise EventOutOfWindowError(f"event at t0={ev.t0} outside [0, {cfg.duration}]")
    probe = cfg.probe_freq if cfg.probe_freq is not None else params.f0
    static = probe - params.f0
    s0 = 1.0 - params.kappa_e / (params.kappa_e + params.kappa_i + 2j * static)
    i = np.full(n, s0.real)
    q = np.full(n, s0.imag)
    if events:
        shift = kernels.superpose_bursts(
            n,
            dt,
            [ev.t0 for ev in events],
            [ev.peak_shift for ev in events],
            [ev.tau for ev in events],
        )
        # the response only departs from s0 where some burst tail is alive
        for lo, hi in _burst_spans(events, n, dt):
            detuning = static + shift[lo:hi]
            values = 1.0 - params.kappa_e / (params.kappa_e + params.kappa_i + 2j * detuning)
            i[lo:hi] = values.real
            q[lo:hi] = values.imag
    if cfg.noise_sigma > 0.0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        i += rng.normal(0.0, cfg.noise_sigma, n)
        q += rng.normal(0.0, cfg.noise_sigma, n)
    return ChannelTrace(
        label=params.label,
        sample_rate=cfg.sample_rate,
        i=i,
        q=q,
        params=params,
        probe_freq=probe,
    )


def min_detectable_shift(params: MkidParams, noise_sigma: float, k_sigma: float = 5.0) -> float:
    """Smallest peak frequency pull whose I/Q excursion reaches k_sigma * noise.

    Probing at resonance, a pull of size D moves the trace through the I/Q
    plane by

        |S21(D) - S21(0)| = (kappa_e / kappa) * 2 D / sqrt(kappa^2 + 4 D^2)

    with kappa the total linewidth. Solving excursion = k * sigma gives

        D_min = (kappa / 2) * x / sqrt(1 - x^2),   x = k * sigma * kappa / kappa_e,

    which is the calibration constant used by the detectability checks.
    Returns inf when even an infinite pull stays below threshold (x >= 1).
    """
    kappa = params.kappa_total
    x = k_sigma * noise_sigma * kappa / params.kappa_e
    if x >= 1.0:
        return np.inf
    return 0.5 * kappa * x / np.sqrt(1.0 - x * x)


def _arrival_times(rng: np.random.Generator, n: int, duration: float, min_separation: float) -> np.ndarray:
    if min_separation <= 0.0:
        return np.sort(rng.uniform(0.0, duration, n))
    slot = duration / n
    if slot <= min_separation:
        raise ValueError(
            f"cannot place {n} events with separation {min_separation} in {duration} s"
        )
    jitter = rng.uniform(0.0, slot - min_separation, n)
    return np.arange(n) * slot + jitter


def simulate_experiment(
    layout: Layout,
    mkids_by_die: dict[str, list[MkidParams]],
    cfg: TraceConfig,
    n_particles: int,
    burst_dist: BurstDistribution | None = None,
    flux: str = "isotropic",
    seed: int = 0,
    min_separation: float = 0.0,
) -> tuple[list[ChannelTrace], GroundTruthLog]:
    """Simulate particle arrivals on the layout and synthesize every channel.

    Each particle is a ray entering one die (die chosen by surface area,
    then the same entering-ray measure the coincidence estimator uses);
    when its forward path crosses the other die it deposits a burst there
    too, so all channels of every struck die see the event. Launches whose
    backward extension crosses the other die are redrawn: those tracks
    belong to the other die's launch population, and dropping them keeps
    the event stream's double fraction equal to the event-level p_double.

    ``min_separation`` > 0 switches arrival times from uniform draws to
    jittered equal slots guaranteeing that minimum spacing (used for
    lossless round-trip checks).
    """
    if not layout.dies:
        raise InvalidLayoutError("layout has no dies")
    if len(layout.dies) > 2:
        raise InvalidLayoutError(f"at most 2 dies supported, layout has {len(layout.dies)}")
    if flux not in ANGULAR_MODELS:
        raise ValueError(f"unknown flux model {flux!r}; expected one of {ANGULAR_MODELS}")
    for die in layout.dies:
        if not mkids_by_die.get(die.id):
            raise ValueError(f"die {die.id!r} has no assigned channels")
    burst_dist = burst_dist or BurstDistribution()

    channels = []  # (die_id, params) in deterministic order
    for die in layout.dies:
        for params in mkids_by_die[die.id]:
            channels.append((die.id, params))
    labels = [p.label for _, p in channels]
    if len(set(labels)) != len(labels):
        raise ValueError(f"channel labels must be unique, got {labels}")

    ss = np.random.SeedSequence(seed)
    children = ss.spawn(2 + len(channels))
    ray_rng = np.random.default_rng(children[0])
    burst_rng = np.random.default_rng(children[1])

    areas = np.array([die.surface_area for die in layout.dies])
    p_die = areas / areas.sum()

    # sample accepted launches (inward + not entering through the far side
    # of a track that already crossed the other die)
    launch_die = np.empty(n_particles, dtype=np.int64)
    hits_other = np.empty(n_particles, dtype=bool)
    filled = 0
    while filled < n_particles:
        k = n_particles - filled
        dice = ray_rng.choice(len(layout.dies), size=k, p=p_die)
        pts = np.empty((k, 3))
        dirs = np.empty((k, 3))
        fwd = np.zeros(k, dtype=bool)
        bwd = np.zeros(k, dtype=bool)
        for di, die in enumerate(layout.dies):
            sel = np.flatnonzero(dice == di)
            if sel.size == 0:
                continue
            p_sel, d_sel, _ = sample_entering_rays(ray_rng, die, sel.size, flux)
            pts[sel] = p_sel
            dirs[sel] = d_sel
            for dj, other in enumerate(layout.dies):
                if dj == di:
                    continue
                fwd[sel] |= kernels.ray_hits_box(p_sel, d_sel, other.min_corner, other.max_corner, True)
                back = kernels.ray_hits_box(p_sel, -d_sel, other.min_corner, other.max_corner, True)
                bwd[sel] |= back
        keep = np.flatnonzero(~bwd)
        n_keep = min(keep.size, n_particles - filled)
        launch_die[filled : filled + n_keep] = dice[keep[:n_keep]]
        hits_other[filled : filled + n_keep] = fwd[keep[:n_keep]]
        filled += n_keep

    t0s = _arrival_times(burst_rng, n_particles, cfg.duration, min_separation)
    n_bursts = int(n_particles + hits_other.sum())
    shifts, taus = burst_dist.draw(burst_rng, n_bursts)

    impacts = []
    events_by_die: dict[str, list[BurstEvent]] = {die.id: [] for die in layout.dies}
    bi = 0
    for j in range(n_particles):
        struck = [layout.dies[launch_die[j]].id]
        if hits_other[j]:
            struck.append(layout.dies[1 - launch_die[j]].id)
        bursts = []
        for die_id in struck:
            ev = BurstEvent(t0=float(t0s[j]), peak_shift=float(shifts[bi]), tau=float(taus[bi]), die_id=die_id)
            bursts.append(ev)
            events_by_die[die_id].append(ev)
            bi += 1
        affected = [p.label for d, p in channels if d in struck]
        impacts.append(ParticleImpact(t0=float(t0s[j]), bursts=bursts, channels=affected))

    traces = []
    for ci, (die_id, params) in enumerate(channels):
        traces.append(
            synthesize_trace(
                params,
                events_by_die[die_id],
                cfg,
                seed=np.random.default_rng(children[2 + ci]),
            )
        )
    return traces, GroundTruthLog(impacts=impacts)


# ---------------------------------------------------------------------------
# trace files
#
# CSV: header "t,i,q", one row per sample, full float64 precision.
# Binary (".dbt"): little-endian, fixed layout
#   bytes 0..3   magic b"DBT1"
#   uint16       label length L
#   L bytes      label, UTF-8
#   float64      sample rate (Hz)
#   uint64       sample count n
#   n float64    I values
#   n float64    Q values


def write_trace_csv(trace: ChannelTrace, path) -> None:
    data = np.column_stack((trace.t, trace.i, trace.q))
    np.savetxt(path, data, delimiter=",", header="t,i,q", comments="", fmt="%.17g")


def read_trace_csv(path, label: str | None = None) -> ChannelTrace:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    dt = np.median(np.diff(t)) if t.size > 1 else 1.0
    return ChannelTrace(
        label=label if label is not None else Path(path).stem,
        sample_rate=1.0 / dt,
        i=data[:, 1],
        q=data[:, 2],
    )


_BIN_MAGIC = b"DBT1"


def write_trace_bin(trace: ChannelTrace, path) -> None:
    label = trace.label.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(struct.pack("<H", len(label)))
        fh.write(label)
        fh.write(struct.pack("<d", trace.sample_rate))
        fh.write(struct.pack("<Q", trace.n_samples))
        fh.write(trace.i.astype("<f8").tobytes())
        fh.write(trace.q.astype("<f8").tobytes())


def read_trace_bin(path) -> ChannelTrace:
    raw = Path(path).read_bytes()
    if raw[:4] != _BIN_MAGIC:
        raise ValueError(f"{path} is not a trace file (bad magic)")
    off = 4
    (label_len,) = struct.unpack_from("<H", raw, off)
    off += 2
    label = raw[off : off + label_len].decode("utf-8")
    off += label_len
    (sample_rate,) = struct.unpack_from("<d", raw, off)
    off += 8
    (n,) = struct.unpack_from("<Q", raw, off)
    off += 8
    i = np.frombuffer(raw, dtype="<f8", count=n, offset=off).copy()
    off += 8 * n
    q = np.frombuffer(raw, dtype="<f8", count=n, offset=off).copy()
    return ChannelTrace(label=label, sample_rate=sample_rate, i=i, q=q)
