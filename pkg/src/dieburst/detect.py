"""Burst detection: baseline statistics, threshold triggering, coincidence
grouping across channels, recovery-time fitting, and event statistics.

A detection opens when the I/Q sample moves further than ``k_sigma`` robust
standard deviations from the channel baseline; crossings closer together
than the dead time merge, and the detection is considered recovered at the
first return below half the trigger threshold (hysteresis). Detections
from different channels whose trigger times fall inside the coincidence
window form one event, classified by which dies fired completely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import kernels
from .errors import (
    DegenerateNormalizationError,
    FitFailedError,
    InsufficientBaselineError,
    UnmappedChannelError,
)
from .tracegen import ChannelTrace

EVENT_CLASSES = ("single-die", "double-die", "partial")

MAD_TO_SIGMA = 1.4826  # Gaussian-consistent scale for median absolute deviation


@dataclass
class Baseline:
    mean_i: float
    mean_q: float
    sigma: float


@dataclass
class Detection:
    """One triggered excursion on one channel.

    ``peak_dev`` is the maximum I/Q-plane distance from baseline, in trace
    units (so it is at least k_sigma * baseline.sigma). ``t_recovered`` is
    None when the trace ends before the signal drops below the hysteresis
    level. Sample indices are kept for downstream fitting.
    """

    channel: str
    t_trigger: float
    peak_dev: float
    t_recovered: float | None = None
    start_index: int = -1
    last_above_index: int = -1
    recovered_index: int = -1


@dataclass
class CoincidentEvent:
    channels: frozenset
    t_ref: float
    kind: str
    detections: list = field(default_factory=list)


@dataclass
class BurstStatistics:
    n_total: int
    n_per_class: dict
    fraction_double: float

    def to_dict(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_per_class": dict(self.n_per_class),
            "fraction_double": self.fraction_double,
        }


def default_baseline_window(trace: ChannelTrace) -> float:
    """Leading 1 percent of the trace, but never fewer than 100 samples."""
    n = max(100, trace.n_samples // 100)
    return n / trace.sample_rate


def baseline_stats(trace: ChannelTrace, window: float) -> Baseline:
    """Robust baseline over the leading ``window`` seconds.

    Means are medians; sigma is the Gaussian-scaled median absolute
    deviation pooled over both quadratures, so a burst inside the window
    inflates it only mildly.
    """
    n_win = int(round(window * trace.sample_rate))
    if n_win < 100:
        raise InsufficientBaselineError(
            f"baseline window holds {n_win} samples, need at least 100"
        )
    if n_win > trace.n_samples:
        raise InsufficientBaselineError(
            f"baseline window of {n_win} samples exceeds trace length {trace.n_samples}"
        )
    i_win = trace.i[:n_win]
    q_win = trace.q[:n_win]
    mean_i = float(np.median(i_win))
    mean_q = float(np.median(q_win))
    devs = np.concatenate([np.abs(i_win - mean_i), np.abs(q_win - mean_q)])
    sigma = MAD_TO_SIGMA * float(np.median(devs))
    return Baseline(mean_i=mean_i, mean_q=mean_q, sigma=sigma)


def deviation_distance(trace: ChannelTrace, baseline: Baseline, metric: str = "euclidean") -> np.ndarray:
    """Per-sample distance from baseline in the I/Q plane."""
    di = trace.i - baseline.mean_i
    dq = trace.q - baseline.mean_q
    if metric == "euclidean":
        return np.hypot(di, dq)
    if metric == "per-quadrature":
        return np.maximum(np.abs(di), np.abs(dq))
    raise ValueError(f"unknown metric {metric!r}; expected 'euclidean' or 'per-quadrature'")


def threshold_trigger(
    trace: ChannelTrace,
    k_sigma: float = 5.0,
    dead_time: float = 5e-4,
    baseline: Baseline | None = None,
    baseline_window: float | None = None,
    metric: str = "euclidean",
) -> list[Detection]:
    """Scan one trace for excursions beyond k_sigma times the baseline scale.

    Crossings within ``dead_time`` of the previous above-threshold sample
    merge into one detection; recovery is the first drop below half the
    threshold after the last above-threshold sample. ``metric`` selects
    Euclidean distance in the I/Q plane (default) or the larger
    per-quadrature deviation.
    """
    if not k_sigma > 0:
        raise ValueError("k_sigma must be positive")
    if baseline is None:
        window = baseline_window if baseline_window is not None else default_baseline_window(trace)
        baseline = baseline_stats(trace, window)
    dist = deviation_distance(trace, baseline, metric)
    high = k_sigma * baseline.sigma
    low = 0.5 * high
    dead_samples = int(round(dead_time * trace.sample_rate))
    starts, lasts, recovered, peaks = kernels.scan_triggers(dist, high, low, dead_samples)
    fs = trace.sample_rate
    out = []
    for s, l, r, p in zip(starts, lasts, recovered, peaks):
        out.append(
            Detection(
                channel=trace.label,
                t_trigger=float(s / fs),
                peak_dev=float(p),
                t_recovered=None if r < 0 else float(r / fs),
                start_index=int(s),
                last_above_index=int(l),
                recovered_index=int(r),
            )
        )
    return out


def coincidence_group(detections, window: float, die_map: dict[str, str]) -> list[CoincidentEvent]:
    """Group detections whose triggers fall within ``window`` of the earliest member.

    ``detections`` may be a flat list or a {channel: [Detection]} mapping.
    Classification: single-die when the fired channels are exactly one
    die's full channel set, double-die when they are the full sets of both
    dies, partial otherwise. Every channel label must appear in
    ``die_map``.
    """
    if not window > 0:
        raise ValueError("window must be positive")
    if isinstance(detections, dict):
        flat = [d for dets in detections.values() for d in dets]
    else:
        flat = list(detections)
    for det in flat:
        if det.channel not in die_map:
            raise UnmappedChannelError(f"channel {det.channel!r} missing from die map")
    die_channels: dict[str, set] = {}
    for ch, die in die_map.items():
        die_channels.setdefault(die, set()).add(ch)
    all_channels = set(die_map)

    flat.sort(key=lambda d: d.t_trigger)
    events = []
    idx = 0
    while idx < len(flat):
        t_ref = flat[idx].t_trigger
        members = [flat[idx]]
        idx += 1
        while idx < len(flat) and flat[idx].t_trigger - t_ref <= window:
            members.append(flat[idx])
            idx += 1
        fired = frozenset(d.channel for d in members)
        complete = [die for die, chans in die_channels.items() if chans <= fired]
        if len(complete) == 1 and fired == die_channels[complete[0]]:
            kind = "single-die"
        elif len(complete) == len(die_channels) > 1 and fired == all_channels:
            kind = "double-die"
        else:
            kind = "partial"
        events.append(CoincidentEvent(channels=fired, t_ref=t_ref, kind=kind, detections=members))
    return events


def burst_statistics(events: list[CoincidentEvent]) -> BurstStatistics:
    """Counts per event class; fraction_double is double-die over total (0 when empty)."""
    counts: dict[str, int] = {}
    for ev in events:
        counts[ev.kind] = counts.get(ev.kind, 0) + 1
    n_total = len(events)
    frac = counts.get("double-die", 0) / n_total if n_total else 0.0
    return BurstStatistics(n_total=n_total, n_per_class=counts, fraction_double=frac)


def frequency_shift_signal(trace: ChannelTrace, baseline: Baseline | None = None) -> np.ndarray:
    """Per-sample resonance pull (Hz) recovered by inverting the hanger model.

    Requires the trace to carry its channel parameters. Solving
    S21 = 1 - ke/(k + 2j d) for the detuning d gives d = Im[ke/(1-S21)]/2;
    subtracting the static detuning (probe - f0) leaves the burst-induced
    downward pull, exactly exponential for a single burst.
    """
    if trace.params is None:
        raise ValueError("trace carries no channel parameters; cannot invert the resonator model")
    params = trace.params
    probe = trace.probe_freq if trace.probe_freq is not None else params.f0
    s = trace.complex_values()
    denom = 1.0 - s
    # |1 - S21| >= ke/k away from pathological noise; guard exact zeros
    tiny = np.finfo(float).tiny
    denom = np.where(np.abs(denom) < tiny, tiny, denom)
    detuning = np.imag(params.kappa_e / denom) / 2.0
    return detuning - (probe - params.f0)


def phase_signal(trace: ChannelTrace, baseline: Baseline) -> np.ndarray:
    """Unwrapped transmission phase relative to the baseline point."""
    phase = np.unwrap(np.angle(trace.complex_values()))
    ref = float(np.angle(baseline.mean_i + 1j * baseline.mean_q))
    return phase - ref


def recovery_time(
    trace: ChannelTrace,
    detection: Detection,
    baseline: Baseline | None = None,
    t_stop: float | None = None,
    min_samples: int = 50,
    allow_short: bool = False,
) -> float:
    """Fit the post-peak decay of one detection with a single exponential.

    When the trace carries channel parameters the fit runs on the
    model-inverted frequency pull (exactly exponential for a clean burst);
    otherwise it falls back to the unwrapped phase deviation, which is only
    proportional to the pull for small signals. The fit window runs from
    the sample after the peak to ``t_stop`` (e.g. the next detection),
    capped at ten initial-guess decay constants. Needs ``min_samples``
    post-peak samples unless ``allow_short``.
    """
    fs = trace.sample_rate
    if baseline is None:
        baseline = baseline_stats(trace, default_baseline_window(trace))
    if trace.params is not None:
        y = frequency_shift_signal(trace, baseline)
    else:
        y = phase_signal(trace, baseline)

    start = detection.start_index if detection.start_index >= 0 else int(round(detection.t_trigger * fs))
    stop = trace.n_samples if t_stop is None else min(trace.n_samples, int(t_stop * fs))
    if stop <= start + 1:
        raise FitFailedError("no samples after the trigger to fit")
    seg = y[start:stop]
    peak_rel = int(np.argmax(np.abs(seg)))
    peak = start + peak_rel
    amp0 = float(y[peak])
    n_post = stop - (peak + 1)
    if n_post < min_samples and not allow_short:
        raise FitFailedError(
            f"only {n_post} post-peak samples before the next detection, need {min_samples}"
        )
    if n_post < 5:
        raise FitFailedError(f"only {n_post} post-peak samples, cannot fit")

    t_rel = (np.arange(peak + 1, stop) - peak) / fs
    y_fit = y[peak + 1 : stop]

    # log-linear starting point over the clearly-signal part of the tail
    signed = np.sign(amp0) * y_fit
    usable = np.flatnonzero(signed > 0.05 * abs(amp0))
    if usable.size >= 2:
        slope = np.polyfit(t_rel[usable], np.log(signed[usable]), 1)[0]
        tau0 = -1.0 / slope if slope < 0 else t_rel[-1] / 5.0
    else:
        tau0 = t_rel[-1] / 5.0
    tau0 = float(np.clip(tau0, 1.0 / fs, 100.0 * t_rel[-1]))

    cap = int(np.ceil(10.0 * tau0 * fs))
    if cap < min(min_samples, n_post):
        cap = min(min_samples, n_post)
    t_rel = t_rel[:cap]
    y_fit = y_fit[:cap]

    def residuals(x):
        return x[0] * np.exp(-t_rel / x[1]) - y_fit

    result = least_squares(
        residuals,
        x0=[amp0, tau0],
        bounds=([-np.inf, 1e-12], [np.inf, np.inf]),
        x_scale=[max(abs(amp0), 1e-30), tau0],
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
    )
    if not result.success or not np.isfinite(result.x[1]):
        raise FitFailedError("exponential fit did not converge", best=result.x)
    return float(result.x[1])


def phase_normalize(trace: ChannelTrace, baseline: Baseline) -> np.ndarray:
    """Phase deviation from baseline scaled so the event peak is exactly 1.

    Raises when the trace never departs from baseline (zero peak), which is
    the degenerate no-event case.
    """
    dev = phase_signal(trace, baseline)
    peak = dev[int(np.argmax(np.abs(dev)))]
    if peak == 0.0:
        raise DegenerateNormalizationError("trace has zero phase deviation; nothing to normalize")
    return dev / peak
