"""Stability metrics over teleop traces and the velocity-transform ablation.

All kernels are pure and operate on uniformly sampled series. Trace-level
reports measure the leader EE position (leader-side stability is what the
operator feels), split per axis and aggregated as documented on each helper.
Values from a human-driven hardware rig are not comparable in absolute terms
to this simulation, so reports are judged on orderings and finiteness, not
on matching any published magnitudes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .feedback import VelocityTransform
from .simulator import Scenario, run_teleop_loop
from .trace import Trace

DEFAULT_F_CUTOFF_HZ = 5.0
MIN_BASELINE_SAMPLES = 32


class MetricError(ValueError):
    """Input too short or otherwise unusable for a metric kernel."""


@dataclass
class StabilityReport:
    scenario: str
    transform: str
    high_freq_energy_ratio: float
    max_local_jerk: float
    jerk_anomaly_pct: float
    feedback_correlation: float  # NaN when undefined (flag below)
    correlation_defined: bool
    degenerate_baseline: bool
    contact_ticks: int
    mean_factor: float

    def to_json_obj(self) -> dict:
        out = dataclasses.asdict(self)
        if not self.correlation_defined:
            out["feedback_correlation"] = None
        return out


# kernels ----------------------------------------------------------------------


def high_freq_energy_ratio(signal: np.ndarray, dt: float, f_cutoff: float) -> float:
    """Fraction of non-DC spectral energy at or above f_cutoff.

    Mean is removed before the transform; the DC bin is excluded from the
    denominator; ratio is invariant under signal scaling.
    """
    signal = np.asarray(signal, dtype=float)
    if signal.ndim != 1:
        raise MetricError("expected a scalar series")
    if len(signal) < 16:
        raise MetricError(f"need >= 16 samples, got {len(signal)}")
    nyquist = 0.5 / dt
    if not 0.0 < f_cutoff < nyquist:
        raise MetricError(f"f_cutoff must be in (0, {nyquist} Hz)")
    spectrum = np.fft.rfft(signal - signal.mean())
    power = np.abs(spectrum) ** 2
    freqs = np.fft.rfftfreq(len(signal), dt)
    total = float(np.sum(power[1:]))
    if total == 0.0:
        return 0.0
    return float(np.sum(power[freqs >= f_cutoff]) / total)


def local_jerk_series(signal: np.ndarray) -> np.ndarray:
    """Per-tick third finite differences of a scalar series (per-tick units:
    no dt normalization, so a cubic t^3 sampled at dt gives exactly 6 dt^3)."""
    signal = np.asarray(signal, dtype=float)
    if len(signal) < 4:
        raise MetricError(f"need >= 4 samples, got {len(signal)}")
    return np.diff(signal, n=3)


def max_local_jerk(signal: np.ndarray, window_ticks: int = 16) -> float:
    """Max over sliding windows of the max |third difference| (which equals
    the global max for any window length; the window argument is validated
    for API stability)."""
    if window_ticks < 1:
        raise MetricError("window_ticks must be >= 1")
    return float(np.max(np.abs(local_jerk_series(signal))))


def jerk_anomaly_pct(
    signal: np.ndarray, baseline_segment: np.ndarray
) -> tuple[float, bool]:
    """Percent of |jerk| samples above the baseline's mu + 3 sigma.

    mu and sigma are the mean/std of |jerk| over the baseline (free-motion)
    segment. A degenerate baseline (sigma = 0) is flagged and the threshold
    falls back to mu + a small epsilon.
    """
    baseline = np.asarray(baseline_segment, dtype=float)
    if len(baseline) < MIN_BASELINE_SAMPLES:
        raise MetricError(
            f"baseline needs >= {MIN_BASELINE_SAMPLES} samples, got {len(baseline)}"
        )
    base_jerk = np.abs(local_jerk_series(baseline))
    mu = float(base_jerk.mean())
    sigma = float(base_jerk.std())
    degenerate = sigma == 0.0
    threshold = mu + (3.0 * sigma if not degenerate else 1e-12)
    jerk = np.abs(local_jerk_series(signal))
    return float(100.0 * np.mean(jerk > threshold)), degenerate


def feedback_correlation(
    rendered_norm: np.ndarray, truth_norm: np.ndarray, mask: np.ndarray
) -> float:
    """Pearson r between the two series over masked ticks; NaN when fewer
    than two masked samples or either side has zero variance."""
    rendered = np.asarray(rendered_norm, dtype=float)[np.asarray(mask, dtype=bool)]
    truth = np.asarray(truth_norm, dtype=float)[np.asarray(mask, dtype=bool)]
    if len(rendered) < 2:
        return float("nan")
    if rendered.std() == 0.0 or truth.std() == 0.0:
        return float("nan")
    return float(np.corrcoef(rendered, truth)[0, 1])


# trace-level report ------------------------------------------------------------


def _vector_jerk_magnitude(positions: np.ndarray) -> np.ndarray:
    """Euclidean norm across axes of per-axis third differences."""
    if len(positions) < 4:
        raise MetricError(f"need >= 4 samples, got {len(positions)}")
    d3 = np.diff(positions, n=3, axis=0)
    return np.linalg.norm(d3, axis=1)


def stability_report(
    trace: Trace,
    transform: str = "",
    f_cutoff: float = DEFAULT_F_CUTOFF_HZ,
) -> StabilityReport:
    """Stability metrics of one run, measured on the leader EE position.

    Per-axis spectral ratios aggregate by energy weighting (sum of high-band
    power over sum of total power). The jerk baseline is the contact-free
    prefix of the run; if the run never makes contact the whole run is its
    own baseline.
    """
    pos = trace.column("leader_pos")
    dt = trace.dt
    if len(pos) < 16:
        raise MetricError("trace too short for a stability report")

    hi = total = 0.0
    freqs = np.fft.rfftfreq(len(pos), dt)
    band = freqs >= f_cutoff
    for axis in range(3):
        power = np.abs(np.fft.rfft(pos[:, axis] - pos[:, axis].mean())) ** 2
        hi += float(np.sum(power[band]))
        total += float(np.sum(power[1:]))
    ratio = hi / total if total > 0 else 0.0

    jerk_mag = _vector_jerk_magnitude(pos)
    max_jerk = float(np.max(jerk_mag))

    contact = trace.contact_mask()
    first_contact = int(np.argmax(contact)) if contact.any() else len(pos)
    baseline_end = first_contact if first_contact >= MIN_BASELINE_SAMPLES else len(pos)
    base = jerk_mag[: max(baseline_end - 3, 1)]
    degenerate = False
    if len(base) < MIN_BASELINE_SAMPLES:
        base = jerk_mag
    mu = float(base.mean())
    sigma = float(base.std())
    if sigma == 0.0:
        degenerate = True
        threshold = mu + 1e-12
    else:
        threshold = mu + 3.0 * sigma
    anomaly_pct = float(100.0 * np.mean(jerk_mag > threshold))

    rendered = np.linalg.norm(trace.column("rendered_force"), axis=1)
    truth = np.linalg.norm(trace.column("contact_force"), axis=1)
    r = feedback_correlation(rendered, truth, contact)
    defined = not np.isnan(r)

    return StabilityReport(
        scenario=trace.scenario_name,
        transform=transform,
        high_freq_energy_ratio=ratio,
        max_local_jerk=max_jerk,
        jerk_anomaly_pct=anomaly_pct,
        feedback_correlation=r,
        correlation_defined=defined,
        degenerate_baseline=degenerate,
        contact_ticks=int(contact.sum()),
        mean_factor=float(trace.column("factor").mean()),
    )


# ablation -----------------------------------------------------------------------


def ablation_report(
    scenario: Scenario,
    transforms: list[VelocityTransform] | None = None,
    f_cutoff: float = DEFAULT_F_CUTOFF_HZ,
) -> list[StabilityReport]:
    """Run the scenario once per velocity transform (identical seed) and
    report stability metrics for each."""
    if transforms is None:
        transforms = list(VelocityTransform)
    reports = []
    for kind in transforms:
        variant = dataclasses.replace(
            scenario, feedback=dataclasses.replace(scenario.feedback, transform=kind)
        )
        trace = run_teleop_loop(variant)
        reports.append(stability_report(trace, transform=kind.value, f_cutoff=f_cutoff))
    return reports


def format_comparison(reports: list[StabilityReport]) -> str:
    """Aligned text table, rows ordered by high-frequency energy ratio."""
    header = (
        f"{'transform':<10} {'hf_ratio':>9} {'max_jerk':>12} "
        f"{'anomaly_%':>10} {'corr':>7} {'mean_factor':>12}"
    )
    lines = [header, "-" * len(header)]
    for rep in sorted(reports, key=lambda r: r.high_freq_energy_ratio):
        corr = f"{rep.feedback_correlation:.3f}" if rep.correlation_defined else "undef"
        lines.append(
            f"{rep.transform:<10} {rep.high_freq_energy_ratio:>9.4f} "
            f"{rep.max_local_jerk:>12.3e} {rep.jerk_anomaly_pct:>10.2f} "
            f"{corr:>7} {rep.mean_factor:>12.4f}"
        )
    return "\n".join(lines)
