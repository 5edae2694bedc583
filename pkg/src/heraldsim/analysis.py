"""Estimation pipeline: heralded autocorrelation, calibration, fitting.

Counts in, numbers out.  Everything here is a pure function of
:class:`~heraldsim.coincidence.CoincidenceCounts` (plus configuration where
physics constants are needed), so the same pipeline serves both simulators
and any stored counts files.

Error model: all counts are treated as independent Poisson variates and
propagated to first order.  Covariance between numerator and denominator
counts of the autocorrelation estimator is neglected — standard practice
in the g2 << 1 regime — and all quoted uncertainties are 1 standard
deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .coincidence import COUNT_FIELDS, CoincidenceCounts, SegmentCounts
from .core import OpticsConfig

__all__ = [
    "InsufficientStatistics",
    "G2Estimate",
    "FitResult",
    "heralded_g2",
    "segmented_g2",
    "klyshko_efficiency",
    "herald_efficiency",
    "background_subtract",
    "weighted_linear_fit",
    "corrected_rate",
]


class InsufficientStatistics(ValueError):
    """An estimator's denominator counts are zero (or too few points)."""


@dataclass(frozen=True)
class G2Estimate:
    """Heralded zero-delay autocorrelation with its statistical error.

    ``upper_limit`` marks zero-triple results: the value is 0 and ``sigma``
    is computed with a single substituted triple, so value + sigma reads as
    a one-count upper limit.  ``x_rate`` (events/s) is the efficiency-
    corrected signal-arm rate used as the power axis; it is attached by
    :func:`corrected_rate` callers and may be None for standalone
    estimates.
    """

    value: float
    sigma: float
    counts: Optional[CoincidenceCounts] = None
    x_rate: Optional[float] = None
    upper_limit: bool = False

    def with_rate(self, x_rate: float) -> "G2Estimate":
        return replace(self, x_rate=x_rate)


@dataclass(frozen=True)
class FitResult:
    """Weighted straight-line fit y = slope * x + intercept.

    ``covariance`` is the 2x2 parameter covariance in (slope, intercept)
    order — symmetric positive semidefinite by construction.
    """

    slope: float
    intercept: float
    covariance: np.ndarray
    reduced_chi2: float
    dof: int

    @property
    def slope_sigma(self) -> float:
        return math.sqrt(self.covariance[0, 0])

    @property
    def intercept_sigma(self) -> float:
        return math.sqrt(self.covariance[1, 1])


def _g2_from_totals(n_h: float, n_h1: float, n_h2: float, n_h12: float,
                    counts: Optional[CoincidenceCounts]) -> G2Estimate:
    if n_h1 <= 0 or n_h2 <= 0 or n_h <= 0:
        raise InsufficientStatistics(
            f"heralded g2 needs N_H, N_H1, N_H2 > 0 "
            f"(got N_H={n_h}, N_H1={n_h1}, N_H2={n_h2})")
    if n_h12 > 0:
        value = n_h * n_h12 / (n_h1 * n_h2)
        rel_var = 1.0 / n_h12 + 1.0 / n_h1 + 1.0 / n_h2 + 1.0 / n_h
        return G2Estimate(value=value, sigma=value * math.sqrt(rel_var),
                          counts=counts)
    # No triples: value 0 with a one-count upper limit.
    limit = n_h * 1.0 / (n_h1 * n_h2)
    rel_var = 1.0 + 1.0 / n_h1 + 1.0 / n_h2 + 1.0 / n_h
    return G2Estimate(value=0.0, sigma=limit * math.sqrt(rel_var),
                      counts=counts, upper_limit=True)


def heralded_g2(counts: CoincidenceCounts) -> G2Estimate:
    """Heralded autocorrelation N_H * N_H12 / (N_H1 * N_H2) from run totals.

    Equals 1 for uncorrelated channels, 2 for single-mode thermal light,
    and (ideally) 0 for a single-photon source.  Raises
    InsufficientStatistics when a denominator count is zero.
    """
    return _g2_from_totals(counts.N_H, counts.N_H1, counts.N_H2, counts.N_H12,
                           counts)


def segmented_g2(counts: CoincidenceCounts, block_size: int = 100) -> G2Estimate:
    """Heralded autocorrelation from per-block estimates, pooled.

    Segments are grouped into consecutive blocks of ``block_size``; each
    block yields its own estimate, and blocks combine by inverse-variance
    weighting.  Slow drifts of the rates bias the whole-run estimator
    (which mixes epochs in numerator and denominator differently);
    per-block estimation confines each epoch to its own ratio.  For
    stationary input the pooled value agrees with :func:`heralded_g2`
    within statistics.  Blocks with empty denominators are skipped.
    """
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    if not counts.segments:
        raise InsufficientStatistics("no segments to pool")

    values = []
    weights = []
    any_triples = False
    for start in range(0, len(counts.segments), block_size):
        block = counts.segments[start : start + block_size]
        n_h = sum(s.N_H for s in block)
        n_h1 = sum(s.N_H1 for s in block)
        n_h2 = sum(s.N_H2 for s in block)
        n_h12 = sum(s.N_H12 for s in block)
        if n_h <= 0 or n_h1 <= 0 or n_h2 <= 0:
            continue
        est = _g2_from_totals(n_h, n_h1, n_h2, n_h12, None)
        any_triples = any_triples or not est.upper_limit
        values.append(est.value)
        weights.append(1.0 / est.sigma ** 2)
    if not weights:
        raise InsufficientStatistics("no block had usable denominator counts")
    total_weight = sum(weights)
    pooled = sum(w * v for w, v in zip(weights, values)) / total_weight
    return G2Estimate(value=pooled, sigma=math.sqrt(1.0 / total_weight),
                      counts=counts, upper_limit=not any_triples)


def klyshko_efficiency(counts: CoincidenceCounts,
                       ) -> tuple[tuple[float, float], tuple[float, float]]:
    """Correlated-photon detector efficiency estimates for the signal arms.

    Returns ((eta_1, sigma_1), (eta_2, sigma_2)) with eta_i = N_Hi / N_H
    and binomial uncertainty sqrt(eta (1 - eta) / N_H).  The estimate is
    the whole path efficiency seen from the source: detector efficiency
    times attenuator and splitter shares.  Background-corrected inputs are
    expected; raw noise inflates N_H and biases the ratios down.
    """
    n_h = counts.N_H
    if n_h <= 0:
        raise InsufficientStatistics("klyshko efficiency needs N_H > 0")
    out = []
    for n_hi in (counts.N_H1, counts.N_H2):
        eta = n_hi / n_h
        out.append((eta, math.sqrt(eta * (1.0 - eta) / n_h)))
    return tuple(out)


def herald_efficiency(counts: CoincidenceCounts) -> tuple[float, float]:
    """Herald-arm efficiency estimate (N_H1 + N_H2) / (N_1 + N_2).

    The correlated-photon method looking the other way: of all signal
    detections, the fraction accompanied by a herald click estimates the
    herald path efficiency.  Binomial uncertainty on the signal-singles
    denominator.
    """
    denom = counts.N_1 + counts.N_2
    if denom <= 0:
        raise InsufficientStatistics("herald efficiency needs N_1 + N_2 > 0")
    eta = (counts.N_H1 + counts.N_H2) / denom
    return eta, math.sqrt(max(eta * (1.0 - eta), 0.0) / denom)


# ---------------------------------------------------------------------------
# Background subtraction
# ---------------------------------------------------------------------------

def _quiet_counts(c: CoincidenceCounts) -> dict[frozenset, float]:
    """Bins with no clicks on each channel subset, by inclusion-exclusion."""
    n = c.n_bins
    return {
        frozenset(): float(n),
        frozenset("H"): n - c.N_H,
        frozenset("1"): n - c.N_1,
        frozenset("2"): n - c.N_2,
        frozenset("H1"): n - c.N_H - c.N_1 + c.N_H1,
        frozenset("H2"): n - c.N_H - c.N_2 + c.N_H2,
        frozenset("12"): n - c.N_1 - c.N_2 + c.N_12,
        frozenset("H12"): (n - c.N_H - c.N_1 - c.N_2
                           + c.N_H1 + c.N_H2 + c.N_12 - c.N_H12),
    }


def background_subtract(signal: CoincidenceCounts, background: CoincidenceCounts,
                        ) -> tuple[CoincidenceCounts, tuple[str, ...]]:
    """Remove noise singles and their accidental coincidences from a run.

    ``background`` is a source-off run characterising the per-bin noise
    click probability of each channel.  Because noise is independent of
    the light and OR-ed into each channel, the probability that a channel
    subset S shows *no* clicks factorises:

        P_observed(quiet on S) = P_light(quiet on S) * prod_{c in S} (1 - p_c)

    so dividing the observed quiet fractions by the background quiet
    factors recovers the light-only joint law exactly, and
    inclusion-exclusion converts back to counts.  Returned counts are
    real-valued expectations (not integer observations) in a single
    segment; any negative result is clamped to 0 and reported in the
    returned flag tuple.  Uncertainties should still be taken from the raw
    counts downstream (quadrature combination).
    """
    if signal.bin_width != background.bin_width:
        raise ValueError("signal and background runs have different bin widths")
    n_bg = background.n_bins
    if n_bg <= 0:
        raise ValueError("background run is empty")
    n = signal.n_bins

    # Per-channel noise click probabilities from the background run.
    p_noise = {
        "H": background.N_H / n_bg,
        "1": background.N_1 / n_bg,
        "2": background.N_2 / n_bg,
    }
    for name, p in p_noise.items():
        if p >= 1.0:
            raise ValueError(f"background channel {name} clicks in every bin")

    quiet = _quiet_counts(signal)
    light_quiet = {
        subset: q / math.prod((1.0 - p_noise[c]) for c in subset)
        for subset, q in quiet.items()
    }

    def q(spec: str) -> float:
        return light_quiet[frozenset(spec)]

    corrected = {
        "N_H": n - q("H"),
        "N_1": n - q("1"),
        "N_2": n - q("2"),
        "N_H1": n - q("H") - q("1") + q("H1"),
        "N_H2": n - q("H") - q("2") + q("H2"),
        "N_12": n - q("1") - q("2") + q("12"),
        "N_H12": (n - q("H") - q("1") - q("2")
                  + q("H1") + q("H2") + q("12") - q("H12")),
    }

    clamped = tuple(sorted(k for k, v in corrected.items() if v < 0.0))
    corrected = {k: max(v, 0.0) for k, v in corrected.items()}
    seg = SegmentCounts(segment_index=0, n_bins=n, **corrected)
    return (CoincidenceCounts(bin_width=signal.bin_width, segments=(seg,)),
            clamped)


# ---------------------------------------------------------------------------
# Fitting and the power axis
# ---------------------------------------------------------------------------

def weighted_linear_fit(points: Sequence[tuple[float, float, float]]) -> FitResult:
    """Weighted least squares for y = slope * x + intercept.

    ``points`` is a sequence of (x, y, sigma) with all sigma > 0.  Closed
    normal-equation solution; exact on noiseless collinear input.  Raises
    InsufficientStatistics below 3 points and ValueError on a degenerate
    abscissa (all x effectively equal).
    """
    if len(points) < 3:
        raise InsufficientStatistics(
            f"need at least 3 points to fit a line with error estimates, "
            f"got {len(points)}")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    sigma = np.array([p[2] for p in points], dtype=float)
    if np.any(sigma <= 0.0):
        raise ValueError("all sigma must be > 0")

    w = 1.0 / sigma**2
    s = w.sum()
    sx = (w * x).sum()
    sy = (w * y).sum()
    sxx = (w * x * x).sum()
    sxy = (w * x * y).sum()
    delta = s * sxx - sx * sx
    if delta <= 1e-12 * s * sxx:
        raise ValueError("degenerate fit: abscissa values are all equal")

    slope = (s * sxy - sx * sy) / delta
    intercept = (sxx * sy - sx * sxy) / delta
    covariance = np.array([[s / delta, -sx / delta],
                           [-sx / delta, sxx / delta]])
    residual = y - slope * x - intercept
    chi2 = float((w * residual**2).sum())
    dof = len(points) - 2
    return FitResult(slope=float(slope), intercept=float(intercept),
                     covariance=covariance, reduced_chi2=chi2 / dof, dof=dof)


def corrected_rate(counts: CoincidenceCounts, optics: OpticsConfig,
                   total_time: Optional[float] = None) -> float:
    """Efficiency-corrected heralded signal rate (events/s), the power axis.

    Back-propagates the heralded detections through the detector
    efficiencies: x = (N_H1 / eta_1 + N_H2 / eta_2) / T.  Equivalently the
    photons-per-herald estimate times the herald rate.  This is the rate
    of heralded signal photons entering the splitter, so it scales with
    the attenuator setting being swept.
    """
    if optics.eta_1 <= 0.0 or optics.eta_2 <= 0.0:
        raise ValueError("corrected_rate needs eta_1 > 0 and eta_2 > 0")
    if total_time is None:
        total_time = counts.duration
    if total_time <= 0.0:
        raise ValueError("total_time must be > 0")
    return (counts.N_H1 / optics.eta_1 + counts.N_H2 / optics.eta_2) / total_time
