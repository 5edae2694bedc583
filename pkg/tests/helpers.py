"""Independent oracles used across the test suite.

Everything here deliberately avoids the package's own closed forms:
pair-number probabilities come from scipy, click probabilities from
explicit series summation, and first-passage laws from a literal
per-step Euler walk.  Agreement between these and the production code
is then a genuine cross-check, not a tautology.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from heraldsim.core import (ExperimentConfig, arm_efficiencies,
                            noise_probabilities)

_TAIL = 1e-16


def nb_pmf(n, mu: float, modes: int):
    """Pair-number pmf via scipy's negative binomial (scalar or array n)."""
    if mu == 0.0:
        return np.where(np.asarray(n) == 0, 1.0, 0.0)[()]
    m = mu / modes
    return stats.nbinom.pmf(n, modes, 1.0 / (1.0 + m))


def series_no_click(cfg: ExperimentConfig, channels: tuple[int, ...]) -> float:
    """P(no clicks on a channel subset) by direct series summation.

    Channels are indexed 0=herald, 1=detector 1, 2=detector 2.  Sums
    pmf(n) * P(all n photons miss every requested channel) ** n-wise until
    the pmf tail is negligible, then applies the independent noise
    factors.  Independent of the production generating-function form.
    """
    mu = cfg.source.pair_mean_per_bin
    modes = cfg.source.mode_count
    eff = arm_efficiencies(cfg)
    miss = 1.0
    if 0 in channels:
        miss *= 1.0 - eff[0]
    signal_detect = sum(eff[c] for c in channels if c in (1, 2))
    miss *= 1.0 - signal_detect

    total = 0.0
    cum = 0.0
    n = 0
    while cum < 1.0 - _TAIL and n < 10_000:
        p = nb_pmf(n, mu, modes)
        total += p * miss**n
        cum += p
        n += 1
    noise = noise_probabilities(cfg)
    for c in channels:
        total *= 1.0 - noise[c]
    return total


def series_pattern_probs(cfg: ExperimentConfig) -> np.ndarray:
    """All eight joint click-pattern probabilities via inclusion-exclusion.

    P(exactly the pattern T clicks) = sum over W ⊆ T of (−1)^|W| * P(no
    clicks on (complement of T) ∪ W), with the no-click terms from
    series_no_click.
    """
    quiet = {}
    for mask in range(8):
        channels = tuple(c for c in range(3) if mask & (1 << (2 - c)))
        quiet[mask] = series_no_click(cfg, channels)

    probs = np.zeros(8)
    for pattern in range(8):
        comp = (~pattern) & 0b111
        total = 0.0
        sub = pattern
        while True:
            sign = -1.0 if bin(sub).count("1") % 2 else 1.0
            total += sign * quiet[comp | sub]
            if sub == 0:
                break
            sub = (sub - 1) & pattern
        probs[pattern] = total
    return probs


def euler_exit_steps(rng: np.random.Generator, barrier: float, step_std,
                     n_steps: int, n_paths: int) -> np.ndarray:
    """Literal per-step random walk, first step index with |W| >= barrier.

    ``step_std`` may be a scalar or a per-path array.  Returns int64 step
    numbers (1-based), 0 where no exit happened.  The reference
    implementation for the accelerated kernel's law.
    """
    step_std = np.broadcast_to(np.asarray(step_std, dtype=float), (n_paths,))
    out = np.zeros(n_paths, dtype=np.int64)
    pos = np.zeros(n_paths)
    alive = np.ones(n_paths, dtype=bool)
    for step in range(1, n_steps + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        pos[idx] += rng.normal(0.0, step_std[idx], size=idx.size)
        crossed = idx[np.abs(pos[idx]) >= barrier]
        out[crossed] = step
        alive[crossed] = False
    return out
