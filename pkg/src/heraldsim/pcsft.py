"""Threshold-field detection model: clicks as Wiener first passages.

Each detector integrates a fluctuating classical field; the integrated
amplitude performs a driftless Wiener walk with variance rate equal to the
optical power reaching that detector (``incident_power`` scaled by the
arm's transmission product).  A bin clicks when the walk, started at 0 at
the beginning of the bin's pulse window, leaves the band
``(-sqrt(threshold_energy), +sqrt(threshold_energy))`` within the window
``pulse_duration``.  The walk is monitored on the Euler grid
``diffusion_step``; "clicks" are defined on that grid.

Closed forms
------------
:func:`crossing_probability` gives the continuum click probability per bin,
:func:`mean_first_passage` the unconstrained mean exit time
``threshold_energy / power``.

Sampling
--------
:func:`simulate_first_passage` is the literal single-path Euler reference.
:func:`discrete_exit_steps` is the production kernel: identical in law to
stepping every Euler point, but it strides over quiet stretches in adaptive
blocks (one Gaussian draw per block) and reconstructs a block's interior
exactly — via a Gaussian bridge conditioned on the block increment — only
when the interior could plausibly touch a barrier (continuum bridge touch
bound above 1e-12, or the endpoint lands outside the band).  Single-step
blocks are always exact, so near-barrier motion is never approximated.
Tests compare the kernel against the literal reference by KS distance.

Splitter coupling
-----------------
With ``coupling`` = kappa > 0, the two signal detectors share the pulse
energy budget: after the per-channel exits are drawn, matched pairs of bins
are converted between the patterns {(1,1),(0,0)} and {(1,0),(0,1)} until
the expected same-bin coincidence probability equals

    q = kappa * 2 (pulse_duration / bin_width)^2 (f1 + f2) * f1 * f2

(clipped to the feasible range), where f1, f2 are the field click
probabilities.  Conversions preserve the per-channel click *counts* of
every realisation exactly, so all singles statistics remain those of the
uncoupled model; only the coincidence rate moves.  Dark and background
clicks are OR-ed in afterwards and take no part in the budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ExperimentConfig,
    Role,
    arm_efficiencies,
    noise_masks,
    noise_probabilities,
    rng_stream,
    stream_id,
)

__all__ = [
    "PassageResult",
    "mean_first_passage",
    "crossing_probability",
    "simulate_first_passage",
    "discrete_exit_steps",
    "first_passage_times",
    "field_click_probabilities",
    "coupled_g2_target",
    "coincidence_probability",
    "pattern_probabilities",
    "segment_clicks",
    "segment_cells",
    "bound_energy",
    "bound_counts",
]

# Block std as a fraction of the distance to the nearest barrier.  At 1/6,
# a block endpoint approaches a barrier closely enough to need interior
# reconstruction (touch bound 1e-12) only ~1e-4 of the time.
_BLOCK_FRACTION = 1.0 / 6.0
# Reconstruct a block's interior when the continuum bridge could have
# touched a barrier with more than this probability.
_TOUCH_BOUND = 1e-12

_SQRT2 = math.sqrt(2.0)


def mean_first_passage(threshold_energy: float, power: float) -> float:
    """Mean unconstrained exit time of the band: threshold_energy / power."""
    if threshold_energy <= 0.0 or power <= 0.0:
        raise ValueError("threshold_energy and power must be > 0")
    return threshold_energy / power


def _survival(theta: float) -> float:
    """P(no exit) for unit barrier and unit rate after dimensionless time theta.

    theta = power * t / threshold_energy.  Two complementary expansions:
    the spectral series converges fast for large theta, the reflection
    series for small theta; they agree to ~1e-15 near the switch point.
    """
    if theta <= 0.0:
        return 1.0
    if theta >= 0.25:
        # Spectral: (4/pi) sum_j (-1)^j / (2j+1) exp(-(2j+1)^2 pi^2 theta / 8)
        total = 0.0
        for j in range(64):
            n = 2 * j + 1
            term = ((-1.0) ** j / n) * math.exp(-(n * n) * math.pi ** 2 * theta / 8.0)
            total += term
            if abs(term) < 1e-18:
                break
        return max(0.0, min(1.0, 4.0 / math.pi * total))
    # Reflection: sum_k (-1)^k [Phi((2k+1)c) - Phi((2k-1)c)], c = 1/sqrt(theta)
    c = 1.0 / math.sqrt(theta)

    def phi(x: float) -> float:
        return 0.5 * (1.0 + math.erf(x / _SQRT2))

    total = 0.0
    for k in range(-8, 9):
        total += (-1.0) ** k * (phi((2 * k + 1) * c) - phi((2 * k - 1) * c))
    return max(0.0, min(1.0, total))


def crossing_probability(threshold_energy: float, power: float,
                         horizon: float) -> float:
    """P(the walk exits the band within ``horizon``), continuum limit.

    This is the per-bin click probability of a detector receiving ``power``
    with pulse window ``horizon``.
    """
    if threshold_energy <= 0.0:
        raise ValueError("threshold_energy must be > 0")
    if horizon < 0.0:
        raise ValueError("horizon must be >= 0")
    if power <= 0.0:
        return 0.0
    return 1.0 - _survival(power * horizon / threshold_energy)


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PassageResult:
    """Outcome of one first-passage trial.

    ``hit_time`` is the time of the first Euler step at or beyond a
    barrier, in (0, t_max]; it is NaN when ``hit`` is false.
    """

    hit: bool
    hit_time: float


def simulate_first_passage(threshold_energy: float, power: float, dt: float,
                           t_max: float, rng: np.random.Generator) -> PassageResult:
    """Literal Euler walk of one path; the reference implementation.

    The amplitude starts at 0 and gains N(0, power*dt) per step; the trial
    hits when the amplitude energy reaches threshold_energy, i.e. when
    |amplitude| >= sqrt(threshold_energy), checked at every step up to
    ``t_max``.  Zero power never hits.
    """
    if threshold_energy <= 0.0:
        raise ValueError("threshold_energy must be > 0")
    if power < 0.0:
        raise ValueError("power must be >= 0")
    if not 0.0 < dt <= t_max:
        raise ValueError("need 0 < dt <= t_max")
    if power == 0.0:
        return PassageResult(hit=False, hit_time=math.nan)
    barrier = math.sqrt(threshold_energy)
    step_std = math.sqrt(power * dt)
    max_steps = int(round(t_max / dt))
    position = 0.0
    done = 0
    while done < max_steps:
        chunk = min(1 << 16, max_steps - done)
        path = position + np.cumsum(rng.standard_normal(chunk) * step_std)
        hits = np.flatnonzero(np.abs(path) >= barrier)
        if hits.size:
            return PassageResult(hit=True, hit_time=(done + int(hits[0]) + 1) * dt)
        position = float(path[-1])
        done += chunk
    return PassageResult(hit=False, hit_time=math.nan)


def discrete_exit_steps(rng: np.random.Generator, barrier: float,
                        step_std, n_steps: int, n_paths: int | None = None,
                        ) -> np.ndarray:
    """Exit steps of many independent Euler walks from (-barrier, +barrier).

    ``step_std`` is a scalar or per-path array of per-step standard
    deviations.  Returns int64 exit step indices (1-based), 0 where a path
    never reaches a barrier within ``n_steps`` steps.  The law is that of
    checking every Euler point; see the module docstring for how blocks of
    quiet steps are collapsed without changing it.
    """
    step_std = np.asarray(step_std, dtype=float)
    if step_std.ndim == 0:
        if n_paths is None:
            raise ValueError("n_paths is required with scalar step_std")
        step_std = np.full(n_paths, float(step_std))
    elif n_paths is not None and step_std.shape != (n_paths,):
        raise ValueError("step_std shape does not match n_paths")
    n = step_std.size
    if np.any(step_std <= 0.0):
        raise ValueError("step_std must be positive")
    if barrier <= 0.0:
        raise ValueError("barrier must be > 0")

    position = np.zeros(n)
    steps_done = np.zeros(n, dtype=np.int64)
    exit_step = np.zeros(n, dtype=np.int64)
    active = np.arange(n)

    while active.size:
        pos = position[active]
        std = step_std[active]
        done = steps_done[active]
        remaining = n_steps - done

        dist_up = barrier - pos
        dist_dn = barrier + pos
        dist = np.minimum(dist_up, dist_dn)
        block = np.floor((_BLOCK_FRACTION * dist / std) ** 2).astype(np.int64)
        np.clip(block, 1, remaining, out=block)

        block_var = block * std * std
        jump = rng.standard_normal(active.size) * np.sqrt(block_var)
        new_pos = pos + jump
        endpoint_out = np.abs(new_pos) >= barrier

        multi = block > 1
        # Continuum-bridge touch bound for each barrier; endpoints already
        # outside the band force a reconstruction via the sign flip.
        with np.errstate(over="ignore"):
            touch_up = np.exp(-2.0 * dist_up * (barrier - new_pos) / block_var)
            touch_dn = np.exp(-2.0 * dist_dn * (barrier + new_pos) / block_var)
        needs_fill = multi & ((touch_up > _TOUCH_BOUND) | (touch_dn > _TOUCH_BOUND))

        # Single steps are exact as drawn.
        single = ~multi
        single_hit = single & endpoint_out
        exit_step[active[single_hit]] = done[single_hit] + 1

        # Quiet multi-step blocks advance wholesale.
        quiet = multi & ~needs_fill
        survived = single & ~endpoint_out
        adv = quiet | survived
        adv_idx = active[adv]
        position[adv_idx] = new_pos[adv]
        steps_done[adv_idx] = done[adv] + block[adv]

        # Suspicious blocks: reconstruct the interior exactly (Gaussian
        # bridge over the block's iid Euler increments, conditioned on the
        # block sum already drawn).
        for i in np.flatnonzero(needs_fill):
            k = int(block[i])
            incr = rng.standard_normal(k) * std[i]
            partial = np.cumsum(incr)
            bridge = partial + (np.arange(1, k + 1) / k) * (jump[i] - partial[-1])
            walk = pos[i] + bridge
            hits = np.flatnonzero(np.abs(walk) >= barrier)
            gidx = active[i]
            if hits.size:
                exit_step[gidx] = done[i] + int(hits[0]) + 1
            else:
                position[gidx] = new_pos[i]
                steps_done[gidx] = done[i] + k

        keep = (exit_step[active] == 0) & (steps_done[active] < n_steps)
        active = active[keep]

    return exit_step


def first_passage_times(rng: np.random.Generator, threshold_energy: float,
                        power: float, dt: float, n_paths: int,
                        horizon: float) -> np.ndarray:
    """Exit times of ``n_paths`` walks; ``inf`` where no exit by ``horizon``."""
    if power == 0.0:
        return np.full(n_paths, np.inf)
    n_steps = int(round(horizon / dt))
    steps = discrete_exit_steps(rng, math.sqrt(threshold_energy),
                                math.sqrt(power * dt), n_steps, n_paths=n_paths)
    times = steps * dt
    times[steps == 0] = np.inf
    return times


# ---------------------------------------------------------------------------
# Per-bin click law
# ---------------------------------------------------------------------------

def field_click_probabilities(cfg: ExperimentConfig) -> tuple[float, float, float]:
    """Continuum field click probability per bin for (herald, det 1, det 2).

    Noise is not included; arm transmissions scale the power reaching each
    detector.
    """
    pc = cfg.pcsft
    if pc is None:
        raise ValueError("configuration has no pcsft block")
    shares = arm_efficiencies(cfg)
    return tuple(
        crossing_probability(pc.threshold_energy, pc.incident_power * a,
                             pc.pulse_duration)
        for a in shares
    )


def coupled_g2_target(cfg: ExperimentConfig) -> float:
    """Coincidence-to-singles target kappa * 2 (delta/bin)^2 (f1 + f2).

    The value the heralded autocorrelation converges to under the splitter
    energy-budget coupling (before noise); 0 when coupling is off.
    """
    pc = cfg.pcsft
    if pc is None:
        raise ValueError("configuration has no pcsft block")
    _, f1, f2 = field_click_probabilities(cfg)
    window_ratio = pc.pulse_duration / cfg.detectors.bin_width
    return pc.coupling * 2.0 * window_ratio ** 2 * (f1 + f2)


def coincidence_probability(cfg: ExperimentConfig) -> float:
    """Per-bin probability that both signal detectors field-click.

    Independent product f1*f2 when coupling is off; otherwise the coupled
    target g2 * f1 * f2, clipped to the range any joint law with the fixed
    marginals can realise.
    """
    pc = cfg.pcsft
    _, f1, f2 = field_click_probabilities(cfg)
    if pc.coupling == 0.0:
        return f1 * f2
    q = coupled_g2_target(cfg) * f1 * f2
    lo = max(0.0, f1 + f2 - 1.0)
    hi = min(f1, f2)
    return min(max(q, lo), hi)


def pattern_probabilities(cfg: ExperimentConfig) -> np.ndarray:
    """Expected per-bin law over the 8 joint click patterns, noise included.

    Indexed (h << 2) | (s1 << 1) | s2, matching qm.joint_pattern_probabilities.
    The envelope, if configured, is not reflected here (sampling only).
    """
    f_h, f1, f2 = field_click_probabilities(cfg)
    q = coincidence_probability(cfg)
    joint12 = {
        (1, 1): q,
        (1, 0): f1 - q,
        (0, 1): f2 - q,
        (0, 0): 1.0 - f1 - f2 + q,
    }
    p_noise = noise_probabilities(cfg)
    probs = np.zeros(8)
    for pattern in range(8):
        h_bit, s1_bit, s2_bit = (pattern >> 2) & 1, (pattern >> 1) & 1, pattern & 1
        # Noise ORs into each channel independently.
        val = 0.0
        for fh_click in (0, 1):
            for c1_click in (0, 1):
                for c2_click in (0, 1):
                    base = (f_h if fh_click else 1.0 - f_h) * joint12[(c1_click, c2_click)]
                    pr = base
                    for bit, click, pn in ((h_bit, fh_click, p_noise[0]),
                                           (s1_bit, c1_click, p_noise[1]),
                                           (s2_bit, c2_click, p_noise[2])):
                        if click and not bit:
                            pr = 0.0
                        elif click and bit:
                            pass  # already clicking; noise irrelevant
                        elif not click and bit:
                            pr *= pn
                        else:
                            pr *= 1.0 - pn
                    val += pr
        probs[pattern] = val
    return probs


# ---------------------------------------------------------------------------
# Segment samplers
# ---------------------------------------------------------------------------

def _window_steps(cfg: ExperimentConfig) -> int:
    pc = cfg.pcsft
    return int(round(pc.pulse_duration / pc.diffusion_step))


def _conversion_count(rng: np.random.Generator, n_11: int, n_00: int,
                      n_10: int, n_01: int, f1: float, f2: float,
                      q: float) -> int:
    """Number of pattern-pair conversions for one segment; sign = direction.

    Positive: convert that many {(1,1),(0,0)} pairs into {(1,0),(0,1)}
    (fewer coincidences); negative: the reverse.  Binomial so coincidence
    counts keep natural shot-to-shot spread.
    """
    excess = f1 * f2 - q  # positive when coincidences must be removed
    if excess > 0.0:
        rate = min(1.0, excess / (f1 * f2))
        return min(int(rng.binomial(n_11, rate)), n_00)
    if excess < 0.0:
        f10 = f1 * (1.0 - f2)
        f01 = (1.0 - f1) * f2
        denom = min(f10, f01)
        if denom <= 0.0:
            return 0
        rate = min(1.0, -excess / denom)
        return -int(rng.binomial(min(n_10, n_01), rate))
    return 0


def segment_clicks(cfg: ExperimentConfig, segment_index: int,
                   n_bins: int | None = None, point_index: int = 0,
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-bin click sampler for one segment under the field model.

    Each channel's bins are independent first-passage trials on the Euler
    grid; the splitter coupling then rewrites matched bin pairs (preserving
    every per-channel count), and noise is OR-ed in last.  Streams follow
    the same (point, segment, role) discipline as the photon model.
    """
    if n_bins is None:
        n_bins = cfg.segment_bins
    pc = cfg.pcsft
    if pc is None:
        raise ValueError("configuration has no pcsft block")
    barrier = math.sqrt(pc.threshold_energy)
    n_steps = _window_steps(cfg)
    shares = arm_efficiencies(cfg)

    envelope = None
    if pc.envelope_modes is not None:
        rng_env = rng_stream(cfg.seed, stream_id(segment_index, Role.SOURCE, point_index))
        k = pc.envelope_modes
        envelope = rng_env.gamma(shape=k, scale=1.0 / k, size=n_bins)

    clicks: list[np.ndarray] = []
    for share, role in zip(shares, (Role.HERALD, Role.SIGNAL_1, Role.SIGNAL_2)):
        power = pc.incident_power * share
        if power == 0.0:
            clicks.append(np.zeros(n_bins, dtype=bool))
            continue
        rng = rng_stream(cfg.seed, stream_id(segment_index, role, point_index))
        if envelope is None:
            std = math.sqrt(power * pc.diffusion_step)
            exits = discrete_exit_steps(rng, barrier, std, n_steps, n_paths=n_bins)
        else:
            std = np.sqrt(power * envelope * pc.diffusion_step)
            exits = discrete_exit_steps(rng, barrier, std, n_steps)
        clicks.append(exits > 0)

    click_h, click_1, click_2 = clicks

    if pc.coupling > 0.0:
        _, f1, f2 = field_click_probabilities(cfg)
        if f1 > 0.0 and f2 > 0.0:
            q = coincidence_probability(cfg)
            rng_c = rng_stream(cfg.seed,
                               stream_id(segment_index, Role.COUPLING, point_index))
            both = np.flatnonzero(click_1 & click_2)
            neither = np.flatnonzero(~click_1 & ~click_2)
            only_1 = np.flatnonzero(click_1 & ~click_2)
            only_2 = np.flatnonzero(~click_1 & click_2)
            moves = _conversion_count(rng_c, both.size, neither.size,
                                      only_1.size, only_2.size, f1, f2, q)
            if moves > 0:
                src = rng_c.choice(both, size=moves, replace=False)
                dst = rng_c.choice(neither, size=moves, replace=False)
                click_2[src] = False   # (1,1) -> (1,0)
                click_2[dst] = True    # (0,0) -> (0,1)
            elif moves < 0:
                take = -moves
                src = rng_c.choice(only_1, size=take, replace=False)
                dst = rng_c.choice(only_2, size=take, replace=False)
                click_2[src] = True    # (1,0) -> (1,1)
                click_2[dst] = False   # (0,1) -> (0,0)

    for arr, noise in zip((click_h, click_1, click_2),
                          noise_masks(cfg, n_bins, segment_index, point_index)):
        if noise is not None:
            arr |= noise

    return click_h, click_1, click_2


def _binomial_split(rng: np.random.Generator, count: int, p: float) -> int:
    if count == 0 or p == 0.0:
        return 0
    return int(rng.binomial(count, p))


def segment_cells(cfg: ExperimentConfig, segment_index: int,
                  n_bins: int | None = None, point_index: int = 0) -> np.ndarray:
    """Count-level sampler: bins per joint click pattern for one segment.

    Identical in law to counting :func:`segment_clicks` output, but the
    per-bin first passages are replaced by their exact click-probability
    census (multinomial), making the cost independent of the window length.
    The coupling conversion and noise OR act on the census with the same
    (hypergeometric / binomial) laws the per-bin route induces.  Not
    available with an intensity envelope, whose per-bin powers break the
    common-census shortcut.
    """
    if n_bins is None:
        n_bins = cfg.segment_bins
    pc = cfg.pcsft
    if pc is None:
        raise ValueError("configuration has no pcsft block")
    if pc.envelope_modes is not None:
        raise ValueError("count-level sampling does not support envelope_modes")

    f_h, f1, f2 = field_click_probabilities(cfg)
    base = np.array([
        (1 - f_h) * (1 - f1) * (1 - f2),
        (1 - f_h) * (1 - f1) * f2,
        (1 - f_h) * f1 * (1 - f2),
        (1 - f_h) * f1 * f2,
        f_h * (1 - f1) * (1 - f2),
        f_h * (1 - f1) * f2,
        f_h * f1 * (1 - f2),
        f_h * f1 * f2,
    ])
    rng = rng_stream(cfg.seed, stream_id(segment_index, Role.SOURCE, point_index))
    cells = rng.multinomial(n_bins, base).astype(np.int64)

    if pc.coupling > 0.0 and f1 > 0.0 and f2 > 0.0:
        q = coincidence_probability(cfg)
        rng_c = rng_stream(cfg.seed,
                           stream_id(segment_index, Role.COUPLING, point_index))
        n_11 = cells[3] + cells[7]
        n_00 = cells[0] + cells[4]
        n_10 = cells[2] + cells[6]
        n_01 = cells[1] + cells[5]
        moves = _conversion_count(rng_c, n_11, n_00, n_10, n_01, f1, f2, q)
        if moves > 0:
            # Converted (1,1) bins and their (0,0) partners carry their
            # herald labels with them.
            heralded_src = rng_c.hypergeometric(cells[7], cells[3], moves) if n_11 else 0
            heralded_dst = rng_c.hypergeometric(cells[4], cells[0], moves) if n_00 else 0
            cells[7] -= heralded_src
            cells[3] -= moves - heralded_src
            cells[6] += heralded_src          # (1,1) -> (1,0)
            cells[2] += moves - heralded_src
            cells[4] -= heralded_dst
            cells[0] -= moves - heralded_dst
            cells[5] += heralded_dst          # (0,0) -> (0,1)
            cells[1] += moves - heralded_dst
        elif moves < 0:
            take = -moves
            heralded_src = rng_c.hypergeometric(cells[6], cells[2], take) if n_10 else 0
            heralded_dst = rng_c.hypergeometric(cells[5], cells[1], take) if n_01 else 0
            cells[6] -= heralded_src
            cells[2] -= take - heralded_src
            cells[7] += heralded_src          # (1,0) -> (1,1)
            cells[3] += take - heralded_src
            cells[5] -= heralded_dst
            cells[1] -= take - heralded_dst
            cells[4] += heralded_dst          # (0,1) -> (0,0)
            cells[0] += take - heralded_dst

    # Noise ORs: bins with channel bit 0 move to bit 1 independently.
    p_noise = noise_probabilities(cfg)
    roles = (Role.NOISE_H, Role.NOISE_1, Role.NOISE_2)
    bits = (4, 2, 1)
    for p, role, bit in zip(p_noise, roles, bits):
        if p == 0.0:
            continue
        rng_n = rng_stream(cfg.seed, stream_id(segment_index, role, point_index))
        for cell in range(8):
            if cell & bit:
                continue
            moved = _binomial_split(rng_n, int(cells[cell]), p)
            cells[cell] -= moved
            cells[cell | bit] += moved

    return cells


# ---------------------------------------------------------------------------
# Consistency bounds
# ---------------------------------------------------------------------------

def bound_energy(pulse_duration: float, bin_width: float,
                 pulse_energy: float, threshold_energy: float) -> float:
    """Autocorrelation ceiling (2 delta / bin) * (pulse energy / threshold).

    Any threshold-crossing model with this much energy headroom per pulse
    must keep the heralded autocorrelation below the returned value.
    Exact arithmetic; in particular the value is exactly 2 when
    pulse_duration == bin_width and pulse_energy == threshold_energy.
    """
    if pulse_duration <= 0.0 or bin_width <= 0.0:
        raise ValueError("durations must be > 0")
    if pulse_energy < 0.0 or threshold_energy <= 0.0:
        raise ValueError("energies must be positive (threshold strictly)")
    return 2.0 * (pulse_duration / bin_width) * (pulse_energy / threshold_energy)


def bound_counts(pulse_duration: float, bin_width: float,
                 counts_1: float, counts_2: float, duration: float) -> float:
    """Autocorrelation ceiling (2 delta^2 / bin) * (N1 + N2) / T from singles.

    Grows linearly with the observed singles rate — the lever that makes
    the threshold-field model power-dependent where the photon model is
    not.  Exact arithmetic.
    """
    if pulse_duration <= 0.0 or bin_width <= 0.0:
        raise ValueError("durations must be > 0")
    if duration <= 0.0:
        raise ValueError("duration must be > 0")
    if counts_1 < 0 or counts_2 < 0:
        raise ValueError("counts must be >= 0")
    return 2.0 * pulse_duration * (pulse_duration / bin_width) * (counts_1 + counts_2) / duration
