"""Run drivers: segment scheduling, early stop, sweeps, and threading.

A run is a sequence of independent segments (at most ``segment_bins`` bins
each).  Each segment's randomness comes from its own named Philox streams,
so segments can be produced in any order, on any number of workers, and
the result is identical — ordering and thread count only affect wall
time, never bytes.

Two production routes per theory:

* click route — per-bin click streams (needed when stream files are part
  of the deliverable), counted segment by segment;
* census route — per-segment pattern counts drawn directly from the joint
  per-bin law, equal in distribution to counting the click route and far
  faster for count-only studies.

Early stop on a triple-count target is decided by scanning segments in
index order, so the set of retained segments is a pure function of the
configuration — speculative segments computed by idle workers are simply
discarded.
"""

from __future__ import annotations

import configparser
import warnings
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional

import numpy as np

from . import pcsft, qm
from .coincidence import CoincidenceCounts, SegmentCounts, accumulate, counts_from_cells
from .core import ConfigError, ExperimentConfig, Theory, with_attenuation
from .streams import ClickStreams

__all__ = [
    "SweepPlan",
    "SweepPoint",
    "segment_sizes",
    "simulate_run",
    "run_counts",
    "parse_sweep_plan",
    "load_sweep_plan",
    "run_sweep",
]

TARGET_TRIPLES_DEFAULT = 10_000


def segment_sizes(n_bins: int, segment_bins: int) -> list[int]:
    """Bin counts per segment: full segments plus a short remainder."""
    full, rest = divmod(n_bins, segment_bins)
    return [segment_bins] * full + ([rest] if rest else [])


def _segment_clicks(cfg: ExperimentConfig, segment_index: int, n_bins: int,
                    point_index: int) -> ClickStreams:
    if cfg.theory is Theory.QM:
        clicks = qm.segment_clicks(cfg, segment_index, n_bins=n_bins,
                                   point_index=point_index)
    else:
        clicks = pcsft.segment_clicks(cfg, segment_index, n_bins=n_bins,
                                      point_index=point_index)
    return ClickStreams.from_bools(*clicks, bin_width=cfg.detectors.bin_width)


def _segment_cells(cfg: ExperimentConfig, segment_index: int, n_bins: int,
                   point_index: int) -> np.ndarray:
    if cfg.theory is Theory.QM:
        return qm.segment_cells(cfg, segment_index, n_bins=n_bins,
                                point_index=point_index)
    return pcsft.segment_cells(cfg, segment_index, n_bins=n_bins,
                               point_index=point_index)


def _map_segments(fn: Callable[[int], object], n_segments: int,
                  threads: int) -> Iterable:
    """Yield fn(0), fn(1), ... in order, optionally computed on a pool.

    Submission uses a rolling window so an early-stopping consumer never
    waits for (or pays for) the whole schedule; speculative segments past
    a stop point are cancelled or discarded.
    """
    if threads <= 1 or n_segments <= 1:
        for index in range(n_segments):
            yield fn(index)
        return
    pool = ThreadPoolExecutor(max_workers=threads)
    pending: deque = deque()
    try:
        next_index = 0
        while next_index < n_segments and len(pending) < 2 * threads:
            pending.append(pool.submit(fn, next_index))
            next_index += 1
        while pending:
            result = pending.popleft().result()
            if next_index < n_segments:
                pending.append(pool.submit(fn, next_index))
                next_index += 1
            yield result
    finally:
        pool.shutdown(wait=False, cancel_futures=True)


def simulate_run(cfg: ExperimentConfig, point_index: int = 0,
                 threads: int = 1) -> ClickStreams:
    """Produce the full per-bin click record for a configured run."""
    sizes = segment_sizes(cfg.n_bins, cfg.segment_bins)

    def one(index: int) -> ClickStreams:
        return _segment_clicks(cfg, index, sizes[index], point_index)

    parts = list(_map_segments(one, len(sizes), threads))
    result = parts[0]
    for part in parts[1:]:
        result = result.concat(part)
    return result


def _pick_sampler(cfg: ExperimentConfig, sampler: str) -> str:
    if sampler not in ("auto", "cells", "clicks"):
        raise ValueError(f"unknown sampler {sampler!r}")
    if sampler != "auto":
        return sampler
    if (cfg.theory is Theory.PCSFT and cfg.pcsft is not None
            and cfg.pcsft.envelope_modes is not None):
        return "clicks"  # census route has no per-bin envelope equivalent
    return "cells"


def run_counts(cfg: ExperimentConfig, point_index: int = 0,
               target_triples: Optional[int] = None, threads: int = 1,
               sampler: str = "auto") -> CoincidenceCounts:
    """Accumulate coincidence counts for a run, stopping early on a target.

    With ``target_triples`` set, segments are retained in index order until
    the cumulative N_H12 reaches the target (the full cfg.n_bins budget
    otherwise); the stop decision never splits a segment, so the result is
    independent of batching and thread count.
    """
    mode = _pick_sampler(cfg, sampler)
    sizes = segment_sizes(cfg.n_bins, cfg.segment_bins)

    def one(index: int) -> SegmentCounts:
        if mode == "cells":
            cells = _segment_cells(cfg, index, sizes[index], point_index)
            return counts_from_cells(cells, segment_index=index)
        streams = _segment_clicks(cfg, index, sizes[index], point_index)
        return accumulate(streams, first_segment_index=index).segments[0]

    kept: list[SegmentCounts] = []
    triples = 0
    for seg in _map_segments(one, len(sizes), threads):
        kept.append(seg)
        triples += seg.N_H12
        if target_triples is not None and triples >= target_triples:
            break
    return CoincidenceCounts(bin_width=cfg.detectors.bin_width,
                             segments=tuple(kept))


# ---------------------------------------------------------------------------
# Attenuation sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPlan:
    """Attenuator settings and per-point stopping rules for a power sweep."""

    attenuations: tuple[float, ...]
    target_triples: int = TARGET_TRIPLES_DEFAULT
    max_bins: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.attenuations:
            raise ConfigError("sweep needs at least one attenuation value")
        for a in self.attenuations:
            if not 0.0 < a <= 1.0:
                raise ConfigError(
                    f"sweep attenuation {a} outside (0, 1]")
        if self.target_triples < 1:
            raise ConfigError(
                f"sweep target_triples must be >= 1, got {self.target_triples}")
        if self.max_bins is not None and self.max_bins < 1:
            raise ConfigError(
                f"sweep max_bins must be >= 1, got {self.max_bins}")
        if list(self.attenuations) != sorted(self.attenuations, reverse=True):
            warnings.warn("sweep attenuations are not strictly decreasing; "
                          "points will be plotted in the order given",
                          stacklevel=2)


@dataclass(frozen=True)
class SweepPoint:
    """One sweep point: the attenuation applied and the counts collected."""

    attenuation: float
    point_index: int
    counts: CoincidenceCounts


def parse_sweep_plan(text: str, origin: str = "<string>") -> SweepPlan:
    """Parse a [sweep] INI section into a plan."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from exc
    if not parser.has_section("sweep"):
        raise ConfigError(f"{origin}: missing [sweep] section")
    known = {"attenuations", "target_triples", "max_bins"}
    unknown = set(parser["sweep"]) - known
    if unknown:
        raise ConfigError(
            f"{origin}: unknown sweep key(s): {', '.join(sorted(unknown))}")
    raw = parser["sweep"].get("attenuations", "")
    try:
        attenuations = tuple(float(tok) for tok in raw.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"{origin}: bad attenuations list: {raw!r}") from exc
    try:
        target = parser["sweep"].getint("target_triples",
                                        fallback=TARGET_TRIPLES_DEFAULT)
        max_bins = parser["sweep"].getint("max_bins", fallback=None)
    except ValueError as exc:
        raise ConfigError(f"{origin}: bad integer in [sweep]: {exc}") from exc
    return SweepPlan(attenuations=attenuations, target_triples=target,
                     max_bins=max_bins)


def load_sweep_plan(path) -> SweepPlan:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_sweep_plan(fh.read(), origin=str(path))


def run_sweep(cfg: ExperimentConfig, plan: SweepPlan, threads: int = 1,
              sampler: str = "auto") -> list[SweepPoint]:
    """Collect counts at every attenuation of the plan.

    Each point gets its own stream namespace (point_index = position + 1),
    so sweeping never replays the randomness of a plain run or of another
    point, whatever order the points execute in.
    """
    points = []
    for i, attenuation in enumerate(plan.attenuations):
        point_cfg = with_attenuation(cfg, attenuation)
        if plan.max_bins is not None and plan.max_bins != point_cfg.n_bins:
            point_cfg = replace(point_cfg, n_bins=plan.max_bins,
                                segment_bins=min(point_cfg.segment_bins,
                                                 plan.max_bins))
        counts = run_counts(point_cfg, point_index=i + 1,
                            target_triples=plan.target_triples,
                            threads=threads, sampler=sampler)
        points.append(SweepPoint(attenuation=attenuation, point_index=i + 1,
                                 counts=counts))
    return points
