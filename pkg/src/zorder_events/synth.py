"""Annotated synthetic kinematic recordings (longitudinal, lateral acceleration).

Maneuver shapes are raised-cosine composites with edges one sample wide, so the
relevant run of a maneuver starts and ends within one sample period of its
annotated support:

* braking: a 2.5 s hat on the longitudinal channel, ``-magnitude`` at its centre
  and ``-0.8 * magnitude`` at its shoulders;
* lane change: on the lateral channel, a 1.25 s negative lobe followed by a
  1.25 s positive lobe, each peaking at ``magnitude`` with ``0.75 * magnitude``
  shoulders.

Background driving is low-pass filtered noise bounded by ``noise`` m/s².
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence, TextIO

import numpy as np
from scipy.signal import lfilter

from .morton import QuantizationConfig
from .store import Store, ingest_arrays

BRAKING = "braking"
LANE_CHANGE = "lane_change"
KINDS = (BRAKING, LANE_CHANGE)

MANEUVER_MS = {BRAKING: 2500, LANE_CHANGE: 2500}
EDGE_MS = 10
NOISE_CUTOFF = 0.05  # one-pole smoothing coefficient per sample

# Zero acceleration maps to lattice coordinate 0xAAAA (binary 1010...), which
# sits as far from every coarse Z-order split as any point can.
DEFAULT_BOUNDS = (-16.0, 8.0)
DEFAULT_BITS = 16


def default_config(dims: int = 2, bits: int = DEFAULT_BITS) -> QuantizationConfig:
    return QuantizationConfig.uniform(dims, DEFAULT_BOUNDS[0], DEFAULT_BOUNDS[1], bits)


class Maneuver(NamedTuple):
    kind: str
    t_insert: int  # ms, absolute
    magnitude: float  # m/s²


class Annotation(NamedTuple):
    kind: str
    t_start: int
    t_end: int


@dataclass(frozen=True)
class ScenarioSpec:
    duration_s: float
    sample_rate_hz: int = 100
    rng_seed: int = 0
    maneuvers: tuple[Maneuver, ...] = ()
    noise: float = 0.2
    start_ms: int = 0
    edge_ms: int = EDGE_MS

    def __post_init__(self):
        object.__setattr__(self, "maneuvers", tuple(Maneuver(*m) for m in self.maneuvers))
        if self.duration_s < 0:
            raise ValueError(f"duration_s must be >= 0, got {self.duration_s}")
        if self.sample_rate_hz < 1 or 1000 % self.sample_rate_hz:
            raise ValueError(
                f"sample_rate_hz must divide 1000 (integer ms period), got {self.sample_rate_hz}"
            )
        if self.noise < 0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")
        end = self.start_ms + self.n_samples * self.period_ms
        spans = []
        for m in self.maneuvers:
            if m.kind not in KINDS:
                raise ValueError(f"unknown maneuver kind {m.kind!r}")
            if m.magnitude <= 0:
                raise ValueError(f"maneuver magnitude must be > 0, got {m.magnitude}")
            if (m.t_insert - self.start_ms) % self.period_ms:
                raise ValueError(f"maneuver at {m.t_insert} ms is not on the sample grid")
            stop = m.t_insert + MANEUVER_MS[m.kind]
            if m.t_insert < self.start_ms or stop > end:
                raise ValueError(f"maneuver [{m.t_insert}, {stop}] ms outside the recording")
            spans.append((m.t_insert, stop))
        spans.sort()
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if b0 < a1:
                raise ValueError(f"overlapping maneuvers [{a0}, {a1}] and [{b0}, {b1}] ms")

    @property
    def period_ms(self) -> int:
        return 1000 // self.sample_rate_hz

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))


def _edges(tau: np.ndarray, width: float, edge: float) -> np.ndarray:
    """Raised-cosine on/off envelope over ``[0, width]``."""
    env = np.ones_like(tau)
    rise = tau < edge
    env[rise] = 0.5 - 0.5 * np.cos(np.pi * tau[rise] / edge)
    fall = tau > width - edge
    env[fall] = 0.5 - 0.5 * np.cos(np.pi * (width - tau[fall]) / edge)
    return env


def braking_profile(tau: np.ndarray, magnitude: float, edge: float = EDGE_MS) -> np.ndarray:
    """Longitudinal acceleration ``tau`` ms into a braking maneuver."""
    w = MANEUVER_MS[BRAKING]
    hat = 0.8 + 0.2 * np.sin(np.pi * tau / w) ** 2
    return -magnitude * _edges(tau, w, edge) * hat


def lane_change_profile(tau: np.ndarray, magnitude: float, edge: float = EDGE_MS) -> np.ndarray:
    """Lateral acceleration ``tau`` ms into a lane change: negative lobe, then positive."""
    half = MANEUVER_MS[LANE_CHANGE] / 2
    first = tau < half
    local = np.where(first, tau, tau - half)
    lobe = _edges(local, half, edge) * (0.75 + 0.25 * np.sin(np.pi * local / half) ** 2)
    return magnitude * lobe * np.where(first, -1.0, 1.0)


def background_noise(n: int, amplitude: float, rng: np.random.Generator) -> np.ndarray:
    if n == 0 or amplitude == 0:
        return np.zeros((n, 2))
    white = rng.standard_normal((n, 2))
    smooth = lfilter([NOISE_CUTOFF], [1.0, NOISE_CUTOFF - 1.0], white, axis=0)
    scale = 3.0 * smooth.std(axis=0)
    return amplitude * np.clip(smooth / scale, -1.0, 1.0)


def generate_arrays(spec: ScenarioSpec) -> tuple[np.ndarray, np.ndarray, list[Annotation]]:
    """Timestamps ``(N,)``, accelerations ``(N, 2)`` and the ground-truth annotations."""
    n = spec.n_samples
    rng = np.random.default_rng(spec.rng_seed)
    t = spec.start_ms + np.arange(n, dtype=np.int64) * spec.period_ms
    v = background_noise(n, spec.noise, rng)
    annotations = []
    for m in sorted(spec.maneuvers, key=lambda m: m.t_insert):
        width = MANEUVER_MS[m.kind]
        i0 = (m.t_insert - spec.start_ms) // spec.period_ms
        i1 = i0 + width // spec.period_ms + 1
        tau = (t[i0:i1] - m.t_insert).astype(np.float64)
        if m.kind == BRAKING:
            v[i0:i1, 0] += braking_profile(tau, m.magnitude, spec.edge_ms)
        else:
            v[i0:i1, 1] += lane_change_profile(tau, m.magnitude, spec.edge_ms)
        annotations.append(Annotation(m.kind, m.t_insert, m.t_insert + width))
    return t, v, annotations


def write_samples_csv(fh: TextIO, t: np.ndarray, v: np.ndarray) -> None:
    fh.write("t_ms," + ",".join(f"v{d}" for d in range(v.shape[1])) + "\n")
    if len(t):
        fmt = "%d" + ",%.6f" * v.shape[1]
        np.savetxt(fh, np.column_stack([t.astype(np.float64), v]), fmt=fmt, delimiter=",")


def write_annotations_csv(fh: TextIO, annotations: Sequence[Annotation]) -> None:
    fh.write("kind,t_start_ms,t_end_ms\n")
    for a in annotations:
        fh.write(f"{a.kind},{a.t_start},{a.t_end}\n")


def generate(spec: ScenarioSpec) -> tuple[str, list[Annotation]]:
    """Ingest-ready CSV text plus annotations."""
    t, v, annotations = generate_arrays(spec)
    buf = io.StringIO()
    write_samples_csv(buf, t, v)
    return buf.getvalue(), annotations


def random_scenario(
    duration_s: float,
    rng_seed: int,
    n_braking: int,
    n_lane_change: int,
    noise: float = 0.2,
    braking_range: tuple[float, float] = (7.0, 10.0),
    lane_change_range: tuple[float, float] = (2.5, 4.0),
    min_spacing_ms: int = 5000,
    sample_rate_hz: int = 100,
) -> ScenarioSpec:
    """Scatter maneuvers over a drive at random, non-overlapping, grid-aligned times."""
    rng = np.random.default_rng([rng_seed, 1])
    kinds = [BRAKING] * n_braking + [LANE_CHANGE] * n_lane_change
    rng.shuffle(kinds)
    period = 1000 // sample_rate_hz
    slot = max(MANEUVER_MS.values()) + min_spacing_ms
    n_slots = int(duration_s * 1000) // slot
    if len(kinds) > n_slots:
        raise ValueError(f"{len(kinds)} maneuvers do not fit in {duration_s} s")
    slots = np.sort(rng.choice(n_slots, size=len(kinds), replace=False))
    maneuvers = []
    for kind, s in zip(kinds, slots.tolist()):
        jitter = int(rng.integers(0, min_spacing_ms // 2 // period)) * period
        lo, hi = braking_range if kind == BRAKING else lane_change_range
        mag = round(float(rng.uniform(lo, hi)), 3)
        maneuvers.append(Maneuver(kind, s * slot + min_spacing_ms // 2 + jitter, mag))
    return ScenarioSpec(
        duration_s=duration_s,
        sample_rate_hz=sample_rate_hz,
        rng_seed=rng_seed,
        maneuvers=tuple(maneuvers),
        noise=noise,
    )


def braking_bursts_scenario(
    n_samples: int,
    rng_seed: int,
    burst_every_s: float = 21600.0,
    magnitude_range: tuple[float, float] = (6.0, 11.0),
    gap_range_ms: tuple[int, int] = (300, 1500),
    noise: float = 0.2,
    sample_rate_hz: int = 100,
) -> ScenarioSpec:
    """Long drive with rare bursts of one to three consecutive brakings.

    Bursts give multi-stage masks something to chain. Each burst sits at a
    uniformly random position inside its own ``burst_every_s`` slot.
    """
    rng = np.random.default_rng([rng_seed, 2])
    period = 1000 // sample_rate_hz
    duration_ms = n_samples * period
    slot_ms = int(burst_every_s * 1000)
    width = MANEUVER_MS[BRAKING]
    burst_max_ms = 3 * width + 2 * gap_range_ms[1]
    maneuvers = []
    for slot_start in range(0, duration_ms - slot_ms + 1, slot_ms):
        n_hats = int(rng.integers(1, 4))
        offset = int(rng.integers(0, (slot_ms - burst_max_ms) // period)) * period
        t = slot_start + offset
        for _ in range(n_hats):
            mag = round(float(rng.uniform(*magnitude_range)), 3)
            maneuvers.append(Maneuver(BRAKING, t, mag))
            gap = int(rng.integers(gap_range_ms[0] // period, gap_range_ms[1] // period + 1))
            t += width + gap * period
    return ScenarioSpec(
        duration_s=n_samples / sample_rate_hz,
        sample_rate_hz=sample_rate_hz,
        rng_seed=rng_seed,
        maneuvers=tuple(maneuvers),
        noise=noise,
    )


def scale_corpus(
    spec: ScenarioSpec,
    target_entry_counts: Sequence[int],
    root: str | os.PathLike,
    config: QuantizationConfig | None = None,
) -> list[Store]:
    """Stores holding nested prefixes of one generated recording."""
    counts = list(target_entry_counts)
    if not counts:
        return []
    if any(b < a for a, b in zip(counts, counts[1:])):
        raise ValueError(f"target entry counts must be ascending, got {counts}")
    if counts[-1] > spec.n_samples:
        raise ValueError(f"recording has {spec.n_samples} samples, need {counts[-1]}")
    config = config or default_config()
    t, v, _ = generate_arrays(spec)
    root = Path(root)
    return [ingest_arrays(t[:n], v[:n], config, root / f"n{n}") for n in counts]
