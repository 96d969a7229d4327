"""Multi-stage search masks: value-space stage boxes plus temporal parameters.

Mask file format, one directive per line, ``#`` starts a comment::

    name braking
    stage -12 -5 -3 3        # lo0 hi0 lo1 hi1 ...
    dur 2000 3000            # min/max segment duration, ms
    gap -200 2000            # min/max gap between consecutive stages, ms
    outlier 50               # max gap between hits inside one segment, ms
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .morton import LatticePoint, QuantizationConfig, quantize

DEFAULT_MIN_DUR_MS = 2000
DEFAULT_MAX_DUR_MS = 3000
DEFAULT_MIN_GAP_MS = -200
DEFAULT_MAX_GAP_MS = 2000
DEFAULT_MAX_OUTLIER_MS = 50


class MaskParseError(ValueError):
    def __init__(self, message: str, field: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field}: {message}")
        self.field = field
        self.line = line


class Event(NamedTuple):
    t_start: int
    t_end: int


@dataclass(frozen=True)
class TemporalParams:
    t_min_dur: int = DEFAULT_MIN_DUR_MS
    t_max_dur: int = DEFAULT_MAX_DUR_MS
    t_min_gap: int = DEFAULT_MIN_GAP_MS
    t_max_gap: int = DEFAULT_MAX_GAP_MS
    t_max_outlier: int = DEFAULT_MAX_OUTLIER_MS

    def __post_init__(self):
        for name in ("t_min_dur", "t_max_dur", "t_min_gap", "t_max_gap", "t_max_outlier"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.t_min_dur < 0:
            raise MaskParseError(f"must be >= 0, got {self.t_min_dur}", "dur")
        if self.t_min_dur > self.t_max_dur:
            raise MaskParseError(
                f"t_min_dur {self.t_min_dur} > t_max_dur {self.t_max_dur}", "dur"
            )
        if self.t_min_gap > self.t_max_gap:
            raise MaskParseError(
                f"t_min_gap {self.t_min_gap} > t_max_gap {self.t_max_gap}", "gap"
            )
        if self.t_max_outlier < 0:
            raise MaskParseError(f"must be >= 0, got {self.t_max_outlier}", "outlier")


@dataclass(frozen=True)
class StageBox:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not lo:
            raise MaskParseError(f"lo/hi lengths {len(lo)}/{len(hi)}", "stage")
        for d, (a, b) in enumerate(zip(lo, hi)):
            if not (np.isfinite(a) and np.isfinite(b)):
                raise MaskParseError(f"non-finite bound in dimension {d}", "stage")
            if a > b:
                raise MaskParseError(f"inverted box in dimension {d}: {a} > {b}", "stage")

    @property
    def dims(self) -> int:
        return len(self.lo)

    def lattice(self, config: QuantizationConfig) -> tuple[LatticePoint, LatticePoint]:
        return quantize(self.lo, config), quantize(self.hi, config)


@dataclass(frozen=True)
class SearchMask:
    stages: tuple[StageBox, ...]
    params: TemporalParams = field(default_factory=TemporalParams)
    name: str = "mask"

    def __post_init__(self):
        stages = tuple(self.stages)
        object.__setattr__(self, "stages", stages)
        if not stages:
            raise MaskParseError("mask needs at least one stage", "stage")
        dims = {s.dims for s in stages}
        if len(dims) != 1:
            raise MaskParseError(f"stages disagree on dimensionality: {sorted(dims)}", "stage")
        if not self.name or any(c.isspace() or c in ",#" for c in self.name):
            raise MaskParseError(f"invalid name {self.name!r}", "name")

    @property
    def dims(self) -> int:
        return self.stages[0].dims

    @property
    def stage_count(self) -> int:
        return len(self.stages)

    def lattice_boxes(self, config: QuantizationConfig):
        if config.dims != self.dims:
            raise ValueError(f"mask has {self.dims} dimensions, store has {config.dims}")
        return [s.lattice(config) for s in self.stages]


def _ints(parts: Sequence[str], fieldname: str, lineno: int, count: int) -> list[int]:
    if len(parts) != count:
        raise MaskParseError(f"expected {count} values, got {len(parts)}", fieldname, lineno)
    try:
        return [int(p) for p in parts]
    except ValueError as exc:
        raise MaskParseError(str(exc), fieldname, lineno) from None


def parse_mask(text: str, name: str | None = None) -> SearchMask:
    stages: list[StageBox] = []
    params: dict[str, int] = {}
    mask_name = name
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *parts = line.split()
        key = key.lower()
        if key == "stage":
            if not parts or len(parts) % 2:
                raise MaskParseError("expected pairs lo hi per dimension", "stage", lineno)
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise MaskParseError(str(exc), "stage", lineno) from None
            try:
                stages.append(StageBox(vals[0::2], vals[1::2]))
            except MaskParseError as exc:
                raise MaskParseError(str(exc).split(": ", 1)[1], "stage", lineno) from None
        elif key == "dur":
            params["t_min_dur"], params["t_max_dur"] = _ints(parts, "dur", lineno, 2)
        elif key == "gap":
            params["t_min_gap"], params["t_max_gap"] = _ints(parts, "gap", lineno, 2)
        elif key == "outlier":
            (params["t_max_outlier"],) = _ints(parts, "outlier", lineno, 1)
        elif key == "name":
            if len(parts) != 1:
                raise MaskParseError("expected a single token", "name", lineno)
            if name is None:
                mask_name = parts[0]
        else:
            raise MaskParseError(f"unknown directive {key!r}", key, lineno)
    return SearchMask(tuple(stages), TemporalParams(**params), mask_name or "mask")


def _fmt(x: float) -> str:
    return repr(float(x))


def render_mask(mask: SearchMask) -> str:
    p = mask.params
    lines = [f"name {mask.name}"]
    for s in mask.stages:
        lines.append("stage " + " ".join(f"{_fmt(a)} {_fmt(b)}" for a, b in zip(s.lo, s.hi)))
    lines.append(f"dur {p.t_min_dur} {p.t_max_dur}")
    lines.append(f"gap {p.t_min_gap} {p.t_max_gap}")
    lines.append(f"outlier {p.t_max_outlier}")
    return "\n".join(lines) + "\n"


BRAKING_MASK_TEXT = """\
# hard braking: strong negative longitudinal, small lateral acceleration
name braking
stage -12 -5 -3 3
"""

LANE_CHANGE_MASK_TEXT = """\
# lane change: falling lateral lobe followed by the rising lobe
name lane_change
stage -2 2 -8 -1.5
stage -2 2 1.5 8
dur 1000 1500
"""

BUILTIN_MASKS = {
    "braking": BRAKING_MASK_TEXT,
    "lane_change": LANE_CHANGE_MASK_TEXT,
}


def builtin_mask(name: str) -> SearchMask:
    return parse_mask(BUILTIN_MASKS[name])


def random_masks(
    rng_seed: int,
    stage_count: int,
    count: int,
    value_bounds: Sequence[tuple[float, float]],
    width_fraction: tuple[float, float] = (0.25, 1.0),
    params: TemporalParams | None = None,
) -> list[SearchMask]:
    """Deterministic random masks whose boxes lie inside ``value_bounds``.

    Each box side spans a uniform fraction ``width_fraction`` of the bound's
    width, at a uniform offset. Hitting any maneuver is not guaranteed.
    """
    if stage_count < 1:
        raise ValueError(f"stage_count must be >= 1, got {stage_count}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    lo_f, hi_f = width_fraction
    if not 0.0 < lo_f <= hi_f <= 1.0:
        raise ValueError(f"width_fraction must satisfy 0 < lo <= hi <= 1, got {width_fraction}")
    rng = np.random.default_rng(rng_seed)
    params = params or TemporalParams()
    masks = []
    for i in range(count):
        stages = []
        for _ in range(stage_count):
            lo, hi = [], []
            for b_lo, b_hi in value_bounds:
                span = b_hi - b_lo
                width = span * rng.uniform(lo_f, hi_f)
                start = b_lo + rng.uniform(0.0, span - width)
                lo.append(max(b_lo, round(start, 3)))
                hi.append(min(b_hi, round(start + width, 3)))
            stages.append(StageBox(lo, hi))
        masks.append(SearchMask(tuple(stages), params, f"r{rng_seed}-s{stage_count}-{i}"))
    return masks
