"""Event detectors over a store and a search mask.

All three detectors share one notion of relevance: a sample is relevant to a
stage when its quantized coordinates lie inside the stage box's quantized
corners. They differ only in how they find relevant samples:

* ``bf_primitive`` scans the whole primary log once per stage.
* ``bf_improved`` scans the log once for the first stage and looks ahead
  locally for the remaining stages of each candidate.
* ``sfc`` reads the Morton index over ``[encode(lo), encode(hi)]`` and drops
  the Z-curve false positives.

Segments and chains are built by the same rules everywhere, so the event lists
are identical, not merely similar.
"""

from __future__ import annotations

import bisect
import csv
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np

from .masks import Event, SearchMask, TemporalParams
from .morton import box_to_code_range, codes_in_box, points_in_box, quantize_array
from .store import CHUNK_ROWS, Store

Box = tuple[tuple[int, ...], tuple[int, ...]]


class DetectorDisagreement(RuntimeError):
    pass


# -- temporal logic -----------------------------------------------------------


def _runs(times: np.ndarray, max_outlier: int) -> tuple[np.ndarray, np.ndarray]:
    """Maximal runs of ascending ``times`` whose internal gaps are ``<= max_outlier``."""
    if times.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    breaks = np.flatnonzero(np.diff(times) > max_outlier)
    starts = times[np.concatenate(([0], breaks + 1))]
    ends = times[np.concatenate((breaks, [times.size - 1]))]
    return starts, ends


def segment_arrays(times, params: TemporalParams, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    times = np.asarray(times, dtype=np.int64)
    if check and times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly ascending")
    starts, ends = _runs(times, params.t_max_outlier)
    dur = ends - starts
    keep = (dur >= params.t_min_dur) & (dur <= params.t_max_dur)
    return starts[keep], ends[keep]


def segments_from_times(times, params: TemporalParams, check: bool = True) -> list[tuple[int, int]]:
    """Runs of relevant timestamps whose first-to-last span is within the duration bounds.

    A run longer than ``t_max_dur`` is discarded, not trimmed.
    """
    starts, ends = segment_arrays(times, params, check)
    return list(zip(starts.tolist(), ends.tolist()))


def chain_stages(
    per_stage_segments: Sequence[Sequence[tuple[int, int]]], params: TemporalParams
) -> list[Event]:
    """Link one segment per stage into events.

    Every first-stage segment yields at most one event: the chain found by a
    depth-first search that tries later-stage candidates in start order, which
    is also the chain with the earliest final end.
    """
    if not per_stage_segments:
        return []
    stages = [sorted((int(s), int(e)) for s, e in segs) for segs in per_stage_segments]
    starts = [[s for s, _ in segs] for segs in stages]
    last = len(stages) - 1
    memo: list[dict[int, int | None]] = [{} for _ in stages]

    def complete(k: int, i: int) -> int | None:
        end = stages[k][i][1]
        if k == last:
            return end
        if i in memo[k]:
            return memo[k][i]
        lo = bisect.bisect_left(starts[k + 1], end + params.t_min_gap)
        hi = bisect.bisect_right(starts[k + 1], end + params.t_max_gap)
        found = None
        for j in range(lo, hi):
            found = complete(k + 1, j)
            if found is not None:
                break
        memo[k][i] = found
        return found

    events = []
    for i, (start, _) in enumerate(stages[0]):
        end = complete(0, i)
        if end is not None and end > start:
            events.append(Event(start, end))
    return events


# -- relevance ----------------------------------------------------------------


def _relevant(chunk: np.ndarray, box: Box, config) -> np.ndarray:
    lo, hi = box
    return points_in_box(quantize_array(chunk["v"], config), lo, hi)


def stage_times_bf(store: Store, box: Box) -> np.ndarray:
    """Relevant timestamps from a full sequential scan of the primary log."""
    hits = [chunk["t"][_relevant(chunk, box, store.config)] for chunk in store.iter_chunks()]
    return np.concatenate(hits) if hits else np.zeros(0, dtype=np.int64)


def stage_times_sfc(store: Store, box: Box) -> tuple[np.ndarray, int]:
    """Relevant timestamps from the Morton index, plus the number of index entries read."""
    lo, hi = box
    c_lo, c_hi = box_to_code_range(lo, hi, store.config)
    entries = store.code_slice(c_lo, c_hi)
    if len(entries) == 0:
        return np.zeros(0, dtype=np.int64), 0
    keep = codes_in_box(np.ascontiguousarray(entries["code"]), lo, hi, store.config)
    return np.sort(entries["t"][keep]), len(entries)


# -- detectors ----------------------------------------------------------------


def detect_bf_primitive(store: Store, mask: SearchMask) -> list[Event]:
    boxes = mask.lattice_boxes(store.config)
    per_stage = [segments_from_times(stage_times_bf(store, box), mask.params, False) for box in boxes]
    return chain_stages(per_stage, mask.params)


def detect_sfc(store: Store, mask: SearchMask) -> list[Event]:
    boxes = mask.lattice_boxes(store.config)
    # sorted unique timestamps, no need to re-check the order
    per_stage = [segments_from_times(stage_times_sfc(store, box)[0], mask.params, False) for box in boxes]
    return chain_stages(per_stage, mask.params)


def _match_forward(store: Store, boxes: list[Box], k: int, prev_end: int, p: TemporalParams):
    """Earliest final end of a chain continuing at stage ``k`` after a segment ending at ``prev_end``."""
    window_lo = prev_end + p.t_min_gap
    window_hi = prev_end + p.t_max_gap
    # a valid run starting by window_hi ends by window_hi + t_max_dur; one more
    # outlier gap is needed to see whether it continues
    horizon = window_hi + p.t_max_dur + p.t_max_outlier
    i0 = bisect.bisect_left(store.times, window_lo - p.t_max_outlier)
    i1 = bisect.bisect_right(store.times, horizon)
    chunk = store.records[i0:i1]
    if len(chunk) == 0:
        return None
    hits = chunk["t"][_relevant(chunk, boxes[k], store.config)]
    starts, ends = segment_arrays(hits, p, False)
    sel = (starts >= window_lo) & (starts <= window_hi)
    for end in ends[sel].tolist():
        if k == len(boxes) - 1:
            return end
        found = _match_forward(store, boxes, k + 1, end, p)
        if found is not None:
            return found
    return None


def detect_bf_improved(store: Store, mask: SearchMask) -> list[Event]:
    boxes = mask.lattice_boxes(store.config)
    p = mask.params
    events: list[Event] = []

    def on_segment(start: int, end: int) -> None:
        if not p.t_min_dur <= end - start <= p.t_max_dur:
            return
        final = end if len(boxes) == 1 else _match_forward(store, boxes, 1, end, p)
        if final is not None and final > start:
            events.append(Event(start, final))

    run_start = run_last = None
    for chunk in store.iter_chunks(CHUNK_ROWS):
        hits = chunk["t"][_relevant(chunk, boxes[0], store.config)]
        if hits.size == 0:
            continue
        if run_last is not None:
            hits = np.concatenate(([run_last], hits))
        starts, ends = _runs(hits, p.t_max_outlier)
        if run_start is not None:
            starts[0] = run_start
        # the final run may continue into the next chunk
        for s, e in zip(starts[:-1].tolist(), ends[:-1].tolist()):
            on_segment(s, e)
        run_start, run_last = int(starts[-1]), int(ends[-1])
    if run_start is not None:
        on_segment(run_start, run_last)
    return events


DETECTORS: dict[str, Callable[[Store, SearchMask], list[Event]]] = {
    "bf_primitive": detect_bf_primitive,
    "bf_improved": detect_bf_improved,
    "sfc": detect_sfc,
}


def detect(store: Store, mask: SearchMask, detector: str = "sfc") -> list[Event]:
    try:
        fn = DETECTORS[detector]
    except KeyError:
        raise ValueError(f"unknown detector {detector!r}; choose from {sorted(DETECTORS)}") from None
    return fn(store, mask)


def diff_events(a: Iterable[Event], b: Iterable[Event]) -> str:
    a, b = set(a), set(b)
    only_a = sorted(a - b)
    only_b = sorted(b - a)
    lines = [f"- {e.t_start},{e.t_end}" for e in only_a]
    lines += [f"+ {e.t_start},{e.t_end}" for e in only_b]
    return "\n".join(lines)


def detect_all(store: Store, mask: SearchMask, detectors: Sequence[str] = tuple(DETECTORS)):
    """Run several detectors and require identical event lists."""
    results = {name: detect(store, mask, name) for name in detectors}
    ref_name = detectors[0]
    for name in detectors[1:]:
        if results[name] != results[ref_name]:
            raise DetectorDisagreement(
                f"{name} disagrees with {ref_name} on mask {mask.name}:\n"
                + diff_events(results[ref_name], results[name])
            )
    return results


def write_events_csv(fh: TextIO, rows: Iterable[tuple[Event, str, str]]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["t_start_ms", "t_end_ms", "mask_name", "detector"])
    for event, mask_name, detector in rows:
        writer.writerow([event.t_start, event.t_end, mask_name, detector])
