"""Query-duration benchmark: detectors x search masks x store sizes."""

from __future__ import annotations

import csv
import hashlib
import io
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TextIO

from .detect import DETECTORS, DetectorDisagreement, detect, diff_events
from .masks import Event, SearchMask, random_masks
from .store import INDEX_FILE, MANIFEST_FILE, Store, sha256_file

# Random boxes live in the hard-braking region: longitudinal beyond -4 m/s²,
# lateral within +-2.5 m/s².
BENCH_VALUE_BOUNDS = ((-14.0, -4.0), (-2.5, 2.5))


@dataclass(frozen=True)
class BenchResult:
    detector: str
    mask_name: str
    stage_count: int
    store_entries: int
    duration_us: float
    events_found: int


def time_query(store: Store, mask: SearchMask, detector: str, repetitions: int, warmup: bool = True):
    """Median wall-clock duration (µs) over ``repetitions`` runs, after one warm-up run."""
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    events = detect(store, mask, detector) if warmup else None
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter_ns()
        events = detect(store, mask, detector)
        samples.append((time.perf_counter_ns() - t0) / 1000.0)
    return statistics.median(samples), events


def select_masks(
    store: Store,
    stage_counts: Sequence[int] = (1, 2, 3),
    per_stage: int = 5,
    seed: int = 0,
    value_bounds=BENCH_VALUE_BOUNDS,
    max_tries: int = 20000,
) -> list[SearchMask]:
    """Random masks that each find at least one event in ``store`` (checked with the SFC detector)."""
    chosen: list[SearchMask] = []
    for stages in stage_counts:
        kept = []
        for attempt in range(max_tries):
            (mask,) = random_masks(seed * 100003 + attempt, stages, 1, value_bounds)
            if detect(store, mask, "sfc"):
                kept.append(mask)
                if len(kept) == per_stage:
                    break
        else:
            raise RuntimeError(
                f"only {len(kept)} of {per_stage} {stages}-stage masks hit an event "
                f"after {max_tries} tries"
            )
        chosen.extend(kept)
    return chosen


def store_fingerprint(store: Store) -> str:
    """Checksum of the manifest and index files as they are on disk."""
    h = hashlib.sha256()
    h.update((store.path / MANIFEST_FILE).read_bytes())
    h.update(sha256_file(store.path / INDEX_FILE).encode())
    return h.hexdigest()


def run_matrix(
    stores: Sequence[Store],
    masks: Sequence[SearchMask],
    detectors: Sequence[str] = tuple(DETECTORS),
    repetitions: int = 5,
    warmup: bool = True,
    parallel: bool = False,
) -> list[BenchResult]:
    """Time every (store, mask, detector) cell.

    Event lists must agree across detectors for each (store, mask) before any
    timing is returned; a disagreement raises :class:`DetectorDisagreement`.
    ``parallel=True`` runs cells on a thread pool, which is only sensible when
    the timings are not the point.
    """
    if not stores or not masks or not detectors:
        raise ValueError("need at least one store, mask and detector")
    for name in detectors:
        if name not in DETECTORS:
            raise ValueError(f"unknown detector {name!r}")
    cells = [(s, m, d) for s in stores for m in masks for d in detectors]

    def run(cell):
        store, mask, det = cell
        return time_query(store, mask, det, repetitions, warmup)

    if parallel:
        with ThreadPoolExecutor() as pool:
            outcomes = list(pool.map(run, cells))
    else:
        outcomes = [run(c) for c in cells]

    found: dict[tuple[int, str], tuple[str, list[Event]]] = {}
    results = []
    for (store, mask, det), (duration, events) in zip(cells, outcomes):
        key = (id(store), mask.name)
        if key in found:
            ref_det, ref_events = found[key]
            if events != ref_events:
                raise DetectorDisagreement(
                    f"{det} disagrees with {ref_det} on mask {mask.name}, "
                    f"store of {len(store)} entries:\n" + diff_events(ref_events, events)
                )
        else:
            found[key] = (det, events)
        results.append(
            BenchResult(det, mask.name, mask.stage_count, len(store), duration, len(events))
        )
    return results


@dataclass(frozen=True)
class SummaryRow:
    detector: str
    stage_count: int
    store_entries: int
    masks: int
    mean_us: float
    min_us: float
    max_us: float
    median_us: float


def summarize(results: Sequence[BenchResult]) -> list[SummaryRow]:
    if not results:
        raise ValueError("no results to summarize")
    groups: dict[tuple[str, int, int], list[float]] = {}
    for r in results:
        groups.setdefault((r.detector, r.stage_count, r.store_entries), []).append(r.duration_us)
    order = {name: i for i, name in enumerate(DETECTORS)}
    rows = []
    for (det, stages, entries), durs in sorted(
        groups.items(), key=lambda kv: (order.get(kv[0][0], 99), kv[0][1], kv[0][2])
    ):
        rows.append(
            SummaryRow(
                det, stages, entries, len(durs),
                statistics.fmean(durs), min(durs), max(durs), statistics.median(durs),
            )
        )
    return rows


SUMMARY_FIELDS = ("detector", "stage_count", "store_entries", "masks", "mean_us", "min_us", "max_us", "median_us")
RESULT_FIELDS = ("detector", "mask_name", "stage_count", "store_entries", "duration_us", "events_found")


def write_results_csv(fh: TextIO, results: Sequence[BenchResult]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in results:
        w.writerow([r.detector, r.mask_name, r.stage_count, r.store_entries, f"{r.duration_us:.1f}", r.events_found])


def write_summary_csv(fh: TextIO, rows: Sequence[SummaryRow]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for r in rows:
        w.writerow([
            r.detector, r.stage_count, r.store_entries, r.masks,
            f"{r.mean_us:.1f}", f"{r.min_us:.1f}", f"{r.max_us:.1f}", f"{r.median_us:.1f}",
        ])


def format_table(rows: Sequence[SummaryRow]) -> str:
    header = ("detector", "stages", "entries", "masks", "mean ms", "min ms", "max ms")
    body = [
        (r.detector, str(r.stage_count), str(r.store_entries), str(r.masks),
         f"{r.mean_us / 1000:.3f}", f"{r.min_us / 1000:.3f}", f"{r.max_us / 1000:.3f}")
        for r in rows
    ]
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def report(results: Sequence[BenchResult]) -> str:
    """Per (detector, stage count, store size): mean/min/max over masks, as CSV then a text table."""
    rows = summarize(results)
    buf = io.StringIO()
    write_summary_csv(buf, rows)
    return buf.getvalue() + "\n" + format_table(rows) + "\n"


def median_duration(results: Sequence[BenchResult], detector: str, stage_count: int, store_entries: int) -> float:
    durs = [
        r.duration_us for r in results
        if r.detector == detector and r.stage_count == stage_count and r.store_entries == store_entries
    ]
    if not durs:
        raise KeyError((detector, stage_count, store_entries))
    return statistics.median(durs)
