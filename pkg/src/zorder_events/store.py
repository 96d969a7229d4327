"""Timestamp-keyed sample store with a sorted Morton-code secondary index.

A store is a directory holding three files:

``primary.log``
    append-only fixed-width records: ``t`` (int64 LE) then ``dims`` float64 LE values
``index.idx``
    ``(code uint64 LE, t int64 LE)`` records sorted by ``(code, t)``
``manifest.txt``
    ``key = value`` lines: quantization config, counts, time range, checksums
"""

from __future__ import annotations

import bisect
import csv
import hashlib
import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, TextIO

import numpy as np

from .morton import QuantizationConfig, encode_array, quantize_array

FORMAT_VERSION = 1
PRIMARY_FILE = "primary.log"
INDEX_FILE = "index.idx"
MANIFEST_FILE = "manifest.txt"

INDEX_DTYPE = np.dtype([("code", "<u8"), ("t", "<i8")])
CHUNK_ROWS = 1 << 18
FENCE_STRIDE = 1024


def record_dtype(dims: int) -> np.dtype:
    return np.dtype([("t", "<i8"), ("v", "<f8", (dims,))])


class StoreError(ValueError):
    pass


class Sample(NamedTuple):
    t: int
    v: tuple[float, ...]


class IndexEntry(NamedTuple):
    code: int
    t: int


@dataclass(frozen=True)
class Manifest:
    config: QuantizationConfig
    entry_count: int
    t_min: int | None
    t_max: int | None
    primary_sha256: str
    index_sha256: str
    format_version: int = FORMAT_VERSION

    def to_text(self) -> str:
        cfg = self.config
        lines = [f"format_version = {self.format_version}", f"dims = {cfg.dims}"]
        for d in range(cfg.dims):
            lines += [
                f"dim{d}_min = {cfg.mins[d]!r}",
                f"dim{d}_max = {cfg.maxs[d]!r}",
                f"dim{d}_bits = {cfg.bits[d]}",
            ]
        lines += [
            f"entry_count = {self.entry_count}",
            f"t_min = {'' if self.t_min is None else self.t_min}",
            f"t_max = {'' if self.t_max is None else self.t_max}",
            f"primary_sha256 = {self.primary_sha256}",
            f"index_sha256 = {self.index_sha256}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Manifest":
        kv = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise StoreError(f"manifest line {lineno}: expected 'key = value'")
            kv[key.strip()] = value.strip()
        try:
            version = int(kv["format_version"])
            if version != FORMAT_VERSION:
                raise StoreError(f"unsupported manifest format_version {version}")
            dims = int(kv["dims"])
            config = QuantizationConfig(
                tuple(float(kv[f"dim{d}_min"]) for d in range(dims)),
                tuple(float(kv[f"dim{d}_max"]) for d in range(dims)),
                tuple(int(kv[f"dim{d}_bits"]) for d in range(dims)),
            )
            return cls(
                config=config,
                entry_count=int(kv["entry_count"]),
                t_min=int(kv["t_min"]) if kv["t_min"] else None,
                t_max=int(kv["t_max"]) if kv["t_max"] else None,
                primary_sha256=kv["primary_sha256"],
                index_sha256=kv["index_sha256"],
                format_version=version,
            )
        except KeyError as exc:
            raise StoreError(f"manifest is missing key {exc.args[0]!r}") from None


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 23), b""):
            h.update(block)
    return h.hexdigest()


def _map(path: Path, dtype: np.dtype, count: int) -> np.ndarray:
    if count == 0:
        return np.zeros(0, dtype=dtype)
    size = path.stat().st_size
    if size != count * dtype.itemsize:
        raise StoreError(
            f"{path.name}: {size} bytes, expected {count} records of {dtype.itemsize} bytes"
        )
    return np.memmap(path, dtype=dtype, mode="r", shape=(count,))


class StoreWriter:
    """Single-writer ingest. Records are appended as they arrive; the index is
    sorted once at :meth:`commit`."""

    def __init__(self, path: str | os.PathLike, config: QuantizationConfig):
        self.path = Path(path)
        self.config = config
        self.path.mkdir(parents=True, exist_ok=True)
        self._dtype = record_dtype(config.dims)
        self._tmp_primary = self.path / (PRIMARY_FILE + ".tmp")
        self._fh = open(self._tmp_primary, "wb")
        self._codes: list[np.ndarray] = []
        self._times: list[np.ndarray] = []
        self._count = 0
        self._t_first: int | None = None
        self._t_last: int | None = None

    @classmethod
    def resume(cls, path: str | os.PathLike) -> "StoreWriter":
        """Reopen a committed store for appending; the index is re-sorted on commit."""
        store = Store.open(path)
        writer = cls.__new__(cls)
        writer.path = store.path
        writer.config = store.config
        writer._dtype = record_dtype(store.config.dims)
        writer._tmp_primary = store.path / (PRIMARY_FILE + ".tmp")
        with open(store.path / PRIMARY_FILE, "rb") as src, open(writer._tmp_primary, "wb") as dst:
            for block in iter(lambda: src.read(1 << 23), b""):
                dst.write(block)
        writer._fh = open(writer._tmp_primary, "ab")
        writer._codes = [np.array(store.index["code"])]
        writer._times = [np.array(store.index["t"])]
        writer._count = len(store)
        writer._t_first = store.manifest.t_min
        writer._t_last = store.manifest.t_max
        store.close()
        return writer

    def __len__(self) -> int:
        return self._count

    @property
    def last_timestamp(self) -> int | None:
        return self._t_last

    def append(self, t: np.ndarray, v: np.ndarray) -> None:
        t = np.ascontiguousarray(t, dtype=np.int64)
        v = np.asarray(v, dtype=np.float64)
        if t.ndim != 1 or v.shape != (t.shape[0], self.config.dims):
            raise StoreError(
                f"expected t of shape (N,) and v of shape (N, {self.config.dims}), "
                f"got {t.shape} and {v.shape}"
            )
        if t.size == 0:
            return
        if self._t_last is not None and t[0] <= self._t_last:
            raise StoreError(
                f"timestamp {int(t[0])} is not greater than previous timestamp {self._t_last}"
            )
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            i = int(bad[0])
            raise StoreError(
                f"timestamp {int(t[i + 1])} is not greater than previous timestamp {int(t[i])}"
            )
        recs = np.empty(t.size, dtype=self._dtype)
        recs["t"] = t
        recs["v"] = v
        codes = encode_array(quantize_array(v, self.config), self.config)
        self._fh.write(recs.tobytes())
        self._codes.append(codes)
        self._times.append(t.copy())
        self._count += t.size
        if self._t_first is None:
            self._t_first = int(t[0])
        self._t_last = int(t[-1])

    def commit(self) -> "Store":
        self._fh.close()
        codes = np.concatenate(self._codes) if self._codes else np.zeros(0, np.uint64)
        times = np.concatenate(self._times) if self._times else np.zeros(0, np.int64)
        self._codes, self._times = [], []
        # times are ascending per append, so a stable sort on code gives (code, t) order
        if times.size and np.any(np.diff(times) <= 0):
            times_order = np.argsort(times, kind="stable")
            codes, times = codes[times_order], times[times_order]
        order = np.argsort(codes, kind="stable")
        index = np.empty(codes.size, dtype=INDEX_DTYPE)
        index["code"] = codes[order]
        index["t"] = times[order]
        del order, codes, times
        tmp_index = self.path / (INDEX_FILE + ".tmp")
        index.tofile(tmp_index)
        del index
        manifest = Manifest(
            config=self.config,
            entry_count=self._count,
            t_min=self._t_first,
            t_max=self._t_last,
            primary_sha256=sha256_file(self._tmp_primary),
            index_sha256=sha256_file(tmp_index),
        )
        tmp_manifest = self.path / (MANIFEST_FILE + ".tmp")
        tmp_manifest.write_text(manifest.to_text(), encoding="utf-8")
        os.replace(self._tmp_primary, self.path / PRIMARY_FILE)
        os.replace(tmp_index, self.path / INDEX_FILE)
        os.replace(tmp_manifest, self.path / MANIFEST_FILE)
        return Store.open(self.path)

    def abort(self) -> None:
        self._fh.close()
        self._tmp_primary.unlink(missing_ok=True)


def _parse_csv_rows(stream: TextIO, dims: int) -> Iterator[tuple[int, list[tuple[int, tuple]]]]:
    """Yield batches of ``(line_number, (t, values))`` from an ingest CSV."""
    reader = csv.reader(stream)
    batch: list = []
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if lineno == 1:
            try:
                int(row[0])
            except ValueError:
                continue  # header
        if len(row) != dims + 1:
            raise StoreError(f"line {lineno}: expected {dims + 1} fields, got {len(row)}")
        try:
            t = int(row[0])
        except ValueError:
            raise StoreError(f"line {lineno}: bad timestamp {row[0]!r}") from None
        try:
            vals = tuple(float(c) for c in row[1:])
        except ValueError as exc:
            raise StoreError(f"line {lineno}: {exc}") from None
        if not all(np.isfinite(vals)):
            raise StoreError(f"line {lineno}: non-finite value")
        batch.append((lineno, t, vals))
        if len(batch) >= 65536:
            yield batch
            batch = []
    if batch:
        yield batch


def ingest(
    csv_stream: TextIO | Iterable[str], config: QuantizationConfig, path: str | os.PathLike
) -> "Store":
    """Ingest ``t_ms,v0,...`` rows from a CSV stream into a new store at ``path``."""
    writer = StoreWriter(path, config)
    try:
        prev_t = None
        for batch in _parse_csv_rows(csv_stream, config.dims):
            for lineno, t, _ in batch:
                if prev_t is not None and t <= prev_t:
                    raise StoreError(
                        f"line {lineno}: timestamp {t} is not greater than "
                        f"previous timestamp {prev_t}"
                    )
                prev_t = t
            ts = np.fromiter((b[1] for b in batch), dtype=np.int64, count=len(batch))
            vs = np.array([b[2] for b in batch], dtype=np.float64)
            writer.append(ts, vs)
    except BaseException:
        writer.abort()
        raise
    return writer.commit()


def ingest_arrays(
    t: np.ndarray, v: np.ndarray, config: QuantizationConfig, path: str | os.PathLike
) -> "Store":
    writer = StoreWriter(path, config)
    try:
        for i in range(0, len(t), CHUNK_ROWS):
            writer.append(t[i : i + CHUNK_ROWS], v[i : i + CHUNK_ROWS])
    except BaseException:
        writer.abort()
        raise
    return writer.commit()


@dataclass
class AuditReport:
    entry_count: int
    index_count: int
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems


def _iter_samples(recs: np.ndarray) -> Iterator[Sample]:
    for i in range(0, len(recs), CHUNK_ROWS):
        chunk = recs[i : i + CHUNK_ROWS]
        for t, v in zip(chunk["t"].tolist(), chunk["v"].tolist()):
            yield Sample(t, tuple(v))


def _iter_entries(entries: np.ndarray) -> Iterator[IndexEntry]:
    for i in range(0, len(entries), CHUNK_ROWS):
        chunk = entries[i : i + CHUNK_ROWS]
        for code, t in zip(chunk["code"].tolist(), chunk["t"].tolist()):
            yield IndexEntry(code, t)


class Store:
    """Read-only view of a committed store. Safe for concurrent readers."""

    def __init__(self, path: Path, manifest: Manifest):
        self.path = path
        self.manifest = manifest
        self.config = manifest.config
        n = manifest.entry_count
        self.records = _map(path / PRIMARY_FILE, record_dtype(self.config.dims), n)
        self.index = _map(path / INDEX_FILE, INDEX_DTYPE, n)
        self.times = self.records["t"]
        self._index_codes = self.index["code"]
        # every FENCE_STRIDE-th code, in memory: narrows a bisect to one block
        self._fence = np.array(self._index_codes[::FENCE_STRIDE], dtype=np.uint64)

    @classmethod
    def open(cls, path: str | os.PathLike) -> "Store":
        path = Path(path)
        try:
            text = (path / MANIFEST_FILE).read_text(encoding="utf-8")
        except FileNotFoundError:
            raise StoreError(f"no store at {path} (missing {MANIFEST_FILE})") from None
        return cls(path, Manifest.from_text(text))

    def close(self) -> None:
        for arr in (self.records, self.index):
            mm = getattr(arr, "_mmap", None)
            if mm is not None:
                mm.close()

    def __len__(self) -> int:
        return self.manifest.entry_count

    def __repr__(self) -> str:
        return f"Store({str(self.path)!r}, entries={len(self)})"

    # -- primary key access -------------------------------------------------

    def time_bounds(self, t0: int, t1: int) -> tuple[int, int]:
        """Record positions ``[i, j)`` holding timestamps ``t0 <= t < t1``."""
        if t0 > t1:
            raise ValueError(f"inverted time range: {t0} > {t1}")
        return bisect.bisect_left(self.times, t0), bisect.bisect_left(self.times, t1)

    def time_slice(self, t0: int, t1: int) -> np.ndarray:
        i, j = self.time_bounds(t0, t1)
        return self.records[i:j]

    def lookup_time_range(self, t0: int, t1: int) -> Iterator[Sample]:
        """Samples with ``t0 <= t < t1`` in time order (range checked eagerly)."""
        return _iter_samples(self.time_slice(t0, t1))

    def iter_chunks(self, chunk_rows: int = CHUNK_ROWS) -> Iterator[np.ndarray]:
        for i in range(0, len(self), chunk_rows):
            yield self.records[i : i + chunk_rows]

    # -- secondary index ----------------------------------------------------

    def code_bounds(self, c_lo: int, c_hi: int) -> tuple[int, int]:
        if c_lo > c_hi:
            raise ValueError(f"inverted code range: {c_lo} > {c_hi}")
        if c_lo < 0:
            raise ValueError(f"negative code {c_lo}")
        if c_lo > self.config.max_code:
            return len(self), len(self)
        c_hi = min(c_hi, self.config.max_code)
        return self._locate(c_lo, "left"), self._locate(c_hi, "right")

    def _locate(self, code: int, side: str) -> int:
        j = int(np.searchsorted(self._fence, np.uint64(code), side=side))
        lo = max(0, (j - 1) * FENCE_STRIDE)
        hi = min(len(self), j * FENCE_STRIDE + 1)
        block = np.ascontiguousarray(self._index_codes[lo:hi])
        return lo + int(np.searchsorted(block, np.uint64(code), side=side))

    def code_slice(self, c_lo: int, c_hi: int) -> np.ndarray:
        """Index records with ``c_lo <= code <= c_hi`` in ``(code, t)`` order."""
        i, j = self.code_bounds(c_lo, c_hi)
        return self.index[i:j]

    def scan_code_range(self, c_lo: int, c_hi: int) -> Iterator[IndexEntry]:
        return _iter_entries(self.code_slice(c_lo, c_hi))

    # -- exports and checks -------------------------------------------------

    def codes_in_time_order(self, chunk: np.ndarray) -> np.ndarray:
        return encode_array(quantize_array(chunk["v"], self.config), self.config)

    def spectrum_export(self, bucket_ms: int) -> Iterator[tuple[int, int]]:
        """One ``(bucketed t, code)`` pair per sample, in time order."""
        if bucket_ms < 1:
            raise ValueError(f"bucket_ms must be >= 1, got {bucket_ms}")
        for chunk in self.iter_chunks():
            t = chunk["t"]
            buckets = t - t % bucket_ms
            yield from zip(buckets.tolist(), self.codes_in_time_order(chunk).tolist())

    def write_spectrum_csv(self, fh: TextIO, bucket_ms: int) -> int:
        fh.write("t_ms,code\n")
        n = 0
        buf = io.StringIO()
        for tb, code in self.spectrum_export(bucket_ms):
            buf.write(f"{tb},{code}\n")
            n += 1
            if n % 65536 == 0:
                fh.write(buf.getvalue())
                buf = io.StringIO()
        fh.write(buf.getvalue())
        return n

    def audit(self, checksums: bool = True) -> AuditReport:
        """Full index audit: cardinality, ordering and every code recomputed."""
        n = len(self)
        report = AuditReport(entry_count=n, index_count=len(self.index))
        if len(self.records) != n or len(self.index) != n:
            report.problems.append(
                f"cardinality mismatch: manifest {n}, primary {len(self.records)}, "
                f"index {len(self.index)}"
            )
            return report
        if n:
            t = np.asarray(self.times)
            if np.any(np.diff(t) <= 0):
                report.problems.append("primary timestamps are not strictly increasing")
            if self.manifest.t_min != int(t[0]) or self.manifest.t_max != int(t[-1]):
                report.problems.append("manifest time range does not match primary log")
            codes = np.concatenate([self.codes_in_time_order(c) for c in self.iter_chunks()])
            order = np.argsort(codes, kind="stable")
            if not np.array_equal(codes[order], self.index["code"]):
                report.problems.append("index codes differ from codes recomputed from samples")
            elif not np.array_equal(t[order], self.index["t"]):
                report.problems.append("index timestamps differ from (code, t) order")
        if checksums:
            if sha256_file(self.path / PRIMARY_FILE) != self.manifest.primary_sha256:
                report.problems.append("primary log checksum mismatch")
            if sha256_file(self.path / INDEX_FILE) != self.manifest.index_sha256:
                report.problems.append("index checksum mismatch")
        return report
