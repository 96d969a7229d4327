import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zorder_events.morton import QuantizationConfig, encode_array, morton_encode, quantize, quantize_array
from zorder_events.store import (
    INDEX_DTYPE,
    INDEX_FILE,
    MANIFEST_FILE,
    PRIMARY_FILE,
    Manifest,
    Store,
    StoreError,
    StoreWriter,
    ingest,
    ingest_arrays,
)
from zorder_events.synth import ScenarioSpec, default_config, generate, generate_arrays

CFG = QuantizationConfig.uniform(2, -10.0, 10.0, 8)
GRID8 = QuantizationConfig.uniform(2, 0.0, 7.0, 3)


def random_store(tmp_path, n=10_000, seed=0, cfg=CFG, name="s"):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.integers(1, 30, size=n)).astype(np.int64)
    v = rng.normal(0, 4, size=(n, cfg.dims))
    return ingest_arrays(t, v, cfg, tmp_path / name), t, v


def test_empty_stream(tmp_path):
    s = ingest(io.StringIO(""), CFG, tmp_path / "e")
    assert len(s) == 0
    assert s.manifest.t_min is None and s.manifest.t_max is None
    assert list(s.lookup_time_range(0, 10**12)) == []
    assert list(s.scan_code_range(0, CFG.max_code)) == []
    assert list(s.spectrum_export(10)) == []
    assert s.audit().ok
    reopened = Store.open(tmp_path / "e")
    assert len(reopened) == 0


def test_origin_rows(tmp_path):
    text = "t_ms,v0,v1\n5,-10,-10\n6,-10,-10\n9,-10,-10\n"
    s = ingest(io.StringIO(text), CFG, tmp_path / "o")
    entries = list(s.scan_code_range(0, CFG.max_code))
    assert [e.code for e in entries] == [0, 0, 0]
    assert [e.t for e in entries] == [5, 6, 9]


def test_ten_thousand_rows_sorted(tmp_path):
    spec = ScenarioSpec(duration_s=100, rng_seed=3, maneuvers=(("braking", 20_000, 8.0),))
    text, _ = generate(spec)
    s = ingest(io.StringIO(text), default_config(), tmp_path / "g")
    assert len(s) == 10_000 == s.manifest.entry_count
    idx = np.asarray(s.index)
    keys = list(zip(idx["code"].tolist(), idx["t"].tolist()))
    assert keys == sorted(keys)
    assert s.audit().ok


def test_manifest_text_round_trip(tmp_path):
    s, t, _ = random_store(tmp_path, n=50)
    text = (tmp_path / "s" / MANIFEST_FILE).read_text()
    assert Manifest.from_text(text) == s.manifest
    for key in ("format_version", "dims", "dim0_min", "dim1_bits", "entry_count", "t_min", "t_max"):
        assert f"{key} = " in text
    assert s.manifest.t_min == int(t[0]) and s.manifest.t_max == int(t[-1])


def test_manifest_errors():
    with pytest.raises(StoreError):
        Manifest.from_text("format_version = 1\n")
    with pytest.raises(StoreError):
        Manifest.from_text("format_version = 99\ndims = 1\n")
    with pytest.raises(StoreError):
        Manifest.from_text("garbage\n")


def test_time_range_against_full_scan(tmp_path):
    s, t, v = random_store(tmp_path)
    rng = np.random.default_rng(1)
    for _ in range(50):
        t0, t1 = sorted(rng.integers(int(t[0]) - 100, int(t[-1]) + 100, size=2).tolist())
        got = list(s.lookup_time_range(t0, t1))
        keep = (t >= t0) & (t < t1)
        assert [x.t for x in got] == t[keep].tolist()
        assert np.array_equal(np.array([x.v for x in got]).reshape(-1, 2), v[keep])
    assert len(list(s.lookup_time_range(int(t[0]), int(t[-1]) + 1))) == len(t)
    with pytest.raises(ValueError):
        s.lookup_time_range(10, 5)


def test_code_range_against_full_scan(tmp_path):
    s, t, v = random_store(tmp_path)
    codes = encode_array(quantize_array(v, CFG), CFG)
    rng = np.random.default_rng(2)
    everything = list(s.scan_code_range(0, CFG.max_code))
    assert len(everything) == len(t)
    for _ in range(50):
        c0, c1 = sorted(rng.integers(0, CFG.max_code + 1, size=2).tolist())
        got = list(s.scan_code_range(c0, c1))
        keep = (codes >= c0) & (codes <= c1)
        expect = sorted(zip(codes[keep].tolist(), t[keep].tolist()))
        assert [(e.code, e.t) for e in got] == expect
    with pytest.raises(ValueError):
        s.scan_code_range(9, 3)


def test_corner_grid_code_range(tmp_path):
    pts = list(itertools.product(range(8), repeat=2))
    t = np.arange(len(pts), dtype=np.int64) * 10
    v = np.array(pts, dtype=np.float64)
    s = ingest_arrays(t, v, GRID8, tmp_path / "grid")
    got = list(s.scan_code_range(33, 57))
    assert [e.code for e in got] == list(range(33, 58))
    assert all(33 <= e.code <= 57 for e in got)


def test_spectrum_constant_signal(tmp_path):
    spec = ScenarioSpec(duration_s=5, noise=0.0)
    t, v, _ = generate_arrays(spec)
    s = ingest_arrays(t, v, default_config(), tmp_path / "c")
    pairs = list(s.spectrum_export(100))
    assert len(pairs) == 500
    quiet = morton_encode(quantize((0.0, 0.0), default_config()), default_config())
    assert quantize((0.0, 0.0), default_config()) == (0xAAAA, 0xAAAA)
    assert {c for _, c in pairs} == {quiet} == {0xCCCCCCCC}
    assert [b for b, _ in pairs[:12]] == [0] * 10 + [100] * 2
    buf = io.StringIO()
    assert s.write_spectrum_csv(buf, 100) == 500
    assert buf.getvalue().splitlines()[:2] == ["t_ms,code", f"0,{quiet}"]
    with pytest.raises(ValueError):
        list(s.spectrum_export(0))


def test_spectrum_braking_band(tmp_path):
    spec = ScenarioSpec(duration_s=60, rng_seed=5, maneuvers=(("braking", 30_000, 8.0),))
    t, v, _ = generate_arrays(spec)
    s = ingest_arrays(t, v, default_config(), tmp_path / "b")
    pairs = np.array(list(s.spectrum_export(10)), dtype=np.uint64)
    inside = (pairs[:, 0] >= 30_010) & (pairs[:, 0] <= 32_490)
    # strong negative x-acceleration clears the top x bit: codes drop below the quiet band
    assert pairs[inside, 1].max() < pairs[~inside, 1].min()


def test_reingest_byte_identical(tmp_path):
    text, _ = generate(ScenarioSpec(duration_s=30, rng_seed=9, maneuvers=(("lane_change", 10_000, 3.0),)))
    for name in ("a", "b"):
        ingest(io.StringIO(text), default_config(), tmp_path / name)
    for f in (PRIMARY_FILE, INDEX_FILE, MANIFEST_FILE):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_ingest_csv_matches_arrays(tmp_path):
    t = np.array([0, 10, 20], dtype=np.int64)
    v = np.array([[1.5, -2.0], [0.0, 0.25], [8.0, -16.0]])
    text = "".join(f"{a},{b},{c}\n" for a, (b, c) in zip(t, v))
    a = ingest(io.StringIO(text), default_config(), tmp_path / "csv")
    b = ingest_arrays(t, v, default_config(), tmp_path / "arr")
    assert np.array_equal(a.index, b.index)
    assert np.array_equal(a.records, b.records)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("0,1,2\n10,1\n", "line 2"),
        ("t,v0,v1\n0,1,2\nx,1,2\n", "line 3"),
        ("0,1,2\n10,a,2\n", "line 2"),
        ("0,1,2\n10,nan,2\n", "line 2"),
        ("0,1,2\n10,1,2\n10,1,2\n", "line 3"),
    ],
)
def test_csv_errors_carry_line_number(tmp_path, text, fragment):
    with pytest.raises(StoreError, match=fragment):
        ingest(io.StringIO(text), CFG, tmp_path / "bad")
    assert not (tmp_path / "bad" / MANIFEST_FILE).exists()


def test_non_monotone_names_both_timestamps(tmp_path):
    with pytest.raises(StoreError) as info:
        ingest(io.StringIO("0,1,2\n50,1,2\n40,1,2\n"), CFG, tmp_path / "x")
    assert "40" in str(info.value) and "50" in str(info.value)
    w = StoreWriter(tmp_path / "y", CFG)
    w.append(np.array([1, 5]), np.zeros((2, 2)))
    with pytest.raises(StoreError, match="3.*5"):
        w.append(np.array([3]), np.zeros((1, 2)))
    with pytest.raises(StoreError):
        w.append(np.array([7]), np.zeros((1, 3)))
    w.abort()


def test_resume_append(tmp_path):
    s, t, v = random_store(tmp_path, n=500)
    s.close()
    w = StoreWriter.resume(tmp_path / "s")
    assert len(w) == 500 and w.last_timestamp == int(t[-1])
    extra_t = t[-1] + np.arange(1, 101, dtype=np.int64) * 7
    extra_v = np.full((100, 2), 3.0)
    w.append(extra_t, extra_v)
    merged = w.commit()
    fresh = ingest_arrays(np.concatenate([t, extra_t]), np.vstack([v, extra_v]), CFG, tmp_path / "f")
    assert np.array_equal(merged.index, fresh.index)
    assert merged.manifest == fresh.manifest
    assert merged.audit().ok


def test_audit_detects_tampering(tmp_path):
    s, _, _ = random_store(tmp_path, n=1000)
    assert s.audit().ok
    s.close()
    path = tmp_path / "s" / INDEX_FILE
    idx = np.fromfile(path, dtype=INDEX_DTYPE)
    idx["code"][10] ^= 1
    idx.tofile(path)
    report = Store.open(tmp_path / "s").audit()
    assert not report.ok
    assert any("codes differ" in p for p in report.problems)
    assert any("checksum" in p for p in report.problems)


def test_truncated_file_rejected(tmp_path):
    s, _, _ = random_store(tmp_path, n=100)
    s.close()
    p = tmp_path / "s" / PRIMARY_FILE
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(StoreError):
        Store.open(tmp_path / "s")


def test_open_missing(tmp_path):
    with pytest.raises(StoreError):
        Store.open(tmp_path / "nope")


@given(
    st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)), min_size=0, max_size=60),
    st.integers(0, 63),
    st.integers(0, 63),
)
@settings(max_examples=60, deadline=None)
def test_scan_property(tmp_path_factory, pts, a, b):
    c0, c1 = min(a, b), max(a, b)
    t = np.arange(len(pts), dtype=np.int64) * 10
    v = np.array(pts, dtype=np.float64).reshape(-1, 2)
    s = ingest_arrays(t, v, GRID8, tmp_path_factory.mktemp("p"))
    codes = encode_array(quantize_array(v, GRID8), GRID8) if len(pts) else np.zeros(0, np.uint64)
    expect = sorted((int(c), int(x)) for c, x in zip(codes, t) if c0 <= c <= c1)
    assert [(e.code, e.t) for e in s.scan_code_range(c0, c1)] == expect
    assert s.audit().ok
