import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zorder_events.masks import (
    BUILTIN_MASKS,
    MaskParseError,
    SearchMask,
    StageBox,
    TemporalParams,
    builtin_mask,
    parse_mask,
    random_masks,
    render_mask,
)
from zorder_events.synth import default_config

BENCH_BOUNDS = ((-14.0, -4.0), (-2.5, 2.5))


def test_default_temporal_params():
    p = TemporalParams()
    assert (p.t_min_dur, p.t_max_dur, p.t_min_gap, p.t_max_gap, p.t_max_outlier) == (
        2000, 3000, -200, 2000, 50,
    )


def test_parse_braking():
    m = parse_mask("stage -12 -5 -3 3\n")
    assert m.stage_count == 1
    assert m.stages[0] == StageBox((-12, -3), (-5, 3))
    assert m.params == TemporalParams()


def test_parse_lane_change_builtin():
    m = builtin_mask("lane_change")
    assert m.name == "lane_change"
    assert m.stage_count == 2
    assert m.stages[0].hi[1] < 0 < m.stages[1].lo[1]
    assert (m.params.t_min_dur, m.params.t_max_dur) == (1000, 1500)
    assert m.params.t_min_gap == -200


def test_parse_all_directives_and_comments():
    text = """
    # comment only
    name  test-mask
    stage 0 1 2 3   # trailing
    STAGE 0.5 1 2 2.5
    dur 100 200
    gap -5 5
    outlier 0
    """
    m = parse_mask(text)
    assert m.name == "test-mask"
    assert m.stage_count == 2
    assert m.params == TemporalParams(100, 200, -5, 5, 0)
    assert parse_mask(text, name="override").name == "override"


@pytest.mark.parametrize(
    "text, field, line",
    [
        ("", "stage", None),
        ("# nothing\n", "stage", None),
        ("stage 1 0 0 1\n", "stage", 1),
        ("stage 0 1 0\n", "stage", 1),
        ("stage 0 x 0 1\n", "stage", 1),
        ("stage 0 1\ndur 3000 2000\n", "dur", None),
        ("stage 0 1\ngap 10 -10\n", "gap", None),
        ("stage 0 1\noutlier -1\n", "outlier", None),
        ("stage 0 1\ndur 1\n", "dur", 2),
        ("stage 0 1\nspeed 3\n", "speed", 2),
        ("stage 0 1\nstage 0 1 0 1\n", "stage", None),
    ],
)
def test_parse_errors_name_field(text, field, line):
    with pytest.raises(MaskParseError) as info:
        parse_mask(text)
    assert info.value.field == field
    if line is not None:
        assert info.value.line == line


def test_dims_mismatch_against_store_config():
    m = parse_mask("stage 0 1\n")
    with pytest.raises(ValueError):
        m.lattice_boxes(default_config())


def test_builtin_masks_round_trip():
    for name in BUILTIN_MASKS:
        m = builtin_mask(name)
        assert parse_mask(render_mask(m)) == m


finite = st.floats(-1e6, 1e6, allow_nan=False)


@st.composite
def masks(draw):
    dims = draw(st.integers(1, 3))
    stages = []
    for _ in range(draw(st.integers(1, 3))):
        pairs = [sorted((draw(finite), draw(finite))) for _ in range(dims)]
        stages.append(StageBox([a for a, _ in pairs], [b for _, b in pairs]))
    d0 = draw(st.integers(0, 10_000))
    g0 = draw(st.integers(-5000, 5000))
    params = TemporalParams(
        d0, d0 + draw(st.integers(0, 10_000)), g0, g0 + draw(st.integers(0, 10_000)),
        draw(st.integers(0, 500)),
    )
    name = draw(st.from_regex(r"[A-Za-z0-9_.-]{1,12}", fullmatch=True))
    return SearchMask(tuple(stages), params, name)


@given(masks())
@settings(max_examples=200, deadline=None)
def test_render_parse_round_trip(m):
    assert parse_mask(render_mask(m)) == m


def test_random_masks_deterministic():
    a = random_masks(7, 3, 5, BENCH_BOUNDS)
    b = random_masks(7, 3, 5, BENCH_BOUNDS)
    assert a == b
    assert a != random_masks(8, 3, 5, BENCH_BOUNDS)
    assert [m.name for m in a] == [f"r7-s3-{i}" for i in range(5)]


def test_fifteen_masks():
    ms = [m for k in (1, 2, 3) for m in random_masks(k, k, 5, BENCH_BOUNDS)]
    assert len(ms) == 15
    assert sorted(m.stage_count for m in ms) == [1] * 5 + [2] * 5 + [3] * 5


def test_random_boxes_within_bounds_1000_seeds():
    for seed in range(1000):
        for m in random_masks(seed, 1 + seed % 3, 2, BENCH_BOUNDS):
            for s in m.stages:
                for d, (lo, hi) in enumerate(BENCH_BOUNDS):
                    assert lo <= s.lo[d] <= s.hi[d] <= hi


@pytest.mark.parametrize("kwargs", [dict(stage_count=0), dict(count=0), dict(width_fraction=(0.5, 0.2))])
def test_random_masks_errors(kwargs):
    args = dict(rng_seed=0, stage_count=1, count=1, value_bounds=BENCH_BOUNDS) | kwargs
    with pytest.raises(ValueError):
        random_masks(**args)
