import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentfuzz.coverage import (
    ConfigError, CoverageTrace, Tracer, bucketize, edge_index, read_trace, write_trace,
)
from latentfuzz.targets import InputTooLong, Outcome, execute_target, get_target, target_ids

# nonzero (index, class) pairs of the json target's trace for b"{}" at map size 1024
GOLDEN_EMPTY_OBJECT = [(41, 1), (160, 1), (560, 1), (649, 1)]


def _bucket_table(n):
    for cls, hi in enumerate((0, 1, 2, 3, 7, 15, 31)):
        if n <= hi:
            return cls
    return 7


def test_edge_index_examples():
    assert edge_index(0, 0, 1024) == 0
    assert edge_index(2, 3, 1024) == 2
    assert edge_index(1024, 7, 1024) == 519


def test_edge_index_rejects_bad_map_size():
    with pytest.raises(ConfigError):
        edge_index(1, 2, 1000)


@given(st.integers(0, 2**20), st.integers(0, 2**20), st.integers(0, 16))
def test_edge_index_formula(prev, cur, log_size):
    m = 2**log_size
    assert edge_index(prev, cur, m) == (cur ^ (prev >> 1)) % m


def test_bucketize_examples():
    assert bucketize(0) == 0
    assert bucketize(5) == 4
    assert bucketize(1000) == 7


def test_bucketize_table_exhaustive():
    counts = np.arange(1001)
    assert bucketize(counts).tolist() == [_bucket_table(int(n)) for n in counts]


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_bucketize_monotone(a, b):
    lo, hi = sorted((a, b))
    assert bucketize(lo) <= bucketize(hi)


def test_bucketize_rejects_negative():
    with pytest.raises(ValueError):
        bucketize(-1)


def test_tracer_counts_edges():
    t = Tracer(16)
    for loc in (3, 5, 3, 5):
        t.hit(loc)
    raw = np.zeros(16, int)
    prev = 0
    for loc in (3, 5, 3, 5):
        raw[edge_index(prev, loc, 16)] += 1
        prev = loc
    assert np.array_equal(t.trace().classes, bucketize(raw))


def test_trace_validation():
    with pytest.raises(ValueError):
        CoverageTrace(np.full(16, 8))
    with pytest.raises(ConfigError):
        CoverageTrace(np.zeros(12))
    tr = CoverageTrace(np.zeros(16))
    with pytest.raises(ValueError):
        tr.classes[0] = 1


@given(st.lists(st.integers(0, 7), min_size=64, max_size=64))
def test_trace_bytes_roundtrip(classes):
    tr = CoverageTrace(np.array(classes))
    blob = tr.to_bytes()
    assert blob[:4] == b"GNT1" and int.from_bytes(blob[4:8], "little") == 64
    assert blob[8:] == bytes(classes)
    assert CoverageTrace.from_bytes(blob) == tr


def test_trace_file_roundtrip(tmp_path):
    tr = execute_target("json", b'{"a": [1, 2]}').trace
    write_trace(tmp_path / "t.gnt", tr)
    assert read_trace(tmp_path / "t.gnt") == tr


@pytest.mark.parametrize("blob", [b"", b"GNT0" + bytes(4), b"GNT1" + (16).to_bytes(4, "little") + bytes(15)])
def test_trace_from_bad_bytes(blob):
    with pytest.raises(ValueError):
        CoverageTrace.from_bytes(blob)


# -- targets ------------------------------------------------------------------------

def test_registry():
    assert target_ids() == ["csub", "json", "xmlite"]
    for tid in target_ids():
        assert get_target(tid).fault_predicate_doc
    with pytest.raises(LookupError):
        get_target("nope")


def test_json_golden_trace():
    rec = execute_target("json", b"{}")
    assert rec.outcome is Outcome.ACCEPTED
    nz = [(int(i), int(rec.trace.classes[i])) for i in np.nonzero(rec.trace.classes)[0]]
    assert nz == GOLDEN_EMPTY_OBJECT


def test_json_rejects_control_prefix():
    assert execute_target("json", b"\x00\x01\x02").outcome is Outcome.REJECTED


def test_input_cap_is_an_error():
    with pytest.raises(InputTooLong):
        execute_target("json", b" " * 513)
    assert execute_target("json", b"1" * 20, max_len=20).outcome is Outcome.ACCEPTED


ACCEPTED = {
    "json": [b"{}", b'{"a": [1, -2.5e3, true, null], "b": "x\\n"}', b"[[[]]]"],
    "xmlite": [b"<a/>", b'<a b="c">t&amp;<!-- c --><d/></a>', b"<?pi x?><r><?y?></r>"],
    "csub": [b"int x; x = 1 + 2 * 3;", b"if (a < b) { f(); } else return 0;", b"/* c */ while (i) i = i - 1;"],
}
REJECTED = {
    "json": [b"{", b"[1,]", b'{"a" 1}'],
    "xmlite": [b"<a>", b"<a></b>", b"text"],
    "csub": [b"x = ;", b"int;", b"{"],
}
CRASHING = {
    "json": [b'{"":-1}', b'{"a": {"": -0.5}}'],
    "xmlite": [b"<a><?xml?></a>", b"<a><b/><?XML v?></a>"],
    "csub": [b"x = ();", b"();", b"y = 1 + ();"],
}


@pytest.mark.parametrize("tid", sorted(ACCEPTED))
def test_outcomes(tid):
    for s in ACCEPTED[tid]:
        assert execute_target(tid, s).outcome is Outcome.ACCEPTED, s
    for s in REJECTED[tid]:
        assert execute_target(tid, s).outcome is Outcome.REJECTED, s
    for s in CRASHING[tid]:
        assert execute_target(tid, s).outcome is Outcome.CRASH, s


@pytest.mark.parametrize("tid", sorted(ACCEPTED))
def test_fault_needs_its_predicate(tid):
    near_misses = {"json": [b'{"":1}', b'{"a":-1}', b'[-1]'],
                   "xmlite": [b"<?xml?><a/>", b"<a><?xm?></a>"],
                   "csub": [b"f();", b"x = (1);"]}[tid]
    for s in near_misses:
        assert execute_target(tid, s).outcome is not Outcome.CRASH, s


@pytest.mark.parametrize("tid", sorted(ACCEPTED))
def test_syntax_reaches_traces(tid):
    a, b = ACCEPTED[tid][0], ACCEPTED[tid][1]
    assert execute_target(tid, a).trace != execute_target(tid, b).trace


@pytest.mark.parametrize("tid", sorted(ACCEPTED))
def test_success_never_yields_empty_trace(tid):
    for s in ACCEPTED[tid]:
        assert execute_target(tid, s).trace.nonzero() > 0


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(sorted(ACCEPTED)), st.binary(max_size=64), st.binary(max_size=64))
def test_determinism_and_isolation(tid, a, b):
    alone = execute_target(tid, b)
    execute_target(tid, a)
    again = execute_target(tid, b)
    assert again == alone
    assert alone.outcome in set(Outcome)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(sorted(ACCEPTED)), st.binary(max_size=200), st.sampled_from([64, 1024]))
def test_trace_shape_contract(tid, data, m):
    tr = execute_target(tid, data, map_size=m).trace
    assert tr.map_size == m and tr.classes.max() <= 7
