import itertools
import math

import pytest
from hypothesis import given, strategies as st

from promptrd.core import Metric, PromptRDError, TokenSequence, distortion
from promptrd.dataset import DatasetRecord, MarkovChainParams, answer, generate_dataset
from promptrd.decoder import LiteralDecoder, load_external_distortions, write_external_distortions
from promptrd.constants import (
    EnumerationMode,
    TableMode,
    compute_constants,
    conditional_tables,
    enumerate_compressed,
    read_constants,
    write_constants,
)


def texts(seqs):
    return {m.text for m in seqs}


def test_enumeration_examples():
    assert texts(enumerate_compressed("01", "all_shorter")) == {"0", "1", "01"}
    assert texts(enumerate_compressed("011", "pruned")) == {"0", "1", "01", "11", "011"}
    got = enumerate_compressed("011", "all_shorter")
    assert texts(got) == {"0", "1", "00", "01", "10", "11", "011"}
    assert len(got) == 7


def test_all_shorter_guard():
    with pytest.raises(PromptRDError):
        enumerate_compressed("0" * 13, "all_shorter")
    with pytest.raises(PromptRDError):
        enumerate_compressed(TokenSequence((0, 2, 1), 3), "all_shorter")
    assert len(enumerate_compressed(TokenSequence((0, 2, 1), 3), "pruned")) == 7


@given(st.lists(st.integers(0, 1), min_size=1, max_size=9).map(tuple))
def test_enumeration_counts_and_containment(x):
    pruned = texts(enumerate_compressed(x, "pruned"))
    shorter = texts(enumerate_compressed(x, "all_shorter"))
    n = len(x)
    xt = "".join(map(str, x))
    assert pruned <= shorter
    assert xt in pruned and xt in shorter
    assert len(pruned) <= 2 ** n - 1
    assert len(shorter) == 2 ** n - 2 + 1
    # distinct-subsequence brute force
    brute = {"".join(str(x[i]) for i in pos) for k in range(1, n + 1)
             for pos in itertools.combinations(range(n), k)}
    assert pruned == brute


def test_single_record_table():
    recs = [DatasetRecord("01", "parity", "1", 1.0)]
    table = compute_constants(recs, LiteralDecoder(0.0), Metric.ZERO_ONE, "pruned", "agnostic")
    (g,) = table.groups
    assert {(e.compressed, e.rate, e.distortion) for e in g.entries} == {
        ("0", 0.5, 1.0), ("1", 0.5, 0.0), ("01", 1.0, 0.0)}
    assert g.mass == 1.0


def test_duplicate_records_merge():
    one = [DatasetRecord("0110", "parity", "0")]
    two = one * 2
    dec = LiteralDecoder(1e-3)
    assert compute_constants(one, dec, Metric.LOG_LOSS) == compute_constants(two, dec, Metric.LOG_LOSS)


@pytest.fixture(scope="module")
def mini():
    return generate_dataset(MarkovChainParams(min_len=3, max_len=6), ["parity", "palindrome"], 30, seed=3)


def test_agnostic_is_weighted_sum_of_conditionals(mini):
    dec = LiteralDecoder(1e-3)
    agn = compute_constants(mini, dec, Metric.LOG_LOSS, table_mode="agnostic")
    conds = conditional_tables(mini, dec, Metric.LOG_LOSS)
    p_q = {q: sum(r.weight for r in mini if r.query_id == q) / len(mini) for q in conds}
    expected = {}
    for q, table in conds.items():
        for g in table.groups:
            for e in g.entries:
                expected.setdefault((g.prompt, e.compressed), []).append(p_q[q] * e.distortion)
    for g in agn.groups:
        for e in g.entries:
            assert e.distortion == pytest.approx(math.fsum(expected[(g.prompt, e.compressed)]), rel=1e-12, abs=1e-15)


def test_table_invariants(mini):
    dec = LiteralDecoder(0.0)
    for mode in TableMode:
        table = compute_constants(mini, dec, Metric.ZERO_ONE, "pruned", mode)
        for g in table.groups:
            n = len(g.prompt)
            full = [e for e in g.entries if e.compressed == g.prompt]
            assert len(full) == 1 and full[0].rate == g.mass
            for e in g.entries:
                assert e.rate == pytest.approx(g.mass * len(e.compressed) / n, rel=1e-15)
                k = e.rate / (g.mass / n)
                assert k == pytest.approx(round(k), abs=1e-9)
        if mode is TableMode.AGNOSTIC or mode is TableMode.AVERAGE:
            assert math.fsum(g.mass for g in table.groups) == pytest.approx(1.0, abs=1e-12)
    for q, table in conditional_tables(mini, dec, Metric.ZERO_ONE).items():
        assert math.fsum(g.mass for g in table.groups) == pytest.approx(1.0, abs=1e-12)
        assert table.meta["query_id"] == q


def test_conditional_single_query_restriction(mini):
    dec = LiteralDecoder(0.0)
    table = compute_constants(mini, dec, Metric.ZERO_ONE, table_mode="conditional", query_id="parity")
    assert table.query_ids == []
    assert table.groups == conditional_tables(mini, dec, Metric.ZERO_ONE)["parity"].groups
    with pytest.raises(PromptRDError):
        compute_constants(mini, dec, Metric.ZERO_ONE, table_mode="conditional", query_id="next_bit")


def test_infinite_distortion_kept():
    recs = [DatasetRecord("01", "parity", "1")]
    table = compute_constants(recs, LiteralDecoder(0.0), Metric.LOG_LOSS)
    d = {e.compressed: e.distortion for e in table.groups[0].entries}
    assert d["0"] == math.inf and d["1"] == 0.0


def test_constants_file_roundtrip(tmp_path, mini):
    for mode in TableMode:
        table = compute_constants(mini, LiteralDecoder(1e-3), Metric.LOG_LOSS, table_mode=mode)
        path = tmp_path / f"{mode.value}.csv"
        write_constants(table, path)
        back = read_constants(path)
        assert back.mode is mode
        assert back.groups == table.groups
        header = path.read_text(encoding="utf-8").splitlines()[1]
        assert header == "group_key,query_id,compressed,rate_term,distortion_term"


def test_read_constants_mode_mismatch(tmp_path, fixture_path):
    with pytest.raises(PromptRDError):
        read_constants(fixture_path, "average")


def test_external_roundtrip_matches_decoder(tmp_path, mini):
    dec = LiteralDecoder(1e-3)
    direct = compute_constants(mini, dec, Metric.LOG_LOSS, table_mode="average")
    rows = []
    for g in direct.groups:
        # one answer per (prompt, query) in synthetic data
        y = answer(g.query_id, g.prompt)
        for m in enumerate_compressed(g.prompt):
            rows.append((g.prompt, g.query_id, m, distortion(Metric.LOG_LOSS, y, dec(m, g.query_id))))
    path = tmp_path / "ext.csv"
    write_external_distortions(rows, path)
    ext = load_external_distortions(path)
    via_file = compute_constants(mini, ext, table_mode="average")
    assert via_file.groups == direct.groups


def test_parallel_matches_serial(mini):
    dec = LiteralDecoder(1e-3)
    a = compute_constants(mini, dec, Metric.LOG_LOSS, table_mode="average", workers=1)
    b = compute_constants(mini, dec, Metric.LOG_LOSS, table_mode="average", workers=4)
    assert a == b
