"""End-to-end acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see one PASS/FAIL line per
criterion with its timing and key numbers.
"""

import itertools
import math
import random
import time
from fractions import Fraction as F
from collections import Counter
from contextlib import contextmanager

import pytest

from promptrd.cli import main
from promptrd.compressors import CompressorSpec, default_sweep, evaluate
from promptrd.constants import compute_constants, conditional_tables
from promptrd.core import Infeasible, Metric
from promptrd.dataset import QUERY_IDS, MarkovChainParams, answer, generate_dataset
from promptrd.decoder import LiteralDecoder
from promptrd.frontier import (
    breakpoints_for,
    dual_value,
    expected_conditional,
    frontier_curve,
    lower_left_envelope,
    parse_grid,
)
from promptrd.lp_oracle import solve_primal

GRID = parse_grid("0.1:1.0:0.05")


@contextmanager
def criterion(n, title, budget):
    info = {}
    start = time.perf_counter()
    try:
        yield info
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        print(f"\n[criterion {n}] FAIL {title} ({elapsed:.2f}s): {exc}")
        raise
    elapsed = time.perf_counter() - start
    detail = "".join(f", {k}={v}" for k, v in info.items())
    if elapsed >= budget:
        print(f"\n[criterion {n}] FAIL {title} ({elapsed:.2f}s exceeds {budget}s budget{detail})")
        pytest.fail(f"criterion {n} took {elapsed:.2f}s, budget {budget}s")
    print(f"\n[criterion {n}] PASS {title} ({elapsed:.2f}s{detail})")


@pytest.fixture(scope="module")
def synthetic():
    return generate_dataset(MarkovChainParams(min_len=4, max_len=10), list(QUERY_IDS), 200, seed=0)


def test_criterion_1_golden_fixture(alpha_beta_exact):
    with criterion(1, "golden fixture envelopes, breakpoints and assignments", 1.0):
        a = lower_left_envelope(alpha_beta_exact["alpha"])
        b = lower_left_envelope(alpha_beta_exact["beta"])
        assert [(r, d) for _, r, d in a.points] == [(F("0.1"), F("0.3")), (F("0.2"), F("0.15")), (F("0.4"), F("0.05"))]
        assert [(r, d) for _, r, d in b.points] == [(F("0.2"), F("0.4")), (F("0.4"), F("0.2"))]
        assert list(a.lambdas) == [math.inf, F("1.5"), F("0.5"), 0]
        assert list(b.lambdas) == [math.inf, 1, 0]
        merged = breakpoints_for(alpha_beta_exact)
        assert list(merged.lambdas) == [math.inf, F("1.5"), 1, F("0.5"), 0]
        rows = [(r["lambda"], r["alpha"], r["beta"]) for r in merged.assignment_table()]
        assert rows == [(1.5, "a1", "b1"), (1, "a3", "b1"), (0.5, "a3", "b3"), (0, "a9", "b3")]


def test_criterion_2_strong_duality():
    rng = random.Random(20240101)
    worst = 0.0
    with criterion(2, "strong duality on 1000 random instances x 5 rates", 60.0) as info:
        for _ in range(1000):
            inst = {
                g: [(i, rng.random(), rng.random()) for i in range(rng.randint(1, 15))]
                for g in range(rng.randint(1, 5))
            }
            merged = breakpoints_for(inst)
            lo = float(merged.r_min)
            hi = sum(max(p[1] for p in pts) for pts in inst.values())
            for _ in range(5):
                R = rng.uniform(lo, hi)
                dual = float(dual_value(R, merged))
                primal = solve_primal(inst, R).objective
                gap = abs(dual - primal)
                worst = max(worst, gap / max(1.0, abs(primal)))
                assert gap <= 1e-7 * max(1.0, abs(primal)), (inst, R, dual, primal)
        info["max_rel_gap"] = f"{worst:.2e}"


def test_criterion_3_fixture_dual_values(alpha_beta):
    expected = {0.3: 0.7, 0.5: 0.45, 0.9: 0.25}
    with criterion(3, "fixture dual values confirmed by the primal oracle", 10.0):
        merged = breakpoints_for(alpha_beta)
        for R, want in expected.items():
            primal = solve_primal(alpha_beta, R).objective
            assert abs(primal - want) <= 1e-12
            assert abs(float(dual_value(R, merged)) - primal) <= 1e-12
        low = dual_value(0.2, merged)
        assert isinstance(low, Infeasible) and abs(low.r_min - 0.3) <= 1e-12
        assert isinstance(solve_primal(alpha_beta, 0.2), Infeasible)


def test_criterion_4_synthetic_frontier(synthetic):
    with criterion(4, "synthetic frontier monotone, convex, query-aware orderings", 300.0) as info:
        dec = LiteralDecoder(1e-3)
        metric = Metric.LOG_LOSS
        agn = frontier_curve(compute_constants(synthetic, dec, metric, "pruned", "agnostic"))
        avg = frontier_curve(compute_constants(synthetic, dec, metric, "pruned", "average"))
        conds = {q: frontier_curve(t) for q, t in conditional_tables(synthetic, dec, metric, "pruned").items()}
        counts = Counter(r.query_id for r in synthetic)
        weights = {q: counts[q] / len(synthetic) for q in conds}

        d = [agn(R) for R in GRID]
        feasible = [(R, v) for R, v in zip(GRID, d) if not isinstance(v, Infeasible)]
        assert len(feasible) >= 3
        vals = [v for _, v in feasible]
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))
        assert all(vals[i] <= (vals[i - 1] + vals[i + 1]) / 2 + 1e-9 for i in range(1, len(vals) - 1))

        checked = 0
        for R in GRID:
            da, dq = agn(R), avg(R)
            if not isinstance(da, Infeasible):
                assert not isinstance(dq, Infeasible) and dq <= da + 1e-9
            ec = expected_conditional(conds, weights, R)
            if not isinstance(ec, Infeasible):
                assert not isinstance(dq, Infeasible) and dq <= ec + 1e-9
                checked += 1
        info["feasible_points"] = len(feasible)
        info["expected_conditional_checks"] = checked


def test_criterion_5_pruned_vs_all():
    records = generate_dataset(MarkovChainParams(min_len=4, max_len=8), list(QUERY_IDS), 200, seed=0)
    with criterion(5, "all-subsequence frontier never above pruned frontier", 600.0) as info:
        dec = LiteralDecoder(1e-3)
        gaps = []
        for mode in ("agnostic", "average"):
            pruned = frontier_curve(compute_constants(records, dec, Metric.LOG_LOSS, "pruned", mode))
            full = frontier_curve(compute_constants(records, dec, Metric.LOG_LOSS, "all_shorter", mode))
            for R in GRID:
                p, a = pruned(R), full(R)
                if isinstance(p, Infeasible):
                    continue
                assert not isinstance(a, Infeasible)
                assert a <= p + 1e-12, (mode, R, a, p)
                gaps.append(p - a)
        info["max_gap"] = f"{max(gaps):.6g}"


def test_criterion_6_compressor_dominance(synthetic):
    with criterion(6, "every compressor point on or above its matching frontier", 300.0) as info:
        dec = LiteralDecoder(1e-3)
        metric = Metric.LOG_LOSS
        agn = frontier_curve(compute_constants(synthetic, dec, metric, "pruned", "agnostic"))
        avg = frontier_curve(compute_constants(synthetic, dec, metric, "pruned", "average"))
        slack = math.inf
        for spec in default_sweep():
            p = evaluate(spec, synthetic, dec, metric)
            bound = (avg if spec.query_aware else agn)(p.avg_rate)
            assert not isinstance(bound, Infeasible), spec
            assert p.avg_distortion >= bound - 1e-9, (spec, p, bound)
            slack = min(slack, p.avg_distortion - bound)

        zero = evaluate(CompressorSpec("query_oracle"), synthetic, LiteralDecoder(0.0), Metric.ZERO_ONE)
        assert zero.avg_distortion == 0.0
        info["points"] = len(default_sweep())
        info["min_slack"] = f"{slack:.3g}"


def test_criterion_7_determinism(tmp_path):
    manifest = tmp_path / "m.toml"
    manifest.write_text('version = 1\nseed = 0\nper_query = 200\ngrid = "0.1:1.0:0.05"\n')

    def run(name, threads):
        out = tmp_path / name
        assert main(["reproduce", "--manifest", str(manifest), "--out-dir", str(out),
                     "--threads", str(threads)]) == 0
        return {p.name: p.read_bytes() for p in sorted(out.iterdir())}

    with criterion(7, "reproduce is byte-identical across runs and thread counts", 600.0) as info:
        first, second, threaded = run("a", 1), run("b", 1), run("c", 4)
        assert first == second == threaded
        info["files"] = len(first)


def test_criterion_8_answer_functions():
    rows = [
        ("count_ones", "110011111", "7"),
        ("count_zeros", "11111", "0"),
        ("parity", "00000111", "1"),
        ("longest_run", "11011111", "5"),
        ("palindrome", "0110", "Yes"),
        ("transitions", "1100111100", "3"),
        ("next_bit", "111111", "1"),
    ]
    with criterion(8, "answer table rows and exhaustive cross-identities", 5.0) as info:
        for q, x, want in rows:
            assert answer(q, x) == want
        n = 0
        for length in range(1, 11):
            for bits in itertools.product((0, 1), repeat=length):
                runs = 1 + sum(a != b for a, b in zip(bits, bits[1:]))
                assert int(answer("parity", bits)) == int(answer("count_ones", bits)) % 2
                assert int(answer("transitions", bits)) == runs - 1
                assert answer("palindrome", bits) == answer("palindrome", bits[::-1])
                n += 1
        assert n == 2046
        info["strings"] = n
