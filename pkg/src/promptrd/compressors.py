"""Desk-scale pruning compressors and the (rate, distortion) evaluation harness.

Every compressor keeps an order-preserving, nonempty subset of the prompt's
tokens:

* ``identity``: no compression.
* ``surprisal``: query-agnostic; keeps the ceil(r * n) most surprising tokens
  under the chain.
* ``query_oracle``: query-aware, variable rate; the shortest subsequence that
  preserves the query's answer.
* ``threshold_dynamic``: query-aware, variable rate; keeps tokens whose score
  max(necessity, normalized surprisal) exceeds a threshold.
"""

from __future__ import annotations

import csv
import functools
import itertools
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from promptrd.core import TokenSequence, as_sequence
from promptrd.dataset import MarkovChainParams, answer, sequence_log_prob
from promptrd.decoder import distortion_fn

PARAM_GRID = (0.04, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.96, 0.99, 1.0)
QUERY_AWARE = frozenset({"query_oracle", "threshold_dynamic"})
EVAL_HEADER = ("compressor", "param", "avg_rate", "avg_distortion")
HIST_HEADER = ("compressor", "param", "rate_bin_lo", "rate_bin_hi", "count")
N_BINS = 10


def _keep(x: TokenSequence, positions) -> TokenSequence:
    return TokenSequence(tuple(x.tokens[i] for i in sorted(positions)), x.alphabet_size)


def compress_surprisal(x, r: float, chain: MarkovChainParams = MarkovChainParams()) -> TokenSequence:
    if not 0.0 < r <= 1.0:
        raise ValueError(f"rate parameter must lie in (0, 1], got {r}")
    x = as_sequence(x)
    n = len(x)
    # the 1e-9 guard keeps e.g. 0.3 * 10 = 3.0000000000000004 from rounding up to 4
    k = max(1, math.ceil(r * n - 1e-9))
    _, s = sequence_log_prob(x, chain)
    order = sorted(range(n), key=lambda i: (-s[i], i))
    return _keep(x, order[:k])


@functools.lru_cache(maxsize=None)
def _oracle(tokens: tuple, query_id: str) -> tuple:
    target = answer(query_id, tokens)
    for k in range(1, len(tokens) + 1):
        for pos in itertools.combinations(range(len(tokens)), k):
            if answer(query_id, [tokens[i] for i in pos]) == target:
                return pos
    return tuple(range(len(tokens)))


def compress_query_oracle(x, query_id: str) -> TokenSequence:
    x = as_sequence(x)
    return _keep(x, _oracle(x.tokens, query_id))


def necessity(x, query_id: str) -> list[int]:
    """1 where deleting that token alone changes the answer (or would empty the prompt)."""
    x = as_sequence(x)
    if len(x) == 1:
        return [1]
    full = answer(query_id, x.tokens)
    return [int(answer(query_id, x.tokens[:i] + x.tokens[i + 1:]) != full) for i in range(len(x))]


def keep_scores(x, query_id: str, chain: MarkovChainParams = MarkovChainParams()) -> list[float]:
    x = as_sequence(x)
    _, s = sequence_log_prob(x, chain)
    top = max(s)
    return [max(float(nec), si / top) for nec, si in zip(necessity(x, query_id), s)]


def compress_threshold_dynamic(x, query_id: str, theta: float,
                               chain: MarkovChainParams = MarkovChainParams()) -> TokenSequence:
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {theta}")
    x = as_sequence(x)
    scores = keep_scores(x, query_id, chain)
    kept = [i for i, v in enumerate(scores) if v > theta]
    if not kept:
        kept = [min(range(len(x)), key=lambda i: (-scores[i], i))]
    return _keep(x, kept)


@dataclass(frozen=True)
class CompressorSpec:
    kind: str
    param: float | None = None

    def __post_init__(self):
        if self.kind == "surprisal" and not (self.param is not None and 0.0 < self.param <= 1.0):
            raise ValueError(f"surprisal needs r in (0, 1], got {self.param}")
        if self.kind == "threshold_dynamic" and not (self.param is not None and 0.0 <= self.param <= 1.0):
            raise ValueError(f"threshold_dynamic needs theta in [0, 1], got {self.param}")
        if self.kind not in ("identity", "surprisal", "query_oracle", "threshold_dynamic"):
            raise ValueError(f"unknown compressor {self.kind!r}")

    @property
    def query_aware(self) -> bool:
        return self.kind in QUERY_AWARE

    @property
    def label(self) -> str:
        return "" if self.param is None else format(self.param, "g")

    def compress(self, x, query_id: str, chain: MarkovChainParams = MarkovChainParams()) -> TokenSequence:
        if self.kind == "identity":
            return as_sequence(x)
        if self.kind == "surprisal":
            return compress_surprisal(x, self.param, chain)
        if self.kind == "query_oracle":
            return compress_query_oracle(x, query_id)
        return compress_threshold_dynamic(x, query_id, self.param, chain)


def default_sweep() -> list[CompressorSpec]:
    specs = [CompressorSpec("identity")]
    specs += [CompressorSpec("surprisal", r) for r in PARAM_GRID]
    specs.append(CompressorSpec("query_oracle"))
    specs += [CompressorSpec("threshold_dynamic", t) for t in PARAM_GRID]
    return specs


@dataclass(frozen=True)
class EvalPoint:
    spec: CompressorSpec
    avg_rate: float
    avg_distortion: float
    rate_histogram: tuple[int, ...]

    @staticmethod
    def bin_edges() -> list[tuple[float, float]]:
        return [(i / N_BINS, (i + 1) / N_BINS) for i in range(N_BINS)]


def _rate_bin(rate: float) -> int:
    return min(N_BINS - 1, int(math.floor(rate * N_BINS + 1e-9)))


def evaluate(spec: CompressorSpec, records: Sequence, decoder, metric=None,
             chain: MarkovChainParams = MarkovChainParams(), workers: int = 1) -> EvalPoint:
    """Weighted average rate and distortion of ``spec`` over ``records``."""
    loss = distortion_fn(decoder, metric)

    def one(rec):
        m = spec.compress(rec.prompt, rec.query_id, chain)
        return len(m) / len(rec.prompt), loss(rec.prompt, rec.query_id, rec.answer, m.text)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, records))
    else:
        results = [one(r) for r in records]
    total = math.fsum(r.weight for r in records)
    avg_rate = math.fsum(r.weight * rate for r, (rate, _) in zip(records, results)) / total
    avg_dist = math.fsum(r.weight * d for r, (_, d) in zip(records, results)) / total
    hist = [0] * N_BINS
    for rate, _ in results:
        hist[_rate_bin(rate)] += 1
    return EvalPoint(spec, avg_rate, avg_dist, tuple(hist))


def write_eval(points: Sequence[EvalPoint], path, hist_path=None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_HEADER)
        for p in points:
            w.writerow([p.spec.kind, p.spec.label, format(p.avg_rate, ".17g"), format(p.avg_distortion, ".17g")])
    if hist_path is not None:
        with open(hist_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HIST_HEADER)
            for p in points:
                for (lo, hi), count in zip(EvalPoint.bin_edges(), p.rate_histogram):
                    w.writerow([p.spec.kind, p.spec.label, format(lo, "g"), format(hi, "g"), count])
