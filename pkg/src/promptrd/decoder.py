"""Fixed decoders mapping (compressed prompt, query) to an answer distribution.

Two in-process decoders are provided plus an adapter for distortions that
were computed offline by some other model:

* ``LiteralDecoder`` answers the query as if the compressed prompt were the
  whole prompt, mixed with ``eps`` uniform smoothing.
* ``BayesSubsequenceDecoder`` returns the exact posterior over answers given
  that the compressed prompt is a subsequence of a chain-distributed prompt.
* ``ExternalDistortions`` is a lookup table keyed by (prompt, query, compressed).
"""

from __future__ import annotations

import csv
import functools
import itertools
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field

import numpy as np

from promptrd.core import AnswerDistribution, Metric, PromptRDError, TokenSequence, distortion
from promptrd.dataset import MarkovChainParams, answer, query_spec

EXTERNAL_HEADER = ("prompt", "query_id", "compressed", "distortion")


def default_eps(metric: Metric) -> float:
    return 1e-3 if Metric(metric) is Metric.LOG_LOSS else 0.0


def _text(m) -> str:
    return m.text if isinstance(m, TokenSequence) else str(m)


def decode_literal(m, query_id: str, eps: float = 0.0, max_len: int = 10) -> AnswerDistribution:
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    alphabet = query_spec(query_id, max(max_len, len(m))).answer_alphabet
    y = answer(query_id, m)
    pmf = {a: eps / len(alphabet) for a in alphabet}
    pmf[y] = pmf.get(y, 0.0) + (1.0 - eps)
    return AnswerDistribution(pmf)


class LiteralDecoder:
    def __init__(self, eps: float = 0.0, max_len: int = 10):
        if not 0.0 <= eps < 1.0:
            raise ValueError(f"eps must lie in [0, 1), got {eps}")
        self.eps = eps
        self.max_len = max_len
        self._cache = functools.lru_cache(maxsize=None)(self._decode)

    def _decode(self, m: str, query_id: str) -> AnswerDistribution:
        return decode_literal(m, query_id, self.eps, self.max_len)

    def __call__(self, m, query_id: str) -> AnswerDistribution:
        return self._cache(_text(m), query_id)

    def describe(self) -> str:
        return f"literal(eps={self.eps!r})"


class BayesSubsequenceDecoder:
    """Posterior answer distribution given that ``m`` is a subsequence of the prompt.

    Prompt lengths are uniform on ``[min_len, max_len]`` and tokens follow the
    chain. Every candidate prompt is held in one padded matrix so a
    subsequence test for ``m`` is ``len(prompt)`` vectorized pointer updates.
    """

    def __init__(self, chain: MarkovChainParams = MarkovChainParams()):
        self.chain = chain
        rows, lengths, logp = [], [], []
        for n in range(chain.min_len, chain.max_len + 1):
            for bits in itertools.product((0, 1), repeat=n):
                rows.append(bits + (-1,) * (chain.max_len - n))
                lengths.append(n)
                stays = sum(a == b for a, b in zip(bits, bits[1:]))
                logp.append(math.log(chain.initial_dist[bits[0]]) + stays * math.log(chain.stay_prob)
                            + (n - 1 - stays) * math.log(chain.transition_prob))
        self._x = np.array(rows, dtype=np.int8)
        self._len = np.array(lengths)
        # uniform length prior is a common factor, dropped before normalization
        self._weight = np.exp(np.array(logp))
        self._answers: dict[str, np.ndarray] = {}
        self._cache = functools.lru_cache(maxsize=None)(self._decode)

    def _answer_column(self, query_id: str) -> np.ndarray:
        if query_id not in self._answers:
            col = [answer(query_id, row[:n]) for row, n in zip(self._x.tolist(), self._len)]
            self._answers[query_id] = np.array(col, dtype=object)
        return self._answers[query_id]

    def consistent(self, m) -> np.ndarray:
        """Boolean mask of candidate prompts containing ``m`` as a subsequence."""
        target = np.array([int(c) for c in _text(m)], dtype=np.int8)
        k = len(target)
        ptr = np.zeros(len(self._x), dtype=np.int64)
        padded = np.append(target, -2)
        for i in range(self.chain.max_len):
            hit = (self._x[:, i] == padded[np.minimum(ptr, k)]) & (ptr < k)
            ptr += hit
        return (ptr == k) & (self._len >= k)

    def _decode(self, m: str, query_id: str) -> AnswerDistribution:
        alphabet = query_spec(query_id, self.chain.max_len).answer_alphabet
        mask = self.consistent(m)
        if len(m) > self.chain.max_len or not mask.any():
            return AnswerDistribution({a: 1.0 / len(alphabet) for a in alphabet})
        answers = self._answer_column(query_id)[mask]
        w = self._weight[mask]
        total = math.fsum(w)
        pmf = {a: 0.0 for a in alphabet}
        for a in np.unique(answers):
            pmf[a] = math.fsum(w[answers == a]) / total
        # fsum of each part then division can leave the total 1 +- 1 ulp, well inside tolerance
        return AnswerDistribution(pmf)

    def __call__(self, m, query_id: str) -> AnswerDistribution:
        return self._cache(_text(m), query_id)

    def describe(self) -> str:
        c = self.chain
        return f"bayes(stay={c.stay_prob!r},min_len={c.min_len},max_len={c.max_len})"


def decode_bayes_subsequence(m, query_id: str, chain: MarkovChainParams = MarkovChainParams()
                             ) -> AnswerDistribution:
    return _bayes_for(chain)(m, query_id)


@functools.lru_cache(maxsize=8)
def _bayes_for(chain: MarkovChainParams) -> BayesSubsequenceDecoder:
    return BayesSubsequenceDecoder(chain)


class ExternalDistortions:
    """Offline distortions keyed by (prompt, query_id, compressed)."""

    def __init__(self, table: dict[tuple[str, str, str], float], source: str = "<memory>"):
        self.table = dict(table)
        self.source = source

    def lookup(self, prompt, query_id: str, compressed) -> float:
        key = (_text(prompt), query_id, _text(compressed))
        try:
            return self.table[key]
        except KeyError:
            raise PromptRDError(f"no external distortion for {key}") from None

    def __call__(self, prompt, query_id: str, compressed) -> float:
        return self.lookup(prompt, query_id, compressed)

    def describe(self) -> str:
        return f"external({self.source})"


def load_external_distortions(path) -> ExternalDistortions:
    table: dict[tuple[str, str, str], float] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(h.strip() for h in header or ()) != EXTERNAL_HEADER:
            raise PromptRDError(f"{path}: expected header {','.join(EXTERNAL_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 4:
                raise PromptRDError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                d = float(row[3])
            except ValueError:
                raise PromptRDError(f"{path}:{lineno}: bad distortion {row[3]!r}") from None
            key = (row[0].strip(), row[1].strip(), row[2].strip())
            if key in table and table[key] != d:
                raise PromptRDError(f"{path}:{lineno}: conflicting duplicate row for {key}")
            table[key] = d
    return ExternalDistortions(table, str(path))


def write_external_distortions(rows: Iterable[tuple], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EXTERNAL_HEADER)
        for prompt, query_id, compressed, d in rows:
            w.writerow([_text(prompt), query_id, _text(compressed), format(float(d), ".17g")])


@dataclass(frozen=True)
class DecoderSpec:
    """Serializable description of a decoder, as stored in run manifests."""

    kind: str = "literal"
    eps: float = 0.0
    chain: MarkovChainParams = field(default_factory=MarkovChainParams)
    table: str | None = None

    def build(self):
        if self.kind == "literal":
            return LiteralDecoder(self.eps, self.chain.max_len)
        if self.kind == "bayes":
            return _bayes_for(self.chain)
        if self.kind == "external":
            if not self.table:
                raise PromptRDError("external decoder needs a distortion table path")
            return load_external_distortions(self.table)
        raise PromptRDError(f"unknown decoder kind {self.kind!r}")


DistortionFn = Callable[[TokenSequence, str, str, str], float]


def distortion_fn(decoder, metric: Metric | None) -> DistortionFn:
    """Uniform ``(prompt, query_id, answer, compressed_text) -> loss`` view of any decoder."""
    if isinstance(decoder, ExternalDistortions):
        return lambda x, q, y, m: decoder.lookup(x, q, m)
    if metric is None:
        raise ValueError("a metric is required for in-process decoders")
    metric = Metric(metric)

    @functools.lru_cache(maxsize=None)
    def loss(q: str, y: str, m: str) -> float:
        return distortion(metric, y, decoder(m, q))

    return lambda x, q, y, m: loss(q, y, _text(m))
