"""Synthetic binary-prompt dataset: Markov-chain prompts, seven queries, JSONL I/O.

Random draws use NumPy's ``Generator(PCG64(seed))``, a documented and
platform-independent bit generator, so a seed pins every output byte.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from promptrd.core import PromptRDError, TokenSequence, as_sequence

QUERY_TEXTS = {
    "count_ones": "Count the number of 1s.",
    "count_zeros": "Count the number of 0s.",
    "parity": "Compute the parity.",
    "longest_run": "What is the length of the longest subsequence of 0s or 1s?",
    "palindrome": "Is the binary string a palindrome?",
    "transitions": "Count the number of transitions from 0 to 1 and 1 to 0.",
    "next_bit": "Predict the next bit.",
}
QUERY_IDS = tuple(QUERY_TEXTS)


@dataclass(frozen=True)
class MarkovChainParams:
    stay_prob: float = 0.9
    initial_dist: tuple[float, float] = (0.5, 0.5)
    min_len: int = 4
    max_len: int = 10

    def __post_init__(self):
        if not 0.0 < self.stay_prob < 1.0:
            raise ValueError(f"stay_prob must lie in (0, 1), got {self.stay_prob}")
        if len(self.initial_dist) != 2 or abs(sum(self.initial_dist) - 1.0) > 1e-12:
            raise ValueError(f"initial_dist must be a PMF over {{0, 1}}, got {self.initial_dist}")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError(f"need 1 <= min_len <= max_len, got {self.min_len}, {self.max_len}")

    @property
    def transition_prob(self) -> float:
        return 1.0 - self.stay_prob


@dataclass(frozen=True)
class QuerySpec:
    id: str
    text: str
    answer_alphabet: tuple[str, ...]


def query_spec(query_id: str, max_len: int = 10) -> QuerySpec:
    """Query metadata; answer alphabets cover every binary string of length <= ``max_len``."""
    if query_id not in QUERY_TEXTS:
        raise PromptRDError(f"unknown query id {query_id!r}")
    if query_id in ("count_ones", "count_zeros"):
        alphabet = [str(i) for i in range(max_len + 1)]
    elif query_id == "longest_run":
        alphabet = [str(i) for i in range(1, max_len + 1)]
    elif query_id == "transitions":
        alphabet = [str(i) for i in range(max_len)]
    elif query_id == "palindrome":
        alphabet = ["No", "Yes"]
    else:
        alphabet = ["0", "1"]
    return QuerySpec(query_id, QUERY_TEXTS[query_id], tuple(alphabet))


def all_queries(max_len: int = 10) -> list[QuerySpec]:
    return [query_spec(q, max_len) for q in QUERY_IDS]


def _bits(x) -> tuple[int, ...]:
    if isinstance(x, str):
        return tuple(int(c) for c in x)
    return tuple(x)


def _longest_run(bits):
    best = run = 1
    for a, b in zip(bits, bits[1:]):
        run = run + 1 if a == b else 1
        best = max(best, run)
    return best


def answer(query_id: str, x) -> str:
    """Deterministic answer of ``query_id`` on the binary prompt ``x``.

    ``next_bit`` returns the last token, the most likely continuation of a
    chain that prefers to stay in its current state.
    """
    bits = _bits(x)
    if query_id == "count_ones":
        return str(sum(bits))
    if query_id == "count_zeros":
        return str(len(bits) - sum(bits))
    if query_id == "parity":
        return str(sum(bits) % 2)
    if query_id == "longest_run":
        return str(_longest_run(bits))
    if query_id == "palindrome":
        return "Yes" if bits == bits[::-1] else "No"
    if query_id == "transitions":
        return str(sum(a != b for a, b in zip(bits, bits[1:])))
    if query_id == "next_bit":
        return str(bits[-1])
    raise PromptRDError(f"unknown query id {query_id!r}")


@dataclass(frozen=True)
class DatasetRecord:
    prompt: TokenSequence
    query_id: str
    answer: str
    weight: float = 1.0
    query_text: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "prompt", as_sequence(self.prompt))
        if not self.query_text:
            object.__setattr__(self, "query_text", QUERY_TEXTS.get(self.query_id, ""))
        if not self.weight > 0:
            raise ValueError(f"record weight must be positive, got {self.weight}")


def sample_prompt(rng: np.random.Generator, params: MarkovChainParams) -> TokenSequence:
    n = int(rng.integers(params.min_len, params.max_len + 1))
    tokens = [int(rng.random() >= params.initial_dist[0])]
    for u in rng.random(n - 1):
        tokens.append(tokens[-1] if u < params.stay_prob else 1 - tokens[-1])
    return TokenSequence(tuple(tokens))


def generate_dataset(params: MarkovChainParams, queries: Sequence[QuerySpec | str],
                     n_per_query: int, seed: int) -> list[DatasetRecord]:
    """Draw ``n_per_query`` i.i.d. chain prompts for each query, in query order."""
    if n_per_query < 1:
        raise ValueError("n_per_query must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    records = []
    for q in queries:
        qid = q.id if isinstance(q, QuerySpec) else q
        for _ in range(n_per_query):
            x = sample_prompt(rng, params)
            records.append(DatasetRecord(x, qid, answer(qid, x), 1.0))
    return records


def sequence_log_prob(x, params: MarkovChainParams = MarkovChainParams()) -> tuple[float, list[float]]:
    """Chain log-probability of ``x`` and the per-token surprisals (nats)."""
    bits = _bits(x)
    surprisals = [-math.log(params.initial_dist[bits[0]])]
    for prev, cur in zip(bits, bits[1:]):
        surprisals.append(-math.log(params.stay_prob if cur == prev else params.transition_prob))
    return -math.fsum(surprisals), surprisals


def empirical_distribution(records: Iterable[DatasetRecord]) -> dict[tuple[TokenSequence, str, str], float]:
    """Normalized joint mass over (prompt, query, answer); duplicates merge by weight."""
    buckets: dict[tuple, list[float]] = {}
    for r in records:
        buckets.setdefault((r.prompt, r.query_id, r.answer), []).append(r.weight)
    total = math.fsum(w for ws in buckets.values() for w in ws)
    if not total > 0:
        raise PromptRDError("dataset is empty")
    return {k: math.fsum(ws) / total for k, ws in sorted(buckets.items())}


def write_dataset(records: Iterable[DatasetRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            row = {"prompt": r.prompt.text, "query_id": r.query_id, "query_text": r.query_text,
                   "answer": r.answer, "weight": r.weight}
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_dataset(path, alphabet_size: int = 2) -> list[DatasetRecord]:
    records = []
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                records.append(DatasetRecord(
                    TokenSequence.parse(row["prompt"], alphabet_size), row["query_id"],
                    str(row["answer"]), float(row.get("weight", 1.0)), row.get("query_text", "")))
            except (ValueError, KeyError, TypeError) as exc:
                raise PromptRDError(f"{path}:{lineno}: bad dataset record ({exc})") from exc
    return records
