"""Shared value types, distortion metrics and probability helpers."""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from types import MappingProxyType


class PromptRDError(Exception):
    """Base class for data and guard errors raised by this package."""


class InfiniteDistortionError(PromptRDError):
    """A group has no finite-distortion compressed prompt."""

    def __init__(self, key):
        super().__init__(f"group {key!r} has no finite distortion entry")
        self.key = key


@dataclass(frozen=True, order=True)
class TokenSequence:
    """A nonempty sequence of token ids over an alphabet ``{0, ..., alphabet_size - 1}``."""

    tokens: tuple[int, ...]
    alphabet_size: int = 2

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not self.tokens:
            raise ValueError("token sequences must be nonempty")
        if self.alphabet_size < 1:
            raise ValueError("alphabet_size must be positive")
        bad = [t for t in self.tokens if not 0 <= t < self.alphabet_size]
        if bad:
            raise ValueError(f"token ids {bad} outside alphabet of size {self.alphabet_size}")

    @classmethod
    def parse(cls, text: str, alphabet_size: int = 2) -> TokenSequence:
        """Parse ``"0110"`` (binary) or whitespace separated ids such as ``"3 0 12"``."""
        text = text.strip()
        if any(c.isspace() for c in text):
            return cls(tuple(int(t) for t in text.split()), alphabet_size)
        if alphabet_size <= 10:
            return cls(tuple(int(c) for c in text), alphabet_size)
        return cls((int(text),), alphabet_size)

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def __str__(self) -> str:
        return self.text

    @property
    def text(self) -> str:
        if self.alphabet_size <= 10:
            return "".join(str(t) for t in self.tokens)
        return " ".join(str(t) for t in self.tokens)


def as_sequence(x, alphabet_size: int = 2) -> TokenSequence:
    if isinstance(x, TokenSequence):
        return x
    if isinstance(x, str):
        return TokenSequence.parse(x, alphabet_size)
    return TokenSequence(tuple(x), alphabet_size)


def canonical_order(symbols: Iterable[str]) -> list[str]:
    """Lexicographic order over symbol strings; used for every tie-break on answers."""
    return sorted(symbols)


@dataclass(frozen=True)
class AnswerDistribution:
    """Probability mass function over answer symbols."""

    pmf: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        pmf = {str(k): float(v) for k, v in dict(self.pmf).items()}
        if any(v < 0 or math.isnan(v) for v in pmf.values()):
            raise ValueError(f"negative or NaN probability in {pmf}")
        total = math.fsum(pmf.values())
        if pmf and abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "pmf", MappingProxyType(pmf))

    def prob(self, y: str) -> float:
        return self.pmf.get(y, 0.0)

    @classmethod
    def point_mass(cls, y: str) -> AnswerDistribution:
        return cls({y: 1.0})

    def __eq__(self, other):
        if not isinstance(other, AnswerDistribution):
            return NotImplemented
        return dict(self.pmf) == dict(other.pmf)

    def __hash__(self):
        return hash(tuple(sorted(self.pmf.items())))


class Metric(str, enum.Enum):
    LOG_LOSS = "log"
    ZERO_ONE = "01"

    @classmethod
    def parse(cls, name: str) -> Metric:
        aliases = {"log": cls.LOG_LOSS, "log-loss": cls.LOG_LOSS, "logloss": cls.LOG_LOSS,
                   "01": cls.ZERO_ONE, "0/1": cls.ZERO_ONE, "zero-one": cls.ZERO_ONE,
                   "zero-one-loss": cls.ZERO_ONE}
        try:
            return aliases[name.lower()]
        except KeyError:
            raise ValueError(f"unknown metric {name!r}") from None


def argmax_answer(p: AnswerDistribution) -> str:
    """Most likely answer; ties go to the canonically smallest symbol."""
    if not p.pmf:
        raise ValueError("argmax of an empty distribution")
    best = max(p.pmf.values())
    return canonical_order(y for y, v in p.pmf.items() if v == best)[0]


def distortion(metric: Metric, y: str, p: AnswerDistribution) -> float:
    """Loss of answer distribution ``p`` against the true answer ``y``.

    Log loss is in nats and is ``inf`` when ``p(y) == 0``. The 0/1 loss is 0
    exactly when ``y`` is the tie-broken argmax of ``p``.
    """
    metric = Metric(metric)
    if metric is Metric.LOG_LOSS:
        py = p.prob(y)
        if py <= 0.0:
            return math.inf
        return -math.log(py) if py < 1.0 else 0.0
    if not p.pmf:
        return 1.0
    return 0.0 if argmax_answer(p) == y else 1.0


@dataclass(frozen=True)
class Infeasible:
    """Result of evaluating a distortion-rate function below its minimum rate."""

    r_min: float
