"""Compressed-prompt spaces and the per-group (rate, distortion) constant tables.

A table holds, for every group, the points ``(R_{x,m}, D_{x,m})`` over the
compressed prompts ``m`` of ``x``:

* agnostic: one group per prompt ``x``, mass ``P_X(x)``;
* conditional: one group per prompt for a fixed query ``q``, mass ``P_{X|Q}(x|q)``;
* average: one group per (prompt, query) pair, mass ``P_{XQ}(x, q)``.

``R_{x,m} = mass * len(m) / len(x)`` and ``D_{x,m}`` is the mass times the
expected loss of the decoder on ``m`` over the empirical answers for the group.
"""

from __future__ import annotations

import csv
import enum
import itertools
import math
from collections import defaultdict
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from promptrd.core import PromptRDError, TokenSequence, as_sequence
from promptrd.dataset import DatasetRecord, empirical_distribution
from promptrd.decoder import distortion_fn

CONSTANTS_HEADER = ("group_key", "query_id", "compressed", "rate_term", "distortion_term")
ALL_SHORTER_MAX_LEN = 12


class EnumerationMode(str, enum.Enum):
    ALL_SHORTER = "all_shorter"
    PRUNED = "pruned"


class TableMode(str, enum.Enum):
    AGNOSTIC = "agnostic"
    CONDITIONAL = "conditional"
    AVERAGE = "average"


def enumerate_compressed(x, mode: EnumerationMode | str = EnumerationMode.PRUNED) -> list[TokenSequence]:
    """Candidate compressed prompts for ``x``, always including ``x`` itself.

    ``pruned`` gives every distinct nonempty order-preserving subsequence;
    ``all_shorter`` gives every nonempty sequence shorter than ``x``.
    """
    x = as_sequence(x)
    mode = EnumerationMode(mode)
    n = len(x)
    if mode is EnumerationMode.ALL_SHORTER:
        if x.alphabet_size != 2 or n > ALL_SHORTER_MAX_LEN:
            raise PromptRDError(
                f"all_shorter enumeration needs a binary alphabet and len <= {ALL_SHORTER_MAX_LEN}; "
                f"got alphabet {x.alphabet_size}, len {n}")
        out = {x}
        for k in range(1, n):
            out.update(TokenSequence(t, 2) for t in itertools.product((0, 1), repeat=k))
    else:
        out = set()
        for k in range(1, n + 1):
            out.update(TokenSequence(t, x.alphabet_size) for t in set(itertools.combinations(x.tokens, k)))
    return sorted(out, key=lambda m: (len(m), m.tokens))


@dataclass(frozen=True)
class Entry:
    compressed: str
    rate: float
    distortion: float


@dataclass(frozen=True)
class Group:
    prompt: str
    query_id: str | None
    entries: tuple[Entry, ...]
    mass: float | None = None

    @property
    def key(self):
        return self.prompt if self.query_id is None else (self.prompt, self.query_id)

    def points(self) -> list[tuple[str, float, float]]:
        return [(e.compressed, e.rate, e.distortion) for e in self.entries]


@dataclass(frozen=True)
class ConstantsTable:
    mode: TableMode
    groups: tuple[Group, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "mode", TableMode(self.mode))
        groups = tuple(sorted(self.groups, key=lambda g: (g.prompt, g.query_id or "")))
        object.__setattr__(self, "groups", groups)

    def point_sets(self) -> dict:
        return {g.key: g.points() for g in self.groups}

    @property
    def query_ids(self) -> list[str]:
        return sorted({g.query_id for g in self.groups if g.query_id is not None})

    def split_by_query(self) -> dict[str, ConstantsTable]:
        """Per-query conditional tables, with groups re-keyed by prompt."""
        if self.mode is not TableMode.CONDITIONAL:
            raise PromptRDError(f"only conditional tables split by query, not {self.mode.value}")
        out = {}
        for q in self.query_ids:
            groups = [Group(g.prompt, None, g.entries, g.mass) for g in self.groups if g.query_id == q]
            out[q] = ConstantsTable(TableMode.CONDITIONAL, tuple(groups), {**self.meta, "query_id": q})
        return out


def _group_entries(x: TokenSequence, candidates, weighted_answers, mass, loss, n_total):
    """One group's entries; ``weighted_answers`` is a list of (query, answer, joint mass)."""
    entries = []
    for m in candidates:
        terms = [w * loss(x, q, y, m.text) for q, y, w in weighted_answers]
        if any(math.isinf(t) for t in terms):
            d = math.inf
        else:
            d = math.fsum(terms)
        entries.append(Entry(m.text, mass * (len(m) / n_total), d))
    return tuple(entries)


def compute_constants(records: Iterable[DatasetRecord], decoder, metric=None,
                      mode: EnumerationMode | str = EnumerationMode.PRUNED,
                      table_mode: TableMode | str = TableMode.AGNOSTIC,
                      query_id: str | None = None, workers: int = 1) -> ConstantsTable:
    """Build the constant table for ``table_mode``.

    For ``conditional`` pass ``query_id`` to get that query's table, or leave it
    ``None`` to get all queries in one table whose groups are keyed by
    (prompt, query); ``ConstantsTable.split_by_query`` separates them.
    Infinite distortions are kept as ``inf``.
    """
    table_mode = TableMode(table_mode)
    mode = EnumerationMode(mode)
    joint = empirical_distribution(records)
    loss = distortion_fn(decoder, metric)

    # group spec: (prompt, query_id-or-None, [(q, y, mass-in-group-units)], group mass)
    specs = []
    if table_mode is TableMode.AGNOSTIC:
        by_x = defaultdict(list)
        for (x, q, y), p in joint.items():
            by_x[x].append((q, y, p))
        for x, rows in by_x.items():
            specs.append((x, None, rows, math.fsum(p for _, _, p in rows)))
    elif table_mode is TableMode.AVERAGE:
        by_xq = defaultdict(list)
        for (x, q, y), p in joint.items():
            by_xq[(x, q)].append((q, y, p))
        for (x, q), rows in by_xq.items():
            specs.append((x, q, rows, math.fsum(p for _, _, p in rows)))
    else:
        p_q = defaultdict(list)
        for (x, q, y), p in joint.items():
            p_q[q].append(p)
        p_q = {q: math.fsum(ps) for q, ps in p_q.items()}
        if query_id is not None and query_id not in p_q:
            raise PromptRDError(f"query {query_id!r} does not occur in the dataset")
        by_xq = defaultdict(list)
        for (x, q, y), p in joint.items():
            if query_id is None or q == query_id:
                by_xq[(x, q)].append((q, y, p / p_q[q]))
        for (x, q), rows in by_xq.items():
            specs.append((x, None if query_id is not None else q, rows,
                          math.fsum(p for _, _, p in rows)))

    def build(spec):
        x, q, rows, mass = spec
        entries = _group_entries(x, enumerate_compressed(x, mode), rows, mass, loss, len(x))
        return Group(x.text, q, entries, mass)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            groups = list(pool.map(build, specs))
    else:
        groups = [build(s) for s in specs]

    meta = {"table": table_mode.value, "enumeration": mode.value,
            "metric": getattr(metric, "value", metric) if metric is not None else "external",
            "decoder": decoder.describe() if hasattr(decoder, "describe") else repr(decoder)}
    if query_id is not None:
        meta["query_id"] = query_id
    return ConstantsTable(table_mode, tuple(groups), meta)


def conditional_tables(records, decoder, metric=None, mode=EnumerationMode.PRUNED,
                       workers: int = 1) -> dict[str, ConstantsTable]:
    table = compute_constants(records, decoder, metric, mode, TableMode.CONDITIONAL, workers=workers)
    return table.split_by_query()


def _fmt(v) -> str:
    v = float(v)
    if math.isinf(v):
        return "inf"
    return format(v, ".17g")


def _meta_line(meta: dict) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in sorted(meta.items()) if " " not in str(v))


def _parse_meta(line: str) -> dict:
    out = {}
    for tok in line.lstrip("#").split():
        if "=" in tok:
            k, v = tok.split("=", 1)
            out[k] = v
    return out


def write_constants(table: ConstantsTable, path) -> None:
    """Write the table as CSV, preceded by a ``#`` line carrying table metadata."""
    meta = {**table.meta, "table": table.mode.value}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_meta_line(meta) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONSTANTS_HEADER)
        for g in table.groups:
            for e in g.entries:
                w.writerow([g.prompt, g.query_id or "", e.compressed, _fmt(e.rate), _fmt(e.distortion)])


def read_constants(path, mode: TableMode | str | None = None, exact: bool = False) -> ConstantsTable:
    """Read a constants CSV.

    With ``exact=True`` finite values are parsed as ``Fraction`` of their
    decimal text, so hand-written fixtures keep exact arithmetic downstream.
    """
    meta: dict = {}
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            meta.update(_parse_meta(ln))
        elif ln.strip():
            body.append(ln)
    reader = csv.reader(body)
    header = next(reader, None)
    if tuple(h.strip() for h in header or ()) != CONSTANTS_HEADER:
        raise PromptRDError(f"{path}: expected header {','.join(CONSTANTS_HEADER)}, got {header}")
    num = (lambda s: math.inf if s.strip() == "inf" else Fraction(s.strip())) if exact else float
    for lineno, row in enumerate(reader, 2):
        if len(row) != 5:
            raise PromptRDError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
        try:
            rows.append((row[0], row[1] or None, row[2], num(row[3]), num(row[4])))
        except ValueError:
            raise PromptRDError(f"{path}:{lineno}: bad number in {row}") from None
    if mode is None:
        mode = meta.get("table") or (TableMode.AVERAGE if any(r[1] for r in rows) else TableMode.AGNOSTIC)
    mode = TableMode(mode)
    if meta.get("table") and meta["table"] != mode.value:
        raise PromptRDError(f"{path}: file holds a {meta['table']} table, not {mode.value}")
    grouped: dict = defaultdict(list)
    for prompt, q, m, r, d in rows:
        if mode is TableMode.AGNOSTIC:
            q = None
        grouped[(prompt, q)].append(Entry(m, r, d))
    groups = []
    for (prompt, q), entries in grouped.items():
        labels = [e.compressed for e in entries]
        if len(set(labels)) != len(labels):
            raise PromptRDError(f"{path}: duplicate compressed prompt in group {prompt!r}")
        full = [e.rate for e in entries if e.compressed == prompt]
        groups.append(Group(prompt, q, tuple(entries), full[0] if full else None))
    meta["table"] = mode.value
    return ConstantsTable(mode, tuple(groups), meta)
