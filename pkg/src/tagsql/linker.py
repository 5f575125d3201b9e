"""Schema linking: map column mentions (or bare values) to table headers.

Each (span, header) pair gets a probability-like score from a fixed-weight
logistic over string-overlap and table-content features; linking picks the
argmax header per slot and returns a small candidate list for execution
guidance.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from tagsql.assembler import PseudoSql
from tagsql.corpus import SqlQuery, Table, TableSchema, tokenize
from tagsql.textmatch import (
    coerce_number,
    norm_alnum,
    normalize_value,
    token_jaccard,
    trigram_dice,
)

# fixed feature weights; a trained scorer can replace score() behind the
# same [0, 1] contract
WEIGHTS = {
    "dice": 4.0,
    "jaccard": 2.0,
    "exact": 2.0,
    "containment": 5.0,
    "type": 1.0,
    "bias": -3.0,
}

DEFAULT_TOP_K = 4
MAX_CANDIDATES = 64


class LinkError(ValueError):
    """Raised when a pseudo query cannot be linked against a schema."""


@dataclass(frozen=True)
class LinkQuery:
    span_text: str
    span_kind: str  # select | filter
    question: str
    header: str
    header_index: int
    col_type: str = "text"
    table: Table | None = None


@dataclass(frozen=True)
class LinkDecision:
    header_index: int
    score: float
    basis: str  # name_match | cell_containment | type_prior


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def score(lq: LinkQuery) -> float:
    """Probability-like match score between a mention span and one header."""
    dice = trigram_dice(lq.span_text, lq.header)
    jaccard = token_jaccard(
        [t.lower for t in tokenize(lq.span_text)], [t.lower for t in tokenize(lq.header)]
    )
    exact = 1.0 if norm_alnum(lq.span_text) and norm_alnum(lq.span_text) == norm_alnum(lq.header) else 0.0
    containment = 0.0
    type_comp = 0.0
    if lq.span_kind == "filter" and lq.table is not None:
        want = normalize_value(lq.span_text)
        rows = lq.table.rows
        if rows:
            hits = sum(1 for row in rows if normalize_value(row[lq.header_index]) == want)
            containment = hits / len(rows)
        span_is_number = coerce_number(lq.span_text) is not None
        type_comp = 1.0 if span_is_number == (lq.col_type == "real") else 0.0
    z = (
        WEIGHTS["dice"] * dice
        + WEIGHTS["jaccard"] * jaccard
        + WEIGHTS["exact"] * exact
        + WEIGHTS["containment"] * containment
        + WEIGHTS["type"] * type_comp
        + WEIGHTS["bias"]
    )
    return _sigmoid(z)


def _basis(lq: LinkQuery) -> str:
    dice = trigram_dice(lq.span_text, lq.header)
    name = WEIGHTS["dice"] * dice
    containment = 0.0
    type_comp = 0.0
    if lq.span_kind == "filter" and lq.table is not None and lq.table.rows:
        want = normalize_value(lq.span_text)
        hits = sum(1 for row in lq.table.rows if normalize_value(row[lq.header_index]) == want)
        containment = WEIGHTS["containment"] * hits / len(lq.table.rows)
        span_is_number = coerce_number(lq.span_text) is not None
        type_comp = WEIGHTS["type"] * (1.0 if span_is_number == (lq.col_type == "real") else 0.0)
    best = max(name, containment, type_comp)
    if best == containment and containment > 0:
        return "cell_containment"
    if best == type_comp and type_comp > 0:
        return "type_prior"
    return "name_match"


def rank_headers(
    span_text: str,
    span_kind: str,
    schema: TableSchema,
    question: str = "",
    table: Table | None = None,
) -> list[LinkDecision]:
    """All headers scored against one span, best first (ties: lowest index)."""
    decisions = []
    for i, header in enumerate(schema.headers):
        lq = LinkQuery(
            span_text=span_text,
            span_kind=span_kind,
            question=question,
            header=header,
            header_index=i,
            col_type=schema.col_types[i],
            table=table,
        )
        decisions.append(LinkDecision(header_index=i, score=score(lq), basis=_basis(lq)))
    decisions.sort(key=lambda d: (-d.score, d.header_index))
    return decisions


def link(
    pseudo: PseudoSql,
    schema: TableSchema,
    table: Table | None = None,
    k: int = DEFAULT_TOP_K,
    max_candidates: int = MAX_CANDIDATES,
) -> list[tuple[SqlQuery, float]]:
    """Executable query candidates for a pseudo query, best first.

    The select column links from the select mention; each condition column
    links from its column mention when present and from the value text
    otherwise (the implicit-mention path).  The candidate list is the
    cross product of the per-slot top-k headers, scored by the product of
    the slot scores, so the top candidate is the per-slot argmax.
    """
    if schema.n_columns == 0:
        raise LinkError("empty schema")
    if pseudo.select_mention is None:
        raise LinkError("no select mention")

    question = ""
    slot_rankings: list[list[LinkDecision]] = [
        rank_headers(pseudo.select_mention.text, "select", schema, question, table)[:k]
    ]
    for cond in pseudo.conds:
        span_text = cond.col_mention.text if cond.col_mention is not None else cond.value_text
        slot_rankings.append(rank_headers(span_text, "filter", schema, question, table)[:k])

    candidates: list[tuple[SqlQuery, float]] = []
    for combo in itertools.product(*slot_rankings):
        sel_choice, cond_choices = combo[0], combo[1:]
        query = SqlQuery(
            sel=sel_choice.header_index,
            agg=pseudo.agg,
            conds=tuple(
                (choice.header_index, cond.op, cond.value_text)
                for choice, cond in zip(cond_choices, pseudo.conds)
            ),
        )
        combined = math.prod(choice.score for choice in combo)
        candidates.append((query, combined))
    candidates.sort(
        key=lambda c: (-c[1], c[0].sel, tuple(col for col, _op, _v in c[0].conds))
    )
    return candidates[:max_candidates]
