"""Automatic role/span annotation by aligning SQL slots to question tokens.

Three alignment passes run in order: exact/partial string matching for
values and column names, a co-occurrence (EM) aligner for the remaining
slots, and an edit-similarity fallback.  Labels are then generated from the
aligned tokens: role labels mark slot mentions, span labels mark the minimal
interval covering each SELECT/WHERE clause.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from tagsql.corpus import (
    AGG_KEYWORDS,
    OP_SYMBOLS,
    Example,
    TableSchema,
    detokenize_span,
    tokenize,
)
from tagsql.labels import bio_runs, role_labels, span_labels
from tagsql.textmatch import (
    edit_similarity,
    norm_alnum,
    norm_space,
    shares_stem,
    trigram_dice,
)

logger = logging.getLogger(__name__)

PARTIAL_THRESHOLD = 0.5
SIMILARITY_THRESHOLD = 0.5
POSTERIOR_FLOOR = 1e-6
DEFAULT_EM_ITERS = 5
DEFAULT_SMOOTHING = 0.01

# slot kinds
SEL_COL = "sel_col"
AGG = "agg"
COND_COL = "cond_col"
OP = "op"
VALUE = "value"


@dataclass(frozen=True, order=True)
class Slot:
    """One SQL slot to align: kind plus the condition index it belongs to."""

    kind: str
    cond: int = -1

    def role_function(self, gold) -> str:
        if self.kind == SEL_COL:
            return "S"
        if self.kind == COND_COL:
            return "C"
        if self.kind == VALUE:
            return "V"
        if self.kind == AGG:
            return f"AGG{gold.agg}"
        return f"OP{gold.conds[self.cond][1]}"


@dataclass(frozen=True)
class Link:
    slot: Slot
    positions: tuple[int, ...]
    provenance: str  # exact | partial | em | fallback


@dataclass
class Alignment:
    links: list[Link] = field(default_factory=list)

    def aligned(self, slot: Slot) -> bool:
        return any(l.slot == slot for l in self.links)

    def positions(self, slot: Slot) -> tuple[int, ...]:
        for l in self.links:
            if l.slot == slot:
                return l.positions
        return ()

    def consumed(self) -> set[int]:
        return {p for l in self.links for p in l.positions}

    def add(self, slot: Slot, positions: Iterable[int], provenance: str) -> None:
        self.links.append(Link(slot, tuple(sorted(positions)), provenance))


def alignable_slots(example: Example) -> list[Slot]:
    """The slots of the gold query that can have a lexical mention.

    No-aggregation and '=' are the unmentioned majority defaults, so no slot
    is created for them; the assembler fills those defaults back in.
    """
    gold = example.gold
    slots = [Slot(SEL_COL)]
    if gold.agg > 0:
        slots.append(Slot(AGG))
    for i, (_col, op, _value) in enumerate(gold.conds):
        slots.append(Slot(COND_COL, i))
        if op > 0:
            slots.append(Slot(OP, i))
        slots.append(Slot(VALUE, i))
    return slots


def slot_tokens(slot: Slot, example: Example, schema: TableSchema) -> list[str]:
    """Lowercase SQL-side tokens that stand for the slot."""
    gold = example.gold
    if slot.kind == SEL_COL:
        return [t.lower for t in tokenize(schema.headers[gold.sel])]
    if slot.kind == COND_COL:
        col = gold.conds[slot.cond][0]
        return [t.lower for t in tokenize(schema.headers[col])]
    if slot.kind == AGG:
        return [AGG_KEYWORDS[gold.agg]]
    if slot.kind == OP:
        return [OP_SYMBOLS[gold.conds[slot.cond][1]]]
    return [t.lower for t in tokenize(gold.conds[slot.cond][2])]


# ---------------------------------------------------------------------------
# pass 1: string matching


def _ranges(example: Example, consumed: set[int], max_len: int):
    n = len(example.tokens)
    for a in range(n):
        if a in consumed:
            continue
        for b in range(a + 1, min(a + max_len, n) + 1):
            if b - 1 in consumed:
                break
            yield a, b


def _find_exact(example: Example, target: str, consumed: set[int]) -> tuple[int, int] | None:
    """Longest token range whose detokenization equals target, leftmost on ties."""
    want = norm_space(target)
    if not want:
        return None
    best: tuple[int, int] | None = None
    best_key = None
    target_len = len(tokenize(target))
    for a, b in _ranges(example, consumed, max_len=max(target_len + 2, 1)):
        if norm_space(detokenize_span(example, a, b)) != want:
            continue
        key = (-(b - a), a)
        if best_key is None or key < best_key:
            best_key, best = key, (a, b)
    return best


def _find_partial(example: Example, target: str, consumed: set[int]) -> tuple[int, int] | None:
    """Range maximizing trigram Dice against target, threshold inclusive."""
    target_len = max(len(tokenize(target)), 1)
    if not norm_alnum(target):
        return None
    best: tuple[int, int] | None = None
    best_key = None
    for a, b in _ranges(example, consumed, max_len=target_len + 2):
        score = trigram_dice(detokenize_span(example, a, b), target)
        if score < PARTIAL_THRESHOLD:
            continue
        key = (-score, a, b - a)
        if best_key is None or key < best_key:
            best_key, best = key, (a, b)
    return best


def string_match_pass(example: Example, schema: TableSchema) -> Alignment:
    """Align condition values and column names by exact/partial string match.

    Values go first so that column-name lookalikes inside a value (e.g. the
    token "city" in "Mexico City") are consumed before columns are searched.
    Unmatched slots are left for the later passes.
    """
    gold = example.gold
    alignment = Alignment()
    consumed: set[int] = set()

    def claim(slot: Slot, span: tuple[int, int], provenance: str) -> None:
        positions = range(span[0], span[1])
        alignment.add(slot, positions, provenance)
        consumed.update(positions)

    for i, (_col, _op, value) in enumerate(gold.conds):
        span = _find_exact(example, value, consumed)
        if span is not None:
            claim(Slot(VALUE, i), span, "exact")
            continue
        span = _find_partial(example, value, consumed)
        if span is not None:
            claim(Slot(VALUE, i), span, "partial")

    column_slots = [(Slot(SEL_COL), schema.headers[gold.sel])] + [
        (Slot(COND_COL, i), schema.headers[col])
        for i, (col, _op, _value) in enumerate(gold.conds)
    ]
    for slot, header in column_slots:
        span = _find_exact(example, header, consumed)
        if span is not None:
            claim(slot, span, "exact")
            continue
        span = _find_partial(example, header, consumed)
        if span is not None:
            claim(slot, span, "partial")
    return alignment


# ---------------------------------------------------------------------------
# pass 2: co-occurrence (EM) alignment


@dataclass
class AlignmentModel:
    """Lexical translation table t(question token | sql token) from EM."""

    t: dict[str, dict[str, float]]
    loglik: list[float] = field(default_factory=list)
    iters: int = 0
    smoothing: float = DEFAULT_SMOOTHING

    MAGIC = "tagsql-aligner"
    VERSION = 1

    def prob(self, q_token: str, sql_token: str) -> float:
        return self.t.get(sql_token, {}).get(q_token, 0.0)

    def best(self, sql_token: str) -> tuple[str, float] | None:
        """Highest-probability question token for a SQL token."""
        dist = self.t.get(sql_token)
        if not dist:
            return None
        token = max(dist, key=lambda f: (dist[f], f))
        return token, dist[token]

    def save(self, path) -> None:
        payload = {
            "magic": self.MAGIC,
            "version": self.VERSION,
            "iters": self.iters,
            "smoothing": self.smoothing,
            "loglik": self.loglik,
            "t": self.t,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, sort_keys=True)

    @classmethod
    def load(cls, path) -> "AlignmentModel":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("magic") != cls.MAGIC or payload.get("version") != cls.VERSION:
            raise ValueError(f"{path}: not a {cls.MAGIC} v{cls.VERSION} file")
        return cls(
            t=payload["t"],
            loglik=list(payload["loglik"]),
            iters=payload["iters"],
            smoothing=payload["smoothing"],
        )


def sql_side_tokens(example: Example, schema: TableSchema) -> list[str]:
    """SQL side of an alignment pair: agg keyword, header/op/value tokens.

    The '=' symbol is included here even though it is never aligned: during
    EM it soaks up the function words that co-occur with equality conditions,
    which keeps the distributions of content slots clean.
    """
    gold = example.gold
    out: list[str] = []
    if gold.agg > 0:
        out.append(AGG_KEYWORDS[gold.agg])
    out.extend(t.lower for t in tokenize(schema.headers[gold.sel]))
    for col, op, value in gold.conds:
        out.extend(t.lower for t in tokenize(schema.headers[col]))
        out.append(OP_SYMBOLS[op])
        out.extend(t.lower for t in tokenize(value))
    return out


def _pair_loglik(t_table, q_tokens, s_tokens) -> float:
    ll = 0.0
    for e in s_tokens:
        dist = t_table[e]
        total = sum(dist.get(f, 0.0) for f in q_tokens)
        ll += math.log(total) if total > 0 else math.log(1e-300)
    ll -= len(s_tokens) * math.log(max(len(q_tokens), 1))
    return ll


def train_em_aligner(
    corpus: Sequence[Example],
    schemas: Mapping[str, TableSchema],
    iters: int = DEFAULT_EM_ITERS,
    smoothing: float = DEFAULT_SMOOTHING,
) -> AlignmentModel:
    """Estimate t(question token | sql token) with expectation maximization.

    Uniform initialization; each iteration records the corpus log-likelihood
    under the current table before re-estimating.  The smoothing constant is
    added to the expected counts at the M step.
    """
    pairs = []
    for ex in corpus:
        if ex.gold is None:
            continue
        q = ex.lowers
        s = sql_side_tokens(ex, schemas[ex.table_id])
        if q and s:
            pairs.append((q, s))
    if not pairs:
        raise ValueError("cannot train the aligner on an empty corpus")

    q_vocab = sorted({f for q, _ in pairs for f in q})
    uniform = 1.0 / len(q_vocab)
    t_table: dict[str, dict[str, float]] = {
        e: {f: uniform for f in q_vocab} for _, s in pairs for e in s
    }

    loglik: list[float] = []
    for _ in range(iters):
        ll = 0.0
        counts: dict[str, Counter] = defaultdict(Counter)
        for q, s in pairs:
            ll += _pair_loglik(t_table, q, s)
            for e in s:
                dist = t_table[e]
                denom = sum(dist.get(f, 0.0) for f in q)
                if denom <= 0:
                    continue
                for f in q:
                    counts[e][f] += dist.get(f, 0.0) / denom
        loglik.append(ll)
        for e, c in counts.items():
            denom = sum(c.values()) + smoothing * len(q_vocab)
            t_table[e] = {f: (c.get(f, 0.0) + smoothing) / denom for f in q_vocab}
    return AlignmentModel(t=t_table, loglik=loglik, iters=iters, smoothing=smoothing)


def em_align(
    model: AlignmentModel,
    example: Example,
    schema: TableSchema,
    residual: Alignment,
) -> Alignment:
    """Align the slots the string pass left open, using the EM table.

    A slot token claims the unconsumed question token with the highest
    posterior, but only when no other SQL token of this pair explains that
    question token strictly better; otherwise the slot token stays open for
    the fallback.  This competitive check is what leaves implicitly mentioned
    columns unaligned.  Value alignments must stay contiguous.
    """
    pair_sql = sql_side_tokens(example, schema)
    consumed = residual.consumed()
    lowers = example.lowers

    for slot in sorted(
        (s for s in alignable_slots(example) if not residual.aligned(s)),
        key=lambda s: ({VALUE: 0, SEL_COL: 1, COND_COL: 2, AGG: 3, OP: 4}[s.kind], s.cond),
    ):
        tokens = [e for e in slot_tokens(slot, example, schema) if norm_alnum(e) or e in OP_SYMBOLS]
        picked: list[int] = []
        taken: set[int] = set()
        for e in tokens:
            dist = model.t.get(e)
            if not dist:
                continue
            best_j, best_p = -1, 0.0
            for j, f in enumerate(lowers):
                if j in consumed or j in taken:
                    continue
                p = dist.get(f, 0.0)
                if p > best_p:
                    best_j, best_p = j, p
            if best_j < 0 or best_p < POSTERIOR_FLOOR:
                continue
            rivals = (model.prob(lowers[best_j], e2) for e2 in pair_sql if e2 != e)
            if any(p2 > best_p for p2 in rivals):
                continue
            picked.append(best_j)
            taken.add(best_j)
        if not picked:
            continue
        if slot.kind == VALUE:
            picked.sort()
            if len(picked) != len(tokens) or picked[-1] - picked[0] != len(picked) - 1:
                continue
        residual.add(slot, picked, "em")
        consumed.update(picked)
    return residual


# ---------------------------------------------------------------------------
# pass 3: similarity fallback


def similarity_fallback(
    slot_tokens_: Sequence[str],
    example: Example,
    residual: Alignment,
    slot: Slot,
) -> Alignment:
    """Word-similarity complement for one slot the EM pass left unaligned.

    Each slot token goes to the question token maximizing the larger of
    normalized edit similarity and a >=4-character shared-prefix stem match;
    below 0.5 the slot stays unaligned (an implicit mention, for columns).
    """
    consumed = residual.consumed()
    picked: list[int] = []
    for e in slot_tokens_:
        if not norm_alnum(e):
            continue
        best_j, best_s = -1, 0.0
        for j, f in enumerate(example.lowers):
            if j in consumed or j in picked:
                continue
            sim = max(edit_similarity(e, f), 1.0 if shares_stem(e, f) else 0.0)
            if sim > best_s:
                best_j, best_s = j, sim
        if best_j >= 0 and best_s >= SIMILARITY_THRESHOLD:
            picked.append(best_j)
    if picked:
        residual.add(slot, picked, "fallback")
    return residual


# ---------------------------------------------------------------------------
# label generation


@dataclass
class LabeledExample:
    example: Example
    roles: list[str]
    spans: list[str]

    def to_dict(self) -> dict:
        return {
            "question": self.example.question,
            "table_id": self.example.table_id,
            "roles": list(self.roles),
            "spans": list(self.spans),
        }


DROP_VALUE_UNALIGNED = "value_unaligned"
DROP_SPAN_OVERLAP = "span_overlap"


def generate_labels(
    example: Example, alignment: Alignment
) -> tuple[LabeledExample | None, str | None]:
    """Turn an alignment into parallel role/span BIO sequences.

    Returns (labeled, None) or (None, drop_reason).  Examples are dropped
    when a condition value is unaligned or when the minimal clause spans
    overlap; they are never emitted with broken labels.
    """
    gold = example.gold
    n = len(example.tokens)
    for i in range(len(gold.conds)):
        if not alignment.aligned(Slot(VALUE, i)):
            return None, DROP_VALUE_UNALIGNED

    roles = ["O"] * n
    for link in alignment.links:
        func = link.slot.role_function(gold)
        prev = None
        for p in sorted(link.positions):
            position = "I" if prev is not None and p == prev + 1 else "B"
            roles[p] = f"{position}-{func}"
            prev = p

    intervals: list[tuple[int, int, str]] = []
    sel_positions = sorted(
        set(alignment.positions(Slot(SEL_COL))) | set(alignment.positions(Slot(AGG)))
    )
    if sel_positions:
        intervals.append((sel_positions[0], sel_positions[-1] + 1, "Sel"))
    for i in range(len(gold.conds)):
        positions = sorted(
            set(alignment.positions(Slot(COND_COL, i)))
            | set(alignment.positions(Slot(OP, i)))
            | set(alignment.positions(Slot(VALUE, i)))
        )
        intervals.append((positions[0], positions[-1] + 1, "Cond"))

    intervals.sort()
    for (a1, b1, _), (a2, _b2, _) in zip(intervals, intervals[1:]):
        if a2 < b1:
            return None, DROP_SPAN_OVERLAP

    spans = ["O"] * n
    for a, b, func in intervals:
        spans[a] = f"B-{func}"
        for p in range(a + 1, b):
            spans[p] = f"I-{func}"

    labeled = LabeledExample(example=example, roles=roles, spans=spans)
    assert role_labels().is_valid_bio(labeled.roles)
    assert span_labels().is_valid_bio(labeled.spans)
    return labeled, None


# ---------------------------------------------------------------------------
# corpus-level orchestration


@dataclass
class AnnotationResult:
    example: Example
    labeled: LabeledExample | None
    drop_reason: str | None
    alignment: Alignment

    @property
    def dropped(self) -> bool:
        return self.labeled is None

    def to_dict(self) -> dict:
        provenance = {
            f"{link.slot.kind}{'' if link.slot.cond < 0 else link.slot.cond}": link.provenance
            for link in self.alignment.links
        }
        d = {
            "question": self.example.question,
            "table_id": self.example.table_id,
            "roles": self.labeled.roles if self.labeled else None,
            "spans": self.labeled.spans if self.labeled else None,
            "dropped": self.dropped,
            "provenance": provenance,
        }
        if self.drop_reason:
            d["drop_reason"] = self.drop_reason
        return d


@dataclass
class AnnotationReport:
    total: int = 0
    labeled: int = 0
    provenance: Counter = field(default_factory=Counter)
    unaligned: Counter = field(default_factory=Counter)
    drops: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "labeled": self.labeled,
            "dropped": self.total - self.labeled,
            "provenance": dict(sorted(self.provenance.items())),
            "unaligned_slots": dict(sorted(self.unaligned.items())),
            "drop_reasons": dict(sorted(self.drops.items())),
        }

    def to_text(self) -> str:
        lines = [
            f"examples        {self.total}",
            f"labeled         {self.labeled}",
            f"dropped         {self.total - self.labeled}",
            "provenance:",
        ]
        for key, count in sorted(self.provenance.items()):
            lines.append(f"  {key:<24} {count}")
        for key, count in sorted(self.unaligned.items()):
            lines.append(f"  {key + ' unaligned':<24} {count}")
        if self.drops:
            lines.append("drop reasons:")
            for key, count in sorted(self.drops.items()):
                lines.append(f"  {key:<24} {count}")
        return "\n".join(lines)


def annotate_example(
    example: Example,
    schema: TableSchema,
    model: AlignmentModel | None = None,
) -> AnnotationResult:
    """Run the three alignment passes and generate labels for one example."""
    alignment = string_match_pass(example, schema)
    if model is not None:
        alignment = em_align(model, example, schema, alignment)
    for slot in alignable_slots(example):
        if slot.kind != VALUE and not alignment.aligned(slot):
            alignment = similarity_fallback(
                slot_tokens(slot, example, schema), example, alignment, slot
            )
    labeled, reason = generate_labels(example, alignment)
    return AnnotationResult(example, labeled, reason, alignment)


def annotate_corpus(
    examples: Sequence[Example],
    schemas: Mapping[str, TableSchema],
    model: AlignmentModel | None = None,
) -> tuple[list[AnnotationResult], AnnotationReport]:
    report = AnnotationReport()
    results = []
    for ex in examples:
        if ex.gold is None:
            continue
        result = annotate_example(ex, schemas[ex.table_id], model)
        results.append(result)
        report.total += 1
        if result.dropped:
            report.drops[result.drop_reason] += 1
        else:
            report.labeled += 1
        aligned_slots = {l.slot for l in result.alignment.links}
        for link in result.alignment.links:
            report.provenance[f"{link.slot.kind}:{link.provenance}"] += 1
        for slot in alignable_slots(ex):
            if slot not in aligned_slots:
                report.unaligned[slot.kind] += 1
    return results, report
