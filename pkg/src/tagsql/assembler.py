"""Deterministic translation of role/span label sequences into pseudo SQL.

The output still carries text mentions for columns; the linker turns those
into header indices.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from tagsql.corpus import Example, detokenize_span
from tagsql.labels import bio_runs, role_labels, span_labels

ATTACH_WINDOW = 3

_AGG_RUN = re.compile(r"^AGG(\d)$")
_OP_RUN = re.compile(r"^OP(\d)$")


class AssembleError(ValueError):
    """Raised when no select target can be recovered from the labels."""


@dataclass(frozen=True)
class Mention:
    kind: str  # sel_col | cond_col | value | agg | op
    start: int
    end: int
    text: str

    @classmethod
    def from_run(cls, example: Example, kind: str, start: int, end: int) -> "Mention":
        return cls(kind=kind, start=start, end=end, text=detokenize_span(example, start, end))


@dataclass
class PseudoCond:
    col_mention: Mention | None
    op: int
    value: Mention

    @property
    def value_text(self) -> str:
        return self.value.text


@dataclass
class PseudoSql:
    select_mention: Mention | None
    agg: int
    conds: list[PseudoCond]
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def mention(m: Mention | None):
            return None if m is None else {"kind": m.kind, "start": m.start, "end": m.end, "text": m.text}

        return {
            "select_mention": mention(self.select_mention),
            "agg": self.agg,
            "conds": [
                {"col_mention": mention(c.col_mention), "op": c.op, "value": mention(c.value)}
                for c in self.conds
            ],
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


def _gap(run: tuple[int, int], interval: tuple[int, int]) -> int:
    (rs, re_), (s, e) = run, interval
    if re_ <= s:
        return s - re_
    if e <= rs:
        return rs - e
    return 0


def assemble(example: Example, roles, spans) -> PseudoSql:
    """Build a PseudoSql from BIO-valid role and span sequences.

    Within the Sel span, S runs give the select mention and an AGG run the
    aggregation (leftmost wins); within each Cond span, C/OP/V runs give the
    column mention, operator, and value.  Missing operators default to '='
    and a missing AGG run to no aggregation.  Role runs outside every span
    attach to the nearest compatible span within three tokens when the slot
    is still empty; otherwise they are dropped and noted.
    """
    if len(roles) != len(spans) or len(roles) != len(example.tokens):
        raise ValueError("label sequences must match the token count")
    if not role_labels().is_valid_bio(roles) or not span_labels().is_valid_bio(spans):
        raise ValueError("label sequences must be BIO-valid")

    notes: list[str] = []
    span_runs = bio_runs(spans)
    sel_intervals = [(s, e) for f, s, e in span_runs if f == "Sel"]
    cond_intervals = [(s, e) for f, s, e in span_runs if f == "Cond"]
    if len(sel_intervals) > 1:
        notes.append(f"extra_sel_spans:{len(sel_intervals) - 1}")
    sel_interval = sel_intervals[0] if sel_intervals else None

    # per-condition slot state, in question order
    cond_state: list[dict] = [
        {"interval": iv, "col": None, "op": None, "value": None} for iv in cond_intervals
    ]

    sel_slot: dict = {"mention": None, "agg": None}
    orphans: list[tuple[str, int, int]] = []

    def inside(run_start: int, run_end: int, interval: tuple[int, int] | None) -> bool:
        return interval is not None and run_start >= interval[0] and run_end <= interval[1]

    def place(func: str, start: int, end: int) -> bool:
        """Put a role run into the span that contains it; False if orphan."""
        if func == "S" or _AGG_RUN.match(func):
            if not inside(start, end, sel_interval):
                return False
            if func == "S":
                if sel_slot["mention"] is None:
                    sel_slot["mention"] = Mention.from_run(example, "sel_col", start, end)
                else:
                    notes.append("extra_select_run")
            else:
                agg = int(_AGG_RUN.match(func).group(1))
                if sel_slot["agg"] is None:
                    sel_slot["agg"] = agg
                else:
                    notes.append("extra_agg_run")
            return True
        for state in cond_state:
            if not inside(start, end, state["interval"]):
                continue
            if func == "C":
                if state["col"] is None:
                    state["col"] = Mention.from_run(example, "cond_col", start, end)
                else:
                    notes.append("extra_cond_col_run")
            elif _OP_RUN.match(func):
                op = int(_OP_RUN.match(func).group(1))
                if state["op"] is None:
                    state["op"] = op
                else:
                    notes.append("extra_op_run")
            else:  # V
                if state["value"] is None:
                    state["value"] = Mention.from_run(example, "value", start, end)
                else:
                    notes.append("extra_value_run")
            return True
        return False

    for func, start, end in bio_runs(roles):
        if not place(func, start, end):
            orphans.append((func, start, end))

    # orphan attachment: nearest compatible span within the window, only
    # into still-empty slots
    for func, start, end in orphans:
        if func == "S" or _AGG_RUN.match(func):
            if sel_interval is None:
                continue  # handled by the spanless path below
            if _gap((start, end), sel_interval) <= ATTACH_WINDOW:
                if func == "S" and sel_slot["mention"] is None:
                    sel_slot["mention"] = Mention.from_run(example, "sel_col", start, end)
                    continue
                if func != "S" and sel_slot["agg"] is None:
                    sel_slot["agg"] = int(_AGG_RUN.match(func).group(1))
                    continue
            notes.append(f"orphan_dropped:{func}")
            continue
        candidates = sorted(
            (s for s in cond_state if _gap((start, end), s["interval"]) <= ATTACH_WINDOW),
            key=lambda s: _gap((start, end), s["interval"]),
        )
        attached = False
        for state in candidates:
            key = "col" if func == "C" else "op" if _OP_RUN.match(func) else "value"
            if state[key] is None:
                if key == "col":
                    state[key] = Mention.from_run(example, "cond_col", start, end)
                elif key == "op":
                    state[key] = int(_OP_RUN.match(func).group(1))
                else:
                    state[key] = Mention.from_run(example, "value", start, end)
                attached = True
                break
        if not attached:
            notes.append(f"orphan_dropped:{func}")

    # spanless fallback: no Sel span at all, use the leftmost S / AGG runs
    if sel_interval is None:
        for func, start, end in bio_runs(roles):
            if func == "S" and sel_slot["mention"] is None:
                sel_slot["mention"] = Mention.from_run(example, "sel_col", start, end)
                notes.append("spanless_select")
            elif _AGG_RUN.match(func) and sel_slot["agg"] is None:
                sel_slot["agg"] = int(_AGG_RUN.match(func).group(1))
        if sel_slot["mention"] is None:
            raise AssembleError("no select target")

    conds: list[PseudoCond] = []
    for state in cond_state:
        if state["value"] is None:
            notes.append("cond_without_value_dropped")
            continue
        conds.append(
            PseudoCond(
                col_mention=state["col"],
                op=state["op"] if state["op"] is not None else 0,
                value=state["value"],
            )
        )

    return PseudoSql(
        select_mention=sel_slot["mention"],
        agg=sel_slot["agg"] if sel_slot["agg"] is not None else 0,
        conds=conds,
        notes=notes,
    )
