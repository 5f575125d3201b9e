"""WikiSQL-format corpus loading, rule tokenization, and shared query types."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from tagsql.textmatch import coerce_number

logger = logging.getLogger(__name__)

AGG_OPS = ("", "MAX", "MIN", "COUNT", "SUM", "AVG")
COND_OPS = ("=", ">", "<")

# Lowercase keywords used when the aggregation / operator has to appear as a
# token on the SQL side of an alignment pair.  Index 0 (no aggregation) has
# no keyword.
AGG_KEYWORDS = ("", "max", "min", "count", "sum", "avg")
OP_SYMBOLS = ("=", ">", "<")


class CorpusError(ValueError):
    """Raised for malformed corpus files."""


@dataclass(frozen=True)
class Token:
    surface: str
    lower: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class TableSchema:
    table_id: str
    headers: tuple[str, ...]
    col_types: tuple[str, ...]

    def __post_init__(self):
        if not self.headers:
            raise CorpusError(f"table {self.table_id!r}: empty header list")
        if len(self.headers) != len(self.col_types):
            raise CorpusError(
                f"table {self.table_id!r}: {len(self.headers)} headers vs "
                f"{len(self.col_types)} column types"
            )
        bad = [t for t in self.col_types if t not in ("text", "real")]
        if bad:
            raise CorpusError(f"table {self.table_id!r}: unknown column types {bad}")

    @property
    def n_columns(self) -> int:
        return len(self.headers)


@dataclass(frozen=True)
class Table:
    schema: TableSchema
    rows: tuple[tuple, ...]
    # (row, col) pairs in a `real` column whose cell does not parse as a number
    dirty: frozenset = frozenset()

    def __post_init__(self):
        width = self.schema.n_columns
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise CorpusError(
                    f"table {self.schema.table_id!r}: row {i} has {len(row)} "
                    f"cells, expected {width}"
                )

    @property
    def table_id(self) -> str:
        return self.schema.table_id


@dataclass(frozen=True)
class SqlQuery:
    sel: int
    agg: int
    conds: tuple[tuple[int, int, str], ...] = ()

    def __post_init__(self):
        if not 0 <= self.agg < len(AGG_OPS):
            raise CorpusError(f"agg out of range: {self.agg}")
        if self.sel < 0:
            raise CorpusError(f"negative select column: {self.sel}")
        for col, op, _value in self.conds:
            if not 0 <= op < len(COND_OPS):
                raise CorpusError(f"op out of range: {op}")
            if col < 0:
                raise CorpusError(f"negative condition column: {col}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SqlQuery":
        conds = tuple(
            (int(col), int(op), str(value)) for col, op, value in d.get("conds", ())
        )
        return cls(sel=int(d["sel"]), agg=int(d["agg"]), conds=conds)

    def to_dict(self) -> dict:
        return {
            "sel": self.sel,
            "agg": self.agg,
            "conds": [[col, op, value] for col, op, value in self.conds],
        }

    def validate_against(self, schema: TableSchema) -> None:
        if self.sel >= schema.n_columns:
            raise CorpusError(
                f"select column {self.sel} out of range for {schema.table_id!r}"
            )
        for col, _op, _value in self.conds:
            if col >= schema.n_columns:
                raise CorpusError(
                    f"condition column {col} out of range for {schema.table_id!r}"
                )


@dataclass
class Example:
    question: str
    tokens: list[Token]
    table_id: str
    gold: SqlQuery | None = None

    @classmethod
    def build(cls, question: str, table_id: str, gold: SqlQuery | None = None) -> "Example":
        return cls(question=question, tokens=tokenize(question), table_id=table_id, gold=gold)

    @property
    def lowers(self) -> list[str]:
        return [t.lower for t in self.tokens]


_CHUNK = re.compile(r"\S+")


def _is_punct_char(ch: str) -> bool:
    return not ch.isalnum()


def tokenize(text: str) -> list[Token]:
    """Rule tokenizer: whitespace split, then peel leading/trailing punctuation.

    Internal characters are never split, so numbers like "26.50" or "1,000"
    stay intact.  Offsets always satisfy text[start:end] == surface.
    """
    tokens: list[Token] = []

    def emit(start: int, end: int) -> None:
        surface = text[start:end]
        tokens.append(Token(surface, surface.lower(), start, end))

    for m in _CHUNK.finditer(text):
        start, end = m.span()
        # peel leading punctuation one character at a time
        while end - start > 1 and _is_punct_char(text[start]):
            emit(start, start + 1)
            start += 1
        # find trailing punctuation run
        tail = end
        while tail - start > 1 and _is_punct_char(text[tail - 1]):
            tail -= 1
        emit(start, tail)
        for i in range(tail, end):
            emit(i, i + 1)
    return tokens


def detokenize_span(example: Example, start: int, end: int) -> str:
    """Original question substring covering tokens[start:end].

    Preserves the question's spacing and casing.
    """
    if not 0 <= start < end <= len(example.tokens):
        raise IndexError(f"span [{start}, {end}) out of range for {len(example.tokens)} tokens")
    return example.question[example.tokens[start].char_start : example.tokens[end - 1].char_end]


def example_to_dict(example: Example) -> dict:
    d = {"question": example.question, "table_id": example.table_id}
    if example.gold is not None:
        d["sql"] = example.gold.to_dict()
    return d


def load_examples(path) -> tuple[list[Example], list[str]]:
    """Load a WikiSQL-style examples JSONL file.

    Returns (examples, rejections).  Malformed lines (bad JSON, missing
    question/table_id) raise CorpusError naming the line; records whose SQL
    violates the agg/op ranges are rejected individually and reported.
    """
    examples: list[Example] = []
    rejections: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"{path}: line {lineno}: expected a JSON object")
            question = record.get("question")
            table_id = record.get("table_id")
            if not isinstance(question, str) or not isinstance(table_id, str):
                raise CorpusError(
                    f"{path}: line {lineno}: missing question/table_id string fields"
                )
            gold = None
            if "sql" in record and record["sql"] is not None:
                try:
                    gold = SqlQuery.from_dict(record["sql"])
                except (CorpusError, KeyError, TypeError, ValueError) as exc:
                    rejections.append(f"line {lineno}: rejected record: {exc}")
                    continue
            examples.append(Example.build(question, table_id, gold))
    if rejections:
        logger.warning("%s: rejected %d records", path, len(rejections))
    return examples, rejections


def write_examples(path, examples: Iterable[Example]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_dict(ex), ensure_ascii=False) + "\n")


def load_tables(path) -> dict[str, Table]:
    """Load a WikiSQL-style tables JSONL file ({id, header, types, rows})."""
    tables: dict[str, Table] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            try:
                table_id = record["id"]
                schema = TableSchema(
                    table_id=table_id,
                    headers=tuple(str(h) for h in record["header"]),
                    col_types=tuple(str(t) for t in record["types"]),
                )
                rows = tuple(tuple(row) for row in record["rows"])
            except (KeyError, TypeError) as exc:
                raise CorpusError(f"{path}: line {lineno}: malformed table record: {exc}") from exc
            dirty = frozenset(
                (r, c)
                for c, col_type in enumerate(schema.col_types)
                if col_type == "real"
                for r, row in enumerate(rows)
                if coerce_number(row[c]) is None
            )
            if dirty:
                logger.warning("table %r: %d dirty real cells", table_id, len(dirty))
            tables[table_id] = Table(schema=schema, rows=rows, dirty=dirty)
    return tables


def write_tables(path, tables: Iterable[Table]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for table in tables:
            record = {
                "id": table.table_id,
                "header": list(table.schema.headers),
                "types": list(table.schema.col_types),
                "rows": [list(row) for row in table.rows],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
