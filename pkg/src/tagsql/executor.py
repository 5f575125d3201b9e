"""In-memory execution of single-table queries and execution-guided selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from tagsql.corpus import AGG_OPS, COND_OPS, SqlQuery, Table
from tagsql.textmatch import coerce_number, normalize_value

KIND_SCALAR = "scalar"
KIND_LIST = "list"
KIND_EMPTY = "empty"
KIND_ERROR = "error"


@dataclass(frozen=True)
class ExecutionResult:
    kind: str
    value: object = None

    @property
    def usable(self) -> bool:
        return self.kind not in (KIND_ERROR, KIND_EMPTY)


def _row_matches(row, cond) -> bool:
    col, op, value = cond
    cell = row[col]
    if op == 0:
        cell_num, value_num = coerce_number(cell), coerce_number(value)
        if cell_num is not None and value_num is not None:
            return cell_num == value_num
        return normalize_value(cell) == normalize_value(value)
    cell_num, value_num = coerce_number(cell), coerce_number(value)
    if cell_num is None or value_num is None:
        return False  # dirty cells never satisfy an inequality
    return cell_num > value_num if op == 1 else cell_num < value_num


def execute(query: SqlQuery, table: Table) -> ExecutionResult:
    """Run a query against a table; never raises, errors become results.

    Rows are filtered by the conjunction of the conditions, then the
    aggregation reduces the selected column.  COUNT of zero matched rows is
    the scalar 0; the other aggregations over no (numeric) cells are empty.
    """
    n_cols = table.schema.n_columns
    if not 0 <= query.sel < n_cols or not 0 <= query.agg < len(AGG_OPS):
        return ExecutionResult(KIND_ERROR, "invalid select or aggregation")
    for col, op, _value in query.conds:
        if not 0 <= col < n_cols or not 0 <= op < len(COND_OPS):
            return ExecutionResult(KIND_ERROR, "invalid condition")

    matched = [row for row in table.rows if all(_row_matches(row, c) for c in query.conds)]
    if query.agg == 3:  # COUNT
        return ExecutionResult(KIND_SCALAR, len(matched))
    cells = [row[query.sel] for row in matched]
    if query.agg == 0:
        if not cells:
            return ExecutionResult(KIND_EMPTY)
        return ExecutionResult(KIND_LIST, cells)
    numbers = [n for n in (coerce_number(c) for c in cells) if n is not None]
    if not numbers:
        return ExecutionResult(KIND_EMPTY)
    if query.agg == 1:
        return ExecutionResult(KIND_SCALAR, max(numbers))
    if query.agg == 2:
        return ExecutionResult(KIND_SCALAR, min(numbers))
    if query.agg == 4:
        return ExecutionResult(KIND_SCALAR, sum(numbers))
    return ExecutionResult(KIND_SCALAR, sum(numbers) / len(numbers))  # AVG


def results_equal(a: ExecutionResult, b: ExecutionResult, tol: float = 1e-6) -> bool:
    """Result equality: scalars within tol, lists as multisets, error != empty."""
    if a.kind != b.kind:
        return False
    if a.kind == KIND_SCALAR:
        return abs(float(a.value) - float(b.value)) <= tol
    if a.kind == KIND_LIST:
        return sorted(map(normalize_value, a.value)) == sorted(map(normalize_value, b.value))
    return True  # empty == empty, error == error


def eg_select(candidates: Sequence[SqlQuery], table: Table) -> SqlQuery:
    """Highest-ranked candidate that executes to a usable result.

    Candidates must be pre-sorted, best first.  When every candidate errors
    or returns an empty result, the top-ranked one is returned unchanged.
    """
    if not candidates:
        raise ValueError("empty candidate list")
    for query in candidates:
        if execute(query, table).usable:
            return query
    return candidates[0]


def result_to_dict(result: ExecutionResult) -> dict:
    return {"kind": result.kind, "value": result.value if result.kind != KIND_EMPTY else None}
