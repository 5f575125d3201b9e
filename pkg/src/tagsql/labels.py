"""BIO label sets for mention roles and clause spans."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

NEG_INF = float("-inf")

# Functional role labels: select column, where column, value, aggregation id,
# operator id.  AGG0 / OP0 exist in the label set even though the pipeline
# never lexicalizes them (no aggregation / '=' are the unmentioned defaults).
ROLE_FUNCTIONS = ("S", "C", "V") + tuple(f"AGG{i}" for i in range(6)) + tuple(
    f"OP{i}" for i in range(3)
)
SPAN_FUNCTIONS = ("Sel", "Cond")


class LabelSet:
    """An O + {B,I}xfunctions label inventory with its BIO transition rules.

    Label order is fixed: O first (index 0), then B-f, I-f per function in
    declared order.  Decoders break ties toward the lowest index, which makes
    "O preferred, then label-set order" the tie rule everywhere.
    """

    def __init__(self, functions: tuple[str, ...], name: str):
        self.name = name
        self.functions = tuple(functions)
        names = ["O"]
        for f in self.functions:
            names.append(f"B-{f}")
            names.append(f"I-{f}")
        self.names: tuple[str, ...] = tuple(names)
        self.index: dict[str, int] = {n: i for i, n in enumerate(self.names)}
        self.n = len(self.names)

    def __len__(self) -> int:
        return self.n

    def function_of(self, label: str) -> str | None:
        return None if label == "O" else label[2:]

    def position_of(self, label: str) -> str | None:
        return None if label == "O" else label[0]

    def b_label(self, function: str) -> str:
        return f"B-{function}"

    def i_label(self, function: str) -> str:
        return f"I-{function}"

    def legal_transition(self, prev: str, nxt: str) -> bool:
        """I-f is reachable only from B-f / I-f; everything else is open."""
        if nxt == "O" or nxt.startswith("B-"):
            return True
        func = nxt[2:]
        return prev in (f"B-{func}", f"I-{func}")

    def transition_mask(self) -> np.ndarray:
        """Boolean (n, n) matrix of legal (prev, next) transitions."""
        mask = np.zeros((self.n, self.n), dtype=bool)
        for i, a in enumerate(self.names):
            for j, b in enumerate(self.names):
                mask[i, j] = self.legal_transition(a, b)
        return mask

    def masked_transitions(self, values: np.ndarray | None = None) -> np.ndarray:
        """Dense transition matrix with illegal entries at -inf."""
        trans = np.zeros((self.n, self.n)) if values is None else values.copy()
        trans[~self.transition_mask()] = NEG_INF
        return trans

    def start_mask(self) -> np.ndarray:
        """0 for labels legal at position 0 (O, B-*), -inf for I-*."""
        start = np.zeros(self.n)
        for i, name in enumerate(self.names):
            if name.startswith("I-"):
                start[i] = NEG_INF
        return start

    def encode(self, labels) -> np.ndarray:
        return np.array([self.index[l] for l in labels], dtype=np.int64)

    def decode(self, indices) -> list[str]:
        return [self.names[int(i)] for i in indices]

    def is_valid_bio(self, labels) -> bool:
        prev = "O"
        for label in labels:
            if label not in self.index:
                return False
            if label.startswith("I-") and prev not in (f"B-{label[2:]}", f"I-{label[2:]}"):
                return False
            prev = label
        return True


@lru_cache(maxsize=None)
def role_labels() -> LabelSet:
    return LabelSet(ROLE_FUNCTIONS, "roles")


@lru_cache(maxsize=None)
def span_labels() -> LabelSet:
    return LabelSet(SPAN_FUNCTIONS, "spans")


def bio_runs(labels) -> list[tuple[str, int, int]]:
    """Contiguous (function, start, end) runs of a BIO label sequence.

    A B- label always opens a new run; an I- label extends the current run
    of the same function (the input is assumed BIO-valid).
    """
    runs: list[tuple[str, int, int]] = []
    open_func: str | None = None
    start = 0
    for i, label in enumerate(labels):
        if label == "O":
            if open_func is not None:
                runs.append((open_func, start, i))
                open_func = None
        elif label.startswith("B-"):
            if open_func is not None:
                runs.append((open_func, start, i))
            open_func = label[2:]
            start = i
        else:  # I-
            if open_func != label[2:]:
                if open_func is not None:
                    runs.append((open_func, start, i))
                open_func = label[2:]
                start = i
    if open_func is not None:
        runs.append((open_func, start, len(labels)))
    return runs
