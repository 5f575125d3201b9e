"""String normalization and similarity helpers shared across the pipeline.

All matching in the pipeline is case-insensitive; surfaces keep their
original casing and normalization happens here, in one place.
"""

from __future__ import annotations

import re

_WS = re.compile(r"\s+")
_NON_ALNUM = re.compile(r"[^a-z0-9]+")
_NUMERIC_JUNK = re.compile(r"[,%\s]")


def norm_space(text: str) -> str:
    """Lowercase, trim, and collapse internal whitespace."""
    return _WS.sub(" ", text.strip().lower())


def norm_alnum(text: str) -> str:
    """Lowercase and drop every non-alphanumeric character.

    Used for character n-gram comparisons so that punctuation and word
    order inside headers ("Split (50m)" vs "50m split") do not mask the
    shared content.
    """
    return _NON_ALNUM.sub("", text.lower())


def char_trigrams(text: str) -> frozenset[str]:
    """Character trigrams of a normalized string.

    Strings shorter than three characters contribute themselves as a
    single gram so that short tokens ("8") can still match exactly.
    """
    s = norm_alnum(text)
    if len(s) < 3:
        return frozenset([s]) if s else frozenset()
    return frozenset(s[i : i + 3] for i in range(len(s) - 2))


def trigram_dice(a: str, b: str) -> float:
    """Dice coefficient over character trigram sets of the two strings."""
    ta, tb = char_trigrams(a), char_trigrams(b)
    if not ta or not tb:
        return 0.0
    return 2.0 * len(ta & tb) / (len(ta) + len(tb))


def token_jaccard(tokens_a, tokens_b) -> float:
    """Jaccard overlap of lowercase token sets, punctuation tokens dropped."""
    sa = {t.lower() for t in tokens_a if norm_alnum(t)}
    sb = {t.lower() for t in tokens_b if norm_alnum(t)}
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def edit_similarity(a: str, b: str) -> float:
    """1 - levenshtein/maxlen on lowercase strings; 0 when either is empty."""
    a, b = a.lower(), b.lower()
    if not a or not b:
        return 0.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def shares_stem(a: str, b: str, min_prefix: int = 4) -> bool:
    """True when the two lowercase strings share a prefix of min_prefix chars."""
    a, b = a.lower(), b.lower()
    n = min(len(a), len(b))
    if n < min_prefix:
        return False
    return a[:min_prefix] == b[:min_prefix]


def coerce_number(value) -> float | None:
    """Parse a cell or value string as a number, or None.

    Strips thousands separators, percent signs, and whitespace first.
    Numeric inputs pass through unchanged.
    """
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        return None
    s = _NUMERIC_JUNK.sub("", value)
    if not s:
        return None
    try:
        return float(s)
    except ValueError:
        return None


def canonical_number(x: float) -> str:
    """Canonical string for a number: no trailing zeros, ints without '.'."""
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def normalize_value(value) -> str:
    """Canonical comparison form for cells and condition values.

    Numbers normalize to a canonical numeric string ("26.50" == "26.5");
    everything else is lowercased, trimmed, and loses a trailing period.
    """
    num = coerce_number(value)
    if num is not None:
        return canonical_number(num)
    s = norm_space(str(value))
    if s.endswith("."):
        s = s[:-1].rstrip()
    return s
