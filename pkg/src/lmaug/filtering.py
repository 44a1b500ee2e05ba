"""Rule-based cleanup of generated sentences.

Rules run in a fixed order (length, out-of-vocabulary words, required
keywords, banned keywords, duplicates) and each dropped sentence is
attributed to the first rule it fails, so report counts always add up to
the input size.
"""

import dataclasses
import math
from collections import Counter

RULE_ORDER = ("length", "oov", "required_keyword", "banned_keyword", "duplicate")


@dataclasses.dataclass(frozen=True)
class FilterRuleSet:
    min_len: int
    max_len: int
    vocab: frozenset = None  # allowed word types; None disables the OOV rule
    max_oov_per_sentence: int = 0
    required_keywords: frozenset = frozenset()
    banned_keywords: frozenset = frozenset()
    max_duplicates: int = None  # None allows unlimited copies

    def __post_init__(self):
        if self.min_len < 0 or self.max_len < self.min_len:
            raise ValueError("need 0 <= min_len <= max_len")
        if self.max_oov_per_sentence < 0:
            raise ValueError("max_oov_per_sentence must be non-negative")
        if self.max_duplicates is not None and self.max_duplicates < 1:
            raise ValueError("max_duplicates must be positive")


@dataclasses.dataclass
class FilterReport:
    kept: list
    input_count: int
    dropped: dict  # rule name -> count

    @property
    def kept_count(self):
        return len(self.kept)

    def summary_lines(self):
        lines = ["input %d" % self.input_count, "kept %d" % self.kept_count]
        for rule in RULE_ORDER:
            lines.append("dropped_%s %d" % (rule, self.dropped.get(rule, 0)))
        return lines


def _quantile_nearest_rank(sorted_values, q):
    n = len(sorted_values)
    idx = max(0, math.ceil(q * n) - 1)
    return sorted_values[min(idx, n - 1)]


def derive_thresholds(
    lines,
    length_quantiles=(0.01, 0.99),
    max_oov_per_sentence=0,
    required_keywords=(),
    banned_keywords=(),
    max_duplicates=None,
):
    """Build a FilterRuleSet from in-domain data.

    Length bounds are nearest-rank quantiles of the in-domain sentence
    lengths and the vocabulary is the set of word types seen there.
    """
    lengths = []
    vocab = set()
    for line in lines:
        words = line.split()
        if not words:
            continue
        lengths.append(len(words))
        vocab.update(words)
    if not lengths:
        raise ValueError("no non-empty lines to derive thresholds from")
    lengths.sort()
    lo, hi = length_quantiles
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError("length_quantiles must satisfy 0 <= low <= high <= 1")
    return FilterRuleSet(
        min_len=_quantile_nearest_rank(lengths, lo),
        max_len=_quantile_nearest_rank(lengths, hi),
        vocab=frozenset(vocab),
        max_oov_per_sentence=max_oov_per_sentence,
        required_keywords=frozenset(required_keywords),
        banned_keywords=frozenset(banned_keywords),
        max_duplicates=max_duplicates,
    )


def _failing_rule(words, rules):
    """Name of the first content rule the sentence fails, or None."""
    if not rules.min_len <= len(words) <= rules.max_len:
        return "length"
    if rules.vocab is not None:
        oov = sum(1 for w in words if w not in rules.vocab)
        if oov > rules.max_oov_per_sentence:
            return "oov"
    if rules.required_keywords and not any(w in rules.required_keywords for w in words):
        return "required_keyword"
    if rules.banned_keywords and any(w in rules.banned_keywords for w in words):
        return "banned_keyword"
    return None


def apply_filters(lines, rules):
    """Filter lines in order; returns a FilterReport whose counts conserve.

    The duplicate rule sees only sentences that pass the content rules and
    keeps the first max_duplicates copies of each distinct line.
    """
    dropped = {rule: 0 for rule in RULE_ORDER}
    kept = []
    seen = Counter()
    for line in lines:
        rule = _failing_rule(line.split(), rules)
        if rule is not None:
            dropped[rule] += 1
            continue
        if rules.max_duplicates is not None:
            seen[line] += 1
            if seen[line] > rules.max_duplicates:
                dropped["duplicate"] += 1
                continue
        kept.append(line)
    return FilterReport(kept=kept, input_count=len(lines), dropped=dropped)
