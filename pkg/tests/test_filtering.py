import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmaug.filtering import (
    FilterRuleSet,
    RULE_ORDER,
    apply_filters,
    derive_thresholds,
)


def test_thresholds_on_constant_lengths():
    rules = derive_thresholds(["a b c", "d e f", "g h i"])
    assert rules.min_len == 3
    assert rules.max_len == 3
    assert rules.vocab == frozenset("abcdefghi")


def test_thresholds_quantiles_on_1_to_100():
    lines = [" ".join(["w"] * n) for n in range(1, 101)]
    rules = derive_thresholds(lines, length_quantiles=(0.01, 0.99))
    assert rules.min_len == 1
    assert rules.max_len == 99


def test_thresholds_vocab_is_word_types():
    rules = derive_thresholds(["the cat sat", "the dog sat"])
    assert rules.vocab == frozenset({"the", "cat", "dog", "sat"})


def test_empty_input_rejected():
    with pytest.raises(ValueError, match="non-empty"):
        derive_thresholds(["", "   "])


def test_all_rules_attribute_first_failure():
    rules = FilterRuleSet(
        min_len=2,
        max_len=4,
        vocab=frozenset({"a", "b", "c", "bad", "hit"}),
        max_oov_per_sentence=0,
        required_keywords=frozenset({"hit"}),
        banned_keywords=frozenset({"bad"}),
        max_duplicates=2,
    )
    lines = [
        "a",  # too short
        "a b c a b",  # too long
        "a zzz hit",  # OOV word
        "a b c",  # missing required keyword
        "hit bad",  # banned beats kept
        "a hit",  # kept
        "a hit",  # kept (second copy)
        "a hit",  # dropped as duplicate
    ]
    report = apply_filters(lines, rules)
    assert report.kept == ["a hit", "a hit"]
    assert report.dropped == {
        "length": 2,
        "oov": 1,
        "required_keyword": 1,
        "banned_keyword": 1,
        "duplicate": 1,
    }
    assert report.input_count == len(lines)
    assert report.kept_count + sum(report.dropped.values()) == report.input_count


def test_oov_budget_allows_some_unknown_words():
    rules = FilterRuleSet(min_len=1, max_len=10, vocab=frozenset({"a"}), max_oov_per_sentence=1)
    report = apply_filters(["a x", "a x y"], rules)
    assert report.kept == ["a x"]
    assert report.dropped["oov"] == 1


def test_no_vocab_disables_oov_rule():
    rules = FilterRuleSet(min_len=1, max_len=10, vocab=None)
    report = apply_filters(["anything goes here"], rules)
    assert report.kept == ["anything goes here"]


def test_duplicate_rule_ignores_content_failures():
    # copies dropped by content rules must not use up the duplicate budget
    rules = FilterRuleSet(min_len=1, max_len=2, vocab=None, max_duplicates=1)
    report = apply_filters(["a b c", "a b", "a b c", "a b"], rules)
    assert report.kept == ["a b"]
    assert report.dropped["length"] == 2
    assert report.dropped["duplicate"] == 1


def test_identity_corner_keeps_everything():
    lines = ["one two", "three four five", "one two"]
    rules = FilterRuleSet(min_len=1, max_len=100, vocab=None)
    report = apply_filters(lines, rules)
    assert report.kept == lines
    assert sum(report.dropped.values()) == 0


def test_filtering_is_idempotent():
    rules = FilterRuleSet(
        min_len=2,
        max_len=3,
        vocab=frozenset({"a", "b", "c"}),
        max_duplicates=2,
    )
    lines = ["a b", "a b", "a b", "c", "a b c", "z z", "b c"]
    first = apply_filters(lines, rules)
    second = apply_filters(first.kept, rules)
    assert second.kept == first.kept
    assert sum(second.dropped.values()) == 0


WORDS = st.sampled_from(["a", "b", "c", "d", "oov1", "oov2"])
LINES = st.lists(st.lists(WORDS, min_size=0, max_size=6).map(" ".join), max_size=40)


@given(LINES, st.integers(0, 3), st.integers(0, 6))
@settings(max_examples=80, deadline=None)
def test_content_rules_match_naive_predicate(lines, min_len, extra):
    rules = FilterRuleSet(
        min_len=min_len,
        max_len=min_len + extra,
        vocab=frozenset({"a", "b", "c"}),
        max_oov_per_sentence=1,
        required_keywords=frozenset({"a", "d"}),
        banned_keywords=frozenset({"c"}),
    )

    def passes(line):
        words = line.split()
        if len(words) < rules.min_len or len(words) > rules.max_len:
            return False
        if sum(1 for w in words if w not in rules.vocab) > 1:
            return False
        if not ({"a", "d"} & set(words)):
            return False
        if "c" in words:
            return False
        return True

    report = apply_filters(lines, rules)
    assert report.kept == [line for line in lines if passes(line)]
    assert report.kept_count + sum(report.dropped.values()) == report.input_count


@given(LINES)
@settings(max_examples=60, deadline=None)
def test_conservation_and_idempotence_hold_generally(lines):
    rules = FilterRuleSet(
        min_len=1,
        max_len=4,
        vocab=frozenset({"a", "b", "c", "d"}),
        max_oov_per_sentence=0,
        max_duplicates=2,
    )
    report = apply_filters(lines, rules)
    assert report.kept_count + sum(report.dropped.values()) == report.input_count
    again = apply_filters(report.kept, rules)
    assert again.kept == report.kept


def test_throughput_10k_sentences():
    lines = [("word%d " % (i % 50)) * 5 for i in range(10000)]
    rules = derive_thresholds(lines[:500], max_duplicates=3)
    start = time.time()
    report = apply_filters(lines, rules)
    elapsed = time.time() - start
    assert elapsed < 10.0
    assert report.input_count == 10000


def test_report_summary_lines_cover_all_rules():
    report = apply_filters(["a"], FilterRuleSet(min_len=1, max_len=3, vocab=None))
    text = "\n".join(report.summary_lines())
    for rule in RULE_ORDER:
        assert "dropped_%s" % rule in text
    assert "input 1" in text and "kept 1" in text


def test_ruleset_validation():
    with pytest.raises(ValueError, match="min_len"):
        FilterRuleSet(min_len=5, max_len=2)
    with pytest.raises(ValueError, match="max_duplicates"):
        FilterRuleSet(min_len=1, max_len=2, max_duplicates=0)
