import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgealloc.complexity import (
    ComplexityParams,
    ComplexityClassifier,
    SIMILARITY_METRICS,
    classify_complexity,
    distance_to_similarity,
    fuse_similarities,
    hamacher_fold,
    per_tuple_similarity,
    quasi_arithmetic_mean,
    significance_levels,
    similarity_metric,
    tokenize_statement,
    TrainingQueryCorpus,
    load_corpus,
    save_corpus,
)
from edgealloc.errors import DataError

unit_floats = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


def feat(*tokens):
    return tokenize_statement(" ".join(tokens))


# ---------------------------------------------------------------------------
# tokenisation
# ---------------------------------------------------------------------------


def test_tokenize_basic_split():
    assert feat("SELECT", "X", "FROM", "T").tokens == frozenset({"select", "x", "from", "t"})


def test_tokenize_is_deterministic():
    s = "SELECT name FROM t WHERE x >= 10"
    assert tokenize_statement(s) == tokenize_statement(s)


def test_tokenize_counts_repeated_tokens():
    f = tokenize_statement("SELECT NAME, PRICE FROM STOCKS WHERE PRICE <= 100 AND PRICE >= 10")
    assert f.as_counter()["price"] == 3


def test_tokenize_rejects_empty():
    with pytest.raises(ValueError):
        tokenize_statement("   ")
    with pytest.raises(ValueError):
        tokenize_statement("<=>")


# ---------------------------------------------------------------------------
# similarity metrics
# ---------------------------------------------------------------------------


def test_jaccard_identical_and_disjoint():
    assert similarity_metric("jaccard", feat("a", "b"), feat("a", "b")) == 1.0
    assert similarity_metric("jaccard", feat("a", "b"), feat("c", "d")) == 0.0


def test_jaccard_partial_overlap():
    # |intersection| = 1, |union| = 3
    assert similarity_metric("jaccard", feat("a", "b"), feat("b", "c")) == pytest.approx(1 / 3)


def test_cosine_identical():
    assert similarity_metric("cosine", feat("a", "b"), feat("a", "b")) == pytest.approx(1.0)


def test_hamming_uses_pair_vocabulary():
    # vocabulary {a, b, c}: one shared, two mismatched -> distance 2/3
    value = similarity_metric("hamming", feat("a", "b"), feat("b", "c"))
    assert value == pytest.approx(1.0 / (1.0 + 2 / 3))


def test_unknown_metric_rejected():
    with pytest.raises(ValueError):
        similarity_metric("euclid", feat("a"), feat("b"))


def test_distance_to_similarity_values():
    assert distance_to_similarity(0.0) == 1.0
    assert distance_to_similarity(1.0) == 0.5
    assert distance_to_similarity(3.0) == 0.25
    with pytest.raises(ValueError):
        distance_to_similarity(-0.1)


@given(st.floats(min_value=0, max_value=1e6), st.floats(min_value=0, max_value=1e6))
def test_distance_to_similarity_decreasing(d1, d2):
    lo, hi = sorted((d1, d2))
    assert distance_to_similarity(hi) <= distance_to_similarity(lo)


# ---------------------------------------------------------------------------
# significance levels
# ---------------------------------------------------------------------------


def test_significance_sigmoid_midpoint():
    # delta1 * count == delta2 lands on the sigmoid midpoint
    assert significance_levels([0.3], gamma=0.1, delta1=2.0, delta2=2.0) == [0.5]


def test_significance_single_value():
    (sl,) = significance_levels([0.7], gamma=0.1, delta1=1.0, delta2=0.0)
    assert sl == pytest.approx(1.0 / (1.0 + math.exp(-1.0)))


def test_significance_isolated_value_scores_lowest():
    values = [0.1, 0.11, 0.9]
    sls = significance_levels(values, gamma=0.05, delta1=1.0, delta2=1.0)
    assert sls[2] < sls[0] and sls[2] < sls[1]


@given(st.lists(unit_floats, min_size=1, max_size=8))
def test_significance_levels_strictly_inside_unit_interval(values):
    for sl in significance_levels(values, gamma=0.1, delta1=1.0, delta2=1.0):
        assert 0.0 < sl < 1.0


# ---------------------------------------------------------------------------
# hamacher fold
# ---------------------------------------------------------------------------


def test_hamacher_singleton_identity():
    assert hamacher_fold([0.37], a=1.0) == 0.37


def test_hamacher_product_case():
    assert hamacher_fold([0.5, 0.5], a=1.0) == pytest.approx(0.25)


def test_hamacher_parameterised_case():
    # a=2: 0.25 / (2 + (-1) * 0.75) = 0.2
    assert hamacher_fold([0.5, 0.5], a=2.0) == pytest.approx(0.2)


def test_hamacher_degenerate_zero_case():
    assert hamacher_fold([0.0, 0.0], a=0.0) == 0.0


def test_hamacher_rejects_negative_parameter():
    with pytest.raises(ValueError):
        hamacher_fold([0.5], a=-1.0)


@given(st.lists(unit_floats, min_size=1, max_size=6), st.floats(min_value=0, max_value=5))
def test_hamacher_stays_in_unit_interval(values, a):
    assert 0.0 <= hamacher_fold(values, a) <= 1.0


@given(st.lists(unit_floats, min_size=2, max_size=6))
def test_hamacher_at_one_equals_plain_product(values):
    expected = math.prod(values)
    assert hamacher_fold(values, a=1.0) == pytest.approx(expected, abs=1e-12)


# ---------------------------------------------------------------------------
# quasi-arithmetic mean
# ---------------------------------------------------------------------------


def test_qam_arithmetic_case():
    assert quasi_arithmetic_mean([0.2, 0.4], alpha=1.0) == pytest.approx(0.3)


def test_qam_quadratic_case():
    assert quasi_arithmetic_mean([0.3, 0.4], alpha=2.0) == pytest.approx(math.sqrt(0.125))


@given(unit_floats, st.integers(min_value=1, max_value=6),
       st.floats(min_value=-3, max_value=3).filter(lambda a: abs(a) > 1e-3))
def test_qam_idempotent_on_constant_lists(c, n, alpha):
    assert quasi_arithmetic_mean([c] * n, alpha) == pytest.approx(c, abs=1e-9)


@given(st.lists(unit_floats, min_size=2, max_size=6), st.integers(min_value=0, max_value=5),
       st.floats(min_value=0.1, max_value=4))
def test_qam_monotone_in_each_argument(values, idx, alpha):
    idx = idx % len(values)
    bumped = list(values)
    bumped[idx] = min(1.0, bumped[idx] + 0.25)
    assert quasi_arithmetic_mean(bumped, alpha) >= quasi_arithmetic_mean(values, alpha) - 1e-12


def test_qam_rejects_zero_alpha_and_empty():
    with pytest.raises(ValueError):
        quasi_arithmetic_mean([0.5], alpha=0.0)
    with pytest.raises(ValueError):
        quasi_arithmetic_mean([], alpha=1.0)


# ---------------------------------------------------------------------------
# fusion of metric values
# ---------------------------------------------------------------------------


def test_fuse_product_of_all_three():
    params = ComplexityParams(top_n=3)
    assert fuse_similarities([0.2, 0.5, 0.3], params) == pytest.approx(0.03)


def test_fuse_top_one_keeps_highest_significance():
    params = ComplexityParams(top_n=1)
    # 0.1 and 0.15 support each other; 0.9 is isolated
    assert fuse_similarities([0.1, 0.9, 0.15], params) == pytest.approx(0.15)


def test_fuse_identical_statements_give_one():
    f = feat("select", "x", "from", "t")
    assert per_tuple_similarity(f, f, ComplexityParams()) == pytest.approx(1.0)


@given(st.lists(unit_floats, min_size=3, max_size=3), st.integers(min_value=1, max_value=3))
def test_fuse_more_factors_never_increases_product(values, n):
    small = fuse_similarities(values, ComplexityParams(top_n=n))
    if n < 3:
        bigger = fuse_similarities(values, ComplexityParams(top_n=n + 1))
        assert bigger <= small + 1e-12


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


def _single_corpus():
    return TrainingQueryCorpus(
        [
            ("select a from t order by a", 0),
            ("select x from stocks where x >= 10", 1),
            ("select y from a join b on a.id = b.id", 2),
        ]
    )


def test_identical_statement_gives_full_membership():
    corpus = _single_corpus()
    vector, resolved = classify_complexity("select x from stocks where x >= 10", corpus)
    assert vector.memberships[1] == pytest.approx(1.0)
    assert resolved is not None and resolved.id == 1


def test_below_threshold_is_unresolved():
    corpus = _single_corpus()
    vector, resolved = classify_complexity("update prices set v = 0", corpus)
    assert vector.max() < 0.8
    assert resolved is None


def test_membership_ties_resolve_to_lowest_class_index():
    corpus = TrainingQueryCorpus(
        [("select a from t", 0), ("select a from t", 1), ("select a from t", 2)]
    )
    _, resolved = classify_complexity("select a from t", corpus)
    assert resolved is not None and resolved.id == 0


def test_classification_is_deterministic():
    corpus = _single_corpus()
    v1, _ = classify_complexity("select x from stocks where x >= 11", corpus)
    v2, _ = classify_complexity("select x from stocks where x >= 11", corpus)
    assert v1.memberships == v2.memberships


def test_corpus_requires_every_class():
    with pytest.raises(DataError):
        TrainingQueryCorpus([("select a from t", 0), ("select b from t", 0)])


def test_vectorized_scores_match_scalar_path():
    corpus = _single_corpus()
    clf = ComplexityClassifier(corpus)
    params = ComplexityParams()
    query = tokenize_statement("select x, y from stocks join t where x >= 10")
    fast = clf.pairwise_scores(query)
    slow = [
        per_tuple_similarity(query, tokenize_statement(s), params) for s, _ in corpus.entries
    ]
    assert np.allclose(fast, slow, atol=1e-12)


def test_corpus_roundtrip_through_file(tmp_path):
    corpus = _single_corpus()
    path = tmp_path / "corpus.tsv"
    save_corpus(path, corpus)
    loaded = load_corpus(path)
    assert loaded.entries == corpus.entries


def test_corpus_file_with_bad_label_reports_line(tmp_path):
    path = tmp_path / "corpus.tsv"
    path.write_text("select a from t\tO(n)\nselect b from t\tO(n!)\n", encoding="utf-8")
    with pytest.raises(DataError, match=":2"):
        load_corpus(path)
