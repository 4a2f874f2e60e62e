import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpt.errors import RulesetError
from bpt.mesh_filter import (
    ArticleRecord,
    MeshRuleset,
    classify_record,
    load_ruleset,
    select_articles,
    tree_matches,
)

from .oracles import tree_matches_oracle


def test_tree_matches_category_root():
    assert tree_matches("C04.557.337", "C") is True


def test_tree_matches_dotted_prefix():
    assert tree_matches("B01.650.940", "B01.650") is True


def test_tree_matches_partial_component_rejected():
    assert tree_matches("C22.1", "C2") is False


def test_tree_matches_exact():
    assert tree_matches("A13", "A13") is True
    assert tree_matches("A130", "A13") is False


tree_number_st = st.builds(
    lambda letter, groups: letter + "".join(groups),
    st.sampled_from("ABCDEFGHIJKLNZ"),
    st.lists(
        st.one_of(
            st.integers(0, 99).map(lambda n: f"{n:02d}"),
            st.integers(0, 999).map(lambda n: f".{n}"),
        ),
        max_size=4,
    ).map(lambda gs: gs[:1] + [g for g in gs[1:] if g.startswith(".")]),
)


@settings(max_examples=200, deadline=None)
@given(tree_number_st, tree_number_st)
def test_tree_matches_agrees_with_component_oracle(tree, prefix):
    assert tree_matches(tree, prefix) == tree_matches_oracle(tree, prefix)


def make_ruleset(**overrides):
    base = dict(
        name="t",
        included_prefixes=["C", "A13"],
        excluded_prefixes=["N", "E05"],
        min_year=None,
    )
    base.update(overrides)
    return MeshRuleset(**base)


def test_ruleset_rejects_overlap():
    with pytest.raises(RulesetError, match="both lists"):
        make_ruleset(included_prefixes=["C"], excluded_prefixes=["C"])


def test_ruleset_rejects_bad_prefix():
    with pytest.raises(RulesetError, match="invalid tree-number prefix"):
        make_ruleset(included_prefixes=["c04"])


def rec(rid, trees, year=None):
    return ArticleRecord(rid, trees, year=year, text="t\n")


def test_included_record():
    assert classify_record(rec("a", ["C04.557"]), make_ruleset()) == "included"


def test_excluded_by_rule_beats_include():
    ruleset = make_ruleset()
    assert classify_record(rec("a", ["C04.557", "N06.850"]), ruleset) == "excluded_by_rule"


def test_no_trees_is_no_match():
    assert classify_record(rec("a", []), make_ruleset()) == "no_match"


def test_year_gate():
    ruleset = make_ruleset(min_year=2010)
    assert classify_record(rec("a", ["C04"], year=2008), ruleset) == "excluded_by_year"
    assert classify_record(rec("a", ["C04"], year=2010), ruleset) == "included"
    assert classify_record(rec("a", ["C04"], year=None), ruleset) == "excluded_by_year"


def run_filter(records, ruleset):
    stream, report = select_articles(records, ruleset)
    return list(stream), report


def test_select_articles_counts_and_order():
    records = [
        rec("1", ["C04"]),
        rec("2", ["N06"]),  # no included match at all -> no_match, not excluded
        rec("3", ["C04", "N06"]),
        rec("4", []),
        rec("5", ["C99.1"]),
    ]
    included, report = run_filter(records, make_ruleset())
    assert [r.article_id for r in included] == ["1", "5"]
    assert report.to_dict() == {
        "total": 5,
        "included": 2,
        "excluded_by_rule": 1,
        "excluded_by_year": 0,
        "no_match": 2,
        "skipped": 0,
    }


def test_malformed_tree_number_skipped_with_warning(caplog):
    records = [rec("ok", ["C04"]), rec("bad", ["notatree"])]
    with caplog.at_level(logging.WARNING):
        included, report = run_filter(records, make_ruleset())
    assert [r.article_id for r in included] == ["ok"]
    assert report.skipped == 1
    assert any("bad" in m for m in caplog.messages)


def test_counts_partition_total():
    records = [
        rec("1", ["C04"]),
        rec("2", ["N06"]),
        rec("3", ["??"]),
        rec("4", ["A13"], year=1999),
        rec("5", ["Q99"]),
    ]
    ruleset = make_ruleset(min_year=2005)
    included, r = run_filter(records, ruleset)
    assert r.included + r.excluded_by_rule + r.excluded_by_year + r.no_match + r.skipped == r.total


def test_idempotent_filtering():
    records = [rec(str(i), ["C04"] if i % 2 else ["N06", "C04"]) for i in range(10)]
    ruleset = make_ruleset()
    once, _ = run_filter(records, ruleset)
    twice, report2 = run_filter(once, ruleset)
    assert [r.article_id for r in twice] == [r.article_id for r in once]
    assert report2.included == report2.total


def test_removing_excluded_prefix_is_monotone():
    records = [rec(str(i), trees) for i, trees in enumerate(
        [["C04"], ["C04", "N06"], ["C04", "E05.1"], ["A13", "N01"], ["B01"]]
    )]
    full = make_ruleset()
    relaxed = make_ruleset(excluded_prefixes=["E05"])
    _, r_full = run_filter(records, full)
    _, r_relaxed = run_filter(records, relaxed)
    assert r_relaxed.included >= r_full.included


def test_bundled_rulesets_load_and_differ():
    sp = load_ruleset("sP")
    fp = load_ruleset("fP")
    assert sp.name == "sP" and fp.name == "fP"
    assert sp.min_year is not None and fp.min_year is None
    assert "C" in sp.included_prefixes and "C" in fp.included_prefixes
    assert "G" in sp.excluded_prefixes and "G17" in fp.excluded_prefixes
    assert "A13" in sp.included_prefixes and "A13" not in fp.included_prefixes


def test_missing_ruleset_file_raises():
    with pytest.raises(FileNotFoundError):
        load_ruleset("nonexistent.json")
