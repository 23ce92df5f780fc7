"""Keyword index construction: category sums, title counting, broadcast."""

from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epipanel import ConfigurationError, DataError, WeeklyPanel
from epipanel.softindex import (
    Channel,
    CountRecord,
    DEFAULT_TERMS,
    TermCategory,
    Kind,
    broadcast_to_municipalities,
    build_index,
    count_news_titles,
    default_categories,
    load_categories,
    load_count_records,
    normalize_term,
    prefix_state_of,
    term_lookup,
)
from oracles import index_by_single_records

ANCHOR = date(2020, 5, 4)
CATEGORIES = default_categories()


def gt(term, state="SP", week=1, count=1):
    return CountRecord(term=term, state_code=state, week=week, count=count, channel=Channel.GT)


def news(term, state="SP", week=1, count=1):
    return CountRecord(term=term, state_code=state, week=week, count=count, channel=Channel.NEWS)


class TestCategories:
    def test_default_lists_sizes(self):
        sizes = {c.label: len(c.terms) for c in CATEGORIES}
        assert sizes == {"covid": 17, "fakenews": 8, "vaccines": 12, "prevention": 13}

    def test_prevention_is_the_behavioral_category(self):
        kinds = {c.label: c.kind for c in CATEGORIES}
        assert kinds["prevention"] == Kind.BEHAVIORAL
        assert all(kinds[l] == Kind.GENERAL for l in ("covid", "fakenews", "vaccines"))

    def test_kind_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            TermCategory(4, "prevention", ("mascara",), Kind.GENERAL)

    def test_duplicate_terms_rejected(self):
        with pytest.raises(ConfigurationError):
            TermCategory(1, "covid", ("covid", "covid"), Kind.GENERAL)

    def test_uppercase_terms_rejected(self):
        with pytest.raises(ConfigurationError):
            TermCategory(1, "covid", ("Covid",), Kind.GENERAL)

    def test_term_in_two_categories_rejected(self):
        cats = (
            TermCategory(1, "covid", ("covid",), Kind.GENERAL),
            TermCategory(2, "fakenews", ("covid",), Kind.GENERAL),
        )
        with pytest.raises(ConfigurationError):
            term_lookup(cats)

    def test_toml_override_and_defaults(self, tmp_path):
        path = tmp_path / "terms.toml"
        path.write_text('[covid]\nterms = ["covid", "corona"]\n')
        cats = load_categories(path)
        by_label = {c.label: c for c in cats}
        assert by_label["covid"].terms == ("covid", "corona")
        assert by_label["prevention"].terms == DEFAULT_TERMS["prevention"]

    def test_normalize_strips_accents_and_whitespace(self):
        assert normalize_term("Transmissão   COVID") == "transmissao covid"
        assert normalize_term("restrições") == "restricoes"


class TestBuildIndex:
    def test_category_sum(self):
        records = [gt("mascara", count=3), gt("quarentena", count=2)]
        panel, rejects = build_index(records, CATEGORIES, Channel.GT)
        assert panel.value("SP", 1, "gt_prevention") == 5
        assert rejects == {}

    def test_empty_cells_are_zero(self):
        records = [gt("mascara", week=2)]
        panel, _ = build_index(records, CATEGORIES, Channel.GT)
        assert panel.value("SP", 1, "gt_vaccines") == 0
        assert panel.value("SP", 1, "gt_prevention") == 0

    def test_all_prevention_terms_sum_to_thirteen(self):
        records = [news(t) for t in DEFAULT_TERMS["prevention"]]
        panel, _ = build_index(records, CATEGORIES, Channel.NEWS)
        assert panel.value("SP", 1, "n_prevention") == 13

    def test_unknown_term_goes_to_rejects(self):
        records = [news("futebol", count=4), news("mascara")]
        panel, rejects = build_index(records, CATEGORIES, Channel.NEWS)
        assert rejects == {"futebol": 4}
        assert panel.value("SP", 1, "n_prevention") == 1

    def test_channel_separation(self):
        records = [gt("mascara"), news("mascara", count=9)]
        gt_panel, _ = build_index(records, CATEGORIES, Channel.GT)
        news_panel, _ = build_index(records, CATEGORIES, Channel.NEWS)
        assert gt_panel.variables == ("gt_covid", "gt_fakenews", "gt_vaccines", "gt_prevention")
        assert news_panel.value("SP", 1, "n_prevention") == 9
        assert gt_panel.value("SP", 1, "gt_prevention") == 1

    def test_negative_count_rejected(self):
        with pytest.raises(DataError):
            gt("mascara", count=-1)

    @settings(deadline=None, max_examples=60)
    @given(
        st.lists(
            st.tuples(
                st.sampled_from(
                    sorted(DEFAULT_TERMS["covid"] + DEFAULT_TERMS["prevention"] + ("zzz",))
                ),
                st.sampled_from(["SP", "RJ", "MG"]),
                st.integers(1, 6),
                st.integers(0, 20),
            ),
            max_size=60,
        )
    )
    def test_matches_single_record_oracle(self, raw):
        records = [gt(t, s, w, c) for t, s, w, c in raw]
        states = ("MG", "RJ", "SP")
        panel, _ = build_index(records, CATEGORIES, Channel.GT, states=states, n_weeks=6)
        term_to_cat = {
            normalize_term(t): c.label for c in CATEGORIES for t in c.terms
        }
        expected = index_by_single_records(
            [CountRecord(normalize_term(r.term), r.state_code, r.week, r.count, r.channel) for r in records],
            term_to_cat,
            states,
            6,
            "gt",
        )
        for var, cells in expected.items():
            for (s, w), v in cells.items():
                assert panel.value(s, w, var) == v

    @given(st.lists(st.tuples(st.sampled_from(["mascara", "covid"]), st.integers(0, 5)), max_size=20))
    def test_monotone_in_records(self, raw):
        records = [gt(t, count=c) for t, c in raw]
        panel, _ = build_index(records, CATEGORIES, Channel.GT, states=("SP",), n_weeks=1)
        more, _ = build_index(
            records + [gt("mascara", count=2)], CATEGORIES, Channel.GT, states=("SP",), n_weeks=1
        )
        for var in panel.variables:
            assert more.value("SP", 1, var) >= panel.value("SP", 1, var)


class TestCountNewsTitles:
    def test_substring_presence(self):
        counts = count_news_titles([("SP", 1, "uso de mascara obrigatório")], CATEGORIES)
        assert [(c.term, c.count) for c in counts] == [("mascara", 1)]

    def test_presence_not_occurrences(self):
        counts = count_news_titles([("SP", 1, "mascara e mascara")], CATEGORIES)
        assert [(c.term, c.count) for c in counts] == [("mascara", 1)]

    def test_one_title_multiple_terms(self):
        counts = count_news_titles(
            [("SP", 1, "cloroquina e ivermectina liberadas")], CATEGORIES
        )
        assert sorted((c.term, c.count) for c in counts) == [
            ("cloroquina", 1),
            ("ivermectina", 1),
        ]

    def test_accent_insensitive_match(self):
        counts = count_news_titles(
            [("SP", 1, "novas RESTRIÇÕES de circulação")], CATEGORIES
        )
        terms = {c.term for c in counts}
        assert "restricoes" in terms and "circulacao" in terms

    def test_multiword_terms_match_after_whitespace_collapse(self):
        counts = count_news_titles(
            [("SP", 1, "governo decreta  toque   de recolher hoje")], CATEGORIES
        )
        assert {c.term for c in counts} == {"toque de recolher"}

    def test_counts_accumulate_per_state_week(self):
        titles = [
            ("SP", 1, "mascara nas ruas"),
            ("SP", 1, "mascara em debate"),
            ("RJ", 1, "mascara"),
            ("SP", 2, "sem temas"),
        ]
        counts = {(c.term, c.state_code, c.week): c.count for c in count_news_titles(titles, CATEGORIES)}
        assert counts == {("mascara", "SP", 1): 2, ("mascara", "RJ", 1): 1}

    def test_feeds_build_index(self):
        titles = [("SP", 1, "quarentena e lockdown decretados")]
        records = count_news_titles(titles, CATEGORIES)
        panel, _ = build_index(records, CATEGORIES, Channel.NEWS, states=("SP",), n_weeks=1)
        assert panel.value("SP", 1, "n_prevention") == 2


class TestBroadcast:
    def _state_panel(self):
        records = [gt("mascara", "35", 1, 7), gt("mascara", "33", 1, 4)]
        panel, _ = build_index(records, CATEGORIES, Channel.GT, states=("33", "35"), n_weeks=2)
        return panel

    def test_copies_state_values(self):
        state_panel = self._state_panel()
        munis = WeeklyPanel(["3550308", "3509502", "3304557"], ANCHOR, 2)
        out = broadcast_to_municipalities(state_panel, prefix_state_of(munis.entities), munis)
        assert out.value("3550308", 1, "gt_prevention") == 7.0
        assert out.value("3509502", 1, "gt_prevention") == 7.0
        assert out.value("3304557", 1, "gt_prevention") == 4.0

    def test_within_state_variance_is_zero(self):
        state_panel = self._state_panel()
        munis = WeeklyPanel(["3501", "3502", "3503", "3301"], ANCHOR, 2)
        out = broadcast_to_municipalities(state_panel, prefix_state_of(munis.entities), munis)
        values = [out.value(e, 1, "gt_prevention") for e in ("3501", "3502", "3503")]
        assert np.var(values) == 0.0

    def test_unmapped_municipality_rejected(self):
        state_panel = self._state_panel()
        munis = WeeklyPanel(["9901"], ANCHOR, 2)
        with pytest.raises(DataError):
            broadcast_to_municipalities(state_panel, prefix_state_of(munis.entities), munis)

    def test_idempotent(self):
        state_panel = self._state_panel()
        munis = WeeklyPanel(["3501", "3301"], ANCHOR, 2)
        state_of = prefix_state_of(munis.entities)
        once = broadcast_to_municipalities(state_panel, state_of, munis)
        twice = broadcast_to_municipalities(state_panel, state_of, once)
        assert once == twice


class TestCountsCsv:
    def test_loader(self, tmp_path):
        path = tmp_path / "counts.csv"
        path.write_text(
            "channel,term,state_code,week_start,count\n"
            "gt,mascara,35,2020-05-04,3\n"
            "news,covid,33,2020-05-11,2\n"
        )
        records = load_count_records(path, ANCHOR)
        assert records[0].channel == Channel.GT and records[0].week == 1
        assert records[1].channel == Channel.NEWS and records[1].week == 2

    def test_bad_channel(self, tmp_path):
        path = tmp_path / "counts.csv"
        path.write_text("channel,term,state_code,week_start,count\nfoo,x,35,2020-05-04,1\n")
        with pytest.raises(DataError):
            load_count_records(path, ANCHOR)
