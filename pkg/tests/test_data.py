import pytest
from hypothesis import given, settings, strategies as st

from medipool.data import (C1_C2, C3, MEAN_SD, MEDIAN_ONLY, S1, S2, S3, UNUSABLE, DataError,
                           Dataset, GroupSummary, QUANTILE_FIELDS, classify_group,
                           dataset_to_csv, parse_dataset, validate_dataset)


def test_excerpt_parses(excerpt):
    assert len(excerpt) == 5 and excerpt.two_group
    s = excerpt.studies[0]
    assert s.study_id == "1"
    assert s.group1 == GroupSummary(n=35, mean=77.0, sd=8.3)
    assert s.group2 == GroupSummary(n=157, mean=65.6, sd=15.6)
    assert classify_group(excerpt.studies[2].group1) == S2
    assert validate_dataset(excerpt) == []


def test_author_column_and_extra_columns():
    d = parse_dataset("author,year,med.g1,n.g1\nSmith,2020,4,10\nJones,2021,NA,\n")
    assert [s.study_id for s in d] == ["Smith", "Jones"]
    assert d.studies[0].extra == (("year", "2020"),)
    assert d.studies[1].group1 == GroupSummary()
    assert not d.two_group


def test_median_only_row():
    d = parse_dataset("med.g1\n12\n")
    assert not d.two_group
    assert classify_group(d.studies[0].group1) == MEDIAN_ONLY


def test_header_only_is_error():
    with pytest.raises(DataError, match="zero data rows"):
        parse_dataset("med.g1,n.g1\n")
    with pytest.raises(DataError):
        parse_dataset("")
    with pytest.raises(DataError):
        Dataset((), False)


def test_malformed_and_duplicate():
    with pytest.raises(DataError, match=r"row 2, column 'n.g1'"):
        parse_dataset("med.g1,n.g1\n1,2\n3,abc\n")
    with pytest.raises(DataError, match="duplicate"):
        parse_dataset("med.g1,med.g1\n1,2\n")


def test_mixed_arity_rejected():
    with pytest.raises(DataError, match="mixed"):
        parse_dataset("med.g1,med.g2\n1,2\n3,NA\n")


def test_column_names_case_sensitive():
    d = parse_dataset("MED.g1,med.g1\n5,6\n")
    assert d.studies[0].group1.med == 6
    assert d.studies[0].extra == (("MED.g1", "5"),)


@pytest.mark.parametrize("g,tag", [
    (GroupSummary(q1=65, med=76, q3=82, n=31), S2),
    (GroupSummary(mean=77.0, sd=8.3, n=35), MEAN_SD),
    (GroupSummary(), UNUSABLE),
    (GroupSummary(min=1, med=2, max=3, n=5), S1),
    (GroupSummary(min=1, q1=2, med=3, q3=4, max=5, n=9), S3),
    (GroupSummary(med=3, med_var=1.0), C3),
    (GroupSummary(med_ci_lb=1, med_ci_ub=2, alpha_1=0.025, alpha_2=0.025), C1_C2),
    # Precedence when sets overlap.
    (GroupSummary(q1=1, med=2, q3=3, n=5, mean=2, sd=1), S2),
    (GroupSummary(mean=2, sd=1, n=5, med=2, med_var=1), MEAN_SD),
    (GroupSummary(med=2, med_var=1, med_ci_lb=1, med_ci_ub=3, alpha_1=.1, alpha_2=.1), C3),
    (GroupSummary(q1=1, med=2, q3=3), MEDIAN_ONLY),
    (GroupSummary(mean=2, sd=1), UNUSABLE),
])
def test_classify(g, tag):
    assert classify_group(g) == tag


def test_validation_messages():
    d = parse_dataset("min.g1,q1.g1,med.g1,q3.g1,max.g1,n.g1\n5,3,4,6,9,10\n")
    v = validate_dataset(d)
    assert [x.message for x in v] == ["min ≤ q1 ordering"]
    assert v[0].study_id == "1" and v[0].group == 1
    d = parse_dataset("sd.g1,mean.g1,n.g1\n-1,3,10\n")
    assert [x.message for x in validate_dataset(d)] == ["sd > 0"]
    d = parse_dataset("med.g1,n.g1,alpha.1.g1,med.ci.lb.g1,med.ci.ub.g1\n5,2.5,0.7,6,4\n")
    msgs = {x.message for x in validate_dataset(d)}
    assert msgs == {"n must be a positive integer", "alpha_1 in (0, 0.5)", "med_ci_lb ≤ med_ci_ub"}


_num = st.one_of(st.none(), st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
_group = st.builds(GroupSummary, **{k: _num for k in (*QUANTILE_FIELDS, "mean", "sd")},
                   n=st.one_of(st.none(), st.integers(1, 10_000).map(float)))


@settings(max_examples=200)
@given(st.lists(st.tuples(_group, _group), min_size=1, max_size=6), st.booleans())
def test_csv_round_trip(groups, two):
    from medipool.data import StudySummary
    studies = []
    for i, (g1, g2) in enumerate(groups):
        if two and g2.is_empty():
            g2 = GroupSummary(n=1.0)
        studies.append(StudySummary(str(i + 1), g1, g2 if two else GroupSummary()))
    d = Dataset(tuple(studies), two)
    back = parse_dataset(dataset_to_csv(d))
    assert [(s.group1, s.group2) for s in back] == [(s.group1, s.group2) for s in d]
    assert parse_dataset(dataset_to_csv(back)) == back


def test_round_trip_keeps_extra_columns(excerpt_path):
    text = "author,year,med.g1,n.g1\nA,2020,1.5,10\nB,x,2,12\n"
    d = parse_dataset(text)
    assert dataset_to_csv(d) == text


@given(_group)
def test_classify_total(g):
    assert classify_group(g) in (S1, S2, S3, MEAN_SD, MEDIAN_ONLY, C1_C2, C3, UNUSABLE)


def test_shift_and_scale():
    g = GroupSummary(q1=1, med=2, q3=4, n=10, mean=2.5, sd=1, med_var=0.25)
    assert g.shifted(10) == GroupSummary(q1=11, med=12, q3=14, n=10, mean=12.5, sd=1, med_var=0.25)
    assert g.scaled(2) == GroupSummary(q1=2, med=4, q3=8, n=10, mean=5, sd=2, med_var=1.0)
