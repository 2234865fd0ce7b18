import csv
import itertools

from hypothesis import given, settings
from hypothesis import strategies as st

from choreo.database import (
    SolutionRecord,
    deduplicate,
    detect_pairs,
    export_csv,
    make_record,
    read_records,
    recompute_t_star,
    summarize,
    write_jsonl,
)
from choreo.nbody import SearchTriplet
from choreo.precision import matching_digits, mp, working_digits

from conftest import FIGURE_EIGHT

T_119 = "0.600424230253006803e3"
T_120 = "0.600424230253006829e3"


def _rec(id, t_star, k=65, stability=None, **kw):
    return SolutionRecord(id=id, v_x="0.1", v_y="0.5", T="1", T_star=t_star, k=k, stability=stability, **kw)


def _stable(nu1, nu2):
    return {"verdict": "linearly stable", "type": "elliptic-elliptic", "nu": [nu1, nu2], "lambda": None}


def _hyper(nu, lam):
    return {"verdict": "not confirmed", "type": "hyperbolic-elliptic", "nu": [nu], "lambda": lam}


def test_identical_records_are_linked():
    a, b = _rec("a", T_119), _rec("b", T_119)
    d = deduplicate([a, b])
    assert d.distinct == 1 and d.representations == 2
    assert d.representative == {"a": "a", "b": "a"}


def test_published_rows_stay_distinct():
    d = deduplicate([_rec("r119", T_119), _rec("r120", T_120)])
    assert d.distinct == 2
    assert not d.conflicts


def test_equal_t_star_with_different_k_is_a_conflict():
    d = deduplicate([_rec("a", T_119, k=65), _rec("b", T_119, k=64)])
    assert d.conflicts == [("a", "b")]
    assert d.distinct == 2


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(["600.1", "600.2", "600.3"]), min_size=1, max_size=7))
def test_linking_is_an_equivalence(values):
    recs = [_rec(f"r{n}", v) for n, v in enumerate(values)]
    rep = deduplicate(recs).representative
    for x, y in itertools.product(recs, repeat=2):
        assert (rep[x.id] == rep[y.id]) == (x.T_star == y.T_star)


def test_published_pair_is_detected():
    s = _rec("119", T_119, stability=_stable("0.255011944221133753875666925693", "2.19223274459622941216216635818e-05"))
    h = _rec("120", T_120, stability=_hyper("0.255011941995861150357102898351", "1.00013775153254718967585223182"))
    pairs = detect_pairs([s, h])
    assert len(pairs) == 1
    p = pairs[0]
    assert (p.stable_id, p.hyperbolic_id, p.k) == ("119", "120", 65)
    assert abs(p.nu_gap - 2.2e-9) < 1e-10
    assert abs(p.lambda_gap - 1.3775e-4) < 1e-7


def test_lone_or_gated_records_make_no_pair():
    s = _rec("119", T_119, stability=_stable("0.2550119442", "2.19e-05"))
    assert detect_pairs([s]) == []
    far = _rec("120", T_120, stability=_hyper("0.2550119420", "1.5"))
    assert detect_pairs([s, far]) == []
    other_k = _rec("121", T_120, k=64, stability=_hyper("0.2550119420", "1.0001"))
    assert detect_pairs([s, other_k]) == []


def test_record_round_trip_keeps_every_digit(tmp_path):
    with working_digits(200):
        x = mp(1) / 7
        t = SearchTriplet(x, x * 3, mp(FIGURE_EIGHT[2]))
        rec = make_record("p", t, 180, k=1, word="abAB", choreography=True)
    path = tmp_path / "db.jsonl"
    write_jsonl(path, [rec])
    back = read_records(path)[0]
    assert back == rec
    assert len(back.v_x.split("e")[0]) == len("0.") + 180
    assert recompute_t_star(back)[:172] == rec.T_star[:172]


def test_t_star_is_consistent_with_the_triplet():
    with working_digits(80):
        t = SearchTriplet.parse(*FIGURE_EIGHT)
        rec = make_record("fe", t, 60)
        assert matching_digits(mp(rec.T_star), mp(recompute_t_star(rec, 60))) >= 59


def test_csv_layout(tmp_path):
    recs = [_rec("a", T_119), _rec("b", T_120, k=None)]
    export_csv(recs, tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["N", "v_x", "v_y", "T", "T*", "k"]
    assert rows[1][0] == "1" and rows[1][4] == T_119 and rows[1][5] == "65"
    assert rows[2][5] == ""


def test_summary_counts_both_conventions():
    recs = [
        _rec("a", T_119, choreography=True, stability=_stable("0.2", "0.1")),
        _rec("b", T_119, choreography=True, stability=_stable("0.2", "0.1")),
        _rec("c", T_120, choreography=True, stability=_hyper("0.2", "1.5")),
    ]
    s = summarize(recs, pairs=[])
    assert s["choreographies"] == 3 and s["distinct_choreographies"] == 2
    assert s["stable_choreographies"] == 2 and s["distinct_stable_choreographies"] == 1
    assert summarize([])["solutions"] == 0
