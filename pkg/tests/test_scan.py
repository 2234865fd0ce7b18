import math
from fractions import Fraction

import pytest
from gmpy2 import mpfr
from hypothesis import given, settings
from hypothesis import strategies as st

from choreo.errors import ChoreoError
from choreo.nbody import build_initial_state, energy, state_from_values
from choreo.precision import mp, working_digits
from choreo.scan import (
    Candidate,
    GridValue,
    SearchDomain,
    cyclic_permute,
    evaluate_grid,
    local_minima,
    permuted_distance,
    return_proximity,
    scan_domain,
)
from choreo.taylor import preset

from conftest import FIGURE_EIGHT

coord = st.floats(min_value=-2, max_value=2, allow_nan=False).map(lambda v: repr(round(v, 9)))


@settings(max_examples=40, deadline=None)
@given(st.lists(coord, min_size=12, max_size=12), st.sampled_from(["forward", "backward"]))
def test_three_permutations_are_identity(values, direction):
    with working_digits(40):
        s = state_from_values(values)
        p = cyclic_permute(cyclic_permute(cyclic_permute(s, direction), direction), direction)
        assert list(p) == list(s)
        other = "backward" if direction == "forward" else "forward"
        assert list(cyclic_permute(cyclic_permute(s, direction), other)) == list(s)


def test_permutation_keeps_energy():
    with working_digits(40):
        s = build_initial_state("0.3", "0.5")
        assert energy(cyclic_permute(s)) == energy(s)
        assert permuted_distance(s, s, "forward") > 0


def test_figure_eight_returns_at_a_third_of_its_period():
    cfg = preset("desk")
    with working_digits(64):
        prox = return_proximity(mp(FIGURE_EIGHT[0]), mp(FIGURE_EIGHT[1]), 3, cfg)
        assert prox.R < 1e-6
        assert abs(prox.t_min - mp(FIGURE_EIGHT[2]) / 3) < 1e-5
        assert prox.direction == "backward"


def test_horizon_must_exceed_one():
    with working_digits(32):
        with pytest.raises((ValueError, ChoreoError)):
            return_proximity(mp("0.3"), mp("0.5"), 1, preset("scan"))


def test_domain_validation_and_points():
    with pytest.raises(ValueError):
        SearchDomain(0, 1, 0, 1, 0)
    with pytest.raises(ValueError):
        SearchDomain(1, 0, 0, 1, "1/4")
    d = SearchDomain("0.33", "0.36", "0.52", "0.54", "1/256")
    pts = d.points()
    assert len(pts) == 8 * 5
    assert pts == sorted(pts)
    i, j, x, y = pts[0]
    assert (i, j) == (85, 134) and x == Fraction(85, 256)
    masked = SearchDomain(0, "0.25", 0, "0.25", "1/8", mask=[(0.25, -0.1), (0.6, -0.1), (0.25, 0.35)])
    extra = {(i, j) for i, j, _, _ in masked.points()} - {(i, j) for i in range(3) for j in range(3)}
    assert extra == {(3, 0), (3, 1), (4, 0)}


def test_empty_domain_has_no_points():
    d = SearchDomain("0.3301", "0.3302", "0.5201", "0.5202", "1/256")
    assert d.points() == []
    assert scan_domain(d, 10, "scan") == []


def _grid(rs):
    return {(i, j): GridValue(i=i, j=j, R=r, t_min="2.1", direction="forward") for (i, j), r in rs.items()}


def test_local_minima_are_strict():
    rs = {(i, j): 0.5 for i in range(5) for j in range(5)}
    rs[(2, 2)] = 0.05
    rs[(0, 0)] = 0.08
    rs[(4, 4)] = 0.2  # a minimum, but above threshold
    rs[(4, 3)] = 0.3
    got = [(g.i, g.j) for g in local_minima(_grid(rs), 10)]
    assert got == [(0, 0), (2, 2)]
    rs[(2, 3)] = 0.05  # tie: neither is a strict minimum
    assert [(g.i, g.j) for g in local_minima(_grid(rs), 10)] == [(0, 0)]


def test_escape_domain_has_no_candidates(tmp_path):
    d = SearchDomain("0.9", "0.905", "0.9", "0.905", "1/256")
    assert scan_domain(d, 5, "scan", checkpoint=tmp_path / "ck.jsonl") == []


def test_checkpoint_resume_is_identical(tmp_path):
    d = SearchDomain("0.3398", "0.3516", "0.5273", "0.5313", "1/256")
    ck = tmp_path / "ck.jsonl"
    first = evaluate_grid(d, "2.5", "scan", checkpoint=ck)
    lines = ck.read_text().splitlines()
    assert len(lines) == len(d.points())
    # drop the last record and resume
    ck.write_text("\n".join(lines[:-1]) + "\n")
    again = evaluate_grid(d, "2.5", "scan", checkpoint=ck)
    assert {k: v.to_json() for k, v in again.items()} == {k: v.to_json() for k, v in first.items()}


def test_candidate_json_round_trip():
    c = Candidate(i=89, j=136, v_x="89/256", v_y="17/32", t_min="0.2107e1", T_guess="0.6321e1", R_value=0.035,
                  direction="backward")
    assert Candidate.from_json(c.to_json()) == c
