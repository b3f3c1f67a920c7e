import functools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from smlab.approx import extract_exits, frechet_coupling, frechet_distance, verify
from smlab.ctraj import build
from smlab.sim import SmParams, integrate
from oracles import BOUNCE_EXIT, FOLD_S1, FOLD_S4_RHO04, FOLD_THETAS


def brute_frechet(A, B):
    # textbook memoised recursion
    A, B = np.asarray(A, float), np.asarray(B, float)

    @functools.lru_cache(maxsize=None)
    def c(i, j):
        d = float(np.linalg.norm(A[i] - B[j]))
        if i == 0 and j == 0:
            return d
        if i == 0:
            return max(c(0, j - 1), d)
        if j == 0:
            return max(c(i - 1, 0), d)
        return max(min(c(i - 1, j), c(i - 1, j - 1), c(i, j - 1)), d)

    return c(len(A) - 1, len(B) - 1)


_pts = arrays(np.float64, st.tuples(st.integers(1, 9), st.just(2)), elements=st.floats(-5, 5, allow_nan=False))


def test_square_against_dilation():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    assert frechet_distance(sq, 1.1 * sq) == pytest.approx(0.1 * math.sqrt(2), abs=1e-15)


def test_parallel_segments():
    assert frechet_distance([[0, 0], [1, 0]], [[0, 1], [1, 1]]) == 1.0


@given(_pts, _pts)
def test_matches_brute_force(A, B):
    assert frechet_distance(A, B) == pytest.approx(brute_frechet(A, B), abs=1e-12)


@given(_pts, _pts)
def test_symmetric_and_identity(A, B):
    assert frechet_distance(A, B) == pytest.approx(frechet_distance(B, A), abs=1e-12)
    assert frechet_distance(A, A) == 0.0


@settings(max_examples=300)
@given(_pts, _pts, _pts)
def test_triangle_inequality(A, B, C):
    assert frechet_distance(A, C) <= frechet_distance(A, B) + frechet_distance(B, C) + 1e-12


@given(_pts, _pts)
def test_coupling_realises_distance(A, B):
    value, path = frechet_coupling(A, B)
    assert path[0] == (0, 0) and path[-1] == (len(A) - 1, len(B) - 1)
    for (i, j), (k, m) in zip(path, path[1:]):
        assert (k - i, m - j) in {(1, 0), (0, 1), (1, 1)}
    assert max(np.linalg.norm(A[i] - B[j]) for i, j in path) == pytest.approx(value, abs=1e-12)


def test_empty_polyline_rejected():
    with pytest.raises(ValueError):
        frechet_distance(np.zeros((0, 2)), [[0, 0]])


@pytest.fixture(scope="module")
def fold_run(fold):
    return integrate(SmParams.from_rho(0.01, -0.4), fold, 0.0, 2.0, 7.0)


def test_fold_exits(fold, fold_run):
    obs = [e for e in extract_exits(fold_run, f=fold) if e.x_exit is not None]
    assert (obs[0].side_in, obs[0].side_out) == (1, -1)
    assert obs[0].x_entry == pytest.approx(FOLD_THETAS[0], abs=0.01)
    assert obs[0].x_exit == pytest.approx(FOLD_S1[-0.4], abs=0.05)
    assert (obs[1].side_in, obs[1].side_out) == (-1, 1)
    assert obs[1].x_entry == pytest.approx(FOLD_THETAS[3], abs=0.01)
    assert obs[1].x_exit == pytest.approx(FOLD_S4_RHO04, abs=0.05)
    # band crossings bracket the refined abscissae
    assert obs[0].x_entry_band > obs[0].x_entry
    assert obs[0].x_exit_band < obs[0].x_exit


def test_bounce_has_one_same_side_exit(bounce):
    tr = integrate(SmParams.from_rho(0.01, -0.6), bounce, 0.0, 1.0, 7.5)
    obs = [e for e in extract_exits(tr, f=bounce) if e.x_exit is not None]
    assert len(obs) == 1
    assert obs[0].side_in == obs[0].side_out == 1
    assert obs[0].x_exit == pytest.approx(BOUNCE_EXIT, abs=0.1)


def test_verify_fold(fold, fold_run):
    ct = build(fold, -0.4, 0.0, 2.0, 7.0)
    rep = verify(fold_run, ct)
    assert rep.passed and rep.frechet <= 0.15
    assert len(rep.per_segment) == len(ct.segments)
    assert max(s.max_deviation for s in rep.per_segment) == pytest.approx(rep.frechet, abs=1e-12)
    assert [s.t_start for s in rep.per_segment] == sorted(s.t_start for s in rep.per_segment)
    d = json.loads(rep.to_json())
    assert d["pass"] is True and "passed" not in d


def test_verify_rejects_other_start(fold, fold_run):
    with pytest.raises(ValueError):
        verify(fold_run, build(fold, -0.4, 0.0, 1.5, 7.0))


def test_halo_start_yields_inside_observation(halo_f):
    p = SmParams.from_rho(0.01, -1.2)
    tr = integrate(p, halo_f, 1.0, 0.0, 7.5, y0_log=(1.0, p.log_m))
    obs = extract_exits(tr, f=halo_f)
    assert obs[0].started_inside
    assert obs[0].x_exit is not None and obs[0].x_exit > 6.5
