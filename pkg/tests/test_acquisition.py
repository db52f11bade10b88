import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aldb.acquisition import (AcquisitionSpec, Aggregation, MeshExhausted, MeshTooLarge, NegativeStd,
                              ResolutionTooSmall, acquisition_value, aggregate, build_mesh, score_candidates,
                              select_next)
from aldb.core import ParameterSpace, duplicate_keys
from aldb.gpr import KernelParams, fit

from reference import mesh_points, sigma_argmax

UNIT2 = ParameterSpace.unit(2)
FIXED = KernelParams(0.3, 1.0, 0.0)

# brute-force sigma argmax for training points (0,0), (1,1) on the 11x11 mesh,
# computed once by tests/reference.py: the (0, 1) corner, i.e. row-major index 10
CORNER_PAIR_ARGMAX = 10


def test_mesh_1d_levels():
    mesh = build_mesh(ParameterSpace.unit(1), 11)
    assert mesh.points(np.arange(11))[:, 0].tolist() == [j / 10 for j in range(11)]
    assert mesh.points(np.arange(11))[:, 0].tolist() == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]


def test_mesh_sizes_and_errors():
    assert len(build_mesh(UNIT2, 3)) == 9
    with pytest.raises(ResolutionTooSmall):
        build_mesh(UNIT2, 1)
    with pytest.raises(MeshTooLarge):
        build_mesh(ParameterSpace.unit(7), 11)
    assert len(build_mesh(ParameterSpace.unit(6), 11)) == 11**6


def test_mesh_lexicographic():
    mesh = build_mesh(ParameterSpace.unit(3), 4)
    assert np.array_equal(mesh.unit_points(np.arange(64)), mesh_points(3, 4))
    for i in (0, 5, 63):
        assert mesh.index_of(mesh.unit_points(i)[0]) == i
    assert mesh.index_of([0.5, 0.5, 0.5]) is None


def test_mesh_physical_bounds():
    space = ParameterSpace.from_bounds([("a", 2.0, 10.0), ("b", -1.0, 1.0)])
    mesh = build_mesh(space, 5)
    pts = mesh.points(np.arange(25))
    assert np.array_equal(pts[0], [2.0, -1.0]) and np.array_equal(pts[-1], [10.0, 1.0])
    assert pts[5].tolist() == [4.0, -1.0]


def test_acquisition_examples():
    assert acquisition_value(0.4, 0.2, AcquisitionSpec(0.0)) == 0.2
    assert acquisition_value(0.4, 0.2, AcquisitionSpec(1.0)) == pytest.approx(0.6, abs=1e-15)
    for kappa in (0.5, 1.0, 3.0):
        assert acquisition_value(0.4, 0.0, AcquisitionSpec(kappa)) == 0.4
    with pytest.raises(NegativeStd):
        acquisition_value(0.0, -1e-3)


def test_aggregate_examples():
    s, m = AcquisitionSpec(aggregation=Aggregation.SUM_STD), AcquisitionSpec(aggregation=Aggregation.MAX_STD)
    assert aggregate([0.7], s) == 0.7 and aggregate([0.7], m) == 0.7
    assert aggregate([0.3, 0.3, 0.3], s) == pytest.approx(0.9) and aggregate([0.3, 0.3, 0.3], m) == 0.3
    assert aggregate([0.2, 0.4, 0.6], s) == pytest.approx(1.2, abs=1e-15)
    assert aggregate([0.2, 0.4, 0.6], m) == 0.6
    assert aggregate([2.0, 8.0], s, scales=[2.0, 4.0]) == 3.0


def _corner_model():
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    return X, fit(X, np.array([[0.0, 1.0, 2.0], [1.0, 3.0, -1.0]]), FIXED)


def test_select_matches_brute_force():
    X, model = _corner_model()
    mesh = build_mesh(UNIT2, 11)
    x, score, idx = select_next(model, mesh, AcquisitionSpec())
    ref, ref_score = sigma_argmax(X, np.zeros((2, 1)), 0.3, 1.0, 0.0, mesh_points(2, 11))
    assert idx == ref == CORNER_PAIR_ARGMAX
    assert x.tolist() == [0.0, 1.0]
    assert score == pytest.approx(3 * ref_score, abs=1e-12)
    assert mesh.is_explored(idx)


def test_tie_goes_to_lower_index():
    # symmetric 3-point mesh with one observation at the centre
    model = fit([[0.5]], [[1.0]], KernelParams(0.3))
    mesh = build_mesh(ParameterSpace.unit(1), 3)
    assert select_next(model, mesh)[2] == 0
    assert select_next(model, mesh)[2] == 2


def test_exhausted():
    _, model = _corner_model()
    mesh = build_mesh(UNIT2, 2)
    for _ in range(4):
        select_next(model, mesh)
    with pytest.raises(MeshExhausted):
        select_next(model, mesh)


def test_exclude_skips_duplicates():
    _, model = _corner_model()
    mesh = build_mesh(UNIT2, 11)
    key = duplicate_keys(np.array([[0.0, 1.0]]))
    _, _, idx = select_next(model, mesh, exclude=key)
    assert idx == 110 and mesh.is_explored(10)


def test_sum_and_max_agree_for_shared_params():
    # identical per-output std makes SumStd = 3 * MaxStd, a monotone rescaling
    X = np.random.default_rng(1).random((6, 2))
    model = fit(X, np.random.default_rng(2).normal(size=(6, 3)), FIXED)
    picks = []
    for agg in Aggregation:
        mesh = build_mesh(UNIT2, 11)
        picks.append([select_next(model, mesh, AcquisitionSpec(aggregation=agg))[2] for _ in range(5)])
    assert picks[0] == picks[1]


@given(st.floats(0.01, 100.0), st.floats(-5.0, 5.0))
@settings(max_examples=25, deadline=None)
def test_argmax_invariant_to_monotone_rescaling(a, b):
    X = np.array([[0.2, 0.3], [0.8, 0.6], [0.5, 0.9]])
    model = fit(X, np.ones((3, 3)) * [[1], [2], [3]], FIXED)
    U = mesh_points(2, 11)
    s = score_candidates(model, U)
    assert int(np.argmax(a * s + b)) == int(np.argmax(np.exp(s))) == int(np.argmax(s))
    assert select_next(model, build_mesh(UNIT2, 11))[2] == int(np.argmax(s))


def _loop(mesh, X, Y, steps, f, **kw):
    picks, scores = [], []
    for _ in range(steps):
        model = fit(X, Y, FIXED)
        x, score, idx = select_next(model, mesh, **kw)
        picks.append(idx)
        scores.append(score)
        X = np.vstack([X, x])
        Y = np.vstack([Y, f(x)])
    return picks, scores


def _toy(x):
    return np.array([np.sin(3 * x[0]) + x[1], x[0] * x[1], np.cos(x[1])])


def test_never_reselects():
    mesh = build_mesh(UNIT2, 21)
    X = np.array([[0.13, 0.71], [0.52, 0.27]])
    picks, _ = _loop(mesh, X, np.array([_toy(x) for x in X]), 200, _toy)
    assert len(set(picks)) == 200


def test_positive_scores_until_exhausted():
    mesh = build_mesh(UNIT2, 5)
    X = np.array([[0.13, 0.71], [0.52, 0.27]])
    _, scores = _loop(mesh, X, np.array([_toy(x) for x in X]), 25, _toy)
    assert min(scores) > 0


def test_chunking_bit_identical():
    X = np.random.default_rng(3).random((12, 3))
    model = fit(X, np.random.default_rng(4).normal(size=(12, 3)), KernelParams(0.4, 1.0, 1e-6))
    space = ParameterSpace.unit(3)
    ref = select_next(model, build_mesh(space, 11))
    for chunk, workers in ((7, 1), (64, 4), (5000, 8)):
        got = select_next(model, build_mesh(space, 11), chunk_size=chunk, workers=workers)
        assert got[2] == ref[2] and got[1] == ref[1] and np.array_equal(got[0], ref[0])
