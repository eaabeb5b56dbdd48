import numpy as np
import pytest

from hybridproj.geometry import (
    Ball,
    Box,
    Halfspace,
    InfeasibleSetError,
    NestedSet,
    ProjectionFailure,
    as_vector,
    contains,
    halfspace_from_iterate,
    project_base,
    project_nested,
)
from oracles import enumerate_project, grid_project, random_cut_instance


def box1d():
    return Box(lo=[-1.0], hi=[1.0])


class TestProjectBase:
    def test_box_clamps_to_boundary(self):
        assert project_base(box1d(), [2.0]) == pytest.approx([1.0])

    def test_ball_radial_scaling(self):
        ball = Ball(center=[0.0, 0.0], radius=1.0)
        np.testing.assert_allclose(project_base(ball, [3.0, 4.0]), [0.6, 0.8])

    def test_interior_point_fixed(self):
        assert project_base(box1d(), [0.3])[0] == 0.3

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            project_base(box1d(), [np.nan])
        with pytest.raises(ValueError):
            project_base(box1d(), [np.inf])

    def test_bad_box_bounds(self):
        with pytest.raises(ValueError):
            Box(lo=[1.0], hi=[-1.0])

    def test_bad_ball_radius(self):
        with pytest.raises(ValueError):
            Ball(center=[0.0], radius=0.0)


class TestHalfspaceFromIterate:
    def test_coincident_points_degenerate(self):
        h = halfspace_from_iterate([0.5], [0.5], 0.0)
        assert h.is_degenerate
        assert h.offset == 0.0
        assert h.contains(np.array([123.0]))

    def test_unit_gap_boundary(self):
        # membership <=> ||0 - v||^2 <= ||1 - v||^2, i.e. v <= 0.5
        h = halfspace_from_iterate([1.0], [0.0], 0.0)
        np.testing.assert_allclose(h.normal, [2.0])
        assert h.offset == pytest.approx(1.0)
        assert h.contains(np.array([0.5]))
        assert not h.contains(np.array([0.5 + 1e-6]))

    def test_relaxed_boundary(self):
        # adding eps = 0.5 moves the boundary to v <= 0.75
        h = halfspace_from_iterate([1.0], [0.0], 0.5)
        assert h.offset / h.normal[0] == pytest.approx(0.75)

    def test_negative_eps_rejected(self):
        with pytest.raises(ValueError):
            halfspace_from_iterate([1.0], [0.0], -1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            halfspace_from_iterate([1.0, 2.0], [0.0])

    def test_zero_normal_negative_offset_rejected(self):
        with pytest.raises(ValueError):
            Halfspace(normal=np.zeros(2), offset=-1.0)

    def test_membership_identity_on_random_data(self):
        # <a, v> - b must equal ||zbar - v||^2 - ||x - v||^2 - eps identically
        rng = np.random.default_rng(7)
        for _ in range(1000):
            d = int(rng.integers(1, 5))
            x = rng.uniform(-1, 1, d)
            zbar = rng.uniform(-1, 1, d)
            eps = float(rng.uniform(0, 0.5))
            v = rng.uniform(-1, 1, d)
            h = halfspace_from_iterate(x, zbar, eps)
            lhs = float(h.normal @ v) - h.offset
            rhs = float(np.sum((zbar - v) ** 2) - np.sum((x - v) ** 2)) - eps
            assert abs(lhs - rhs) <= 1e-12


class TestContains:
    def test_no_cuts(self):
        assert contains(NestedSet(base=box1d()), [0.0])

    def test_cut_excludes(self):
        nested = NestedSet(base=box1d())
        nested.add_cut(halfspace_from_iterate([1.0], [0.0]))
        assert not contains(nested, [0.6], tol=1e-9)
        assert contains(nested, [0.5])

    def test_cut_dimension_checked(self):
        nested = NestedSet(base=box1d())
        with pytest.raises(ValueError):
            nested.add_cut(Halfspace(normal=np.array([1.0, 1.0]), offset=0.0))


class TestProjectNested:
    def test_no_cuts_is_base_projection(self):
        nested = NestedSet(base=box1d())
        assert project_nested(nested, [2.0])[0] == pytest.approx(1.0)

    def test_single_cut_interval(self):
        nested = NestedSet(base=box1d())
        nested.add_cut(halfspace_from_iterate([1.0], [0.0]))
        assert project_nested(nested, [1.0])[0] == pytest.approx(0.5, abs=1e-12)

    def test_degenerate_cuts_skipped(self):
        nested = NestedSet(base=box1d())
        nested.add_cut(halfspace_from_iterate([0.3], [0.3]))
        assert project_nested(nested, [0.9])[0] == pytest.approx(0.9)
        assert len(nested.cuts) == 1

    def test_two_cuts_2d_vs_oracles(self):
        nested = NestedSet(base=Box(lo=[-1.0, -1.0], hi=[1.0, 1.0]))
        nested.add_cut(Halfspace(normal=np.array([1.0, 1.0]), offset=0.0))
        nested.add_cut(Halfspace(normal=np.array([1.0, -1.0]), offset=0.0))
        x0 = np.array([1.0, 0.2])
        q = project_nested(nested, x0)
        np.testing.assert_allclose(q, grid_project(nested, x0), atol=1e-4)
        np.testing.assert_allclose(q, enumerate_project(nested, x0), atol=1e-9)

    def test_random_instances_match_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            nested, x0 = random_cut_instance(rng, n_cuts=int(rng.integers(1, 6)))
            q = project_nested(nested, x0)
            np.testing.assert_allclose(q, enumerate_project(nested, x0), atol=1e-8)

    def test_result_feasible_and_variational(self):
        rng = np.random.default_rng(3)
        nested, x0 = random_cut_instance(rng, n_cuts=4)
        tol = 1e-12
        q = project_nested(nested, x0, tol=tol)
        assert contains(nested, q, tol=1e-9)
        for _ in range(100):
            y = enumerate_project(nested, rng.uniform(-2, 2, 2))
            assert float((x0 - q) @ (q - y)) >= -10 * tol

    def test_sweep_budget_exhaustion(self):
        nested, x0 = random_cut_instance(np.random.default_rng(5), n_cuts=4)
        with pytest.raises(ProjectionFailure) as err:
            project_nested(nested, x0, tol=1e-15, max_sweeps=1)
        assert err.value.best is not None
        assert err.value.residual >= 0

    def test_infeasible_detection(self):
        nested = NestedSet(base=box1d())
        nested.add_cut(Halfspace(normal=np.array([1.0]), offset=-2.0))
        with pytest.raises(InfeasibleSetError):
            project_nested(nested, [0.0])


class TestProjectionInequalities:
    @pytest.mark.parametrize("make_set", [
        lambda: NestedSet(base=Box(lo=[-1.0, -0.5, -2.0], hi=[1.0, 0.5, 2.0])),
        lambda: NestedSet(base=Ball(center=[0.2, -0.1, 0.0], radius=1.5)),
        lambda: random_cut_instance(np.random.default_rng(13), 3)[0],
    ])
    def test_firm_nonexpansiveness(self, make_set):
        nested = make_set()
        rng = np.random.default_rng(17)
        d = nested.dim
        for _ in range(200):
            x = rng.uniform(-2, 2, d)
            y = rng.uniform(-2, 2, d)
            px = project_nested(nested, x)
            py = project_nested(nested, y)
            inner = float((px - py) @ (x - y))
            assert inner >= float(np.sum((px - py) ** 2)) - 1e-10

    def test_pythagoras_bound(self):
        rng = np.random.default_rng(19)
        nested, _ = random_cut_instance(rng, 3)
        for _ in range(200):
            y = rng.uniform(-2, 2, 2)
            x = project_nested(nested, rng.uniform(-2, 2, 2))
            py = project_nested(nested, y)
            lhs = float(np.sum((x - py) ** 2) + np.sum((py - y) ** 2))
            assert lhs <= float(np.sum((x - y) ** 2)) + 1e-10


def test_as_vector_shapes():
    assert as_vector(1.5).shape == (1,)
    assert as_vector([1.0, 2.0]).shape == (2,)
    with pytest.raises(ValueError):
        as_vector([[1.0, 2.0]])
    with pytest.raises(ValueError):
        as_vector([])
