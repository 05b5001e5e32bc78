import math

import numpy as np
import pytest

from oscillab.treeset import (
    EPS1,
    GrowthParameters,
    GrowthValidationError,
    ParameterRangeError,
    TreeSpec,
    TubeSpec,
    _TubeIndex,
    build_basic_subtree,
    build_outer_subtree,
    build_tree,
    choose_s_k,
    complete_frame,
    delta_k,
    is_sparse,
    parse_growth,
    sparseness_threshold,
    tube_measure_in_cube,
)


def growth(a, d=2):
    return GrowthParameters(d=d, index=a).validate()


class TestGrowthParameters:
    def test_parse_forms(self):
        g = parse_growth("t^1.5", 2)
        assert g.index == 1.5 and g(4.0) == pytest.approx(8.0)
        g = parse_growth("t^3/2", 2)
        assert g.index == 1.5
        g = parse_growth("0.5*t^2", 2)
        assert g(2.0) == pytest.approx(2.0)
        g = parse_growth("t^1*log(2+t)^1", 2)
        assert g(2.0) == pytest.approx(2.0 * math.log(4.0))

    def test_rejects_super_volume_growth(self):
        with pytest.raises(GrowthValidationError):
            parse_growth("t^3", 2)

    def test_rejects_garbage(self):
        with pytest.raises(GrowthValidationError):
            parse_growth("exp(t)", 2)

    def test_doubling_window_measured(self):
        g = growth(1.5)
        # f(t)/f(2t) = 2^-1.5 which sits inside (2^-3, 2/3) for all t.
        assert g.t_onset == pytest.approx(1.0)


class TestChooseSk:
    def test_square_growth_k4(self):
        s, eps = choose_s_k(growth(2.0), 4)
        assert (s, eps) == (3, 0.5)

    def test_square_growth_k6(self):
        s, eps = choose_s_k(growth(2.0), 6)
        assert (s, eps) == (4, 0.25)

    def test_cubic_growth_d3_k4(self):
        s, eps = choose_s_k(growth(3.0, d=3), 4)
        assert (s, eps) == (4, 1.0)

    def test_smallest_s_and_sandwich(self):
        for a in (1.5, 2.0):
            g = growth(a)
            for k in range(1, 12):
                s, eps = choose_s_k(g, k)
                lo = (g(2.0**k) / 2.0**k) ** (1.0 / (g.d - 1))
                val = s ** (1.0 / (g.d - 1)) * 2.0**s
                assert lo <= val <= 4 * lo
                assert s <= k
                assert eps == 2.0 ** (s - k)
                for smaller in range(1, s):
                    v = smaller ** (1.0 / (g.d - 1)) * 2.0**smaller
                    assert not (lo <= v <= 4 * lo)

    def test_range_error_reported(self):
        g = GrowthParameters(d=2, index=0.5)  # f(2^k) << 2^k
        with pytest.raises(ParameterRangeError):
            choose_s_k(g, 4)


class TestBasicSubtree:
    def test_d2_layout(self):
        tubes = build_basic_subtree((0, 0), 0.125, 2)
        tips = {tuple(t.a) for t in tubes}
        assert tips == {(0.5, 0.5), (0.5, 1.5), (1.5, 0.5), (1.5, 1.5)}
        assert all(np.allclose(t.b, (1.0, 1.0)) for t in tubes)
        assert len(tubes) == 4

    def test_d3_count(self):
        assert len(build_basic_subtree((0, 0, 0), 0.125, 3)) == 8

    @pytest.mark.parametrize("bad", [0.0, -0.1, 1.0, 2.0])
    def test_rejects_degenerate_leaf(self, bad):
        with pytest.raises(ParameterRangeError):
            build_basic_subtree((0, 0), bad, 2)


class TestOuterSubtree:
    def test_generation_counts_d2_k3(self):
        g = growth(1.5)
        tree = build_outer_subtree(g, 3)
        per_gen = {}
        for t in tree.tubes:
            per_gen[t.generation] = per_gen.get(t.generation, 0) + 1
        # generation m holds 2^(d m) tubes; the leaves are generation k+1
        for m in range(1, 5):
            assert per_gen[m] == 2 ** (2 * m)
        s_k = tree.s_values[3]
        wide = {t.generation for t in tree.tubes if t.kind == "wide"}
        thin = {t.generation for t in tree.tubes if t.kind in ("thin", "leaf")}
        assert wide == set(range(1, s_k + 1))
        assert thin == set(range(s_k + 1, 5))

    def test_first_generation_diameter(self):
        g = growth(1.5)
        for k in (3, 4, 6):
            tree = build_outer_subtree(g, k)
            s_k = tree.s_values[k]
            first = [t for t in tree.tubes if t.generation == 1]
            assert all(t.diameter == pytest.approx(2.0**s_k) for t in first)

    def test_wide_generation_diameters_halve(self):
        g = growth(2.0)
        k = 5
        tree = build_outer_subtree(g, k)
        s_k, eps_k = tree.s_values[k], tree.eps_values[k]
        for m in range(1, s_k + 1):
            gen = [t for t in tree.tubes if t.generation == m]
            assert all(
                t.diameter == pytest.approx(2.0 ** (k + 1 - m) * eps_k) for t in gen
            )
        for t in tree.tubes:
            if t.generation > s_k:
                assert t.diameter == pytest.approx(EPS1)

    def test_tubes_connect_consecutive_dyadic_centers(self):
        tree = build_outer_subtree(growth(1.5), 2)
        for t in tree.tubes:
            if t.kind == "leaf":
                continue
            child_edge = 2.0 ** (2 + 1 - t.generation)
            assert np.allclose((t.a - child_edge / 2) % child_edge, 0.0)
            assert np.allclose((t.b - child_edge) % (2 * child_edge), 0.0)


class TestBuildTree:
    def test_handle_diameters(self):
        g = growth(1.5)
        tree = build_tree(g, 4)
        handles = [t for t in tree.tubes if t.kind == "handle" and t.rank == 5]
        # delta_4 = 2^(-2), absolute diameter 2^4 * 2^-2 = 4
        assert all(t.diameter == pytest.approx(4.0) for t in handles)
        assert delta_k(g, 4) == pytest.approx(0.25)

    def test_degenerate_maximal_growth(self):
        g = growth(2.0)
        for k in (1, 3, 5):
            assert delta_k(g, k) == pytest.approx(1.0)

    def test_nesting(self):
        g = growth(1.5)
        t1 = build_tree(g, 1)
        t2 = build_tree(g, 2)
        sig = lambda t: (tuple(t.a), tuple(t.b), t.diameter)
        sigs2 = {sig(t) for t in t2.tubes}
        assert {sig(t) for t in t1.tubes} <= sigs2

    def test_deterministic(self):
        g = growth(1.5)
        a = build_tree(g, 3)
        b = build_tree(g, 3)
        assert a.to_json() == b.to_json()

    def test_json_roundtrip(self):
        tree = build_tree(growth(1.5), 2)
        back = TreeSpec.from_json(tree.to_json())
        assert len(back.tubes) == len(tree.tubes)
        assert back.s_values == tree.s_values
        assert np.allclose(back.tubes[0].a, tree.tubes[0].a)

    def test_branch_split(self):
        tree = build_tree(growth(1.5), 3)
        for t in tree.branches():
            assert t.diameter > 2 * EPS1


class TestTubeGeometry:
    def test_frame_orthonormal(self):
        f = complete_frame(np.array([1.0, 1.0, -2.0]))
        assert np.allclose(f @ f.T, np.eye(3), atol=1e-12)

    def test_contains_matches_definition(self):
        tube = TubeSpec(np.array([0.0, 0.0]), np.array([2.0, 0.0]), 0.5)
        pts = np.array([[1.0, 0.2], [1.0, 0.3], [-0.1, 0.0], [2.1, 0.0], [0.0, 0.0]])
        assert list(tube.contains(pts)) == [True, False, False, False, True]

    def test_distance_exact_for_axis_tube(self):
        tube = TubeSpec(np.array([0.0, 0.0]), np.array([1.0, 0.0]), 1.0)
        pts = np.array([[0.5, 1.5], [2.0, 0.0], [-1.0, 0.5]])
        assert np.allclose(tube.distance(pts), [1.0, 1.0, 1.0])


class TestSparseness:
    def test_threshold_below_half(self):
        assert sparseness_threshold(2) == pytest.approx(math.sqrt(2) / 4)
        assert sparseness_threshold(3) < 0.5

    def test_single_leaf_tube_sparse_with_mc_crosscheck(self):
        # One leaf tube through the cube: measure far below the threshold.
        tube = TubeSpec(np.array([0.5, 0.5]), np.array([1.5, 1.5]), EPS1, kind="leaf")
        tree = TreeSpec(2, 1, [tube])
        rep = is_sparse((0, 0), tree)
        assert rep.status == "sparse"
        rng = np.random.default_rng(7)
        pts = rng.uniform(0.0, 1.0, size=(1_000_000, 2))
        mc = float(np.mean(tube.contains(pts)))
        assert rep.measure_low - 3e-3 <= mc <= rep.measure_high + 3e-3
        assert rep.estimate == pytest.approx(mc, abs=2e-3)

    def test_cube_inside_wide_branch(self):
        tube = TubeSpec(np.array([-1.0, 0.5]), np.array([4.0, 0.5]), 3.0, kind="wide")
        tree = TreeSpec(2, 2, [tube])
        rep = is_sparse((0, 0), tree)
        assert rep.status == "nonsparse"
        assert rep.measure_low == pytest.approx(1.0)

    def test_cube_disjoint_from_tubes(self):
        tube = TubeSpec(np.array([5.0, 5.0]), np.array([6.0, 6.0]), 0.125)
        tree = TreeSpec(2, 3, [tube])
        rep = is_sparse((0, 0), tree)
        assert rep.status == "sparse"
        assert rep.measure_high == 0.0

    def test_measure_bounds_ordering(self):
        tube = TubeSpec(np.array([0.2, 0.3]), np.array([0.9, 0.8]), 0.25)
        low, high, est, se = tube_measure_in_cube((0, 0), (1, 1), [tube], depth_cap=5)
        assert low <= est <= high
        assert 0 <= low and high <= 1.0

    def test_tube_index_candidates_cover(self):
        tree = build_tree(growth(1.5), 2)
        idx = _TubeIndex(tree.tubes, cell=2.0)
        lo, hi = np.zeros(2), np.ones(2)
        cands = {id(t) for t in idx.candidates(lo, hi)}
        center = (lo + hi)[None, :] / 2
        for t in tree.tubes:
            if float(t.distance(center)[0]) <= math.sqrt(2) / 2:
                assert id(t) in cands
