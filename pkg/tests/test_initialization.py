import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tskfuzzy.core import SIGMA_FLOOR, MembershipFunction, forward
from tskfuzzy.data import BINARY, CONTINUOUS, Dataset, fit_standardizer, standardize_dataset
from tskfuzzy.errors import EmptyCluster, InvalidConfig, InvalidRange, TooFewPoints, TooManyValues
from tskfuzzy.initialization import (
    InitConfig,
    KMeansResult,
    assign_rule_antecedents,
    binary_mfs,
    build_model,
    init_consequents,
    kmeans,
    kmeans_1d,
    mf_from_cluster,
)
from tskfuzzy.training import flatten


def exhaustive_two_means(values):
    """Optimal 2-partition by enumerating every labelling."""
    best = (math.inf, None)
    n = len(values)
    for mask in itertools.product((0, 1), repeat=n):
        if 0 < sum(mask) < n:
            groups = [[v for v, b in zip(values, mask) if b == g] for g in (0, 1)]
            cost = sum(sum((v - sum(gr) / len(gr)) ** 2 for v in gr) for gr in groups)
            if cost < best[0]:
                best = (cost, sorted(sum(gr) / len(gr) for gr in groups))
    return best


def contiguous_split_optimum(values, k=2):
    v = sorted(values)
    best = math.inf
    for cut in range(1, len(v)):
        cost = 0.0
        for part in (v[:cut], v[cut:]):
            mu = sum(part) / len(part)
            cost += sum((x - mu) ** 2 for x in part)
        best = min(best, cost)
    return best


class TestKMeans1D:
    def test_two_pairs(self):
        cost, centers = exhaustive_two_means([0, 1, 9, 10])
        assert centers == [0.5, 9.5]
        res = kmeans_1d([0, 1, 9, 10], 2, seed=0)
        assert res.centers.tolist() == centers
        assert res.inertia == pytest.approx(cost, abs=1e-12)

    def test_single_cluster_is_mean(self):
        vals = [1.0, 2.0, 6.0, 7.5]
        res = kmeans_1d(vals, 1, seed=3)
        assert res.centers[0] == pytest.approx(np.mean(vals), abs=1e-15)

    def test_k_equals_n(self):
        vals = [5.0, -1.0, 3.0, 2.0]
        assert kmeans_1d(vals, 4, seed=1).centers.tolist() == sorted(vals)

    def test_ascending_and_assignment_consistent(self):
        rng = np.random.default_rng(0)
        vals = np.concatenate([rng.normal(m, 0.3, 40) for m in (5, -3, 0)])
        res = kmeans_1d(vals, 3, seed=0)
        assert np.all(np.diff(res.centers) > 0)
        nearest = np.argmin(np.abs(vals[:, None] - res.centers[None, :]), axis=1)
        assert np.array_equal(nearest, res.assignments)

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            kmeans_1d([1.0, 2.0], 3)

    def test_duplicates_do_not_break(self):
        res = kmeans_1d([2.0] * 6, 3, seed=0)
        assert np.all(np.bincount(res.assignments, minlength=3) > 0)
        assert np.allclose(res.centers, 2.0)

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_inertia_non_increasing(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(60, 2))
        res = kmeans(pts, 4, seed=seed, n_init=1)
        h = np.array(res.history)
        assert np.all(np.diff(h) <= 1e-12 * max(1.0, h[0]))
        assert np.all(np.bincount(res.assignments, minlength=4) > 0)

    def test_optimal_small(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            vals = rng.uniform(0, 10, int(rng.integers(3, 9))).tolist()
            assert kmeans_1d(vals, 2, seed=0).inertia == pytest.approx(contiguous_split_optimum(vals), abs=1e-9)


    def test_escapes_lloyd_trap(self):
        # {lowest} | rest is a Lloyd fixed point; the optimum also takes the second value
        vals = [-18.752, -8.903, -2.617, -0.315, 0.593, 0.739, 4.192, 10.042]
        res = kmeans_1d(vals, 2, seed=33)
        assert np.bincount(res.assignments).tolist() == [2, 6]
        assert res.inertia == pytest.approx(contiguous_split_optimum(vals), rel=1e-12)

    @given(st.lists(st.integers(-50, 50), min_size=4, max_size=10), st.integers(1, 4))
    @settings(max_examples=60, deadline=None)
    def test_global_optimum_brute_force(self, ints, k):
        vals = sorted(float(v) for v in ints)
        if len(set(vals)) < k:
            return
        best = math.inf
        for cuts in itertools.combinations(range(1, len(vals)), k - 1):
            b = [0, *cuts, len(vals)]
            best = min(best, sum(float(np.sum((np.array(vals[a:z]) - np.mean(vals[a:z])) ** 2))
                                 for a, z in zip(b[:-1], b[1:])))
        assert kmeans_1d(vals, k, seed=0).inertia <= best + 1e-9 * max(1.0, best)

    def test_many_distinct_values(self):
        vals = np.random.default_rng(3).lognormal(size=20_000)
        res = kmeans_1d(vals, 3, seed=0)
        assert np.all(np.diff(res.centers) > 0)
        assert res.inertia <= kmeans(vals[:, None], 3, seed=0).inertia


class TestMfFromCluster:
    def _res(self, labels, k):
        return KMeansResult(np.zeros(k), np.array(labels), 0.0)

    def test_two_point_spread(self):
        mf = mf_from_cluster([4.0, 6.0, 100.0], self._res([0, 0, 1], 2), 0)
        assert (mf.center, mf.width) == (5.0, 1.0)

    def test_singleton(self):
        mf = mf_from_cluster([7.0, 1.0], self._res([0, 1], 2), 0)
        assert (mf.center, mf.width) == (7.0, SIGMA_FLOOR)

    def test_zero_spread(self):
        mf = mf_from_cluster([0.0, 0.0, 0.0], self._res([0, 0, 0], 1), 0)
        assert (mf.center, mf.width) == (0.0, SIGMA_FLOOR)

    def test_empty(self):
        with pytest.raises(EmptyCluster):
            mf_from_cluster([1.0], self._res([0], 2), 1)


class TestBinaryMfs:
    def test_two_values(self):
        assert binary_mfs({2.0, -0.5}) == [MembershipFunction(-0.5, 0.1), MembershipFunction(2.0, 0.1)]

    def test_single_value(self):
        assert binary_mfs({0.0}) == [MembershipFunction(0.0, 0.1)]

    def test_effectively_disjoint(self):
        from tskfuzzy.core import membership
        lo, hi = binary_mfs({0.0, 1.0})
        assert membership(lo, 1.0) == pytest.approx(math.exp(-1 / 0.02), rel=1e-12)
        assert membership(lo, 1.0) < 1e-21

    def test_too_many(self):
        with pytest.raises(TooManyValues):
            binary_mfs({0.0, 1.0, 2.0})


class TestAntecedents:
    def test_one_rule_uses_centroid(self):
        rng = np.random.default_rng(2)
        X = rng.normal(loc=[0.9, -2.1], scale=0.2, size=(50, 2))
        bank = [[MembershipFunction(c, 1.0) for c in (-2.0, 0.0, 1.0)],
                [MembershipFunction(c, 1.0) for c in (-2.0, 0.0, 2.0)]]
        ants = assign_rule_antecedents(X, bank, 1, seed=0)
        centroid = X.mean(axis=0)
        expected = [int(np.argmin([abs(centroid[i] - mf.center) for mf in bank[i]])) for i in range(2)]
        assert ants.tolist() == [expected]

    def test_two_blobs(self):
        rng = np.random.default_rng(4)
        A = rng.normal([-3.0, 3.0], 0.3, (40, 2))
        B = rng.normal([3.0, -3.0], 0.3, (40, 2))
        X = np.vstack([A, B])
        bank = [[MembershipFunction(-3.0, 1.0), MembershipFunction(3.0, 1.0)] for _ in range(2)]
        ants = assign_rule_antecedents(X, bank, 2, seed=0)
        # brute force: nearest MF per feature to each blob mean
        want = set()
        for blob in (A, B):
            mu = blob.mean(axis=0)
            want.add(tuple(int(np.argmin([abs(mu[i] - mf.center) for mf in bank[i]])) for i in range(2)))
        assert {tuple(r) for r in ants.tolist()} == want
        assert len(want) == 2

    def test_duplicate_is_perturbed(self):
        rng = np.random.default_rng(8)
        X = np.vstack([rng.normal([1.0, 1.5], 0.05, (30, 2)), rng.normal([3.0, 3.5], 0.05, (30, 2))])
        bank = [[MembershipFunction(0.0, 1.0), MembershipFunction(10.0, 1.0)] for _ in range(2)]
        ants = assign_rule_antecedents(X, bank, 2, seed=0)
        # both clusters sit nearest (0, 0); feature 2 has the smaller gap for either cluster
        assert {tuple(r) for r in ants.tolist()} == {(0, 0), (0, 1)}

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_indices_valid(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(40, 3))
        bank = [[MembershipFunction(float(c), 1.0) for c in rng.normal(size=int(rng.integers(1, 4)))]
                for _ in range(3)]
        ants = assign_rule_antecedents(X, bank, int(rng.integers(1, 6)), seed=seed)
        for i in range(3):
            assert np.all((ants[:, i] >= 0) & (ants[:, i] < len(bank[i])))


class TestConsequentInit:
    def test_range(self):
        w, b = init_consequents(50, 30, (-1, 1), seed=0)
        allv = np.concatenate([w.ravel(), b])
        assert allv.min() >= -1 and allv.max() < 1

    def test_determinism_and_seed(self):
        a = init_consequents(4, 3, seed=5)
        b = init_consequents(4, 3, seed=5)
        c = init_consequents(4, 3, seed=6)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        assert not np.array_equal(a[0], c[0])

    def test_invalid_range(self):
        with pytest.raises(InvalidRange):
            init_consequents(2, 2, (1, -1))


def _mixed_dataset(n=300, d=30, n_binary=6, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    X[:, :n_binary] = rng.integers(0, 2, size=(n, n_binary))
    y = (X[:, n_binary] + X[:, 0] > 0.5).astype(int)
    kinds = tuple([BINARY] * n_binary + [CONTINUOUS] * (d - n_binary))
    ds = Dataset(tuple(f"c{j}" for j in range(d)), X, y, kinds)
    stats = fit_standardizer(ds)
    return standardize_dataset(ds, stats), stats, ds


class TestBuildModel:
    def test_parameter_count(self):
        ds_std, stats, _ = _mixed_dataset()
        m = build_model(ds_std, InitConfig(mfs_per_feature=3, n_rules=10, seed=0), stats)
        mfs = m.mf_counts
        assert mfs.tolist() == [2] * 6 + [3] * 24
        assert m.n_parameters() == int(np.sum(2 * mfs)) + 10 * 31
        assert len(flatten(m)) == m.n_parameters()

    def test_forward_total(self):
        ds_std, stats, raw = _mixed_dataset()
        m = build_model(ds_std, InitConfig(seed=1), stats)
        for x in raw.X[:100]:
            assert np.isfinite(forward(m, x).probability)

    def test_snapshot(self):
        ds_std, stats, _ = _mixed_dataset()
        m = build_model(ds_std, InitConfig(seed=2), stats)
        assert np.array_equal(m.init_centers, m.centers)
        assert np.array_equal(m.init_log_widths, m.log_widths)

    def test_deterministic(self):
        ds_std, stats, _ = _mixed_dataset()
        a = build_model(ds_std, InitConfig(seed=3), stats)
        b = build_model(ds_std, InitConfig(seed=3), stats)
        assert np.array_equal(flatten(a), flatten(b))
        assert np.array_equal(a.antecedents, b.antecedents)

    def test_binary_mfs_at_values(self):
        ds_std, stats, _ = _mixed_dataset()
        m = build_model(ds_std, InitConfig(seed=0), stats)
        bank = m.mf_bank
        for j in range(6):
            assert sorted(mf.center for mf in bank[j]) == sorted(np.unique(ds_std.X[:, j]).tolist())
            assert all(mf.width == pytest.approx(0.1) for mf in bank[j])

    def test_too_few_rows(self):
        ds_std, stats, _ = _mixed_dataset(n=5)
        with pytest.raises(TooFewPoints):
            build_model(ds_std, InitConfig(n_rules=10), stats)

    def test_random_centers_on_observed_values(self):
        ds_std, stats, _ = _mixed_dataset()
        m = build_model(ds_std, InitConfig(seed=4, mf_init="random"), stats)
        for j in range(6, 30):
            col = set(ds_std.X[:, j].tolist())
            assert all(mf.center in col and mf.width >= SIGMA_FLOOR for mf in m.mf_bank[j])

    @pytest.mark.parametrize("kw", [{"n_rules": 0}, {"mfs_per_feature": 0}, {"mf_init": "grid"}])
    def test_invalid_config(self, kw):
        with pytest.raises(InvalidConfig):
            InitConfig(**kw)
