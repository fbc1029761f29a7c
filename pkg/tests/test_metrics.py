import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varsurv.errors import DataError
from varsurv.grid import TimeGrid
from varsurv.metrics import (
    EvalReport,
    c_index,
    c_index_ci,
    c_td,
    c_td_same_time,
    concordance_counts,
    coverage,
    ks_distance,
    loglik_summary,
    read_report,
)


def brute_concordance(scores, times, events, strict=False, w=None):
    n = len(scores)
    w = np.ones(n) if w is None else w
    num = den = 0.0
    for i in range(n):
        if events[i] != 1:
            continue
        for j in range(n):
            if times[i] < times[j]:
                pw = w[i] * w[j]
                den += pw
                if scores[i] > scores[j]:
                    num += pw
                elif scores[i] == scores[j] and not strict:
                    num += 0.5 * pw
    return num, den


def brute_same_time(table, cols, times, events):
    num = den = 0.0
    for i in range(len(times)):
        if events[i] != 1:
            continue
        for j in range(len(times)):
            if times[i] < times[j]:
                a, b = table[i, cols[i]], table[j, cols[i]]
                den += 1
                num += 1.0 if a > b else 0.5 if a == b else 0.0
    return num / den


survival_rows = st.integers(2, 25).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 5), min_size=n, max_size=n),
        st.lists(st.integers(0, 6), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )
)


class TestConcordance:
    @settings(max_examples=200, deadline=None)
    @given(survival_rows, st.booleans())
    def test_matches_brute_force(self, rows, strict):
        s, t, e = (np.array(r, dtype=float) for r in rows)
        num, den = concordance_counts(s, t, e, strict=strict)
        bn, bd = brute_concordance(s, t, e, strict)
        assert den == bd
        assert num == pytest.approx(bn)

    def test_weighted_columns(self):
        rng = np.random.default_rng(0)
        s, t = rng.normal(size=40), rng.integers(0, 10, 40).astype(float)
        e = rng.integers(0, 2, 40)
        w = rng.integers(0, 3, size=(40, 3)).astype(float)
        num, den = concordance_counts(s, t, e, weights=w)
        for b in range(3):
            bn, bd = brute_concordance(s, t, e, w=w[:, b])
            assert num[b] == pytest.approx(bn) and den[b] == pytest.approx(bd)

    def test_perfect_and_reversed(self):
        t = np.arange(1.0, 11.0)
        e = np.ones(10)
        assert c_index(-t, t, e) == 1.0
        assert c_index(t, t, e) == 0.0
        assert c_index(np.zeros(10), t, e) == 0.5

    def test_risk_orientation_example(self):
        # earlier events with higher risk; one discordant pair out of three
        assert c_index([3.0, 1.0, 2.0], [1.0, 2.0, 3.0], [1, 1, 1]) == pytest.approx(2 / 3)

    def test_no_pairs(self):
        with pytest.raises(DataError):
            c_index([1.0, 2.0], [1.0, 2.0], [0, 0])


class TestCi:
    def test_brackets_estimate_and_seeded(self):
        rng = np.random.default_rng(1)
        t = rng.exponential(size=300)
        s = -t + rng.normal(scale=0.5, size=300)
        e = rng.integers(0, 2, 300)
        lo, hi = c_index_ci(s, t, e, n_boot=200, seed=3)
        assert lo < c_index(s, t, e) < hi
        assert (lo, hi) == c_index_ci(s, t, e, n_boot=200, seed=3)

    def test_matches_explicit_resampling(self):
        rng = np.random.default_rng(2)
        t = rng.exponential(size=50)
        s = rng.normal(size=50)
        e = np.ones(50)
        lo, hi = c_index_ci(s, t, e, n_boot=30, seed=7, block=30)
        r = np.random.default_rng(7)
        stats = []
        for _ in range(30):
            idx = r.integers(0, 50, 50)
            num, den = brute_concordance(s[idx], t[idx], e[idx])
            stats.append(num / den)
        np.testing.assert_allclose((lo, hi), np.percentile(stats, [2.5, 97.5]), rtol=1e-12)


class TestTimeDependent:
    def test_own_time_is_concordance_of_cdf(self):
        rng = np.random.default_rng(3)
        f, t, e = rng.random(30), rng.random(30), rng.integers(0, 2, 30)
        bn, bd = brute_concordance(f, t, e)
        assert c_td(f, t, e) == pytest.approx(bn / bd)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 20), st.integers(0, 10_000))
    def test_same_time_matches_brute_force(self, n, seed):
        rng = np.random.default_rng(seed)
        table = np.round(np.cumsum(rng.random((n, 4)), axis=1), 1)
        t = rng.integers(0, 4, n).astype(float)
        e = rng.integers(0, 2, n)
        e[0] = 1
        t[0] = 0.0
        t[1] = 1.0
        cols = t.astype(int)
        assert c_td_same_time(table, cols, t, e, chunk=7) == pytest.approx(brute_same_time(table, cols, t, e))

    def test_same_time_proportional_hazards_equals_c_index(self):
        # under proportional hazards every CDF ordering agrees with the risk order
        rng = np.random.default_rng(4)
        risk = rng.normal(size=60)
        t = rng.exponential(size=60)
        grid_t = np.linspace(0.1, 3, 12)
        table = 1 - np.exp(-np.exp(risk)[:, None] * grid_t[None])
        cols = np.minimum(np.searchsorted(grid_t, t), 11)
        e = np.ones(60)
        assert c_td_same_time(table, cols, t, e) == pytest.approx(c_index(risk, t, e))

    def test_same_time_no_pairs(self):
        with pytest.raises(DataError):
            c_td_same_time(np.ones((2, 2)), [0, 0], [1.0, 1.0], [1, 1])


class TestKs:
    def test_exact_match_zero(self):
        grid = TimeGrid(np.array([1.0, 2.0]), np.array([0.5, 1.5, 3.0]))
        pmf = np.array([[0.2, 0.3, 0.5]])
        np.testing.assert_allclose(ks_distance(pmf, grid, [[0.2, 0.5]]), 0.0, atol=1e-15)

    def test_sup_over_edges(self):
        grid = TimeGrid(np.array([1.0, 2.0]), np.array([0.5, 1.5, 3.0]))
        pmf = np.array([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
        truth = np.array([[0.1, 0.9], [0.5, 0.5]])
        np.testing.assert_allclose(ks_distance(pmf, grid, truth), [0.4, 0.5])


class TestLoglikAndCoverage:
    def test_summary(self):
        v = np.array([-1.0, -2.0, -3.0, -0.5, -0.25])
        d = np.array([1, 1, 1, 0, 0])
        out = loglik_summary(v, d)
        assert out["mean_loglik"] == pytest.approx(v.mean())
        assert out["mean_loglik_event"] == pytest.approx(-2.0)
        q10, q90 = np.quantile([-1.0, -2.0, -3.0], [0.1, 0.9])
        assert out["loglik_qrange_event"] == pytest.approx(q90 - q10)

    def test_summary_no_censoring(self):
        assert "loglik_qrange_censored" not in loglik_summary([-1.0, -2.0], [1, 1])

    def test_coverage_calibrated(self):
        # every subject's time is drawn from its own predicted pmf: coverage
        # tracks the nominal width up to discretization
        M = 200
        edges = np.linspace(0.01, 2.0, M)
        reps = np.concatenate([[edges[0] / 2], (edges[1:] + edges[:-1]) / 2, [2.5]])
        grid = TimeGrid(edges, reps)
        rng = np.random.default_rng(5)
        n = 4000
        p = np.full(M + 1, 1.0 / (M + 1))
        pmf = np.tile(p, (n, 1))
        t = reps[rng.choice(M + 1, size=n, p=p)] + 1e-3
        events, cens = coverage(pmf, grid, t, np.ones(n))
        assert cens is None
        for (lo, hi), v in events.items():
            assert v == pytest.approx(hi - lo, abs=0.03)

    def test_censoring_coverage_definition(self):
        grid = TimeGrid(np.array([1.0, 2.0]), np.array([0.5, 1.5, 3.0]))
        pmf = np.array([[0.5, 0.5, 0.0]] * 3)
        _, cens = coverage(pmf, grid, np.array([0.2, 1.0, 2.0]), np.zeros(3), censor_levels=(0.5, 0.9))
        # 0.5 quantile is 0.5 and 0.9 quantile is 1.5
        assert cens == {0.5: pytest.approx(1 / 3), 0.9: pytest.approx(2 / 3)}


class TestReport:
    def test_roundtrip(self, tmp_path):
        r = EvalReport("vsi", 0.77, (0.76, 0.78), 0.75, None, -2.2, {"mean_loglik": -2.2, "loglik_qrange_event": 1.5},
                       coverage_events={(0.05, 0.95): 0.9}, coverage_censored={0.5: 0.4}, meta={"seed": 3})
        path = tmp_path / "r.txt"
        r.write(path)
        back = read_report(path)
        assert back["ks"] == "absent"
        assert float(back["c_index"]) == 0.77
        assert back["coverage_event_0.05_0.95"] == "0.9"
        assert back["coverage_censor_0.5"] == "0.4"
        assert list(back)[:2] == ["seed", "model"]
        assert "mean_loglik" in back and "c_td_own_time" not in back
