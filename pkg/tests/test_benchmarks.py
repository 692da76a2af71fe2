import math

import numpy as np
import pytest
import scipy.linalg
from scipy.signal import cont2discrete

from tlbo import kernels
from tlbo.benchmarks import (
    BRANIN_MINIMUM,
    CARTPOLE_RANGES,
    CARTPOLE_SPACE,
    CartpoleParams,
    CartpoleSettings,
    GridEvaluator,
    ShiftedBranin,
    ShiftedQuadratic,
    branin,
    cartpole_cost,
    cartpole_params_from_csv,
    cartpole_params_to_csv,
    discretize,
    is_stable,
    linearize,
    load_grid_tasks,
    lqr_gain,
    lqr_weights,
    sample_cartpole_family,
    simulate_cost,
    synthetic_family,
    unit_space,
)
from tlbo.dataset import DatasetFormatError, ObservationDataset, write_dataset
from tlbo.space import SearchSpace, VariableSpec

NOMINAL = CartpoleParams(0.3, 0.1, 0.5, 5e-4, 5e-3)


class TestCartpoleFamily:
    def test_bounds_and_determinism(self):
        fam = sample_cartpole_family(50, 3)
        for p in fam:
            for name, (lo, hi) in CARTPOLE_RANGES.items():
                assert lo <= getattr(p, name) <= hi
        assert fam == sample_cartpole_family(50, 3)

    def test_zero_tasks(self):
        with pytest.raises(ValueError):
            sample_cartpole_family(0, 0)

    def test_out_of_range_params(self):
        with pytest.raises(ValueError):
            CartpoleParams(1.0, 0.1, 0.5, 5e-4, 5e-3)

    def test_csv_roundtrip(self):
        fam = sample_cartpole_family(3, 1)
        assert cartpole_params_from_csv(cartpole_params_to_csv(fam)) == fam


class TestCartpoleModel:
    def test_q_matrix(self):
        q, r = lqr_weights((0.0, 3.0))
        assert np.array_equal(q, np.diag([1.0, 1.0, 1.0, 0.1]))
        assert r[0, 0] == pytest.approx(1e-3)

    def test_linearization_matches_jacobian(self):
        a, b = linearize(NOMINAL)
        params = NOMINAL.as_array()
        f = kernels.cartpole_deriv.py_func
        h = 1e-6
        x0 = np.zeros(4)
        for j in range(4):
            e = np.zeros(4)
            e[j] = h
            col = (f(x0 + e, 0.0, params) - f(x0 - e, 0.0, params)) / (2 * h)
            np.testing.assert_allclose(a[:, j], col, rtol=1e-6, atol=1e-6)
        col = (f(x0, h, params) - f(x0, -h, params)) / (2 * h)
        np.testing.assert_allclose(b[:, 0], col, rtol=1e-6)

    def test_discretize_matches_scipy_signal(self):
        a, b = linearize(NOMINAL)
        ad, bd = discretize(a, b, 0.01)
        ad2, bd2, *_ = cont2discrete((a, b, np.eye(4), np.zeros((4, 1))), 0.01, method="zoh")
        np.testing.assert_allclose(ad, ad2, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(bd, bd2, rtol=1e-10, atol=1e-12)

    def test_discrete_gain_solves_riccati(self):
        gain, eig = lqr_gain(NOMINAL, (0.0, 3.0))
        a, b = discretize(*linearize(NOMINAL), 0.01)
        q, r = lqr_weights((0.0, 3.0))
        p = scipy.linalg.solve_discrete_are(a, b, q, r)
        resid = a.T @ p @ a - p - a.T @ p @ b @ np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a) + q
        assert np.abs(resid).max() < 1e-6 * np.abs(p).max()
        assert is_stable(eig)
        np.testing.assert_allclose(np.sort_complex(eig), np.sort_complex(np.linalg.eigvals(a - b @ gain[None, :])))

    def test_continuous_option(self):
        settings = CartpoleSettings(riccati="continuous")
        _, eig = lqr_gain(NOMINAL, (0.0, 3.0), settings)
        assert is_stable(eig, settings)

    def test_stabilises(self):
        gain, _ = lqr_gain(NOMINAL, (0.0, 3.0))
        st = CartpoleSettings()
        j, diverged, x = kernels.cartpole_rollout(NOMINAL.as_array(), gain, np.array(st.initial_state),
                                                  st.dt, st.n_steps, st.blowup)
        assert not diverged and math.isfinite(j)
        assert abs(x[1]) < abs(st.initial_state[1])

    def test_equilibrium_zero_cost(self):
        gain, _ = lqr_gain(NOMINAL, (0.0, 3.0))
        assert simulate_cost(NOMINAL, gain, np.zeros(4)) == (0.0, False)

    def test_penalty_on_divergence(self):
        st = CartpoleSettings(riccati="continuous")
        assert cartpole_cost(NOMINAL, (2.0, 5.0), st) == st.penalty

    def test_finite_over_domain(self):
        for t1 in np.linspace(-3, 2, 4):
            for t2 in np.linspace(1, 5, 4):
                j = cartpole_cost(NOMINAL, (t1, t2))
                assert 0 < j < 1

    def test_bad_settings(self):
        with pytest.raises(ValueError):
            CartpoleSettings(riccati="both")


class TestSynthetic:
    def test_zero_shift_is_base(self):
        s = unit_space(2)
        cfg = s.make([0.3, 0.8])
        assert ShiftedQuadratic((0.0, 0.0))(cfg) == (0.3 - 0.5) ** 2 + (0.8 - 0.5) ** 2
        assert ShiftedBranin((0.0, 0.0))(cfg) == branin(-5 + 15 * 0.3, 15 * 0.8)

    def test_optimum(self):
        f = ShiftedQuadratic((0.1, -0.2))
        assert np.allclose(f.optimum, [0.6, 0.3])
        assert f(unit_space(2).make([0.6, 0.3])) == 0.0

    def test_family_deterministic(self):
        a = synthetic_family("shifted_quadratic", 4, seed=2)
        b = synthetic_family("shifted_quadratic", 4, seed=2)
        assert [t.evaluator.shift for t in a] == [t.evaluator.shift for t in b]
        assert len({t.evaluator.shift for t in a}) == 4

    def test_ranges(self):
        lo, hi = ShiftedBranin((0.0, 0.0)).value_range()
        assert lo == BRANIN_MINIMUM and hi > 300
        for t in synthetic_family("shifted_quadratic", 5, seed=0):
            lo, hi = t.known_range
            vals = [t.evaluate(unit_space(2).make([a, b])) for a in np.linspace(0, 1, 11) for b in np.linspace(0, 1, 11)]
            assert lo <= min(vals) and max(vals) <= hi + 1e-12

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            synthetic_family("rosenbrock", 2)


@pytest.fixture
def grid_space():
    return SearchSpace((VariableSpec("a", "continuous", 0, 1), VariableSpec("c", "categorical", categories=("x", "y"))))


class TestGrid:
    def test_nearest(self, grid_space):
        cfgs = [grid_space.make([0.0, "x"]), grid_space.make([1.0, "x"])]
        ev = GridEvaluator(grid_space, cfgs, np.array([3.0, 7.0]))
        assert ev(cfgs[1]) == 7.0
        assert ev(grid_space.make([0.3, "x"])) == 3.0
        assert ev(grid_space.make([0.5, "x"])) == 3.0  # tie -> first row

    def test_load(self, grid_space, tmp_path):
        paths = []
        for k in range(2):
            cfgs = tuple(grid_space.make([v, c]) for v in (0.0, 0.5, 1.0) for c in ("x", "y"))
            data = ObservationDataset(cfgs, np.arange(6.0) + k)
            p = tmp_path / f"grid{k}.csv"
            write_dataset(p, grid_space, data)
            paths.append(p)
        tasks = load_grid_tasks(paths, grid_space)
        assert [t.id for t in tasks] == ["grid0", "grid1"]
        assert tasks[1].known_range == (1.0, 6.0) and len(tasks[1].candidates) == 6

    def test_empty_file(self, grid_space, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("")
        with pytest.raises(DatasetFormatError):
            load_grid_tasks([p], grid_space)
        with pytest.raises(FileNotFoundError, match="missing.csv"):
            load_grid_tasks([tmp_path / "missing.csv"], grid_space)
