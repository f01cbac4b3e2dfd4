import itertools
import json
import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

import mixmobo.optimizer as opt_mod
from mixmobo.acquisition import AcquisitionKind, evaluate_array
from mixmobo.moga import GaConfig
from mixmobo.optimizer import (
    EvaluationError,
    MixMOBO,
    OptimizerConfig,
    OptimizerState,
    PointMismatchError,
    ProtocolError,
    ask,
    dedup_mutate,
    extract_pareto_set,
    initialize_dataset,
    propose_batch,
    run_epoch,
    tell,
)
from mixmobo.space import MixedSpace, l2_distance, sample_uniform, validate_point
from mixmobo.surrogate import Dataset, FactorizationError, HyperparamSearch, fit_gp

from conftest import point

SPACE = MixedSpace(((0.0, 1.0),), ((0.0, 1.0, 2.0, 3.0),), (4, 3))


def quick(**kw):
    base = dict(n_init=6, epochs=3, batch_size=2, ga=GaConfig(16, 4), hyperparams=HyperparamSearch(8))
    base.update(kw)
    return OptimizerConfig(**base)


def f1(w):
    return [-(w.continuous[0] - 0.3) ** 2 - 0.1 * w.ordinal[0] + 0.5 * (w.categorical[0] == 2)]


def f2(w):
    x = w.continuous[0]
    return [x + 0.1 * w.categorical[1], 1 - x ** 2 + 0.2 * w.ordinal[0]]


def brute_pareto(V):
    return [i for i in range(len(V))
            if not any(np.all(V[j] >= V[i]) and np.any(V[j] > V[i]) for j in range(len(V)))]


def same_data(a, b):
    return a.dataset.points == b.dataset.points and np.array_equal(a.dataset.objectives, b.dataset.objectives)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"n_init": 0}, {"batch_size": 0}, {"portfolio": ("EI",)},
                                    {"mutation_rate": 2.0}, {"eta": 0.0}, {"dedup_tolerance": -1.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            quick(**kw)

    def test_round_trip(self):
        c = quick(portfolio=("UCB", "SMC"), eta=0.5)
        assert OptimizerConfig.from_dict(json.loads(json.dumps(c.to_dict()))) == c

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            OptimizerConfig.from_dict({"n_inital": 3})


class TestInitialize:
    def test_size_one(self, rng):
        assert len(initialize_dataset(f1, SPACE, 1, rng)) == 1

    def test_reproducible(self):
        a = initialize_dataset(f1, SPACE, 5, np.random.default_rng(3))
        b = initialize_dataset(f1, SPACE, 5, np.random.default_rng(3))
        assert a.points == b.points and np.array_equal(a.objectives, b.objectives)

    def test_constant(self, rng):
        d = initialize_dataset(lambda w: 2.5, SPACE, 7, rng)
        assert d.objectives.tolist() == [[2.5] * 7]

    def test_failure_carries_point(self, rng):
        def bad(w):
            raise RuntimeError("boom")

        with pytest.raises(EvaluationError) as info:
            initialize_dataset(bad, SPACE, 3, rng)
        assert validate_point(info.value.point, SPACE)


class TestParetoSet:
    def test_hand_example(self):
        pts = [point(cats=(i,)) for i in range(4)]
        d = Dataset(pts, np.array([[1, 3, 2, 0], [3, 1, 2, 0]], dtype=float))
        assert extract_pareto_set(d).points == pts[:3]

    def test_single_objective_ties_kept(self):
        pts = [point(cats=(i,)) for i in range(4)]
        ps = extract_pareto_set(Dataset(pts, np.array([[1.0, 4.0, 4.0, 2.0]])))
        assert ps.points == [pts[1], pts[2]]

    def test_200_random_k3(self, rng):
        V = rng.normal(size=(200, 3))
        pts = [point(cats=(i,)) for i in range(200)]
        ps = extract_pareto_set(Dataset(pts, V.T))
        assert ps.points == [pts[i] for i in brute_pareto(V)]

    def test_matches_brute_force_1000_instances(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            n, K = int(rng.integers(1, 51)), int(rng.integers(1, 5))
            V = rng.integers(0, 5, size=(n, K)).astype(float) if rng.random() < 0.5 else rng.normal(size=(n, K))
            pts = [point(cats=(i,)) for i in range(n)]
            assert extract_pareto_set(Dataset(pts, V.T)).points == [pts[i] for i in brute_pareto(V)]

    @given(st.integers(1, 30), st.integers(1, 3), st.integers(0, 2**32 - 1))
    def test_idempotent_and_order_invariant(self, n, K, seed):
        rng = np.random.default_rng(seed)
        V = rng.integers(0, 4, size=(n, K)).astype(float)
        pts = [point(cats=(i,)) for i in range(n)]
        ps = extract_pareto_set(Dataset(pts, V.T))
        again = extract_pareto_set(Dataset(ps.points, ps.values.T))
        assert again.points == ps.points
        perm = rng.permutation(n)
        shuffled = extract_pareto_set(Dataset([pts[i] for i in perm], V[perm].T))
        assert set(shuffled.points) == set(ps.points)
        # every point is dominated by or equal to a member
        for v in V:
            assert any(np.all(m >= v) for m in ps.values)

    def test_empty(self):
        with pytest.raises(ValueError):
            extract_pareto_set(Dataset.empty(1))


class TestDedup:
    def test_distinct_unchanged(self, rng):
        batch = [point(cats=(i, 0)) for i in range(3)]
        assert dedup_mutate(batch, None, MixedSpace(categorical=(3, 3)), 1.0, 1e-6, rng) == batch

    def test_tol_zero_unchanged(self, rng):
        batch = [point(cats=(1, 1))] * 3
        assert dedup_mutate(batch, None, MixedSpace(categorical=(3, 3)), 1.0, 0.0, rng) == batch

    def test_identical_pushed_apart(self, rng):
        s = MixedSpace(categorical=(5, 5))
        batch = [point(cats=(2, 2))] * 4
        out = dedup_mutate(batch, None, s, 1.0, 1e-6, rng)
        assert out[0] == batch[0]
        assert all(l2_distance(a, b, s) >= 1e-6 for a, b in itertools.combinations(out, 2))

    def test_against_dataset(self, rng):
        s = MixedSpace(categorical=(5,))
        d = Dataset([point(cats=(3,))], np.zeros((1, 1)))
        assert dedup_mutate([point(cats=(3,))], d, s, 1.0, 1e-6, rng)[0] != point(cats=(3,))

    def test_single_mutation_collision_rate(self, rng):
        # with one retry the duplicate survives only if the resample collides, probability 1/25
        s = MixedSpace(categorical=(5, 5))
        same = np.mean([dedup_mutate([point(cats=(0, 0))] * 2, None, s, 1.0, 1e-6, rng, max_retries=1)[1]
                        == point(cats=(0, 0)) for _ in range(10_000)])
        assert same == pytest.approx(1 / 25, abs=0.01)

    def test_exhaustion_warns(self, rng, caplog):
        s = MixedSpace(categorical=(2,))
        with caplog.at_level(logging.WARNING, logger="mixmobo.optimizer"):
            out = dedup_mutate([point(cats=(0,))] * 3, None, s, 1.0, 1e-6, rng, max_retries=5)
        assert len(out) == 3
        assert "exhausted" in caplog.text


class TestLoop:
    def test_budget_and_growth(self):
        st_ = OptimizerState.new(SPACE, quick(epochs=4, batch_size=3))
        m = MixMOBO(SPACE, state=st_)
        sizes = []
        m.run(f1, callback=lambda s: sizes.append(s.n_evaluations))
        assert sizes == [6, 9, 12, 15, 18]
        assert st_.n_evaluations == st_.config.budget == 6 + 3 * 4

    def test_determinism(self):
        runs = []
        for _ in range(2):
            m = MixMOBO(SPACE, quick(seed=11))
            m.run(f2)
            runs.append(m.state)
        assert same_data(*runs)
        assert json.dumps(runs[0].to_dict()) == json.dumps(runs[1].to_dict())

    def test_different_seeds_differ(self):
        a, b = MixMOBO(SPACE, quick(seed=1)), MixMOBO(SPACE, quick(seed=2))
        a.run(f1)
        b.run(f1)
        assert a.dataset.points != b.dataset.points

    def test_best_so_far_monotone_ordinal(self):
        s = MixedSpace(ordinal=(tuple(float(i) for i in range(20)),))
        m = MixMOBO(s, quick(n_init=3, epochs=10, batch_size=1, seed=4))
        m.run(lambda w: -(w.ordinal[0] - 13) ** 2)
        v = m.dataset.objectives[0]
        best = np.maximum.accumulate(v)
        assert np.all(np.diff(best) >= 0)
        assert len(v) == 13

    def test_selected_valid_and_separated(self):
        m = MixMOBO(SPACE, quick(batch_size=4, seed=3))
        m.run(f2)
        for rec in m.state.trace:
            pts = [opt_mod.MixedVector.from_dict(p) for p in rec["points"]]
            assert all(validate_point(w, SPACE) for w in pts)
            if not rec["dedup_exhausted"]:
                assert all(l2_distance(a, b, SPACE) >= 1e-6 for a, b in itertools.combinations(pts, 2))
            assert abs(sum(rec["probabilities"]) - 1) <= 1e-12

    def test_ucb_only_selected_equals_nominees(self):
        st_ = OptimizerState.new(SPACE, quick(portfolio=("UCB",), batch_size=3, seed=8))
        tell(st_, ask(st_), [f2(w) for w in st_.pending.selected])
        for _ in range(3):
            pts = ask(st_)
            assert pts == st_.pending.nominees[0]
            tell(st_, pts, [f2(w) for w in pts])
        assert st_.trace[-1]["probabilities"] == [1.0]

    def test_q1_selects_enumerated_argmax(self):
        s = MixedSpace(categorical=(4, 4, 3))
        cfg = quick(portfolio=("UCB",), batch_size=1, dedup_tolerance=0.0, ga=GaConfig(40, 30), n_init=8)
        st_ = OptimizerState.new(s, cfg)
        f = lambda w: [np.sin(w.categorical[0] * 1.3 + w.categorical[1]) - 0.2 * w.categorical[2]]  # noqa: E731
        tell(st_, ask(st_), [f(w) for w in st_.pending.selected])
        sel = propose_batch(st_).selected[0]
        model = fit_gp(st_.dataset, s, st_.hyperparams)
        allX = np.array(list(itertools.product(range(4), range(4), range(3))), dtype=float)
        vals = evaluate_array(AcquisitionKind.UCB, model, allX, cfg.acquisition)[:, 0]
        idx = int(np.flatnonzero((allX == s.to_array([sel])[0]).all(axis=1))[0])
        assert vals[idx] == vals.max()

    def test_fallback_on_factorization_failure(self, monkeypatch, caplog):
        st_ = OptimizerState.new(SPACE, quick())
        tell(st_, ask(st_), [f1(w) for w in st_.pending.selected])

        def broken(*a, **k):
            raise FactorizationError("forced")

        monkeypatch.setattr(opt_mod, "fit_gp", broken)
        with caplog.at_level(logging.WARNING, logger="mixmobo.optimizer"):
            run_epoch(st_, None, f1)
        assert st_.trace[-1]["fallback"] is True
        assert st_.n_evaluations == 8
        assert "uniform random" in caplog.text

    def test_failed_evaluation_leaves_state(self):
        st_ = OptimizerState.new(SPACE, quick())
        tell(st_, ask(st_), [f1(w) for w in st_.pending.selected])
        before = json.dumps(st_.to_dict())

        def flaky(w):
            raise RuntimeError("lab offline")

        with pytest.raises(EvaluationError):
            run_epoch(st_, None, flaky)
        assert json.dumps(st_.to_dict()) == before
        run_epoch(st_, None, f1)
        ref = OptimizerState.new(SPACE, quick())
        tell(ref, ask(ref), [f1(w) for w in ref.pending.selected])
        run_epoch(ref, None, f1)
        assert same_data(st_, ref)


class TestAskTell:
    def test_ask_twice(self):
        st_ = OptimizerState.new(SPACE, quick())
        ask(st_)
        with pytest.raises(ProtocolError):
            ask(st_)

    def test_tell_without_ask(self):
        with pytest.raises(ProtocolError):
            tell(OptimizerState.new(SPACE, quick()), [], [])

    def test_point_mismatch(self):
        st_ = OptimizerState.new(SPACE, quick())
        pts = ask(st_)
        with pytest.raises(PointMismatchError):
            tell(st_, pts[::-1], [f1(w) for w in pts])

    def test_dimension_mismatch(self):
        st_ = OptimizerState.new(SPACE, quick())
        tell(st_, ask(st_), [f1(w) for w in st_.pending.selected])
        pts = ask(st_)
        with pytest.raises(ValueError, match="dimension"):
            tell(st_, pts, [f2(w) for w in pts])

    def test_second_ask_reflects_new_data(self):
        st_ = OptimizerState.new(SPACE, quick())
        tell(st_, ask(st_), [f1(w) for w in st_.pending.selected])
        pts = ask(st_)
        tell(st_, pts, [f1(w) for w in pts])
        ask(st_)
        assert st_.pending.record["epoch"] == 2
        assert st_.n_evaluations == 8

    def test_resume_between_ask_and_tell(self, tmp_path):
        ref = MixMOBO(SPACE, quick(seed=5))
        ref.run(f2)
        st_ = OptimizerState.new(SPACE, quick(seed=5))
        path = tmp_path / "state.json"
        while not st_.done:
            pts = ask(st_)
            st_.save(path)
            st_ = OptimizerState.load(path)
            assert st_.pending.selected == pts
            tell(st_, pts, [f2(w) for w in pts])
            st_.save(path)
            st_ = OptimizerState.load(path)
        assert same_data(st_, ref.state)
        assert st_.trace == json.loads(json.dumps(ref.state.trace))

    def test_schema_version_checked(self):
        doc = OptimizerState.new(SPACE, quick()).to_dict()
        doc["schema_version"] = 99
        with pytest.raises(ValueError):
            OptimizerState.from_dict(doc)

    def test_pareto_before_data(self):
        with pytest.raises(ProtocolError):
            MixMOBO(SPACE, quick()).pareto_set()


def test_random_baseline_shares_initial_design():
    st_ = OptimizerState.new(SPACE, quick(seed=21))
    rng = np.random.default_rng(21)
    assert ask(st_) == [sample_uniform(SPACE, rng) for _ in range(6)]
