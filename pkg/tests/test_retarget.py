import json

import numpy as np
import pytest

from skelcloud import fixtures
from skelcloud.cloud import CloudTrajectory, sample_cloud_spec
from skelcloud.objectives import (
    KnnConfig,
    ObjectiveWeights,
    RetargetParams,
    RetargetProblem,
    build_problem,
    knn_assign,
    total_objective,
    unit_norm_penalty,
)
from skelcloud.retarget import OptimizerConfig, export_retargeted, init_params, optimize, retarget
from skelcloud.skeleton import make_skeleton


@pytest.fixture(scope="module")
def short_walk(humanoid20):
    return fixtures.procedural_motion(humanoid20, frames=20)


class TestInit:
    def test_deterministic(self, humanoid20, walk20):
        a = init_params(humanoid20, walk20, seed=3)
        b = init_params(humanoid20, walk20, seed=3)
        assert np.array_equal(a.flat(), b.flat())
        assert not np.array_equal(a.flat(), init_params(humanoid20, walk20, seed=4).flat())

    def test_no_noise_is_rest(self, humanoid20, walk20):
        p = init_params(humanoid20, walk20, noise=0.0)
        assert np.array_equal(p.raw_rotations, np.tile([1.0, 0, 0, 0], (60, 20, 1)))
        assert np.array_equal(p.root_positions, walk20.root_positions)

    def test_near_unit(self, humanoid20, walk20):
        assert unit_norm_penalty(init_params(humanoid20, walk20).raw_rotations) <= 1e-5


class TestExport:
    def test_unit_unchanged(self, humanoid20, walk20):
        m = export_retargeted(RetargetParams(walk20.root_positions, walk20.rotations), humanoid20)
        np.testing.assert_allclose(m.rotations, walk20.rotations, atol=1e-15)

    def test_normalizes(self):
        s = fixtures.chain(1)
        m = export_retargeted(RetargetParams(np.zeros((1, 3)), np.array([[[2.0, 0, 0, 0]]])), s)
        assert np.array_equal(m.rotations[0, 0], [1.0, 0, 0, 0])

    def test_aligned(self, rng):
        s = fixtures.chain(2)
        raw = rng.normal(size=(30, 2, 4))
        m = export_retargeted(RetargetParams(np.zeros((30, 3)), raw), s)
        assert np.all(np.sum(m.rotations[1:] * m.rotations[:-1], -1) >= 0)
        np.testing.assert_allclose(np.linalg.norm(m.rotations, axis=-1), 1.0, atol=1e-15)

    def test_zero_norm(self):
        s = fixtures.chain(2)
        raw = np.ones((3, 2, 4))
        raw[2, 1] = 0
        with pytest.raises(ValueError, match="frame 2, bone 'b1'"):
            export_retargeted(RetargetParams(np.zeros((3, 3)), raw), s)


def _self_problem(s, m, k, points=256, seed=0):
    spec = sample_cloud_spec(s, points, 0.05, seed)
    return build_problem(s, m, spec, s, spec, knn=KnnConfig(k))


class TestOptimize:
    def test_self_retarget_k1(self, humanoid20, short_walk):
        cfg = OptimizerConfig(knn=KnnConfig(1))
        problem = _self_problem(humanoid20, short_walk, 1)
        init = init_params(humanoid20, short_walk, cfg.seed)
        start = total_objective(problem, init).l_knn
        _, trace = optimize(problem, init, cfg)
        assert trace.final.l_knn <= 0.1 * start

    def test_trace_contract_and_determinism(self, humanoid20, short_walk):
        cfg = OptimizerConfig(max_iterations=60, knn=KnnConfig(4))
        problem = _self_problem(humanoid20, short_walk, 4, points=64)
        init = init_params(humanoid20, short_walk, 0)
        m1, t1 = optimize(problem, init, cfg)
        m2, t2 = optimize(problem, init, cfg)
        assert m1 == m2
        assert [b.total for b in t1.history] == [b.total for b in t2.history]
        assert np.all(np.diff(t1.best_totals) <= 0)
        assert t1.reassignments == list(range(0, 60, 10))
        assert t1.stop_reason == "max_iterations"
        m1.check(humanoid20)

    def test_reassignment_never_increases(self, humanoid20, short_walk):
        cfg = OptimizerConfig(max_iterations=80, reassign_interval=10, knn=KnnConfig(4))
        problem = _self_problem(humanoid20, short_walk, 4, points=64)
        init = init_params(humanoid20, short_walk, 0)
        _, trace = optimize(problem, init, cfg)
        stale = knn_assign(problem.source, problem.target_cloud(init), problem.knn)
        rng = np.random.default_rng(0)
        for params in (trace.best_params, init.with_flat(init.flat() + 0.05 * rng.normal(size=init.flat().size))):
            fresh = total_objective(problem, params)
            assert fresh.total <= total_objective(problem, params, stale).total

    def test_self_fixed_point(self, humanoid20, short_walk):
        problem = _self_problem(humanoid20, short_walk, 1, points=64)
        start = RetargetParams(short_walk.root_positions.copy(), short_walk.rotations.copy())
        cfg = OptimizerConfig(max_iterations=5, knn=KnnConfig(1))
        m, trace = optimize(problem, start, cfg)
        assert np.abs(trace.best_params.flat() - start.flat()).max() <= 1e-9
        assert trace.final.l_knn == 0.0

    def test_frozen_single_point_descent(self):
        s = make_skeleton([("b0", None, (0, 0, 0), (0.0, 0.5, 0.0), "spine")])
        spec = sample_cloud_spec(s, 1, 0.0, 0)
        src = CloudTrajectory(np.array([[[1.0, 1.0, 0.5]]] * 3), spec.groups)
        problem = RetargetProblem(
            src, s, spec, np.zeros((3, 0, 3)), np.zeros(0, dtype=int), ObjectiveWeights(1, 0, 0), KnnConfig(1)
        )
        init = RetargetParams(np.zeros((3, 3)), np.tile([1.0, 0, 0, 0], (3, 1, 1)))
        cfg = OptimizerConfig(max_iterations=100, step_size=1e-3, reassign_interval=10**9)
        _, trace = optimize(problem, init, cfg)
        totals = [b.total for b in trace.history]
        assert np.all(np.diff(totals) < 0)

    def test_trace_jsonl(self, tmp_path, humanoid20, short_walk):
        spec = sample_cloud_spec(humanoid20, 64, 0.05, 0)
        cfg = OptimizerConfig(max_iterations=12, knn=KnnConfig(2))
        _, trace = retarget(humanoid20, short_walk, humanoid20, spec, spec, cfg)
        path = tmp_path / "trace.jsonl"
        trace.write_jsonl(path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(rows) == 12
        assert set(rows[0]) >= {"iteration", "l_knn", "l_end", "l_q", "total"}
        assert rows[10]["reassigned"] and not rows[9]["reassigned"]


class TestConfig:
    def test_from_dict(self):
        cfg = OptimizerConfig.from_dict({"step_size": 0.02, "knn": {"k": 3}, "weights": {"q": 0.1}})
        assert cfg.step_size == 0.02 and cfg.knn.k == 3 and cfg.weights.q == 0.1

    def test_rejects(self):
        with pytest.raises(ValueError):
            OptimizerConfig.from_dict({"bogus": 1})
        with pytest.raises(ValueError):
            OptimizerConfig(reassign_interval=0)
