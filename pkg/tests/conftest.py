import numpy as np
import pytest

from skelcloud import fixtures


def random_unit_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def rodrigues(axis, angle):
    """Rotation matrix about a unit axis; independent of any quaternion code."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * k @ k


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def humanoid20():
    return fixtures.humanoid(toes=False)


@pytest.fixture(scope="session")
def humanoid22():
    return fixtures.humanoid(toes=True)


@pytest.fixture(scope="session")
def walk20(humanoid20):
    return fixtures.procedural_motion(humanoid20)


def brute_force_knn(pos_a, groups_a, pos_b, groups_b, k):
    """Exhaustive neighbor search with plain loops; ties go to the lower index."""
    t_count = pos_a.shape[0]
    idx, dist = [], []
    for i in range(pos_a.shape[1]):
        cands = []
        for j in range(pos_b.shape[1]):
            if groups_a[i] != groups_b[j]:
                continue
            d = 0.0
            for t in range(t_count):
                d += float(np.sqrt(np.sum((pos_a[t, i] - pos_b[t, j]) ** 2)))
            cands.append((d, j))
        cands.sort()
        idx.append([j for _, j in cands[:k]])
        dist.append([d for d, _ in cands[:k]])
    return np.array(idx), np.array(dist)


def random_cloud_pair(rng, max_points=64, max_frames=16, n_groups=5):
    from skelcloud.cloud import CloudTrajectory

    t = int(rng.integers(1, max_frames + 1))
    k = int(rng.integers(1, 5))
    groups = rng.integers(0, n_groups, size=2)
    groups = np.unique(groups)
    pa = int(rng.integers(len(groups), max_points + 1))
    pb = int(rng.integers(k * len(groups), max_points + 1))
    ga = groups[rng.integers(0, len(groups), pa)]
    gb = np.concatenate([np.repeat(groups, k), groups[rng.integers(0, len(groups), pb - k * len(groups))]])
    gb = rng.permutation(gb)
    xa = CloudTrajectory(rng.normal(size=(t, pa, 3)), ga)
    xb = CloudTrajectory(rng.normal(size=(t, pb, 3)), gb)
    return xa, xb, k


def gradient_instance(rng, k=2, points=12, frames=4, weights=None):
    """Random 3-bone, 4-frame problem with an end effector and random raw params."""
    from skelcloud.cloud import CloudTrajectory, sample_cloud_spec
    from skelcloud.objectives import KnnConfig, ObjectiveWeights, RetargetParams, RetargetProblem
    from skelcloud.skeleton import make_skeleton

    while True:
        s = make_skeleton(
            [
                ("b0", None, (0, 0, 0), tuple(rng.normal(size=3) * 0.3), "spine"),
                ("b1", "b0", tuple(rng.normal(size=3) * 0.3), tuple(rng.normal(size=3) * 0.3), "left_arm"),
                ("b2", "b1", tuple(rng.normal(size=3) * 0.3), tuple(rng.normal(size=3) * 0.3), "left_arm", "hand_l"),
            ]
        )
        spec = sample_cloud_spec(s, points, 0.05, int(rng.integers(1 << 30)))
        # every group needs more than k points so the (k+1)-th neighbor exists
        if np.bincount(spec.groups).max() > k and np.min(np.bincount(spec.groups)[np.unique(spec.groups)]) > k:
            break
    src = CloudTrajectory(rng.normal(size=(frames, points, 3)) * 0.3, spec.groups.copy())
    problem = RetargetProblem(
        source=src,
        skeleton=s,
        spec=spec,
        source_effectors=rng.normal(size=(frames, 1, 3)),
        effector_bones=np.array([2]),
        weights=weights or ObjectiveWeights(1.0, 1.0, 0.5),
        knn=KnnConfig(k),
    )
    params = RetargetParams(rng.normal(size=(frames, 3)) * 0.1, rng.normal(size=(frames, 3, 4)))
    return problem, params


def assignment_margin(problem, params):
    """Gap between the k-th and (k+1)-th same-group neighbor distances (inf if none)."""
    from skelcloud.objectives import distance_matrix

    xa = problem.source
    xb = problem.target_cloud(params)
    k = problem.knn.k
    gap = np.inf
    for g in np.unique(xa.groups):
        src = np.flatnonzero(xa.groups == g)
        tgt = np.flatnonzero(xb.groups == g)
        if tgt.size <= k:
            continue
        d = np.sort(distance_matrix(xa.positions[:, src], xb.positions[:, tgt]), axis=1)
        gap = min(gap, float(np.min(d[:, k] - d[:, k - 1])))
    return gap


def finite_difference_error(problem, params, step=1e-6):
    """Max per-component relative error of the analytic gradient vs central differences."""
    from skelcloud.objectives import knn_assign, objective_gradient, total_objective

    assignment = knn_assign(problem.source, problem.target_cloud(params), problem.knn)
    analytic = objective_gradient(problem, params, assignment).flat()
    x0 = params.flat()
    numeric = np.empty_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += step
        xm[i] -= step
        fp = total_objective(problem, params.with_flat(xp), assignment).total
        fm = total_objective(problem, params.with_flat(xm), assignment).total
        numeric[i] = (fp - fm) / (2 * step)
    # absolute floor keeps near-zero components from dividing by rounding noise
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


# Acceptance results: criterion number -> (passed, detail). Filled by
# tests/test_acceptance.py and printed once at the end of the session.
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
