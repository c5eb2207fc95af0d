import numpy as np
import pytest

from ssrk.generators import StructuredPattern, gen_block_random, gen_structured, plant_solution
from ssrk.linalg import SparseMatrix, gramian, row_norms
from ssrk.sampling import make_rng
from ssrk.selectable_set import build_graph
from ssrk.solver import (
    ConvergenceTrace,
    MethodSpec,
    kaczmarz_step,
    run_method,
    run_ssrk,
    select_max_distance,
    select_rgrk,
)


def from_dense(rows):
    return SparseMatrix.from_dense(np.asarray(rows, dtype=float))


def random_planted(m, n, seed):
    rng = np.random.default_rng(seed)
    dense = rng.normal(size=(m, n))
    dense[rng.random(size=(m, n)) < 0.3] = 0.0
    dense[np.abs(dense).sum(axis=1) == 0, 0] = 1.0
    A = from_dense(dense)
    return plant_solution(A, seed=seed + 1)


def replay_states(A, b, trace, x0=None):
    """Recompute every iterate from the logged row choices."""
    x = np.zeros(A.num_cols) if x0 is None else np.asarray(x0, dtype=float).copy()
    states = [x]
    for i in trace.chosen[1:]:
        x = kaczmarz_step(A, b, x, int(i))
        states.append(x)
    return states


class TestKaczmarzStep:
    def test_first_projection(self):
        A = from_dense([[1.0, 0.0], [1.0, 1.0]])
        b = np.array([1.0, 2.0])
        x1 = kaczmarz_step(A, b, np.zeros(2), 0)
        np.testing.assert_allclose(x1, [1.0, 0.0])

    def test_second_projection(self):
        A = from_dense([[1.0, 0.0], [1.0, 1.0]])
        b = np.array([1.0, 2.0])
        x2 = kaczmarz_step(A, b, np.array([1.0, 0.0]), 1)
        np.testing.assert_allclose(x2, [1.5, 0.5])

    def test_solved_row_is_identity(self):
        A = from_dense([[2.0, 1.0], [0.0, 3.0]])
        x = np.array([0.5, 1.0])
        b = A.matvec(x)
        x_next = kaczmarz_step(A, b, x, 0)
        assert np.array_equal(x_next, x)

    def test_projected_equation_solved(self):
        planted = random_planted(6, 4, 3)
        A, b = planted.matrix, planted.rhs
        x = np.ones(4)
        for i in range(6):
            x_next = kaczmarz_step(A, b, x, i)
            cols, vals = A.row(i)
            scale = np.sqrt(vals @ vals) * (1.0 + np.linalg.norm(x_next))
            assert abs(vals @ x_next[cols] - b[i]) <= 1e-12 * scale

    def test_out_of_range(self):
        A = from_dense([[1.0]])
        with pytest.raises(IndexError):
            kaczmarz_step(A, np.array([1.0]), np.zeros(1), 1)


class TestMethodSpec:
    def test_theta_only_for_rgrk(self):
        with pytest.raises(ValueError):
            MethodSpec(method="rk", theta=0.5)

    def test_rgrk_theta_defaults_to_half(self):
        assert MethodSpec(method="rgrk").theta == 0.5

    def test_theta_range(self):
        with pytest.raises(ValueError):
            MethodSpec(method="rgrk", theta=1.5)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            MethodSpec(method="sor")


class TestRunSsrk:
    def test_gssrk_identity_three_steps(self):
        A = from_dense(np.eye(3))
        b = np.ones(3)
        spec = MethodSpec(method="gssrk", max_iterations=50, seed=1)
        trace = run_ssrk(A, b, spec, x_star=b)
        # orthogonal rows are never reintroduced: one projection per row
        assert trace.iterations == 3
        assert trace.terminated in ("solved", "tolerance")
        np.testing.assert_allclose(trace.final_x, b)
        assert sorted(trace.chosen[1:]) == [0, 1, 2]

    def test_nssrk_never_repeats(self):
        planted = random_planted(8, 5, 11)
        spec = MethodSpec(method="nssrk", max_iterations=400, tolerance=0.0, seed=3)
        trace = run_method(planted.matrix, planted.rhs, spec)
        picks = trace.chosen[1:]
        assert (picks[1:] != picks[:-1]).all()

    def test_nssrk_sizes(self):
        planted = random_planted(7, 4, 2)
        spec = MethodSpec(method="nssrk", max_iterations=100, tolerance=0.0, seed=5)
        trace = run_method(planted.matrix, planted.rhs, spec)
        assert trace.selectable_size[0] == 7
        assert (trace.selectable_size[1:] == 6).all()

    def test_rk_converges(self):
        planted = random_planted(20, 10, 7)
        spec = MethodSpec(method="rk", max_iterations=2000, tolerance=0.0, seed=9)
        trace = run_method(planted.matrix, planted.rhs, spec, x_star=planted.solution)
        assert trace.sq_error[-1] < 1e-6 * trace.sq_error[0]

    def test_single_row_terminates_solved(self):
        A = from_dense([[2.0, 0.0]])
        spec = MethodSpec(method="nssrk", max_iterations=10, tolerance=0.0, seed=0)
        trace = run_method(A, np.array([4.0]), spec)
        assert trace.iterations == 1
        assert trace.terminated == "solved"
        assert trace.selectable_size[-1] == 0

    def test_zero_iterations(self):
        planted = random_planted(5, 3, 1)
        spec = MethodSpec(method="rk", max_iterations=0, seed=0)
        trace = run_method(planted.matrix, planted.rhs, spec)
        assert trace.iterations == 0
        assert trace.chosen.tolist() == [-1]

    def test_deterministic(self):
        planted = random_planted(10, 6, 21)
        spec = MethodSpec(method="gssrk", max_iterations=300, tolerance=0.0, seed=13)
        t1 = run_method(planted.matrix, planted.rhs, spec, x_star=planted.solution)
        t2 = run_method(planted.matrix, planted.rhs, spec, x_star=planted.solution)
        assert np.array_equal(t1.chosen, t2.chosen)
        assert np.array_equal(t1.sq_error, t2.sq_error)
        assert np.array_equal(t1.final_x, t2.final_x)

    def test_forced_sequence(self):
        A = from_dense(np.eye(4))
        b = np.ones(4)
        spec = MethodSpec(method="gssrk", max_iterations=10, tolerance=0.0, seed=0)
        trace = run_ssrk(A, b, spec, index_sequence=[2, 0], x_star=b)
        assert trace.chosen[1:].tolist() == [2, 0]
        assert trace.terminated == "sequence_exhausted"
        with pytest.raises(ValueError):
            run_ssrk(A, b, spec, index_sequence=[2, 2])

    def test_dimension_mismatch(self):
        planted = random_planted(5, 3, 1)
        spec = MethodSpec(method="rk", max_iterations=1)
        with pytest.raises(ValueError):
            run_method(planted.matrix, np.ones(4), spec)

    def test_on_state_sees_every_record(self):
        planted = random_planted(6, 4, 5)
        seen = []
        spec = MethodSpec(method="gssrk", max_iterations=20, tolerance=0.0, seed=2)
        trace = run_ssrk(
            planted.matrix,
            planted.rhs,
            spec,
            x_star=planted.solution,
            on_state=lambda k, x, s: seen.append((k, x.copy(), s.size)),
        )
        assert len(seen) == trace.iterations + 1
        np.testing.assert_allclose(seen[-1][1], trace.final_x)
        assert [s for _, _, s in seen] == trace.selectable_size.tolist()


def max_rel_error(a, b, floor=1e-30):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


class TestStepIdentity:
    @pytest.mark.parametrize("method", ["rk", "nssrk", "gssrk", "mdk", "rgrk"])
    def test_error_decomposition_and_monotonicity(self, method):
        planted = random_planted(12, 7, 31)
        A, b, x_star = planted.matrix, planted.rhs, planted.solution
        spec = MethodSpec(method=method, max_iterations=150, tolerance=0.0, seed=17)
        trace = run_method(A, b, spec, x_star=x_star)
        states = replay_states(A, b, trace)
        norms_sq = row_norms(A).squared_norms
        errors = [float(np.square(s - x_star).sum()) for s in states]
        for k in range(trace.iterations):
            i = int(trace.chosen[k + 1])
            cols, vals = A.row(i)
            drop = (vals @ states[k][cols] - b[i]) ** 2 / norms_sq[i]
            lhs = errors[k + 1]
            rhs = errors[k] - drop
            assert abs(lhs - rhs) <= 1e-10 * max(errors[k], 1e-30)
            assert errors[k + 1] <= errors[k] * (1 + 1e-12) + 1e-30

    @pytest.mark.parametrize("method", ["rk", "gssrk", "rgrk"])
    def test_logged_error_matches_replay(self, method):
        planted = random_planted(9, 5, 8)
        spec = MethodSpec(method=method, max_iterations=80, tolerance=0.0, seed=23)
        trace = run_method(planted.matrix, planted.rhs, spec, x_star=planted.solution)
        states = replay_states(planted.matrix, planted.rhs, trace)
        replayed = np.array([np.square(s - planted.solution).sum() for s in states])
        assert max_rel_error(replayed, trace.sq_error, floor=1e-25) < 1e-9


class TestOrthogonalPreservation:
    @pytest.mark.parametrize(
        "pattern",
        [
            StructuredPattern("path", 20),
            StructuredPattern("cycle", 24),
            StructuredPattern("star", 15),
        ],
        ids=["path", "cycle", "star"],
    )
    def test_solved_rows_stay_solved(self, pattern):
        A = gen_structured(pattern, seed=3)
        planted = plant_solution(A, seed=4)
        b = planted.rhs
        graph = build_graph(gramian(A))
        spec = MethodSpec(method="gssrk", max_iterations=200, tolerance=0.0, seed=6)
        trace = run_method(A, b, spec, x_star=planted.solution)
        states = replay_states(A, b, trace)
        dense = A.toarray()
        norms = np.sqrt(row_norms(A).squared_norms)
        for k in range(trace.iterations):
            i = int(trace.chosen[k + 1])
            before = dense @ states[k] - b
            after = dense @ states[k + 1] - b
            non_neighbors = np.setdiff1d(np.arange(A.num_rows), graph.neighbors[i])
            scale_before = norms * (1.0 + np.linalg.norm(states[k]))
            scale_after = norms * (1.0 + np.linalg.norm(states[k + 1]))
            for j in non_neighbors:
                if j != i and abs(before[j]) <= 1e-10 * scale_before[j]:
                    assert abs(after[j]) <= 1e-10 * scale_after[j]


class TestRowSpaceConfinement:
    @pytest.mark.parametrize("method", ["rk", "gssrk", "rgrk"])
    def test_iterates_stay_in_row_space(self, method):
        rng = np.random.default_rng(12)
        dense = rng.normal(size=(8, 6))
        dense[:, 4:] = 0.0  # null space spans the last two coordinates
        A = from_dense(dense)
        planted = plant_solution(A, seed=1)
        spec = MethodSpec(method=method, max_iterations=60, tolerance=0.0, seed=2)
        trace = run_method(A, planted.rhs, spec, x_star=planted.solution)
        projector = np.linalg.pinv(dense) @ dense
        for x in replay_states(A, planted.rhs, trace):
            assert np.linalg.norm(x - projector @ x) <= 1e-8


class TestGreedySelection:
    def test_mdk_picks_largest_normalized(self):
        A = from_dense(np.eye(2))
        assert select_max_distance(A, np.array([3.0, 1.0]), np.zeros(2)) == 0

    def test_mdk_tie_breaks_low_index(self):
        A = from_dense(np.eye(2))
        x = np.array([3.0, 1.0])
        assert select_max_distance(A, x, x) == 0  # all residuals zero

    def test_mdk_normalizes_by_row_norm(self):
        A = from_dense([[1.0, 0.0], [2.0, 0.0]])
        assert select_max_distance(A, np.array([1.0, 4.0]), np.zeros(2)) == 1

    def test_mdk_identity_order(self):
        A = from_dense(np.eye(3))
        b = np.array([3.0, 2.0, 1.0])
        spec = MethodSpec(method="mdk", max_iterations=10, seed=0)
        trace = run_method(A, b, spec, x_star=b)
        assert trace.chosen[1:4].tolist() == [0, 1, 2]
        assert trace.sq_residual[-1] == 0.0

    def test_rgrk_threshold_example(self):
        A = from_dense(np.eye(2))
        b = np.array([3.0, 1.0])
        # threshold 0.5*9 + 0.5*(10/2) = 7 leaves only row 0 eligible
        assert select_rgrk(A, b, np.zeros(2), 0.5, make_rng(0)) == 0

    def test_rgrk_zero_theta_uses_mean_threshold(self):
        A = from_dense(np.eye(3))
        b = np.array([2.0, 2.0, 0.1])
        rng = make_rng(1)
        picks = {select_rgrk(A, b, np.zeros(3), 0.0, rng) for _ in range(200)}
        assert picks == {0, 1}  # row 2 sits below the mean threshold

    def test_rgrk_zero_residual_raises(self):
        A = from_dense(np.eye(2))
        x = np.array([1.0, 2.0])
        with pytest.raises(ValueError):
            select_rgrk(A, A.matvec(x), x, 0.5, make_rng(0))

    def test_rgrk_eligibility_invariant(self):
        rng = np.random.default_rng(3)
        for trial in range(30):
            planted = random_planted(10, 6, 100 + trial)
            A, b = planted.matrix, planted.rhs
            x = rng.normal(size=6)
            theta = rng.random()
            geometry = row_norms(A)
            i = select_rgrk(A, b, x, theta, make_rng(trial))
            r = A.matvec(x) - b
            normalized = r**2 / geometry.squared_norms
            threshold = theta * normalized.max() + (1 - theta) * float(r @ r) / geometry.frobenius_sq
            assert normalized[i] >= threshold - 1e-12 * max(normalized.max(), 1.0)

    def test_theta_one_matches_mdk_sequences(self):
        for trial in range(20):
            planted = random_planted(9, 5, 500 + trial)
            A, b = planted.matrix, planted.rhs
            mdk = run_method(A, b, MethodSpec(method="mdk", max_iterations=40, tolerance=0.0, seed=1))
            rgrk = run_method(
                A, b, MethodSpec(method="rgrk", theta=1.0, max_iterations=40, tolerance=0.0, seed=1)
            )
            assert np.array_equal(mdk.chosen, rgrk.chosen)

    def test_incremental_residual_matches_recompute(self):
        planted = random_planted(14, 8, 77)
        A, b = planted.matrix, planted.rhs
        G = gramian(A)
        for method in ("mdk", "rgrk"):
            spec = MethodSpec(method=method, max_iterations=120, tolerance=0.0, seed=4)
            fresh = run_method(A, b, spec, x_star=planted.solution)
            incremental = run_method(A, b, spec, x_star=planted.solution, gram=G)
            assert np.array_equal(fresh.chosen, incremental.chosen)
            assert max_rel_error(fresh.sq_residual, incremental.sq_residual, floor=1e-25) < 1e-9

    def test_grk_default_beats_rk_on_block_random(self):
        A = gen_block_random(50, 25, 5, seed=5)
        planted = plant_solution(A, seed=6)
        rk_final, grk_final = [], []
        for trial in range(40):
            rk = run_method(
                A, planted.rhs,
                MethodSpec(method="rk", max_iterations=400, tolerance=0.0, seed=trial),
                x_star=planted.solution,
            )
            grk = run_method(
                A, planted.rhs,
                MethodSpec(method="rgrk", max_iterations=400, tolerance=0.0, seed=trial),
                x_star=planted.solution,
            )
            rk_final.append(rk.sq_error[-1])
            grk_final.append(grk.sq_error[-1])
        assert np.mean(grk_final) < np.mean(rk_final)
