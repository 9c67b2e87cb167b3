import unittest

import numpy as np
from hypothesis import given, settings
from scipy import linalg as sla
from hypothesis import strategies as st

from hardproj import linalg
from hardproj.exceptions import RankDeficiencyError, ShapeError


def gauss_jordan_inverse(m):
    n = m.shape[0]
    work = np.hstack([m.astype(np.float64), np.eye(n)])
    for j in range(n):
        p = j + int(np.argmax(np.abs(work[j:, j])))
        work[[j, p]] = work[[p, j]]
        work[j] /= work[j, j]
        for i in range(n):
            if i != j:
                work[i] -= work[i, j] * work[j]
    return work[:, n:]


class MatmulTest(unittest.TestCase):
    def test_matmul_small(self):
        np.testing.assert_array_equal(
            linalg.matmul([[1, 2], [3, 4]], [[0], [1]]), [[2.0], [4.0]]
        )

    def test_matmul_against_triple_loop(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(5, 7))
        b = rng.normal(size=(7, 3))
        expected = np.zeros((5, 3))
        for i in range(5):
            for j in range(3):
                for k in range(7):
                    expected[i, j] += a[i, k] * b[k, j]
        self.assertLess(np.max(np.abs(linalg.matmul(a, b) - expected)), 1e-13)

    def test_matmul_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            linalg.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_non_finite_input(self):
        with self.assertRaises(ShapeError):
            linalg.as_mat([[1.0, np.nan]])


class SpdSolveTest(unittest.TestCase):
    def test_identity(self):
        rhs = np.arange(8.0).reshape(4, 2)
        np.testing.assert_array_equal(linalg.spd_solve(np.eye(4), rhs), rhs)

    def test_diagonal(self):
        solution = linalg.spd_solve([[4.0, 0.0], [0.0, 9.0]], np.eye(2))
        np.testing.assert_allclose(solution, [[0.25, 0.0], [0.0, 1.0 / 9.0]], rtol=1e-15)

    def test_vector_rhs(self):
        solution = linalg.spd_solve([[2.0, 0.0], [0.0, 4.0]], [2.0, 2.0])
        self.assertEqual(solution.shape, (2,))
        np.testing.assert_allclose(solution, [1.0, 0.5])

    def test_against_gaussian_elimination(self):
        rng = np.random.default_rng(11)
        b = rng.normal(size=(4, 9))
        gram = b @ b.T
        solution = linalg.spd_solve(gram, np.eye(4))
        self.assertLess(np.max(np.abs(solution - gauss_jordan_inverse(gram))), 1e-10)

    def test_rank_deficient_names_pivot(self):
        m = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with self.assertRaises(RankDeficiencyError) as ctx:
            linalg.spd_solve(m, np.eye(3))
        self.assertEqual(ctx.exception.pivot, 1)
        self.assertIsNone(ctx.exception.batch_index)

    def test_not_symmetric(self):
        with self.assertRaises(ShapeError):
            linalg.spd_solve([[2.0, 1.0], [0.0, 2.0]], np.eye(2))

    def test_projector_properties(self):
        rng = np.random.default_rng(5)
        b = rng.normal(size=(3, 6))
        projector = b.T @ linalg.spd_solve(b @ b.T, b)
        self.assertLess(np.max(np.abs(projector - projector.T)), 1e-10)
        self.assertLess(np.max(np.abs(projector @ projector - projector)), 1e-9)


class BatchSpdSolveTest(unittest.TestCase):
    def test_matches_sequential_loop_bitwise(self):
        rng = np.random.default_rng(7)
        factors = rng.normal(size=(64, 5, 8))
        m = factors @ np.swapaxes(factors, 1, 2)
        rhs = rng.normal(size=(64, 5, 3))
        batched = linalg.batch_spd_solve(m, rhs)
        looped = np.stack([linalg.spd_solve(m[i], rhs[i]) for i in range(64)])
        self.assertEqual(np.max(np.abs(batched - looped)), 0.0)

    def test_against_scipy_positive_definite_solve(self):
        rng = np.random.default_rng(9)
        factors = rng.normal(size=(16, 4, 6))
        m = factors @ np.swapaxes(factors, 1, 2)
        rhs = rng.normal(size=(16, 4, 2))
        solution = linalg.batch_spd_solve(m, rhs)
        for i in range(16):
            expected = sla.solve(m[i], rhs[i], assume_a="pos")
            np.testing.assert_allclose(solution[i], expected, rtol=1e-10, atol=1e-12)
        np.testing.assert_array_equal(m, factors @ np.swapaxes(factors, 1, 2))

    def test_reports_batch_index(self):
        m = np.stack([np.eye(3)] * 4)
        m[2] = np.diag([1.0, 0.0, 1.0])
        with self.assertRaises(RankDeficiencyError) as ctx:
            linalg.batch_spd_solve(m, np.ones((4, 3)))
        self.assertEqual(ctx.exception.batch_index, 2)
        self.assertEqual(ctx.exception.pivot, 1)

    def test_tiny_pivot_is_rank_deficient(self):
        m = np.diag([1.0, 1e-14])[None]
        with self.assertRaises(RankDeficiencyError):
            linalg.batch_spd_solve(m, np.ones((1, 2)))

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            linalg.batch_spd_solve(np.stack([np.eye(2)] * 3), np.ones((2, 2)))

    @settings(max_examples=30, deadline=None)
    @given(
        st.integers(min_value=1, max_value=6),
        st.integers(min_value=1, max_value=8),
        st.integers(min_value=0, max_value=2 ** 31),
    )
    def test_residual_is_small(self, n, batch, seed):
        rng = np.random.default_rng(seed)
        factors = rng.normal(size=(batch, n, n + 2))
        m = factors @ np.swapaxes(factors, 1, 2) + 0.1 * np.eye(n)
        rhs = rng.normal(size=(batch, n))
        solution = linalg.batch_spd_solve(m, rhs)
        residual = np.einsum("bij,bj->bi", m, solution) - rhs
        scale = np.linalg.norm(m, axis=(1, 2)) * np.linalg.norm(solution, axis=1) + 1.0
        self.assertTrue(np.all(np.linalg.norm(residual, axis=1) <= 1e-10 * scale))


class EquilibrateTest(unittest.TestCase):
    def test_unit_rows(self):
        scaled, factors = linalg.equilibrate_rows([[3.0, 4.0], [0.0, 2.0]])
        np.testing.assert_allclose(np.linalg.norm(scaled, axis=1), [1.0, 1.0])
        np.testing.assert_allclose(factors, [0.2, 0.5])

    def test_zero_row(self):
        with self.assertRaises(RankDeficiencyError) as ctx:
            linalg.equilibrate_rows(np.zeros((2, 2, 3)))
        self.assertEqual(ctx.exception.batch_index, 0)

    def test_check_full_row_rank(self):
        linalg.check_full_row_rank([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        with self.assertRaises(RankDeficiencyError):
            linalg.check_full_row_rank([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])


if __name__ == "__main__":
    unittest.main()
