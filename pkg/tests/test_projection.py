import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from hardproj import constraints, projection, reactor
from hardproj.exceptions import (
    ConfigError,
    ProjectionInfeasibleError,
    ShapeError,
    TapeError,
)


def kkt_solve(b, rhs, y_hat):
    """Nearest point of ``b @ y = rhs`` by a direct solve of the KKT system."""
    norms = np.linalg.norm(b, axis=1)
    b, rhs = b / norms[:, None], rhs / norms
    n_c, n = b.shape
    system = np.block([[np.eye(n), b.T], [b, np.zeros((n_c, n_c))]])
    return np.linalg.solve(system, np.concatenate([y_hat, rhs]))[:n]


def random_spec(seed=0, n_batch=3):
    """Separable spec with 2 frozen outputs that enter both ``B`` and ``F``."""
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(2, 5))
    F_base = rng.normal(size=(2, 3))
    G = rng.normal(size=(2, 3))
    H = 0.1 * rng.normal(size=(2, 3))
    V = rng.normal(size=(3, 2))

    def F_fn(yf):
        return (
            F_base[None]
            + np.sin(yf[:, 0])[:, None, None] * G[None]
            + (yf[:, 1] ** 2)[:, None, None] * H[None]
        )

    def F_jacobian(yf):
        J = np.zeros((yf.shape[0], 2, 3, 2))
        J[..., 0] = np.cos(yf[:, 0])[:, None, None] * G[None]
        J[..., 1] = (2.0 * yf[:, 1])[:, None, None] * H[None]
        return J

    spec = constraints.SeparableSpec(
        B=B,
        v_fn=lambda x: x @ V,
        F_fn=F_fn,
        freeze_idx=(0, 1),
        n_inputs=3,
        F_jacobian=F_jacobian,
    )
    return spec, rng.normal(size=(n_batch, 3)), rng.normal(size=(n_batch, 5))


def with_fixed_F(spec, F0):
    return constraints.SeparableSpec(
        B=spec.B,
        v_fn=spec.v_fn,
        F_fn=lambda yf: F0,
        freeze_idx=spec.freeze_idx,
        n_inputs=spec.n_inputs,
    )


def finite_difference(fn, y, h=1e-6):
    grad = np.zeros_like(y)
    for index in np.ndindex(*y.shape):
        step = np.zeros_like(y)
        step[index] = h
        grad[index] = (fn(y + step) - fn(y - step)) / (2.0 * h)
    return grad


def relative_error(a, b, floor=1e-4):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


class GlobalProjectionTest(unittest.TestCase):
    def setUp(self):
        self.spec = constraints.LinearSpec(A=[[0.0]], B=[[1.0, 1.0]], b=[1.0])
        self.p = projection.build_global(self.spec)

    def test_sum_constraint(self):
        np.testing.assert_allclose(
            self.p.B_star, np.eye(2) - 0.5 * np.ones((2, 2)), rtol=0, atol=1e-15
        )
        np.testing.assert_array_equal(self.p.A_star, np.zeros((2, 1)))
        np.testing.assert_allclose(
            projection.apply_global(self.p, [0.0], [0.0, 0.0]), [0.5, 0.5], atol=1e-15
        )

    def test_feasible_unchanged(self):
        y = projection.apply_global(self.p, [0.0], [0.25, 0.75])
        np.testing.assert_allclose(y, [0.25, 0.75], rtol=0, atol=1e-12)

    def test_against_kkt_system(self):
        rng = np.random.default_rng(3)
        spec = constraints.LinearSpec(
            A=rng.normal(size=(3, 4)), B=rng.normal(size=(3, 7)), b=rng.normal(size=3)
        )
        p = projection.build_global(spec)
        system = np.block([[np.eye(7), spec.B.T], [spec.B, np.zeros((3, 3))]])
        inverse = np.linalg.inv(system)
        self.assertLess(np.max(np.abs(p.B_star - inverse[:7, :7])), 1e-10)
        self.assertLess(np.max(np.abs(p.A_star + inverse[:7, 7:] @ spec.A)), 1e-10)
        self.assertLess(np.max(np.abs(p.b_star - inverse[:7, 7:] @ spec.b)), 1e-10)

        x, y_hat = rng.normal(size=(10, 4)), rng.normal(size=(10, 7))
        y = projection.apply_global(p, x, y_hat)
        for i in range(10):
            expected = kkt_solve(spec.B, spec.b - spec.A @ x[i], y_hat[i])
            self.assertLess(np.max(np.abs(y[i] - expected)), 1e-9)
        residual = constraints.residual_linear(spec, x, y).residual
        self.assertLess(np.max(np.abs(residual)), 1e-9)

    def test_projector_properties(self):
        rng = np.random.default_rng(4)
        spec = constraints.LinearSpec(
            A=np.zeros((2, 1)), B=rng.normal(size=(2, 6)), b=np.zeros(2)
        )
        B_star = projection.build_global(spec).B_star
        np.testing.assert_array_equal(B_star, B_star.T)
        self.assertLess(np.max(np.abs(B_star @ B_star - B_star)), 1e-9)
        for d in rng.normal(size=(50, 6)):
            self.assertLessEqual(np.linalg.norm(B_star @ d), np.linalg.norm(d) * (1 + 1e-12))

    def test_backward(self):
        g = np.array([[1.0, 0.0]])
        np.testing.assert_allclose(
            projection.global_backward(self.p, g), [[0.5, -0.5]], atol=1e-15
        )

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            projection.apply_global(self.p, [0.0, 1.0], [0.0, 0.0])


class LocalProjectionTest(unittest.TestCase):
    def test_against_kkt_system(self):
        rng = np.random.default_rng(6)
        b = rng.normal(size=(8, 3, 6))
        rhs = rng.normal(size=(8, 3))
        y_hat = rng.normal(size=(8, 6))
        y, tensors = projection.project_local(b, rhs, y_hat)
        for i in range(8):
            self.assertLess(np.max(np.abs(y[i] - kkt_solve(b[i], rhs[i], y_hat[i]))), 1e-9)
        affine = np.einsum("buw,bw->bu", tensors.B_star, y_hat) + tensors.V_star
        np.testing.assert_allclose(affine, y, rtol=0, atol=1e-12)
        for B_star in tensors.B_star:
            self.assertLess(np.max(np.abs(B_star - B_star.T)), 1e-9)
            self.assertLess(np.max(np.abs(B_star @ B_star - B_star)), 1e-9)

    def test_infeasible_instance(self):
        b = np.stack([np.eye(2, 3)] * 3)
        b[1, 1] = b[1, 0]
        with self.assertRaises(ProjectionInfeasibleError) as ctx:
            projection.project_local(b, np.zeros((3, 2)), np.zeros((3, 3)))
        self.assertEqual(ctx.exception.batch_index, 1)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            projection.project_local(np.ones((2, 1, 3)), np.ones((2, 2)), np.ones((2, 3)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=2, max_value=64), st.integers(min_value=0, max_value=2 ** 31))
    def test_batch_matches_single_instances_bitwise(self, n_batch, seed):
        rng = np.random.default_rng(seed)
        b = rng.normal(size=(n_batch, 3, 7))
        rhs = rng.normal(scale=1e3, size=(n_batch, 3))
        y_hat = rng.normal(scale=1e3, size=(n_batch, 7))
        y, tensors = projection.project_local(b, rhs, y_hat)
        for i in range(n_batch):
            single, one = projection.project_local(
                b[i : i + 1], rhs[i : i + 1], y_hat[i : i + 1]
            )
            np.testing.assert_array_equal(single[0], y[i])
            np.testing.assert_array_equal(one.B_star[0], tensors.B_star[i])
            np.testing.assert_array_equal(one.V_star[0], tensors.V_star[i])


class PicardProjectTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.th = reactor.Thermo.default()
        cls.spec = reactor.build_reactor_spec(cls.th)
        train, _ = reactor.generate_dataset(cls.th, n_train=32, n_test=1, seed=11)
        cls.x, cls.y = train.inputs, train.outputs
        rng = np.random.default_rng(11)
        noise = rng.normal(size=cls.y.shape)
        noise[:, [0, 9]] *= 5.0
        noise[:, 2:9] *= 0.05 * cls.y[:, 2:9]
        cls.y_hat = cls.y + noise

    def relative_residual(self, x, y):
        residual = constraints.residual_separable(self.spec, x, y).residual
        return np.abs(residual) / constraints.evaluate_reference(self.spec, x)

    def test_single_constraint_direct_solve(self):
        def v_fn(x):
            return np.full((x.shape[0], 1), 10.0)

        def F_fn(yf):
            return np.full((yf.shape[0], 1, 1), 2.0)

        spec = constraints.SeparableSpec(
            B=np.zeros((1, 2)), v_fn=v_fn, F_fn=F_fn, freeze_idx=(0,), n_inputs=1
        )
        y, _ = projection.picard_project(spec, [[0.0]], [[4.0, 3.0]])
        self.assertEqual(y[0, 0], 4.0)
        self.assertAlmostEqual(y[0, 1], 5.0, places=14)

    def test_frozen_outputs_copied_bitwise(self):
        y, _ = projection.picard_project(self.spec, self.x, self.y_hat)
        frozen = list(self.spec.freeze_idx)
        self.assertTrue(np.array_equal(y[:, frozen], self.y_hat[:, frozen]))

    def test_feasible_after_projection(self):
        y, _ = projection.picard_project(self.spec, self.x, self.y_hat)
        self.assertLess(np.max(self.relative_residual(self.x, y)), 1e-10)

    def test_matches_qp_oracle(self):
        y, _ = projection.picard_project(self.spec, self.x, self.y_hat)
        b_reduced, rhs = constraints.linearize(self.spec, self.x, self.y_hat)
        unfrozen = self.spec.unfrozen_index
        for i in range(len(self.x)):
            expected = kkt_solve(b_reduced[i], rhs[i], self.y_hat[i, unfrozen])
            self.assertLess(np.max(np.abs(y[i, unfrozen] - expected)), 1e-9)

    def test_optimal_among_feasible_points(self):
        y, _ = projection.picard_project(self.spec, self.x, self.y_hat)
        b_reduced, rhs = constraints.linearize(self.spec, self.x, self.y_hat)
        unfrozen = self.spec.unfrozen_index
        rng = np.random.default_rng(1)
        for i in range(20):
            null = np.linalg.svd(b_reduced[i])[2][5:]
            distance = np.linalg.norm(y[i, unfrozen] - self.y_hat[i, unfrozen])
            for _ in range(5):
                z = y[i, unfrozen] + rng.normal(scale=3.0, size=2) @ null
                other = np.linalg.norm(z - self.y_hat[i, unfrozen])
                self.assertLessEqual(distance, other + 1e-8)

    def test_idempotent(self):
        once, _ = projection.picard_project(self.spec, self.x, self.y_hat)
        twice, _ = projection.picard_project(self.spec, self.x, once)
        self.assertTrue(
            np.all(np.abs(twice - once) <= 1e-12 * np.maximum(1.0, np.abs(once)))
        )

    def test_feasible_fixed_point(self):
        y, _ = projection.picard_project(self.spec, self.x, self.y)
        self.assertTrue(
            np.all(np.abs(y - self.y) <= 1e-10 * np.maximum(1.0, np.abs(self.y)))
        )

    def test_batch_equals_sequential(self):
        batched, _ = projection.picard_project(self.spec, self.x, self.y_hat)
        for i in range(len(self.x)):
            single, _ = projection.picard_project(self.spec, self.x[i], self.y_hat[i])
            np.testing.assert_array_equal(single, batched[i])

    def test_linear_special_case(self):
        linear = reactor.build_atomic_spec(self.th)
        y, _ = projection.picard_project(
            constraints.as_separable(linear), self.x, self.y_hat
        )
        expected = projection.apply_global(
            projection.build_global(linear), self.x, self.y_hat
        )
        np.testing.assert_allclose(y, expected, rtol=1e-12, atol=1e-10)

    def test_infeasible_instance(self):
        def F_fn(yf):
            F = np.ones((yf.shape[0], 2, 2))
            F[:, 1, 0] = yf[:, 0]
            return F

        spec = constraints.SeparableSpec(
            B=np.zeros((2, 3)),
            v_fn=lambda x: np.zeros((x.shape[0], 2)),
            F_fn=F_fn,
            freeze_idx=(0,),
            n_inputs=1,
        )
        y_hat = np.array([[2.0, 0.0, 0.0], [3.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        with self.assertRaises(ProjectionInfeasibleError) as ctx:
            projection.picard_project(spec, np.zeros((3, 1)), y_hat)
        self.assertEqual(ctx.exception.batch_index, 2)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 31), st.floats(0.1, 50.0))
    def test_random_predictions_become_feasible(self, seed, scale):
        rng = np.random.default_rng(seed)
        y_hat = self.y + scale * rng.normal(size=self.y.shape)
        y_hat[:, [0, 9]] = np.clip(y_hat[:, [0, 9]], 400.0, 850.0)
        y, _ = projection.picard_project(self.spec, self.x, y_hat)
        self.assertLess(np.max(self.relative_residual(self.x, y)), 1e-10)


class PicardBackwardTest(unittest.TestCase):
    def test_frozen_mode_matches_fixed_matrix_differences(self):
        spec, x, y_hat = random_spec(seed=1)
        weights = np.random.default_rng(2).normal(size=y_hat.shape)
        F0 = constraints.evaluate_F(spec, y_hat[:, spec.frozen_index])
        fixed = with_fixed_F(spec, F0)

        def loss(y):
            return float(np.sum(weights * projection.picard_project(fixed, x, y)[0]))

        _, tensors = projection.picard_project(spec, x, y_hat)
        grad = projection.picard_backward(tensors, spec, weights, mode="frozen")
        self.assertLess(relative_error(grad, finite_difference(loss, y_hat)), 1e-6)

    def test_exact_mode_matches_differences(self):
        spec, x, y_hat = random_spec(seed=3)
        weights = np.random.default_rng(4).normal(size=y_hat.shape)

        def loss(y):
            return float(np.sum(weights * projection.picard_project(spec, x, y)[0]))

        _, tensors = projection.picard_project(spec, x, y_hat)
        grad = projection.picard_backward(tensors, spec, weights, mode="exact")
        self.assertLess(relative_error(grad, finite_difference(loss, y_hat)), 1e-6)

    def test_exact_mode_on_reactor(self):
        th = reactor.Thermo.default()
        spec = reactor.build_reactor_spec(th)
        train, _ = reactor.generate_dataset(th, n_train=2, n_test=1, seed=2)
        x, y_hat = train.inputs, train.outputs + 0.5
        weights = np.random.default_rng(5).normal(size=y_hat.shape)

        def loss(y):
            return float(np.sum(weights * projection.picard_project(spec, x, y)[0]))

        _, tensors = projection.picard_project(spec, x, y_hat)
        grad = projection.picard_backward(tensors, spec, weights, mode="exact")
        numeric = finite_difference(loss, y_hat, h=1e-4)
        self.assertLess(relative_error(grad, numeric, floor=1e-2), 1e-5)

    def test_modes_agree_without_frozen_dependence(self):
        linear = constraints.LinearSpec(
            A=np.ones((1, 2)), B=[[1.0, 2.0, 3.0]], b=[1.0]
        )
        spec = constraints.as_separable(linear)
        x, y_hat = np.ones((4, 2)), np.arange(12.0).reshape(4, 3)
        g = np.ones((4, 3))
        grads = []
        for mode in projection.GRADIENT_MODES:
            _, tensors = projection.picard_project(spec, x, y_hat)
            grads.append(projection.picard_backward(tensors, spec, g, mode=mode))
        np.testing.assert_allclose(grads[0], grads[1], rtol=0, atol=1e-15)
        expected = projection.global_backward(projection.build_global(linear), g)
        np.testing.assert_allclose(grads[0], expected, rtol=0, atol=1e-12)

    def test_tensors_consumed(self):
        spec, x, y_hat = random_spec()
        _, tensors = projection.picard_project(spec, x, y_hat)
        projection.picard_backward(tensors, spec, np.ones_like(y_hat))
        with self.assertRaises(TapeError):
            projection.picard_backward(tensors, spec, np.ones_like(y_hat))

    def test_invalid_mode(self):
        spec, x, y_hat = random_spec()
        _, tensors = projection.picard_project(spec, x, y_hat)
        with self.assertRaises(ConfigError):
            projection.picard_backward(tensors, spec, np.ones_like(y_hat), mode="other")
        with self.assertRaises(ConfigError):
            projection.picard_backward(
                tensors, with_fixed_F(spec, None), np.ones_like(y_hat), mode="exact"
            )


if __name__ == "__main__":
    unittest.main()
