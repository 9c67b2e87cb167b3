import os
import tempfile
import unittest

import numpy as np
from scipy import integrate

from hardproj import reactor, thermo_data
from hardproj.constraints import evaluate_reference, residual_separable
from hardproj.dataset import load_dataset
from hardproj.exceptions import ConfigError, ConstraintEvaluationError


def sample_input(**values):
    x = {
        "T_in": 510.0,
        "P_in": 65.0,
        "n_CO_in": 10.0,
        "n_CO2_in": 4.5,
        "n_H2_in": 62.0,
        "n_H2O_in": 0.2,
        "n_CH3OH_in": 0.5,
        "n_CH4_in": 4.5,
        "n_N2_in": 10.0,
        "n_c": 2.0,
    }
    x.update(values)
    return np.array([x[name] for name in reactor.INPUT_COLUMNS])


class ThermoTest(unittest.TestCase):
    def setUp(self):
        self.th = reactor.Thermo.default()

    def test_reference_temperature(self):
        for k, species in enumerate(self.th.species):
            self.assertEqual(
                reactor.enthalpy(self.th, species, 298.15),
                self.th.formation_enthalpy[k],
            )

    def test_constant_heat_capacity(self):
        th = reactor.Thermo(
            species=("A",),
            atoms=("C",),
            composition=[[1]],
            formation_enthalpy=[-1000.0],
            cp_coefficients=[[30.0, 0.0, 0.0, 0.0]],
            reference_temperature=298.15,
            coolant_temperature=523.15,
            latent_heat=30000.0,
        )
        self.assertAlmostEqual(
            reactor.enthalpy(th, "A", 500.0), -1000.0 + 30.0 * (500.0 - 298.15), places=9
        )

    def test_against_simpson_quadrature(self):
        grid = np.linspace(298.15, 650.0, 10001)
        for k, species in enumerate(self.th.species):
            cp = self.th.heat_capacity(grid)[:, k]
            sensible = integrate.simpson(cp, x=grid)
            expected = self.th.formation_enthalpy[k] + sensible
            value = reactor.enthalpy(self.th, species, 650.0)
            self.assertLess(abs(value - expected) / abs(expected), 1e-9, species)

    def test_array_temperatures(self):
        values = reactor.enthalpy(self.th, "N2", np.array([400.0, 500.0]))
        self.assertEqual(values.shape, (2,))
        self.assertLess(values[0], values[1])

    def test_out_of_range(self):
        with self.assertRaises(ConfigError):
            reactor.enthalpy(self.th, "CO", 1000.0)
        with self.assertRaises(ConfigError):
            reactor.enthalpy(self.th, "Ar", 500.0)

    def test_invalid_data(self):
        data = thermo_data.get_species_data()
        composition = [data[s]["composition"] for s in thermo_data.SPECIES]
        composition[0] = [1, 0, 0.5, 0]
        with self.assertRaises(ConfigError):
            reactor.Thermo(
                species=thermo_data.SPECIES,
                atoms=thermo_data.ATOMS,
                composition=composition,
                formation_enthalpy=[data[s]["formation_enthalpy"] for s in thermo_data.SPECIES],
                cp_coefficients=[data[s]["cp"] for s in thermo_data.SPECIES],
                reference_temperature=298.15,
                coolant_temperature=523.15,
                latent_heat=30000.0,
            )

    def test_species_data_copy(self):
        data = thermo_data.get_species_data("CO")
        data["formation_enthalpy"] = 0.0
        self.assertNotEqual(thermo_data.SPECIES_DATA["CO"]["formation_enthalpy"], 0.0)
        with self.assertRaises(ConfigError):
            thermo_data.get_species_data("Ar")

    def test_latent_heat(self):
        coolant = thermo_data.COOLANT
        self.assertAlmostEqual(
            reactor.watson_latent_heat(coolant["anchor_temperature"]),
            coolant["anchor_latent_heat"],
        )
        self.assertLess(self.th.latent_heat, coolant["anchor_latent_heat"])
        with self.assertRaises(ConfigError):
            reactor.watson_latent_heat(700.0)


class SimulateTest(unittest.TestCase):
    def setUp(self):
        self.th = reactor.Thermo.default()
        self.spec = reactor.build_reactor_spec(self.th)

    def test_balances_hold(self):
        x = sample_input()
        y = reactor.simulate(self.th, x)
        self.assertEqual(y.shape, (10,))
        relative = np.abs(residual_separable(self.spec, x, y).residual) / evaluate_reference(
            self.spec, x
        )[0]
        self.assertLess(np.max(relative), 1e-9)
        self.assertGreater(y[-1], y[0])
        self.assertLess(y[1], x[1])

    def test_heavy_cooling_lowers_temperature(self):
        cooled = reactor.simulate(self.th, sample_input(n_c=8.0))
        self.assertLess(cooled[0], 510.0)
        warm = reactor.simulate(self.th, sample_input(n_c=0.5))
        self.assertGreater(warm[0], cooled[0])

    def test_monotone_in_coolant(self):
        x = np.array([sample_input(n_c=value) for value in (0.5, 1.5, 2.5, 3.5)])
        T_out = reactor.simulate(self.th, x)[:, 0]
        self.assertTrue(np.all(np.diff(T_out) < 0.0))

    def test_no_reaction_adiabatic(self):
        x = sample_input()
        flows = x[2:9]
        inlet = float(flows @ self.th.enthalpies(x[0]))
        reference = float(np.abs(flows * self.th.enthalpies(x[0])).sum())
        T_out = reactor._outlet_temperature(self.th, flows, inlet, reference, 0)
        self.assertAlmostEqual(T_out, x[0], places=8)

    def test_deterministic(self):
        x = np.array([sample_input(T_in=t) for t in (495.0, 515.0)])
        np.testing.assert_array_equal(reactor.simulate(self.th, x), reactor.simulate(self.th, x))

    def test_invalid_inputs(self):
        with self.assertRaises(ConfigError):
            reactor.simulate(self.th, np.ones(9))
        with self.assertRaises(ConfigError):
            reactor.simulate(self.th, sample_input(n_H2_in=-1.0))
        with self.assertRaises(ConfigError):
            reactor.simulate(self.th, sample_input(T_in=1200.0))
        with self.assertRaises(ConfigError):
            reactor.simulate(self.th, sample_input(n_CO_in=0.0, n_CO2_in=0.0))

    def test_check_samples_rejects_infeasible(self):
        x = sample_input()
        y = reactor.simulate(self.th, x)
        y[4] += 1.0
        with self.assertRaises(ConstraintEvaluationError) as ctx:
            reactor.check_samples(self.th, x, y)
        self.assertIn("hydrogen", ctx.exception.labels)
        self.assertNotIn("carbon", ctx.exception.labels)


class ReactorSpecTest(unittest.TestCase):
    def test_structure(self):
        spec = reactor.build_reactor_spec()
        self.assertEqual(spec.n_constraints, 5)
        self.assertEqual(spec.labels, reactor.CONSTRAINT_LABELS)
        self.assertEqual(spec.freeze_idx, (0, 1, 9))
        self.assertEqual(spec.unfrozen_idx, tuple(range(2, 9)))
        self.assertTrue(spec.differentiable)

    def test_atomic_spec(self):
        spec = reactor.build_atomic_spec()
        self.assertEqual(spec.n_constraints, 4)
        np.testing.assert_array_equal(spec.A[:, 2:9], -spec.B[:, 2:9])
        np.testing.assert_array_equal(spec.b, np.zeros(4))

    def test_jacobian_against_differences(self):
        spec = reactor.build_reactor_spec()
        y_frozen = np.array([[520.0, 60.0, 540.0]])
        step = np.array([[1e-3, 0.0, 0.0]])
        numeric = (spec.F_fn(y_frozen + step) - spec.F_fn(y_frozen - step)) / 2e-3
        np.testing.assert_allclose(
            spec.F_jacobian(y_frozen)[..., 0], numeric, rtol=1e-8, atol=1e-8
        )


class GenerateDatasetTest(unittest.TestCase):
    def setUp(self):
        self.th = reactor.Thermo.default()

    def test_every_row_feasible(self):
        train, test = reactor.generate_dataset(self.th, n_train=200, n_test=50, seed=3)
        spec = reactor.build_reactor_spec(self.th)
        for dataset in (train, test):
            x, y = dataset.inputs, dataset.outputs
            relative = np.abs(residual_separable(spec, x, y).residual) / evaluate_reference(
                spec, x
            )
            self.assertLess(np.max(relative), 1e-9)
            self.assertTrue(np.all(y[:, 2:9] >= 0.0))
            lo, hi = thermo_data.OPERATING_RANGE
            self.assertTrue(np.all((y[:, [0, 9]] >= lo) & (y[:, [0, 9]] <= hi)))
        for k, name in enumerate(reactor.INPUT_COLUMNS):
            lo, hi = reactor.DEFAULT_BOUNDS[name]
            self.assertTrue(np.all((train.inputs[:, k] >= lo) & (train.inputs[:, k] <= hi)))

    def test_statistics_from_training_split(self):
        train, test = reactor.generate_dataset(self.th, n_train=100, n_test=30, seed=1)
        np.testing.assert_allclose(train.stats.mean, train.data.mean(axis=0))
        self.assertIs(test.stats, train.stats)
        self.assertEqual(train.split, "train")
        self.assertEqual(test.split, "test")
        self.assertEqual(train.generator_version, reactor.GENERATOR_VERSION)

    def test_files_byte_identical(self):
        contents = []
        with tempfile.TemporaryDirectory() as tmp:
            for run in ("a", "b"):
                directory = os.path.join(tmp, run)
                reactor.generate_dataset(
                    self.th, n_train=40, n_test=10, seed=7, directory=directory
                )
                files = {}
                for name in ("train.csv", "test.csv", "stats.csv"):
                    with open(os.path.join(directory, name), "rb") as buf:
                        files[name] = buf.read()
                contents.append(files)
            self.assertEqual(contents[0], contents[1])
            train, test = load_dataset(os.path.join(tmp, "a"))
        self.assertEqual(train.n_samples, 40)
        self.assertEqual(test.n_samples, 10)
        self.assertEqual(train.seed, 7)

    def test_different_seeds_differ(self):
        a, _ = reactor.generate_dataset(self.th, n_train=5, n_test=1, seed=1)
        b, _ = reactor.generate_dataset(self.th, n_train=5, n_test=1, seed=2)
        self.assertFalse(np.array_equal(a.data, b.data))

    def test_invalid_arguments(self):
        with self.assertRaises(ConfigError):
            reactor.generate_dataset(self.th, n_train=0, n_test=1)
        bounds = dict(reactor.DEFAULT_BOUNDS)
        bounds["T_in"] = (530.0, 490.0)
        with self.assertRaises(ConfigError):
            reactor.generate_dataset(self.th, n_train=2, n_test=1, bounds=bounds)
        bounds = dict(reactor.DEFAULT_BOUNDS)
        del bounds["n_c"]
        with self.assertRaises(ConfigError):
            reactor.generate_dataset(self.th, n_train=2, n_test=1, bounds=bounds)
        bounds = dict(reactor.DEFAULT_BOUNDS)
        bounds["P_in"] = (-5.0, 10.0)
        with self.assertRaises(ConfigError):
            reactor.generate_dataset(self.th, n_train=2, n_test=1, bounds=bounds)


if __name__ == "__main__":
    unittest.main()
