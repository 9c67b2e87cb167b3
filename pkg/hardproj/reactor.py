"""
Synthetic methanol synthesis reactor.

The oracle maps 10 inlet conditions to 10 outlet quantities and is built so
that every sample satisfies the four atomic balances (through reaction
extents) and the enthalpy balance (through the outlet temperature solve)
to rounding error. Two reactions run:

* CO + 2 H2 -> CH3OH
* CO2 + 3 H2 -> CH3OH + H2O

Heat leaves through boiling coolant, ``Q = n_c * dH_ev(T_c)``.

The module also builds the constraint systems of the reactor, registered as
``reactor`` (atomic and enthalpy balances, separable) and ``reactor-atomic``
(atomic balances only, linear).
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import optimize, special

from . import thermo_data
from .constraints import (
    LinearSpec,
    SeparableSpec,
    register_constraints,
    residual_separable,
)
from .dataset import Dataset, NormalizationStats, save_dataset
from .exceptions import ConfigError, ConstraintEvaluationError, ConvergenceError
from .utils import make_rng

__all__ = [
    "GENERATOR_NAME",
    "GENERATOR_VERSION",
    "INPUT_COLUMNS",
    "OUTPUT_COLUMNS",
    "DEFAULT_BOUNDS",
    "FROZEN_OUTPUTS",
    "CONSTRAINT_LABELS",
    "Thermo",
    "watson_latent_heat",
    "enthalpy",
    "simulate",
    "check_samples",
    "build_reactor_spec",
    "build_atomic_spec",
    "generate_dataset",
]

logger = logging.getLogger(__name__)

GENERATOR_NAME = "hardproj-reactor"
GENERATOR_VERSION = "1-thermo{}".format(thermo_data.THERMO_DATA_VERSION)

INPUT_COLUMNS = (
    ("T_in", "P_in")
    + tuple("n_{}_in".format(s) for s in thermo_data.SPECIES)
    + ("n_c",)
)
OUTPUT_COLUMNS = (
    ("T_out", "P_out")
    + tuple("n_{}_out".format(s) for s in thermo_data.SPECIES)
    + ("T_hotspot",)
)
FROZEN_OUTPUTS = ("T_out", "P_out", "T_hotspot")
CONSTRAINT_LABELS = ("carbon", "hydrogen", "oxygen", "nitrogen", "enthalpy")

# Sampling box of the inlet conditions: K, bar and mol/s.
DEFAULT_BOUNDS = {
    "T_in": (490.0, 530.0),
    "P_in": (50.0, 80.0),
    "n_CO_in": (8.0, 12.0),
    "n_CO2_in": (3.0, 6.0),
    "n_H2_in": (55.0, 70.0),
    "n_H2O_in": (0.05, 0.5),
    "n_CH3OH_in": (0.2, 1.0),
    "n_CH4_in": (3.0, 6.0),
    "n_N2_in": (8.0, 12.0),
    "n_c": (0.5, 3.5),
}

_FLOWS = slice(2, 2 + len(thermo_data.SPECIES))

# Stoichiometric coefficients, one row per reaction.
_STOICHIOMETRY = np.array(
    [
        [-1.0, 0.0, -2.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, -1.0, -3.0, 1.0, 1.0, 0.0, 0.0],
    ]
)

# Extents never consume more than this share of a reactant.
_MAX_CONVERSION = 0.98

_ATOMIC_TOLERANCE = 1e-10
_ENTHALPY_TOLERANCE = 1e-9


def watson_latent_heat(temperature, coolant=None):
    """
    Latent heat of vaporization [J/mol] at ``temperature`` by the Watson
    correlation anchored at the normal boiling point.
    """
    coolant = coolant or thermo_data.COOLANT
    tc = coolant["critical_temperature"]
    if not temperature < tc:
        raise ConfigError(
            "Coolant temperature {} K is above the critical point".format(temperature)
        )
    ratio = (tc - temperature) / (tc - coolant["anchor_temperature"])
    return coolant["anchor_latent_heat"] * ratio ** coolant["watson_exponent"]


@dataclass(frozen=True, eq=False)
class Thermo:
    """
    Ideal gas thermodynamics of the reacting mixture.

    :param species: Species names.
    :param composition: Atom counts (n_species, n_atoms).
    :param formation_enthalpy: Formation enthalpy at ``reference_temperature``.
    :param cp_coefficients: Cubic heat capacity coefficients (n_species, 4).
    :param coolant_temperature: Boiling temperature of the coolant [K].
    :param latent_heat: Coolant latent heat at its temperature [J/mol].
    """

    species: Tuple[str, ...]
    atoms: Tuple[str, ...]
    composition: np.ndarray
    formation_enthalpy: np.ndarray
    cp_coefficients: np.ndarray
    reference_temperature: float
    coolant_temperature: float
    latent_heat: float

    def __post_init__(self):
        composition = np.array(self.composition, dtype=np.float64)
        if np.any(composition < 0) or np.any(composition != np.round(composition)):
            raise ConfigError("Atomic composition must be non-negative integers")
        cp = np.array(self.cp_coefficients, dtype=np.float64)
        lo, hi = thermo_data.OPERATING_RANGE
        grid = np.linspace(lo, hi, 351)
        if np.any(_cp_poly(cp, grid) <= 0.0):
            raise ConfigError("Heat capacity fit is not positive over the operating range")
        for name, value in (
            ("composition", composition),
            ("cp_coefficients", cp),
            ("formation_enthalpy", np.array(self.formation_enthalpy, dtype=np.float64)),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def default(cls):
        """Thermodynamics from :mod:`hardproj.thermo_data`."""
        data = thermo_data.SPECIES_DATA
        species = thermo_data.SPECIES
        coolant = thermo_data.COOLANT
        return cls(
            species=species,
            atoms=thermo_data.ATOMS,
            composition=[data[s]["composition"] for s in species],
            formation_enthalpy=[data[s]["formation_enthalpy"] for s in species],
            cp_coefficients=[data[s]["cp"] for s in species],
            reference_temperature=thermo_data.REFERENCE_TEMPERATURE,
            coolant_temperature=coolant["temperature"],
            latent_heat=watson_latent_heat(coolant["temperature"], coolant),
        )

    @property
    def n_species(self):
        return len(self.species)

    def heat_capacity(self, T):
        """Heat capacities, shape ``T.shape + (n_species,)``."""
        return _cp_poly(self.cp_coefficients, T)

    def enthalpies(self, T):
        """
        Molar enthalpies of all species, shape ``T.shape + (n_species,)``.

        No range check; used inside constraint callbacks where predictions
        may leave the fitted range during training.
        """
        T = np.asarray(T, dtype=np.float64)[..., None]
        T0 = self.reference_temperature
        a, b, c, d = self.cp_coefficients.T
        sensible = (
            a * (T - T0)
            + b / 2.0 * (T ** 2 - T0 ** 2)
            + c / 3.0 * (T ** 3 - T0 ** 3)
            + d / 4.0 * (T ** 4 - T0 ** 4)
        )
        return self.formation_enthalpy + sensible


def _cp_poly(coefficients, T):
    T = np.asarray(T, dtype=np.float64)[..., None]
    a, b, c, d = coefficients.T
    return a + T * (b + T * (c + T * d))


def _species_index(th, species):
    if isinstance(species, str):
        try:
            return th.species.index(species)
        except ValueError:
            raise ConfigError("Unknown species {}".format(species)) from None
    index = int(species)
    if not 0 <= index < th.n_species:
        raise ConfigError("Species index {} out of range".format(index))
    return index


def enthalpy(th, species, T):
    """
    Molar enthalpy of one species,
    ``h(T) = h_f(298.15) + integral of cp from 298.15 K to T``.

    :param th: Thermodynamic data.
    :type th: :class:`Thermo`
    :param species: Species name or index.
    :param T: Temperature [K], scalar or array.
    :return: Enthalpy [J/mol] with the shape of ``T``.
    :raises ConfigError: if a temperature is outside 350 K to 900 K.

    Example:

    .. code-block:: python

        from hardproj import Thermo, enthalpy

        th = Thermo.default()
        enthalpy(th, "CO", 298.15)  # -110530.0

    """
    index = _species_index(th, species)
    T = np.asarray(T, dtype=np.float64)
    lo, hi = thermo_data.ENTHALPY_RANGE
    valid = ((T >= lo) & (T <= hi)) | (T == th.reference_temperature)
    if not np.all(valid):
        raise ConfigError(
            "Temperature outside the enthalpy range [{}, {}] K".format(lo, hi)
        )
    value = th.enthalpies(T)[..., index]
    return float(value) if value.ndim == 0 else value


def _extents(x):
    T_in, P_in = x[:, 0], x[:, 1]
    flows = x[:, _FLOWS]
    n_c = x[:, -1]
    theta = (T_in - 500.0) / 20.0
    pressure = P_in / 65.0
    h2_fraction = flows[:, 2] / flows.sum(axis=1)
    rate1 = (
        0.18
        * pressure ** 1.5
        * special.expit(1.2 * theta + 0.4)
        * (0.6 + 0.8 * h2_fraction)
        * (1.0 - 0.08 * np.tanh(n_c - 2.0))
    )
    rate2 = 0.12 * pressure * special.expit(theta) * (0.5 + h2_fraction)
    xi1 = rate1 * flows[:, 0]
    xi2 = rate2 * flows[:, 1]

    limit1 = _MAX_CONVERSION * flows[:, 0]
    limit2 = _MAX_CONVERSION * flows[:, 1]
    clipped = (xi1 > limit1) | (xi2 > limit2)
    xi1 = np.minimum(xi1, limit1)
    xi2 = np.minimum(xi2, limit2)
    hydrogen = 2.0 * xi1 + 3.0 * xi2
    limit_h2 = _MAX_CONVERSION * flows[:, 2]
    short = hydrogen > limit_h2
    if short.any():
        factor = np.where(short, limit_h2 / np.where(short, hydrogen, 1.0), 1.0)
        xi1 = xi1 * factor
        xi2 = xi2 * factor
        clipped |= short
    return np.column_stack([xi1, xi2]), clipped


def _outlet_temperature(th, flows_out, target, reference, index):
    def balance(T):
        return float(flows_out @ th.enthalpies(T)) - target

    bracket = thermo_data.ENTHALPY_RANGE
    try:
        T, result = optimize.brentq(
            balance, bracket[0], bracket[1], xtol=1e-12, maxiter=200, full_output=True
        )
    except ValueError:
        raise ConvergenceError(
            "Outlet temperature of sample {} is not bracketed".format(index), bracket
        ) from None
    if not result.converged:
        raise ConvergenceError(
            "Outlet temperature of sample {} did not converge".format(index), bracket
        )
    # Newton polish on the bracketed root.
    residual = balance(T)
    for _ in range(3):
        if residual == 0.0:
            break
        slope = float(flows_out @ th.heat_capacity(T))
        candidate = T - residual / slope
        candidate_residual = balance(candidate)
        if abs(candidate_residual) >= abs(residual):
            break
        T, residual = candidate, candidate_residual
    if not abs(residual) < 1e-10 * reference:
        raise ConvergenceError(
            "Enthalpy residual {:.3e} of sample {} above tolerance".format(
                residual, index
            ),
            bracket,
        )
    return T


def _simulate(th, x):
    extents, clipped = _extents(x)
    flows_in = x[:, _FLOWS]
    flows_out = flows_in + extents @ _STOICHIOMETRY
    heat = x[:, -1] * th.latent_heat
    h_in = th.enthalpies(x[:, 0])
    enthalpy_in = np.sum(flows_in * h_in, axis=1)
    reference = np.sum(np.abs(flows_in * h_in), axis=1)

    T_out = np.empty(x.shape[0])
    for k in range(x.shape[0]):
        if clipped[k]:
            logger.debug("Reaction extents of sample %d clipped", k)
        T_out[k] = _outlet_temperature(
            th, flows_out[k], enthalpy_in[k] - heat[k], reference[k], k
        )

    total_in = flows_in.sum(axis=1)
    pressure_drop = 0.8 + 1.5 * (total_in / 90.0) ** 2 * (500.0 / x[:, 0])
    carbon_in = flows_in[:, 0] + flows_in[:, 1]
    T_hot = T_out + 5.0 + 60.0 * extents.sum(axis=1) / carbon_in
    y = np.column_stack([T_out, x[:, 1] - pressure_drop, flows_out, T_hot])
    return y, int(clipped.sum())


def _check_inputs(x):
    if not np.all(np.isfinite(x)):
        raise ConfigError("Reactor inputs contain NaN or Inf")
    lo, hi = thermo_data.ENTHALPY_RANGE
    if np.any(x[:, 0] < lo) or np.any(x[:, 0] > hi):
        raise ConfigError("Inlet temperature outside [{}, {}] K".format(lo, hi))
    if np.any(x[:, 1] <= 0.0) or np.any(x[:, 2:] < 0.0):
        raise ConfigError("Pressure must be positive and flows non-negative")
    if np.any(x[:, 2] + x[:, 3] <= 0.0):
        raise ConfigError("Inlet carries no carbon oxides")


def simulate(th, x):
    """
    Run the reactor oracle.

    :param th: Thermodynamic data.
    :type th: :class:`Thermo`
    :param x: Inputs ``(T_in, P_in, 7 inlet flows, n_c)``, one sample or a
        batch (n_samples, 10).
    :return: Outputs ``(T_out, P_out, 7 outlet flows, T_hotspot)`` with the
        shape of ``x``.
    :raises ConvergenceError: naming the bracket if the outlet temperature
        solve fails.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.ndim != 2 or x2.shape[1] != len(INPUT_COLUMNS):
        raise ConfigError(
            "Reactor expects {} inputs, got shape {}".format(len(INPUT_COLUMNS), x.shape)
        )
    _check_inputs(x2)
    y, n_clipped = _simulate(th, x2)
    if n_clipped:
        logger.info("Reaction extents clipped in %d of %d samples", n_clipped, len(x2))
    return y[0] if single else y


def _atomic_flows(th, flows):
    return np.einsum("bs,sa->ba", flows, th.composition)


def _mass_totals(th, n_rows):
    if not all(atom in thermo_data.ATOMIC_MASS for atom in th.atoms):
        return ()
    weights = np.zeros(n_rows)
    weights[: len(th.atoms)] = [thermo_data.ATOMIC_MASS[atom] for atom in th.atoms]
    return (("mass", weights),)


def check_samples(th, x, y):
    """
    Check the sample invariants of reactor data.

    Flows are non-negative, temperatures lie in the operating range, the
    atomic balances hold to 1e-10 and the enthalpy balance to 1e-9, relative
    to the inlet-side magnitudes.

    :raises ConstraintEvaluationError: listing the violated invariants.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    lo, hi = thermo_data.OPERATING_RANGE
    failed = []
    if np.any(x[:, 2:] < 0.0) or np.any(y[:, _FLOWS] < 0.0):
        failed.append("non-negative flows")
    temperatures = y[:, [0, -1]]
    if np.any(temperatures < lo) or np.any(temperatures > hi):
        failed.append("operating range")
    spec = build_reactor_spec(th)
    residual = np.abs(residual_separable(spec, x, y).residual)
    reference = spec.reference_fn(x)
    relative = residual / reference
    for k, label in enumerate(spec.labels):
        tolerance = _ENTHALPY_TOLERANCE if label == "enthalpy" else _ATOMIC_TOLERANCE
        if np.any(relative[:, k] >= tolerance):
            failed.append(label)
    if failed:
        raise ConstraintEvaluationError(failed, "sample invariant")


def build_reactor_spec(th=None):
    """
    Atomic and enthalpy balances of the reactor as separable constraints.

    Rows 1 to 4 balance C, H, O and N atoms; ``B`` holds the atomic
    composition of the outlet flows and ``v(x)`` the inlet atom flows. Row 5
    is the enthalpy balance with a zero row of ``B``,
    ``F(T_out) = -h_i(T_out)`` over the outlet flows and
    ``v(x) = Q - sum_i n_i,in h_i(T_in)``. ``T_out``, ``P_out`` and
    ``T_hotspot`` are frozen.
    The atomic rows weighted by the atomic masses form the ``mass`` total.

    :param th: Thermodynamic data, default :meth:`Thermo.default`.
    :rtype: :class:`hardproj.constraints.SeparableSpec`
    """
    th = th or Thermo.default()
    n_species = th.n_species
    n_atoms = len(th.atoms)
    n_outputs = len(OUTPUT_COLUMNS)
    B = np.zeros((n_atoms + 1, n_outputs))
    B[:n_atoms, _FLOWS] = th.composition.T
    frozen = tuple(OUTPUT_COLUMNS.index(name) for name in FROZEN_OUTPUTS)

    def v_fn(x):
        flows = x[:, _FLOWS]
        inlet = np.einsum("bs,bs->b", flows, th.enthalpies(x[:, 0]))
        heat = x[:, -1] * th.latent_heat
        return np.column_stack([_atomic_flows(th, flows), heat - inlet])

    def F_fn(y_frozen):
        F = np.zeros((y_frozen.shape[0], n_atoms + 1, n_species))
        F[:, n_atoms, :] = -th.enthalpies(y_frozen[:, 0])
        return F

    def F_jacobian(y_frozen):
        J = np.zeros((y_frozen.shape[0], n_atoms + 1, n_species, len(frozen)))
        J[:, n_atoms, :, 0] = -th.heat_capacity(y_frozen[:, 0])
        return J

    def reference_fn(x):
        flows = x[:, _FLOWS]
        inlet = np.sum(np.abs(flows * th.enthalpies(x[:, 0])), axis=1)
        return np.column_stack([_atomic_flows(th, flows), inlet])

    return SeparableSpec(
        B=B,
        v_fn=v_fn,
        F_fn=F_fn,
        freeze_idx=frozen,
        n_inputs=len(INPUT_COLUMNS),
        labels=CONSTRAINT_LABELS,
        name="reactor",
        F_jacobian=F_jacobian,
        reference_fn=reference_fn,
        totals=_mass_totals(th, n_atoms + 1),
    )


def build_atomic_spec(th=None):
    """
    Atomic balances as global linear constraints ``A x + B y = 0``.

    ``A`` carries minus the composition on the inlet flows, ``B`` the
    composition on the outlet flows.

    :rtype: :class:`hardproj.constraints.LinearSpec`
    """
    th = th or Thermo.default()
    n_atoms = len(th.atoms)
    A = np.zeros((n_atoms, len(INPUT_COLUMNS)))
    A[:, _FLOWS] = -th.composition.T
    B = np.zeros((n_atoms, len(OUTPUT_COLUMNS)))
    B[:, _FLOWS] = th.composition.T

    def reference_fn(x):
        return _atomic_flows(th, x[:, _FLOWS])

    return LinearSpec(
        A=A,
        B=B,
        b=np.zeros(n_atoms),
        labels=CONSTRAINT_LABELS[:n_atoms],
        name="reactor-atomic",
        reference_fn=reference_fn,
        totals=_mass_totals(th, n_atoms),
    )


def _check_bounds(bounds):
    missing = [name for name in INPUT_COLUMNS if name not in bounds]
    if missing:
        raise ConfigError("Missing bounds for {}".format(", ".join(missing)))
    unknown = sorted(set(bounds) - set(INPUT_COLUMNS))
    if unknown:
        raise ConfigError("Unknown bounds {}".format(", ".join(unknown)))
    box = np.array([bounds[name] for name in INPUT_COLUMNS], dtype=np.float64)
    if box.shape != (len(INPUT_COLUMNS), 2) or not np.all(np.isfinite(box)):
        raise ConfigError("Bounds must be finite (low, high) pairs")
    if np.any(box[:, 0] > box[:, 1]):
        bad = [n for n, (lo, hi) in zip(INPUT_COLUMNS, box) if lo > hi]
        raise ConfigError("Lower bound above upper bound for {}".format(", ".join(bad)))
    try:
        _check_inputs(box.T.copy())
    except ConfigError as exc:
        raise ConfigError("Bounds violate the reactor domain: {}".format(exc)) from None
    return box


def generate_dataset(th=None, n_train=4000, n_test=500, bounds=None, seed=0, directory=None):
    """
    Generate train and test splits of reactor samples.

    Inputs are drawn uniformly from ``bounds`` with one seeded stream, train
    rows first, and run through :func:`simulate`. Normalization statistics
    come from the training split. Every row is checked with
    :func:`check_samples` before it is returned.

    :param th: Thermodynamic data, default :meth:`Thermo.default`.
    :param n_train: Number of training samples.
    :param n_test: Number of test samples.
    :param bounds: Mapping of input column to ``(low, high)``, default
        :data:`DEFAULT_BOUNDS`.
    :param seed: Seed; the same seed writes byte-identical files.
    :param directory: If given, write ``train.csv``, ``test.csv`` and
        ``stats.csv`` there.
    :return: Tuple ``(train, test)`` of :class:`hardproj.dataset.Dataset`.

    Example:

    .. code-block:: python

        from hardproj import generate_dataset

        train, test = generate_dataset(n_train=4000, n_test=500, seed=7,
                                       directory="data")

    """
    th = th or Thermo.default()
    if int(n_train) <= 0 or int(n_test) <= 0:
        raise ConfigError("Sample counts must be positive")
    box = _check_bounds(DEFAULT_BOUNDS if bounds is None else bounds)
    rng = make_rng(seed, 1)
    n_total = int(n_train) + int(n_test)
    x = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((n_total, len(INPUT_COLUMNS)))
    y, n_clipped = _simulate(th, x)
    logger.info("Reaction extents clipped in %d of %d samples", n_clipped, n_total)
    check_samples(th, x, y)

    columns = INPUT_COLUMNS + OUTPUT_COLUMNS
    data = np.hstack([x, y])
    train_data, test_data = data[: int(n_train)], data[int(n_train) :]
    stats = NormalizationStats.from_data(columns, train_data)
    splits = []
    for split, rows in (("train", train_data), ("test", test_data)):
        splits.append(
            Dataset(
                columns,
                rows,
                len(INPUT_COLUMNS),
                stats=stats,
                seed=int(seed),
                generator_version=GENERATOR_VERSION,
                generator=GENERATOR_NAME,
                split=split,
            )
        )
    train, test = splits
    if directory is not None:
        save_dataset(directory, train, test)
    return train, test


register_constraints("reactor", build_reactor_spec)
register_constraints("reactor-atomic", build_atomic_spec)
