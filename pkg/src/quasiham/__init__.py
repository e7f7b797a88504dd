"""Noise-averaged qubit dynamics from a quasi-Hamiltonian, with closed forms and Monte Carlo checks."""

__version__ = "0.1.0"

from .classical_env import (
    Fluctuator,
    FluctuatorSet,
    MarkovEnv,
    env_from_fluctuators,
    sample_trajectory,
    stationary_distribution,
)
from .dephasing_exact import EnvelopeCurve, envelope_factor, relaxation_many, t2_rate
from .quasi_h import (
    PulseEvent,
    QuantumSpec,
    QuasiHamiltonian,
    build_quasi_hamiltonian,
    dephasing_spec,
    eigendecompose,
    evolve,
    evolve_curve,
    evolve_with_pulses,
    expm_apply,
)
from .su_basis import bloch_from_density, density_from_bloch, dynamical_map, make_generators
