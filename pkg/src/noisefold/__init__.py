"""noisefold: perturbative master equations under combined quantum and
classical noise, with structural-identity verification and a brute-force
exact oracle."""

from .errors import (
    CapacityError,
    ConfigError,
    ConventionError,
    DimensionError,
    InstabilityError,
    NoisefoldError,
    UnsupportedOrderError,
)
from .linalg import (
    DensityMatrix,
    Superoperator,
    TimeGrid,
    matrix_exp,
    partial_trace_env,
    superop_from_action,
    tensor_product,
)
from .noise import (
    BathCorrelation,
    GaussianProcessSpec,
    StochasticEnsemble,
    ThermalBathSpec,
    bath_correlation,
    deterministic_ensemble,
    mean_occupation,
    path_ensemble,
    raising_occupation,
    sample_ou_ensemble,
    thermal_state,
)
from .hamiltonian import (
    FactorizedInteraction,
    NoiseStrengths,
    StochasticSystemHamiltonian,
    pauli_ops,
    stochastic_zeeman,
    zeeman_cavity_interaction,
)
from .engine import (
    GeneratorTerm,
    OrderedMapFamily,
    PropagatorTerms,
    build_map_family,
    collect_generator,
    composition_terms,
    compute_propagator_terms,
    epsilon_dot_map,
    epsilon_map,
    l21_closed_form,
    y_map,
)
from .dynamics import (
    CoherenceReport,
    DecayCoefficients,
    Trajectory,
    coherence_decay_analysis,
    empirical_dephasing_coefficient,
    exact_oracle,
    integrate_master_equation,
    max_trace_distance,
    trace_distance,
    zeeman_coefficients,
    zeeman_eom_generator,
    zeeman_generator_terms,
)

__version__ = "0.1.0"
