"""Grid-based two-channel molecular dynamics and Krotov optimal control.

Typical use::

    from vibcontrol import (morse_curve, envelope_curve, build_mapped_grid,
                            build_system, eigenstates, ControlProblem, optimize)
"""
from .analysis import pulse_energy, pulse_spectrum, population_trace, threshold_census
from .errors import AlgorithmFault, InvalidInputError, IOFailure, NumericalFailure, VibControlError
from .grid import KineticOperator, SpatialGrid, build_mapped_grid, kinetic_matrix, uniform_grid
from .hamiltonian import (
    ChannelSystem,
    EigenBasis,
    FCTable,
    build_system,
    eigenstates,
    franck_condon_map,
    morse_level_count,
    morse_levels,
    spectral_bounds,
    two_level_system,
)
from .krotov import (
    AlphaSchedule,
    ControlField,
    ControlProblem,
    KrotovRun,
    QuadraticPenalty,
    RestrictedPenalty,
    StopCriteria,
    krotov_coefficient,
    krotov_iterate,
    monotonicity_diagnostics,
    objective,
    optimize,
    read_field,
    write_field,
)
from .potentials import PotentialCurve, envelope_curve, flat_curve, harmonic_curve, load_potential, morse_curve
from .propagator import ChebychevPropagator, StateVector, TimeGrid, propagate, propagate_adjoint
from .strategies import GuessSpec, compress_time, make_guess, minimal_time_hint, reduce_intensity_restart

__version__ = "0.1.0"
