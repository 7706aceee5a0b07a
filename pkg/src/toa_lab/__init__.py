"""toa-lab: survival probability and time-of-arrival statistics of a
quantum particle on a 1D lattice under repeated projective detection.

The heavy lifting lives in four modules: :mod:`~toa_lab.lattice` (analytic
eigenbases), :mod:`~toa_lab.engine` (exact stroboscopic evolution plus a
dense oracle), :mod:`~toa_lab.perturbation` (small-tau closed forms) and
:mod:`~toa_lab.arrival` (distributions, fits, collapse). The ``toa-lab``
command line wraps them; see :mod:`~toa_lab.cli`.
"""

from .arrival import (
    CollapseResult,
    PlateauEstimate,
    PowerLawFit,
    ToaDistribution,
    estimate_plateau,
    fit_late_exponential,
    fit_power_law,
    power_law_crossover,
    scaling_collapse,
    toa_distribution,
)
from .engine import (
    MeasurementSchedule,
    SurvivalSeries,
    WaveState,
    dense_oracle_evolve,
    evolve,
    init_state,
    position_amplitudes,
    step,
)
from .errors import (
    InvalidSpecError,
    OracleSizeError,
    PerturbationDomainError,
    SeriesDataError,
)
from .lattice import (
    LatticeSpec,
    SpectralBasis,
    dense_hamiltonian,
    full_lattice_basis,
    open_chain_eigensystem,
    reduced_open_basis,
    ring_eigensystem,
)
from .perturbation import (
    PerturbativePrediction,
    decay_rates,
    perturbed_eigenvector_correction,
    regime_flags,
    ring_plateau,
    survival_asymptotic,
    survival_eigenstate,
    survival_position_integral,
    survival_position_sum,
)

__version__ = "0.1.0"
