"""Entanglement transfer from two-mode squeezed light to qubit ensembles."""

__version__ = "0.1.0"

from .statespace import (DEFAULT_EPSILON, Factor, ModeSpace, PureState, SpinSpace,
                         SubsystemLayout, TwoModeSqueezedSpec, canonical_layout, choose_cutoff,
                         initial_transfer_state, tensor, truncation_deficit,
                         two_mode_squeezed_state)
from .operators import SiteHamiltonian, excitation_blocks, site_hamiltonian
from .dynamics import (PropagatorError, SitePropagator, analytic_jc_propagator, apply_local,
                       evolve, site_propagator)
from .entanglement import (DensityOperator, entanglement_report, log_negativity, negativity,
                           partial_trace, partial_transpose, tmss_log_negativity_exact)
from .protocols import (MeasurementSpec, ProtocolResult, TransferParams, ZeroProbabilityError,
                        bosonic_reference_transfer, parity_postselect, passive_transfer,
                        sequential_postselect, transfer_curve)
from .sweep import OptimumRow, ScanGrid, optimize_transfer, scan_time, table1

__all__ = [name for name in dir() if not name.startswith("_")]
