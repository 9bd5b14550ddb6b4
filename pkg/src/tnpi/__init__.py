"""Tensor-network path-integral dynamics for open quantum systems."""

from .bath import (
    BathSpec,
    EtaTable,
    SpectralDensity,
    TimeGrid,
    correlation_function,
    eta_coefficients,
    load_eta_table,
    save_eta_table,
    spectral_density_value,
)
from .dynamics import (
    DensityMatrix,
    SystemModel,
    Trajectory,
    build_process_tensor,
    combine_two_qubit,
    propagate_diagonal,
    propagate_gif,
    system_propagator,
    write_trajectory_csv,
)
from .errors import ConfigError, NumericalError
from .influence import (
    DiagonalIF,
    GeneralizedIF,
    LambdaIntegrator,
    brute_force_gif,
    brute_force_influence,
    build_diagonal_if,
    build_gif,
    diagonal_if_init,
    gif_init,
    gif_rhs_mpo,
    grow_gif,
    grow_influence_diagonal,
    grow_influence_ode,
    load_gif,
    save_gif,
)
from .models import (
    SpinBosonParams,
    TwoQubitParams,
    build_spin_boson,
    build_two_qubit,
    pauli,
    pauli_eigenbasis,
    pure_dephasing_reference,
)
from .tensors import (
    MPO,
    MPS,
    CompressionPolicy,
    identity_mpo,
    mps_add,
    mps_append_site,
    mps_apply_mpo,
    mps_compress,
    mps_contract,
    mps_dense,
    svd_truncate,
)

__version__ = "0.1.0"
