"""cmvlab: numerical laboratory for quasi-periodic five-diagonal unitary
operators, their transfer-matrix cocycles, Lyapunov statistics, finite-volume
Green's functions, and gauge-equivalent coined quantum walks."""

__version__ = "0.1.0"

from .torus import Phase, Frequency, shift_orbit, diophantine_margin
from .model import (
    TrigPoly,
    SamplingFunction,
    CoinField,
    eval_alpha_rho,
    verblunsky_sequence,
    log_integrability,
    coin_field_eval,
    builtin_model,
    model_from_json,
    model_to_json,
)
from .cocycle import (
    SpectralPoint,
    ScaledMat2,
    szego_step,
    gz_step,
    transfer_product,
    sl2r_conjugate,
    m0_factorization_check,
)
from .lyapunov import (
    LyapunovEstimate,
    LDTReport,
    APReport,
    finite_lyapunov,
    birkhoff_lyapunov,
    ldt_measure,
    ap_check,
    rate_table,
)
from .cmvop import (
    FiniteCMV,
    CharDet,
    build_finite_cmv,
    finite_cmv_from_model,
    char_det,
    det_transfer_check,
    green_entry,
    poisson_residual,
    green_decay_scan,
)
from .spectral import (
    EigenPair,
    LocalizationFit,
    ResonanceReport,
    eigenphases,
    eigenvector_inverse_iteration,
    localization_fit,
    double_resonance_gap,
    orbit_visit_count,
)
from .qwalk import (
    WalkOperator,
    WalkState,
    GaugeData,
    build_walk,
    walk_to_cmv,
    unitary_equiv_check,
    evolve,
    walk_lyapunov_compare,
)
from . import errors
