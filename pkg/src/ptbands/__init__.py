"""Two-band PT-symmetric Bloch Hamiltonians: nodes, Z2 charges, phase scans, and synthetic spectroscopy."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConsistencyError,
    ConvergenceError,
    DegeneracyError,
    NodalLineError,
    NodeIsolationError,
    PTBandsError,
    UnboundParameterError,
    UnknownParameterError,
)
from .model import (
    BlochModel,
    Coefficient,
    HarmonicTerm,
    Momentum,
    build_paper_model,
    eigen_splitting,
    eigenvectors,
    eval_bloch_vector,
)
from .spectrum import GapMap, min_gap, sample_gap_map
from .symmetry import P, PT, T, SymmetryOp, SymmetryReport, check_symmetry, classify_symmetries
from .topology import (
    NodeReport,
    PhaseDiagram,
    annotate_nodes,
    berry_phase,
    find_nodes,
    lambda_scan,
    refine_node,
    winding_number,
    z2_charge,
)
from .experiment import (
    DriveParams,
    InstrumentProfile,
    PeakFit,
    SpectroscopyDataset,
    SpectrumTrace,
    compare_maps,
    fit_peak,
    k_to_drive,
    reconstruct_gap_map,
    synth_dataset,
    synth_trace,
)
