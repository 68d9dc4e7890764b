"""Common random reconstruction (CORE) gradient compression and the optimizers built on it.

Machines share a counter-based Gaussian stream, so a d-dimensional gradient
travels as m inner products and is rebuilt on the other side from the same
random vectors. Everything runs in a deterministic in-process network whose
ledger counts every scalar that crosses a link.
"""

__version__ = "0.1.0"

from .compressors import (Compressor, Sketch, core_compress, core_reconstruct,
                          core_variance_bound, core_variance_closed_form)
from .datasets import LabeledDataset, load_libsvm, normalize_rows, parse_libsvm, serialize
from .errors import ConfigError, CoreError, LibsvmParseError
from .kernels import BACKEND
from .objectives import (QuadraticObjective, RidgeSeparableObjective, SpectrumSpec,
                         TwoLayerObjective)
from .optimizers import (AgdConfig, BaselineConfig, GdConfig, NcConfig, RunRecord,
                         communication_report, run_cagd, run_cgd, run_compressed_gd,
                         run_core_agd, run_core_gd, run_core_gd_nonconvex)
from .privacy import AdjacentPair, DpParams, dp_tail_check, privacy_loss
from .randomness import GaussianStreamKey, gaussian_vector, round_basis
from .simnet import CommLedger, Topology, decentralized_round, gossip_average, star_round

__all__ = [
    "AdjacentPair", "AgdConfig", "BACKEND", "BaselineConfig", "CommLedger", "Compressor",
    "ConfigError", "CoreError", "DpParams", "GaussianStreamKey", "GdConfig", "LabeledDataset",
    "LibsvmParseError", "NcConfig", "QuadraticObjective", "RidgeSeparableObjective", "RunRecord",
    "Sketch", "SpectrumSpec", "Topology", "TwoLayerObjective", "communication_report",
    "core_compress", "core_reconstruct", "core_variance_bound", "core_variance_closed_form",
    "decentralized_round", "dp_tail_check", "gaussian_vector", "gossip_average", "load_libsvm",
    "normalize_rows", "parse_libsvm", "privacy_loss", "round_basis", "run_cagd", "run_cgd",
    "run_compressed_gd", "run_core_agd", "run_core_gd", "run_core_gd_nonconvex", "serialize",
    "star_round",
]
