"""Small, informative training databases for expensive black-box functions.

Databases are built three ways (uniform grid, grid plus random extras, and
GP-driven maximum-uncertainty acquisition) and compared through the learning
curves of downstream regressors.
"""

from .acquisition import AcquisitionSpec, Aggregation, CandidateMesh, build_mesh, select_next
from .core import Dataset, ParameterDim, ParameterSpace, Strategy, denormalize, normalize, validate_dataset
from .downstream import RegressorKind, evaluate, mse, r2, train
from .gpr import GprModel, KernelParams, fit, log_marginal_likelihood, optimize_hyperparams, predict
from .harness import ExperimentConfig, learning_curve, load_config, relative_efficiency, run_experiment
from .oracles import BraggOracle, bragg_oracle, bragg_spectrum, fit_main_lobe, synthetic_oracle
from .samplers import BbdConfig, build_bbd, build_ubd_inputs, build_urbd_inputs

__version__ = "0.1.0"
