"""Neural MinMax solvers for linearly constrained problems over probability measures."""

from .autodiff import AdamHyper, AdamState, NonFiniteError, Parameter, ShapeError, Tape, adam_step, backward
from .nets import DiscriminatorSet, GeneratorEnsemble, MLP, MLPConfig, build_networks, init_mlp
from .objective import RegularizationConfig, objective, phi_divergence, phi_lipschitz, phi_plain, witness_unboundedness
from .problems import ProblemInstance, preset_dcot, preset_mot, preset_ot, preset_w2, problem_from_config
from .trainer import NumericalAbort, TrainConfig, TrainResult, running_return, stability_metric, train

__version__ = "0.1.0"
