"""Few-shot sleep staging with a spatial-temporal hypergraph learner and MAML."""

from .autodiff import GradSet, ParamSet, Tensor
from .config import RunConfig, load_config, parse_config
from .data import SubjectRecording, SynthSpec, load_subject, normalize, synth_generate
from .learner import LearnerConfig, init_params, task_loss
from .meta import MetaConfig, build_tasks, meta_step, meta_test, meta_train

__all__ = [
    "GradSet",
    "LearnerConfig",
    "MetaConfig",
    "ParamSet",
    "RunConfig",
    "SubjectRecording",
    "SynthSpec",
    "Tensor",
    "build_tasks",
    "init_params",
    "load_config",
    "load_subject",
    "meta_step",
    "meta_test",
    "meta_train",
    "normalize",
    "parse_config",
    "synth_generate",
    "task_loss",
]
