"""Asymmetric-attention multimodal sentiment model on a numpy autodiff core."""

from .autodiff import Parameter, Tensor, backward, grad_check, no_grad
from .dataset import EmotionLabel, Manifest, SynthConfig, load_manifest, synthesize
from .experiment import ExperimentConfig, run_ablation_suite, run_experiment
from .features import FeatureBundle
from .metrics import evaluate_predictions, render_report
from .model import ModelConfig, init_params, load_checkpoint, model_forward, save_checkpoint
from .trainer import TrainConfig, run_kfold, train
from .variants import REGISTRY, resolve_variant, variant_config

__version__ = "0.1.0"
