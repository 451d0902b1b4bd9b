"""Cooking-state image classification with a from-scratch NumPy CNN stack."""

__version__ = "0.1.0"

from .augment import AffineParams, AugmentConfig, apply_affine, augment_image, sample_params
from .data import DatasetIndex, load_image, scan, split
from .errors import (DecodeError, DivergenceError, LayerStateError, ParameterError,
                     ShapeError, StateNetError, WeightFileError)
from .model import ModelSpec, Sequential, assemble_modified_head, build_model, build_vgg19_base, freeze
from .optim import Optimizer
from .trainer import TrainConfig, TrainEvent, evaluate, fit, predict, train_epoch
from .weights import load_weights, save_weights
