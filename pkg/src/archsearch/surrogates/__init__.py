"""Accuracy predictors and the cross-validated model switch."""

from .base import (
    MODEL_IDS,
    AllModelsFailed,
    DegenerateTargets,
    Predictor,
    SingularSystem,
    SurrogateError,
    TrainingSet,
    encode_features,
    predictor_from_dict,
)
from .cart import CartPredictor, fit_cart
from .gp import GpPredictor, fit_gp
from .mlp import MlpPredictor, fit_mlp
from .rbf import RbfPredictor, fit_rbf
from .switching import CvScore, adaptive_switch, choose, cross_validate, fit_model


def predict(predictor: Predictor, genomes):
    return predictor.predict(genomes)


__all__ = [
    "MODEL_IDS",
    "AllModelsFailed",
    "CartPredictor",
    "CvScore",
    "DegenerateTargets",
    "GpPredictor",
    "MlpPredictor",
    "Predictor",
    "RbfPredictor",
    "SingularSystem",
    "SurrogateError",
    "TrainingSet",
    "adaptive_switch",
    "choose",
    "cross_validate",
    "encode_features",
    "fit_cart",
    "fit_gp",
    "fit_mlp",
    "fit_model",
    "fit_rbf",
    "predict",
    "predictor_from_dict",
]
