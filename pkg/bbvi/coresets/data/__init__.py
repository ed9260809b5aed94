from .dataset import Dataset, concatenate, stratified_split
from .libsvm import load_csv, load_libsvm
from .loader import DatasetSpec, load_dataset
from .scaling import Scaler, standardize
from .synthetic import gen_four_class, gen_half_moon, gen_synthetic_logreg

__all__ = [
    "Dataset",
    "DatasetSpec",
    "Scaler",
    "concatenate",
    "gen_four_class",
    "gen_half_moon",
    "gen_synthetic_logreg",
    "load_csv",
    "load_dataset",
    "load_libsvm",
    "standardize",
    "stratified_split",
]
