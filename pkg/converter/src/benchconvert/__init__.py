"""Converter from published NAS-Bench-101/201 dumps to the bench-v1 format."""

from .convert import DATASETS, ConversionError, ConversionReport, convert
from .transform import (
    NB101_OPS,
    NB201_OPS,
    nb101_arch_from_matrices,
    nb101_space,
    nb201_arch_from_string,
    nb201_space,
)

__version__ = "0.1.0"
