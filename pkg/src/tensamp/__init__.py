"""Biased entry-wise sampling of symmetric order-3 tensors."""

from tensamp.tensor_core import (
    CpFactors,
    DenseTensor3,
    SampledTensor,
    cp_reconstruct,
    frobenius_norm,
    l22_norm,
    tvp,
)

__all__ = [
    "CpFactors",
    "DenseTensor3",
    "SampledTensor",
    "cp_reconstruct",
    "frobenius_norm",
    "l22_norm",
    "tvp",
]
