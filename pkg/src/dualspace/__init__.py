"""Dual-space knowledge distillation for tiny causal language models.

Everything runs on a small reverse-mode autodiff engine (``dualspace.tensor``)
in 64-bit floats, so analytic gradients can be checked against finite
differences throughout.
"""

from dualspace.tensor import Tensor

__all__ = ["Tensor"]
