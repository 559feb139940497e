"""Prompt tuning of frozen vision-language encoders for fine-grained ship classes."""
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
