"""1D patch-transformer stress classifiers with cross-modality evaluation."""

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
