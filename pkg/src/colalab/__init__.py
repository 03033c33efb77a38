"""Desk-scale laboratory for belief-conditioned online lookahead adaptation
of lane-keeping policies in hidden-mode MDPs."""

from colalab._kernels import BACKEND as KERNEL_BACKEND

__all__ = ["KERNEL_BACKEND"]
__version__ = "0.1.0"
