from .backend import BACKEND, get_kernels, kernels

__all__ = ["BACKEND", "get_kernels", "kernels"]
