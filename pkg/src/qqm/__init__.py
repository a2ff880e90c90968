"""Quantile mechanics with differentiable quantum circuits."""
import importlib

__version__ = "0.1.0"
__all__ = ["statevector", "circuits", "autodiff", "quantile_model", "qqm_train", "sde_oracle", "qgan", "cli"]


def __getattr__(name):
    # Submodules load on first access so `qqm.cli` can set thread caps before numpy starts.
    if name in __all__:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module 'qqm' has no attribute {name!r}")
