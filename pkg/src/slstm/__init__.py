"""Standard LSTM and five reduced-gate variants, trained from scratch on row-wise MNIST."""

from .cells import CellParams, CellState, GateParams, Variant, forward_sequence, init_params, param_count, step
from .numkit import Activation

__all__ = ["Activation", "CellParams", "CellState", "GateParams", "Variant", "forward_sequence",
           "init_params", "param_count", "step"]
__version__ = "0.1.0"
