from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from data_science.src.errors import NumericError
from data_science.src.model.network import ModelParams

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class OptimizerState:
    """Adam moments per trainable array and the number of steps taken."""
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_params(cls, params: ModelParams, **hyper) -> "OptimizerState":
        names = params.trainable_names()
        return cls({n: np.zeros_like(params[n]) for n in names}, {n: np.zeros_like(params[n]) for n in names},
                   **hyper)

    def bias_corrections(self) -> Tuple[float, float]:
        """(1 - beta1^t, 1 - beta2^t) at the current step t."""
        return 1.0 - self.beta1 ** self.step, 1.0 - self.beta2 ** self.step


def adam_step(params: ModelParams, grads: Dict[str, np.ndarray], state: OptimizerState,
              lr: float) -> Tuple[ModelParams, OptimizerState]:
    """
    One Adam update with bias correction, applied in place.

    Arrays of frozen groups are skipped entirely (values and moments unchanged),
    whatever gradients are passed for them.

    Args:
        params (ModelParams): Parameters, updated in place
        grads (Dict[str, np.ndarray]): Gradient per trainable array
        state (OptimizerState): Moments, updated in place
        lr (float): Learning rate

    Returns:
        Tuple[ModelParams, OptimizerState]: The updated params and state

    Raises:
        NumericError: A gradient of an unfrozen array is not finite (names the array)
    """
    active = [name for name in params.trainable_names() if not params.is_frozen(name)]
    for name in active:
        if name not in grads:
            raise ValueError(f"Missing gradient for '{name}'")
        if grads[name].shape != params[name].shape:
            raise ValueError(f"Gradient for '{name}' has shape {grads[name].shape}, expected {params[name].shape}")
        if not np.all(np.isfinite(grads[name])):
            raise NumericError(f"non-finite gradient for parameter '{name}'")

    state.step += 1
    correction1, correction2 = state.bias_corrections()
    for name in active:
        g = grads[name]
        m = state.first_moment.setdefault(name, np.zeros_like(g))
        v = state.second_moment.setdefault(name, np.zeros_like(g))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params.arrays[name] = params.arrays[name] - lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params, state
