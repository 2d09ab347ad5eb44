from .backprop import ForwardTrace, backward, forward, grad_params, per_example_grads, per_example_jacobian
from .heads import (
    accuracy,
    head_output,
    head_output_jacobian,
    head_output_vjp,
    loss_eval,
    loss_grad_outputs,
    predictive,
    rosenbrock,
    rosenbrock_grad,
)
from .model import Activation, Batch, Head, LayerSpec, Model, ParamSet, init_params

__all__ = [
    "Activation",
    "Batch",
    "ForwardTrace",
    "Head",
    "LayerSpec",
    "Model",
    "ParamSet",
    "accuracy",
    "backward",
    "forward",
    "grad_params",
    "head_output",
    "head_output_jacobian",
    "head_output_vjp",
    "init_params",
    "loss_eval",
    "loss_grad_outputs",
    "per_example_grads",
    "per_example_jacobian",
    "predictive",
    "rosenbrock",
    "rosenbrock_grad",
]
