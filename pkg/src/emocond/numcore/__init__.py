from .autodiff import (
    Tensor,
    absolute,
    add,
    add_row,
    backward,
    clamp_min,
    concat_cols,
    constant,
    div,
    dot,
    exp,
    matmul,
    mean,
    mul,
    outer,
    repeat_rows,
    reshape,
    row_l2_norms,
    softmax_rows,
    sqrt,
    square,
    sub,
    sum,
    take_rows,
    tanh,
    tensor,
    transpose,
    value_and_grad,
)
from .gradcheck import grad_check, numerical_gradient

__all__ = [
    "Tensor", "absolute", "add", "add_row", "backward", "clamp_min", "concat_cols", "constant", "div",
    "dot", "exp", "grad_check", "matmul", "mean", "mul", "numerical_gradient", "outer",
    "repeat_rows", "reshape", "row_l2_norms", "softmax_rows", "sqrt", "square", "sub", "sum",
    "take_rows", "tanh", "tensor", "transpose", "value_and_grad",
]
