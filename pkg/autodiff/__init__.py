from .tensor import (
    DomainError,
    Graph,
    GraphError,
    NonFiniteError,
    ShapeError,
    Tensor,
    elementwise,
    ensure_finite,
    matmul,
    no_grad,
)
from .gradcheck import grad_check, grad_check_all
from .optim import Adam, MomentumSGD, clip_grad_norm

__all__ = [
    'Adam', 'DomainError', 'Graph', 'GraphError', 'MomentumSGD', 'NonFiniteError',
    'ShapeError', 'Tensor', 'clip_grad_norm', 'elementwise', 'ensure_finite',
    'grad_check', 'grad_check_all', 'matmul', 'no_grad',
]
