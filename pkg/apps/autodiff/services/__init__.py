from .tensor import (
    Tensor,
    Function,
    Graph,
    backward,
    concat,
    stack,
    softmax,
    log_softmax,
    sequence_nll,
    check_token_ids,
    no_grad,
    is_grad_enabled,
)
from .gradcheck import finite_difference_check

__all__ = [
    'Tensor',
    'Function',
    'Graph',
    'backward',
    'concat',
    'stack',
    'softmax',
    'log_softmax',
    'sequence_nll',
    'check_token_ids',
    'no_grad',
    'is_grad_enabled',
    'finite_difference_check',
]
