"""
Model Building Blocks.

- ParameterSet: named leaf tensors under one namespace prefix
- GRUCell: single-layer gated recurrent cell (update and reset gates)
- SequenceModel: base class shared by generator, discriminator, critic, LM
"""

import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from apps.autodiff.services import Tensor

logger = logging.getLogger(__name__)

INIT_SCALE = getattr(settings, 'LAB_INIT_SCALE', 0.08)
EMBED_SIZE = getattr(settings, 'LAB_EMBED_SIZE', 16)
HIDDEN_SIZE = getattr(settings, 'LAB_HIDDEN_SIZE', 32)


@dataclass(frozen=True)
class ModelDims:
    vocab_size: int
    embed_size: int = EMBED_SIZE
    hidden_size: int = HIDDEN_SIZE

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


class ParameterSet:
    """
    Ordered named parameters sharing a namespace prefix.

    Values are drawn uniformly from [-scale, scale] with a dedicated RNG, in
    registration order, so the same seed always yields the same model.
    ``init='zeros'`` gives the all-zero model used by the reduction checks.
    """

    def __init__(self, prefix: str, seed: int = 0, init: str = 'uniform', scale: float = INIT_SCALE):
        if init not in ('uniform', 'zeros'):
            raise ValueError(f"init must be 'uniform' or 'zeros', got {init!r}")
        self.prefix = prefix
        self.init = init
        self.scale = scale
        self._rng = np.random.default_rng(seed)
        self._params: 'OrderedDict[str, Tensor]' = OrderedDict()

    def add(self, name: str, shape: Tuple[int, ...]) -> Tensor:
        full_name = f"{self.prefix}.{name}"
        if full_name in self._params:
            raise ValueError(f"duplicate parameter {full_name}")
        if self.init == 'zeros':
            values = np.zeros(shape)
        else:
            values = self._rng.uniform(-self.scale, self.scale, size=shape)
        tensor = Tensor(values, requires_grad=True, name=full_name)
        self._params[full_name] = tensor
        return tensor

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def __getitem__(self, full_name: str) -> Tensor:
        return self._params[full_name]

    def items(self):
        return self._params.items()

    @property
    def names(self) -> List[str]:
        return list(self._params)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self._params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        unexpected = set(state) - set(self._params)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, tensor in self._params.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != tensor.shape:
                raise ValueError(f"{name}: shape {values.shape} != {tensor.shape}")
            tensor.data[...] = values

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.zero_grad()


class GRUCell:
    """
    h' = (1 - z) * n + z * h
    z = sigmoid(W_z x + U_z h + b_z), r = sigmoid(W_r x + U_r h + b_r),
    n = tanh(W_n x + b_n + r * (U_n h))

    The three gates are stacked row-wise in W (3H x in), U (3H x H) and b (3H).
    """

    def __init__(self, params: ParameterSet, name: str, input_size: int, hidden_size: int):
        self.hidden_size = hidden_size
        self.W = params.add(f"{name}.W", (3 * hidden_size, input_size))
        self.U = params.add(f"{name}.U", (3 * hidden_size, hidden_size))
        self.b = params.add(f"{name}.b", (3 * hidden_size,))

    def initial_state(self) -> Tensor:
        return Tensor(np.zeros(self.hidden_size))

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        H = self.hidden_size
        gx = self.W @ x + self.b
        gh = self.U @ h
        z = (gx[0:H] + gh[0:H]).sigmoid()
        r = (gx[H:2 * H] + gh[H:2 * H]).sigmoid()
        n = (gx[2 * H:] + r * gh[2 * H:]).tanh()
        return (1.0 - z) * n + z * h

    def run(self, inputs: Sequence[Tensor], h: Optional[Tensor] = None) -> List[Tensor]:
        """All hidden states after each input."""
        h = self.initial_state() if h is None else h
        states = []
        for x in inputs:
            h = self.step(x, h)
            states.append(h)
        return states


class SequenceModel:
    """
    Parameter bundle with a kind tag and dimensions, as stored in checkpoints.
    """

    kind = 'model'
    default_prefix = 'model'

    def __init__(self, dims: ModelDims, seed: int = 0, init: str = 'uniform', prefix: Optional[str] = None):
        self.dims = dims
        self.seed = seed
        self.params = ParameterSet(prefix or self.default_prefix, seed=seed, init=init)

    @property
    def prefix(self) -> str:
        return self.params.prefix

    def parameters(self) -> List[Tensor]:
        return list(self.params)

    def named_parameters(self):
        return self.params.items()

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return self.params.state_dict()

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        self.params.load_state_dict(state)

    def clone(self) -> 'SequenceModel':
        """Independent copy with identical values."""
        twin = type(self)(self.dims, seed=self.seed, prefix=self.prefix)
        twin.load_state_dict(self.state_dict())
        return twin

    def __repr__(self):
        return f"<{type(self).__name__} prefix={self.prefix} params={len(self.params)}>"
