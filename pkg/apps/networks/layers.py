# apps/networks/layers.py
"""
Parameter containers for the detection networks.

Modules keep their parameters, buffers and children in insertion order so
that parameter names and ordering are deterministic.
"""
import math
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from apps.common.utils import get_project_setting
from apps.diffcore import Variable, get_default_dtype, parameter
from apps.diffcore import functional as F


class Module:
    """Base class holding named parameters, buffers and sub-modules"""

    def __init__(self):
        self._parameters: 'OrderedDict[str, Variable]' = OrderedDict()
        self._buffers: 'OrderedDict[str, np.ndarray]' = OrderedDict()
        self._modules: 'OrderedDict[str, Module]' = OrderedDict()
        self.training = True

    def register_parameter(self, name: str, value: np.ndarray) -> Variable:
        var = parameter(value, name=name)
        self._parameters[name] = var
        return var

    def register_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        self._buffers[name] = value
        return value

    def add_module(self, name: str, module: 'Module') -> 'Module':
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = '') -> Iterator[Tuple[str, Variable]]:
        for name, var in self._parameters.items():
            yield prefix + name, var
        for child_name, child in self._modules.items():
            yield from child.named_parameters(f'{prefix}{child_name}.')

    def parameters(self) -> List[Variable]:
        return [var for _, var in self.named_parameters()]

    def named_buffers(self, prefix: str = '') -> Iterator[Tuple[str, np.ndarray]]:
        for name, value in self._buffers.items():
            yield prefix + name, value
        for child_name, child in self._modules.items():
            yield from child.named_buffers(f'{prefix}{child_name}.')

    def state_records(self) -> List[Tuple[str, np.ndarray]]:
        """Parameters followed by buffers, in deterministic order"""
        records = [(name, var.value) for name, var in self.named_parameters()]
        records.extend(self.named_buffers())
        return records

    def load_state_records(self, records: List[Tuple[str, np.ndarray]]) -> None:
        """Copy values into parameters and buffers; names and shapes must match exactly"""
        targets: Dict[str, np.ndarray] = {name: var.value for name, var in self.named_parameters()}
        targets.update(dict(self.named_buffers()))
        names = [name for name, _ in records]
        if names != [name for name, _ in self.state_records()]:
            missing = sorted(set(targets) - set(names))
            unexpected = sorted(set(names) - set(targets))
            raise ValueError(f"State does not match model: missing {missing}, unexpected {unexpected}")
        for name, values in records:
            target = targets[name]
            if target.shape != values.shape:
                raise ValueError(f"Shape mismatch for {name}: model {target.shape}, state {values.shape}")
            target[...] = values

    def parameter_count(self) -> int:
        return sum(var.size for var in self.parameters())

    def train(self, mode: bool = True) -> 'Module':
        self.training = mode
        for child in self._modules.values():
            child.train(mode)
        return self

    def eval(self) -> 'Module':
        return self.train(False)

    def zero_grad(self) -> None:
        for var in self.parameters():
            var.zero_grad()

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def he_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform(-sqrt(6 / fan_in), sqrt(6 / fan_in))"""
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(get_default_dtype())


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, bias: bool = True):
        super().__init__()
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = self.register_parameter(
            'weight', he_uniform(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in)
        )
        self.bias = self.register_parameter('bias', np.zeros(out_channels)) if bias else None

    def forward(self, x: Variable) -> Variable:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = self.register_parameter('weight', he_uniform(rng, (in_features, out_features), in_features))
        self.bias = self.register_parameter('bias', np.zeros(out_features)) if bias else None

    def forward(self, x: Variable) -> Variable:
        return F.linear(x, self.weight, self.bias)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: Optional[float] = None, eps: Optional[float] = None):
        super().__init__()
        self.momentum = momentum if momentum is not None else get_project_setting('BATCHNORM_MOMENTUM', 0.1)
        self.eps = eps if eps is not None else get_project_setting('BATCHNORM_EPS', 1e-5)
        self.gamma = self.register_parameter('gamma', np.ones(channels))
        self.beta = self.register_parameter('beta', np.zeros(channels))
        self.state = F.BatchNormState(channels)
        self.register_buffer('running_mean', self.state.running_mean)
        self.register_buffer('running_var', self.state.running_var)

    def forward(self, x: Variable) -> Variable:
        return F.batchnorm2d(x, self.gamma, self.beta, self.state, self.training,
                             momentum=self.momentum, eps=self.eps)


class ConvBlock(Module):
    """3x3 convolution (stride 1, same padding) -> batchnorm -> relu"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        # batchnorm cancels a conv bias, so the conv has none
        self.conv = self.add_module('conv', Conv2d(in_channels, out_channels, 3, rng, padding=1, bias=False))
        self.bn = self.add_module('bn', BatchNorm2d(out_channels))

    def forward(self, x: Variable) -> Variable:
        return F.relu(self.bn(self.conv(x)))
