"""Small layer library on top of the tensor engine.

Parameters are plain Tensors with requires_grad=True, registered on modules
and discoverable via ``named_parameters()``. Initialization is Kaiming-uniform
(fan-in) for conv weights, zeros for biases, and is deterministic given the
rng passed to the constructor.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in) if fan_in > 0 else 0.0
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._modules: dict[str, Module] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self.training = True

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and getattr(value, "requires_grad", False):
            self.__dict__.setdefault("_params", {})[name] = value
        elif isinstance(value, Module):
            self.__dict__.setdefault("_modules", {})[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray):
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def set_buffer(self, name: str, value: np.ndarray):
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, m in self._modules.items():
            yield from m.named_buffers(prefix + name + ".")

    def modules(self):
        yield self
        for m in self._modules.values():
            yield from m.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def load_param(self, name: str, value: np.ndarray):
        parts = name.split(".")
        mod = self
        for part in parts[:-1]:
            mod = mod._modules[part]
        leaf = parts[-1]
        if leaf in mod._params:
            old = mod._params[leaf]
            if old.shape != value.shape:
                raise ValueError(f"param {name}: shape {value.shape} != {old.shape}")
            old.data = value.astype(old.dtype)
        elif leaf in mod._buffers:
            mod.set_buffer(leaf, value.astype(mod._buffers[leaf].dtype))
        else:
            raise KeyError(f"unknown parameter {name}")

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class _ConvNd(Module):
    def __init__(self, nd, cin, cout, k, stride=1, padding=0, groups=1, bias=True,
                 rng=None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        ks = (k,) * nd if isinstance(k, int) else tuple(k)
        fan_in = (cin // groups) * int(np.prod(ks))
        self.stride = stride
        self.padding = padding
        self.groups = groups
        self.weight = Tensor(
            kaiming_uniform(rng, (cout, cin // groups) + ks, fan_in, dtype),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x):
        return T.conv(x, self.weight, self.bias, stride=self.stride,
                      padding=self.padding, groups=self.groups)


class Conv2d(_ConvNd):
    def __init__(self, cin, cout, k, **kw):
        super().__init__(2, cin, cout, k, **kw)


class Conv3d(_ConvNd):
    def __init__(self, cin, cout, k, **kw):
        super().__init__(3, cin, cout, k, **kw)


class _DeconvNd(Module):
    def __init__(self, nd, cin, cout, k, stride=1, padding=0, output_padding=0,
                 bias=True, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        ks = (k,) * nd if isinstance(k, int) else tuple(k)
        fan_in = cin * int(np.prod(ks))
        self.stride = stride
        self.padding = padding
        self.output_padding = output_padding
        self.weight = Tensor(
            kaiming_uniform(rng, (cin, cout) + ks, fan_in, dtype), requires_grad=True
        )
        self.bias = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x):
        return T.deconv(x, self.weight, self.bias, stride=self.stride,
                        padding=self.padding, output_padding=self.output_padding)


class Deconv2d(_DeconvNd):
    def __init__(self, cin, cout, k, **kw):
        super().__init__(2, cin, cout, k, **kw)


class Deconv3d(_DeconvNd):
    def __init__(self, cin, cout, k, **kw):
        super().__init__(3, cin, cout, k, **kw)


class BatchNorm(Module):
    """Batch normalization over all axes except the channel axis (axis 1).

    Works for 4D and 5D inputs. Running statistics are tracked with the given
    momentum and used in eval mode.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.scale = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.shift = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float64))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float64))

    def forward(self, x):
        bshape = (1, self.channels) + (1,) * (x.ndim - 2)
        scale = T.reshape(self.scale, bshape)
        shift = T.reshape(self.shift, bshape)
        if self.training:
            mean, var, n = T.batch_stats(x, channel_axis=1)
            unbiased = var.data * (n / max(n - 1, 1))
            m = self.momentum
            self.set_buffer("running_mean",
                            (1 - m) * self.running_mean + m * mean.data.reshape(-1))
            self.set_buffer("running_var",
                            (1 - m) * self.running_var + m * unbiased.reshape(-1))
            return T.normalize_batch(x, mean, var, scale, shift, self.eps)
        mean = Tensor(self.running_mean.reshape(bshape), dtype=x.dtype)
        var = Tensor(self.running_var.reshape(bshape), dtype=x.dtype)
        return T.normalize_batch(x, mean, var, scale, shift, self.eps)


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        self.layers = list(layers)
        for i, layer in enumerate(layers):
            self._modules[str(i)] = layer

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class Gelu(Module):
    def forward(self, x):
        return T.gelu(x)


class LeakyRelu(Module):
    def __init__(self, slope=0.1):
        super().__init__()
        self.slope = slope

    def forward(self, x):
        return T.leaky_relu(x, self.slope)


def conv_bn_gelu(nd, cin, cout, k=3, stride=1, padding=1, rng=None):
    conv_cls = Conv2d if nd == 2 else Conv3d
    return Sequential(
        conv_cls(cin, cout, k, stride=stride, padding=padding, bias=False, rng=rng),
        BatchNorm(cout),
        Gelu(),
    )


def deconv_bn_gelu(nd, cin, cout, k=3, stride=2, padding=1, output_padding=1, rng=None):
    deconv_cls = Deconv2d if nd == 2 else Deconv3d
    return Sequential(
        deconv_cls(cin, cout, k, stride=stride, padding=padding,
                   output_padding=output_padding, bias=False, rng=rng),
        BatchNorm(cout),
        Gelu(),
    )
