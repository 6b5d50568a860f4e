from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from datalens.errors import DimensionError
from datalens.numerics.params import ParamVector

FINAL_LAYER = ("out.weight", "out.bias")


@dataclass(frozen=True)
class ConvBlock:
    filters: int
    kernel_size: int
    pool: int = 1


@dataclass(frozen=True)
class ArchitectureSpec:
    """Conv blocks (conv -> ReLU -> maxpool), optional hidden dense layer, final dense.

    ``dense_units == 0`` means no hidden layer; with no conv blocks either the
    model is multinomial logistic regression on the flattened input.
    """

    input_channels: int
    input_length: int
    conv_blocks: tuple[ConvBlock, ...] = ()
    dense_units: int = 0
    num_classes: int = 2

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, ConvBlock) else ConvBlock(*b) if not isinstance(b, dict)
                       else ConvBlock(**b) for b in self.conv_blocks)
        object.__setattr__(self, "conv_blocks", blocks)
        if self.num_classes < 2:
            raise DimensionError("num_classes must be >= 2")
        if self.input_channels < 1 or self.input_length < 1:
            raise DimensionError("input shape must be positive")
        length = self.input_length
        for i, b in enumerate(blocks):
            if b.filters < 1 or b.kernel_size < 1 or b.pool < 1:
                raise DimensionError(f"conv block {i} has non-positive sizes")
            if b.kernel_size > length:
                raise DimensionError(f"conv block {i}: kernel {b.kernel_size} exceeds length {length}")
            length = (length - b.kernel_size + 1) // b.pool
            if length < 1:
                raise DimensionError(f"conv block {i}: pooling leaves no positions")
        if self.dense_units < 0:
            raise DimensionError("dense_units must be >= 0")

    @classmethod
    def default(cls, input_channels: int, input_length: int, num_classes: int) -> "ArchitectureSpec":
        return cls(input_channels, input_length,
                   (ConvBlock(16, 5, 2), ConvBlock(32, 5, 2)), 0, num_classes)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        d = dict(d)
        d["conv_blocks"] = tuple(ConvBlock(**b) for b in d.get("conv_blocks", ()))
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_blocks"] = [asdict(b) for b in self.conv_blocks]
        return d

    def conv_shapes(self) -> list[tuple[int, int, int]]:
        """(in_channels, in_length, out_length_before_pool) per block."""
        out, c, length = [], self.input_channels, self.input_length
        for b in self.conv_blocks:
            lo = length - b.kernel_size + 1
            out.append((c, length, lo))
            c, length = b.filters, lo // b.pool
        return out

    @property
    def flat_dim(self) -> int:
        c, length = self.input_channels, self.input_length
        for b in self.conv_blocks:
            c, length = b.filters, (length - b.kernel_size + 1) // b.pool
        return c * length

    @property
    def feature_dim(self) -> int:
        return self.dense_units if self.dense_units else self.flat_dim

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []
        c = self.input_channels
        for i, b in enumerate(self.conv_blocks):
            shapes += [(f"conv{i}.weight", (b.filters, c, b.kernel_size)),
                       (f"conv{i}.bias", (b.filters,))]
            c = b.filters
        if self.dense_units:
            shapes += [("hidden.weight", (self.dense_units, self.flat_dim)),
                       ("hidden.bias", (self.dense_units,))]
        shapes += [("out.weight", (self.num_classes, self.feature_dim)),
                   ("out.bias", (self.num_classes,))]
        return shapes

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.param_shapes())

    def init_params(self, rng: np.random.Generator) -> ParamVector:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases alike."""
        arrays = []
        fan_in = None
        for name, shape in self.param_shapes():
            if name.endswith(".weight"):
                fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            arrays.append((name, rng.uniform(-bound, bound, size=shape)))
        return ParamVector.from_arrays(arrays)


@dataclass(frozen=True, eq=False)
class ModelState:
    spec: ArchitectureSpec
    params: ParamVector
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = [(n, int(np.prod(s))) for n, s in self.spec.param_shapes()]
        got = [(s.name, s.length) for s in self.params.segments]
        if expected != got:
            raise DimensionError(f"parameter layout {got} does not match spec {expected}")

    @property
    def feature_dim(self) -> int:
        return self.spec.feature_dim

    def arrays(self, values: np.ndarray | None = None) -> dict[str, np.ndarray]:
        """Named, shaped views into ``values`` (defaults to the stored params)."""
        values = self.params.values if values is None else values
        out = {}
        for (name, shape), seg in zip(self.spec.param_shapes(), self.params.segments):
            out[name] = values[seg.offset:seg.offset + seg.length].reshape(shape)
        return out

    def with_params(self, values: np.ndarray) -> "ModelState":
        return ModelState(self.spec, self.params.with_values(values), dict(self.meta))

    # numerics protocol -------------------------------------------------
    def backprop(self, batch, tangent=None):
        from datalens.model.network import loss_grad_hvp

        return loss_grad_hvp(self, batch, tangent)
