"""The three reference architectures and whole-model evaluation.

    CNN : Conv 5x5 (1->16) -> ReLU -> Conv 5x5 (16->32) -> ReLU
          -> MaxPool 2x2 -> Flatten -> FC(10)          45,258 parameters
    LSTM: LSTM(128) -> LSTM(64, last step) -> FC(8)   640,264 parameters
    MLP : FC(512) -> ReLU -> FC(256) -> ReLU -> FC(10)  1,707,274 parameters

Convolutions are stride 1 with no padding, so the CNN's spatial trace is
28 -> 24 -> 20 -> 10. The LSTM consumes Bx8x1024 sequences and classifies
from the final timestep's hidden state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConsistencyError, DimensionError, ValidationError

MODEL_KINDS = ("cnn", "lstm", "mlp")

PARAM_COUNTS = {"cnn": 45_258, "lstm": 640_264, "mlp": 1_707_274}
INPUT_SHAPES = {"cnn": (1, 28, 28), "lstm": (8, 1024), "mlp": (3072,)}
NUM_CLASSES = {"cnn": 10, "lstm": 8, "mlp": 10}

EVAL_BATCH = 256


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_shape: tuple
    num_classes: int

    @classmethod
    def for_kind(cls, kind: str) -> "ModelSpec":
        if kind not in MODEL_KINDS:
            raise ValidationError(
                f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}"
            )
        return cls(kind, INPUT_SHAPES[kind], NUM_CLASSES[kind])


class Model:
    """A built network plus its spec and the seed it was initialized from."""

    def __init__(self, spec: ModelSpec, net: nn.Network, seed: int):
        self.spec = spec
        self.net = net
        self.seed = seed
        self.params = net.parameters()

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def param_count(self) -> int:
        return self.params.count

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, nn.ForwardCache]:
        if tuple(x.shape[1:]) != self.spec.input_shape:
            raise DimensionError(
                f"{self.kind} expects input shape Bx{self.spec.input_shape}, "
                f"got {tuple(x.shape)}"
            )
        return self.net.forward(x)

    def predict(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(x)
        return logits.argmax(axis=1)


def build_cnn(seed: int) -> Model:
    rng = np.random.default_rng(seed)
    layers = [
        nn.Conv2d("conv1", 1, 16, 5, rng),
        nn.ReLU(),
        nn.Conv2d("conv2", 16, 32, 5, rng),
        nn.ReLU(),
        nn.MaxPool2(),
        nn.Flatten(),
        nn.Dense("fc", 32 * 10 * 10, 10, rng),
    ]
    return _finish(ModelSpec.for_kind("cnn"), layers, seed)


def build_lstm(seed: int) -> Model:
    rng = np.random.default_rng(seed)
    layers = [
        nn.LSTM("lstm1", 1024, 128, rng, return_sequences=True),
        nn.LSTM("lstm2", 128, 64, rng, return_sequences=False),
        nn.Dense("fc", 64, 8, rng),
    ]
    return _finish(ModelSpec.for_kind("lstm"), layers, seed)


def build_mlp(seed: int) -> Model:
    rng = np.random.default_rng(seed)
    layers = [
        nn.Dense("fc1", 3072, 512, rng),
        nn.ReLU(),
        nn.Dense("fc2", 512, 256, rng),
        nn.ReLU(),
        nn.Dense("fc3", 256, 10, rng),
    ]
    return _finish(ModelSpec.for_kind("mlp"), layers, seed)


def _finish(spec: ModelSpec, layers: list, seed: int) -> Model:
    model = Model(spec, nn.Network(layers), seed)
    expected = PARAM_COUNTS[spec.kind]
    if model.param_count != expected:
        raise ConsistencyError(
            f"{spec.kind} built with {model.param_count} parameters, expected {expected}"
        )
    return model


_BUILDERS = {"cnn": build_cnn, "lstm": build_lstm, "mlp": build_mlp}


def build_model(kind: str, seed: int) -> Model:
    if kind not in _BUILDERS:
        raise ValidationError(
            f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}"
        )
    return _BUILDERS[kind](seed)


def evaluate(model: Model, dataset) -> float:
    """Top-1 accuracy over the whole dataset, batched at a fixed size.

    The batching is a memory bound only; the result is independent of it.
    """
    n = len(dataset)
    if n == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    labels = dataset.labels
    if labels.min() < 0 or labels.max() >= model.spec.num_classes:
        raise ValidationError(
            f"dataset labels exceed the model's {model.spec.num_classes} classes"
        )
    correct = 0
    for start in range(0, n, EVAL_BATCH):
        x = dataset.images[start : start + EVAL_BATCH]
        y = labels[start : start + EVAL_BATCH]
        correct += int((model.predict(x) == y).sum())
    return correct / n
