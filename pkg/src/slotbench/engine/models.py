"""Reference models, the planted-bug zoo, losses, and the forward contract.

Every model maps a batch dict to ``{"predictions": (B, 1, K), "targets": ...}``.
Window inputs arrive as (B, L, F) and are flattened internally. Parameter
initialization is deterministic uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
drawn from the run seed in declared parameter order.

The broken model family is a first-class deliverable: the sanity ladder's
tests are defined against it.
"""

from __future__ import annotations

import numpy as np

from ..contracts import TargetSemantics, TaskContract
from ..errors import ShapeMismatch
from . import autodiff as ad
from .autodiff import Tape, Tensor


class ModelInstance:
    """Named parameter tensors plus a forward contract."""

    target_semantics: TargetSemantics = TargetSemantics.CONTINUOUS

    def __init__(self, in_features: int, num_outputs: int):
        self.in_features = int(in_features)
        self.num_outputs = int(num_outputs)
        self.parameters: dict[str, Tensor] = {}

    # subclasses list (name, shape, fan_in) in declared order
    def parameter_specs(self) -> list[tuple[str, tuple[int, ...], int]]:
        raise NotImplementedError

    def compute(self, x2d: Tensor, batch: dict) -> Tensor:
        """Map flattened features (B, D) to predictions (B, 1, K)."""
        raise NotImplementedError

    def init_parameters(self, seed: int) -> None:
        rng = np.random.default_rng(np.random.PCG64(seed))
        params: dict[str, Tensor] = {}
        for name, shape, fan_in in self.parameter_specs():
            bound = 1.0 / np.sqrt(max(fan_in, 1))
            params[name] = Tensor(rng.uniform(-bound, bound, size=shape), name=name)
        self.parameters = params

    def zero_parameters(self) -> None:
        """All-zero parameters; classifier heads then emit exactly uniform logits."""
        self.parameters = {
            name: Tensor(np.zeros(shape), name=name)
            for name, shape, _ in self.parameter_specs()
        }

    def set_parameters(self, params: dict[str, Tensor]) -> None:
        self.parameters = dict(params)

    def parameter_count(self) -> int:
        return sum(t.size for t in self.parameters.values())

    def _flatten(self, features: Tensor) -> Tensor:
        data = features.data
        if data.ndim == 3:
            b = data.shape[0]
            return ad.reshape(features, (b, data.shape[1] * data.shape[2]))
        if data.ndim == 2:
            return features
        raise ShapeMismatch("features", f"expected (B, L, F) or (B, D), got {data.shape}")

    def run(self, batch: dict) -> dict:
        features = batch["features"]
        x2d = self._flatten(features)
        if x2d.data.shape[1] != self.in_features:
            raise ShapeMismatch(
                "features",
                f"model expects {self.in_features} flattened features, "
                f"got {x2d.data.shape[1]}",
            )
        predictions = self.compute(x2d, batch)
        return {"predictions": predictions, "targets": batch["targets"]}


class _AffineStack(ModelInstance):
    """Shared affine(+activation) stack used by the reference models."""

    activation = "relu"

    def __init__(self, in_features, num_outputs, hidden_widths=()):
        super().__init__(in_features, num_outputs)
        self.hidden_widths = [int(w) for w in hidden_widths]

    def parameter_specs(self):
        specs = []
        fan_in = self.in_features
        for i, width in enumerate(self.hidden_widths):
            specs.append((f"w{i}", (fan_in, width), fan_in))
            specs.append((f"b{i}", (width,), fan_in))
            fan_in = width
        specs.append(("w_out", (fan_in, self.num_outputs), fan_in))
        specs.append(("b_out", (self.num_outputs,), fan_in))
        return specs

    def _activate(self, t: Tensor) -> Tensor:
        return ad.relu(t) if self.activation == "relu" else ad.tanh(t)

    def compute(self, x2d, batch):
        h = x2d
        for i in range(len(self.hidden_widths)):
            h = self._activate(
                ad.add(ad.matmul(h, self.parameters[f"w{i}"]), self.parameters[f"b{i}"])
            )
        out = ad.add(ad.matmul(h, self.parameters["w_out"]), self.parameters["b_out"])
        b = out.data.shape[0]
        return ad.reshape(out, (b, 1, self.num_outputs))


class LinearRegressor(_AffineStack):
    target_semantics = TargetSemantics.CONTINUOUS

    def __init__(self, in_features, num_targets=1):
        super().__init__(in_features, num_targets, hidden_widths=())


class MlpRegressor(_AffineStack):
    target_semantics = TargetSemantics.CONTINUOUS

    def __init__(self, in_features, hidden_widths=(16,), num_targets=1, activation="relu"):
        super().__init__(in_features, num_targets, hidden_widths)
        self.activation = activation


class LogisticClassifier(_AffineStack):
    target_semantics = TargetSemantics.CLASS_LABEL

    def __init__(self, in_features, num_classes=2):
        super().__init__(in_features, num_classes, hidden_widths=())


class MlpClassifier(_AffineStack):
    target_semantics = TargetSemantics.CLASS_LABEL

    def __init__(self, in_features, hidden_widths=(16,), num_classes=2, activation="relu"):
        super().__init__(in_features, num_classes, hidden_widths)
        self.activation = activation


# --- the planted-bug zoo ---------------------------------------------------------

BUG_KINDS = ("dead_branch", "batch_mixing", "constant_output", "nan_loss", "wrong_shape")


class BrokenModel(_AffineStack):
    """Deliberately wrong models, one nameable wiring bug each.

    dead_branch     an extra parameter never used in the forward pass
    batch_mixing    sample rows contaminated with the batch mean
    constant_output predictions ignore the input entirely
    nan_loss        forward emits NaN through a log of a negative value
    wrong_shape     predictions come back (B, K) instead of (B, 1, K)
    """

    def __init__(self, in_features, bug: str, num_outputs=1, hidden_widths=(8,),
                 semantics=TargetSemantics.CONTINUOUS):
        if bug not in BUG_KINDS:
            raise ValueError(f"unknown bug kind {bug!r}")
        super().__init__(in_features, num_outputs, hidden_widths)
        self.bug = bug
        self.target_semantics = semantics

    def parameter_specs(self):
        specs = super().parameter_specs()
        if self.bug == "dead_branch":
            specs.append(("w_dead", (self.in_features, 4), self.in_features))
        if self.bug == "constant_output":
            # only the head bias: gradient flows, memorization cannot
            specs = [s for s in specs if s[0] == "b_out"]
        return specs

    def compute(self, x2d, batch):
        b = x2d.data.shape[0]
        if self.bug == "constant_output":
            head = ad.reshape(self.parameters["b_out"], (1, 1, self.num_outputs))
            return ad.broadcast_to(head, (b, 1, self.num_outputs))
        if self.bug == "batch_mixing":
            x2d = ad.add(x2d, ad.mean(x2d, axis=0, keepdims=True))
        if self.bug == "nan_loss":
            first = ad.matmul(x2d, self.parameters["w_out" if not self.hidden_widths else "w0"])
            poisoned = ad.log(ad.sub(ad.neg(ad.mul(first, first)),
                                     ad.broadcast_to(Tensor(np.ones(())), first.data.shape)))
            reduced = ad.mean(poisoned, axis=1, keepdims=True)
            return ad.broadcast_to(ad.reshape(reduced, (b, 1, 1)), (b, 1, self.num_outputs))
        out = super().compute(x2d, batch)
        if self.bug == "wrong_shape":
            return ad.reshape(out, (b, self.num_outputs))
        return out


# --- forward contract and losses ---------------------------------------------------


def forward(model: ModelInstance, batch: dict, contract: TaskContract | None = None):
    """Run one forward pass under a fresh tape, enforcing the batch and
    prediction-shape contracts. Returns (output map, tape)."""
    required = set(contract.required_batch_keys) if contract else {"features", "targets"}
    for key in sorted(required):
        if key not in batch:
            raise ShapeMismatch(key, "required batch key is missing")
    sizes = {key: batch[key].data.shape[0] for key in sorted(required)}
    if len(set(sizes.values())) > 1:
        raise ShapeMismatch(
            "batch", f"leading batch dimensions disagree: {sizes}"
        )
    b = next(iter(sizes.values()))
    tape = Tape()
    with tape:
        outputs = model.run(batch)
    for key in ("predictions", "targets"):
        if key not in outputs:
            raise ShapeMismatch(key, "missing from model output map")
    pred_shape = outputs["predictions"].data.shape
    expected_k = contract.num_targets if contract else model.num_outputs
    if pred_shape != (b, 1, expected_k):
        raise ShapeMismatch(
            "predictions", f"expected {(b, 1, expected_k)}, got {pred_shape}"
        )
    return outputs, tape


def forward_with_loss(
    model: ModelInstance,
    batch: dict,
    loss_fn,
    contract: TaskContract | None = None,
):
    """Forward pass plus loss on one shared tape, so backward sees the
    whole graph. Returns (outputs, loss, tape)."""
    outputs, tape = forward(model, batch, contract)
    with tape:
        loss = loss_fn(outputs)
    return outputs, loss, tape


def mse_loss(outputs: dict) -> Tensor:
    diff = ad.sub(outputs["predictions"], outputs["targets"])
    return ad.mean(ad.mul(diff, diff))


def cross_entropy_loss(outputs: dict) -> Tensor:
    logits = outputs["predictions"]
    b, _, c = logits.data.shape
    logp = ad.log_softmax(ad.reshape(logits, (b, c)))
    labels = outputs["targets"].data.reshape(-1).astype(np.int64)
    onehot = np.zeros((b, c))
    onehot[np.arange(b), labels] = 1.0
    picked = ad.sum_(ad.mul(logp, Tensor(onehot)), axis=1)
    return ad.neg(ad.mean(picked))


def loss_for(semantics: TargetSemantics):
    if semantics is TargetSemantics.CLASS_LABEL:
        return cross_entropy_loss
    return mse_loss
