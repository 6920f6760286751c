import numpy as np
import pytest

from slotbench.engine import (
    LinearRegressor,
    LogisticClassifier,
    MlpRegressor,
    ModelInstance,
    OptimizerState,
    PlateauScheduler,
    SplitArrays,
    Tensor,
    TrainBudget,
    backward,
    bytes_for_batch,
    clip_gradients,
    cross_entropy_loss,
    finite_difference_gradient,
    fit,
    forward,
    forward_with_loss,
    load_checkpoint,
    mse_loss,
    save_checkpoint,
    step,
    write_history_csv,
)
from slotbench.errors import NonFiniteGradient, ShapeMismatch

rng = np.random.default_rng(7)


def _linear_w2():
    model = LinearRegressor(1, 1)
    model.set_parameters({
        "w_out": Tensor(np.array([[2.0]]), name="w_out"),
        "b_out": Tensor(np.array([0.0]), name="b_out"),
    })
    return model


def test_forward_linear_prediction():
    model = _linear_w2()
    batch = {"features": Tensor(np.array([[[3.0]]])), "targets": Tensor(np.zeros((1, 1, 1)))}
    outputs, tape = forward(model, batch)
    assert outputs["predictions"].data.reshape(()) == 6.0
    assert len(tape) > 0


def test_forward_missing_required_key():
    model = _linear_w2()
    with pytest.raises(ShapeMismatch, match="targets"):
        forward(model, {"features": Tensor(np.zeros((1, 1, 1)))})


def test_forward_rejects_disagreeing_batch_dims():
    model = _linear_w2()
    batch = {"features": Tensor(np.zeros((2, 1, 1))), "targets": Tensor(np.zeros((3, 1, 1)))}
    with pytest.raises(ShapeMismatch, match="leading batch"):
        forward(model, batch)


def test_identical_rows_give_identical_predictions():
    model = MlpRegressor(4, hidden_widths=[5])
    model.init_parameters(3)
    row = rng.normal(size=(1, 2, 2))
    batch = {
        "features": Tensor(np.concatenate([row, row])),
        "targets": Tensor(np.zeros((2, 1, 1))),
    }
    outputs, _ = forward(model, batch)
    preds = outputs["predictions"].data
    assert np.array_equal(preds[0], preds[1])


def test_backward_quadratic_analytic():
    # L = (w*x)^2 with w=2, x=3 -> dL/dw = 2*w*x*x = 36
    model = _linear_w2()
    batch = {"features": Tensor(np.array([[[3.0]]])), "targets": Tensor(np.zeros((1, 1, 1)))}
    _, loss, tape = forward_with_loss(model, batch, mse_loss)
    grads = backward(tape, loss, model.parameters)
    assert grads.by_name["w_out"].reshape(()) == 36.0


def test_backward_flags_unreached_parameters():
    model = _linear_w2()
    params = dict(model.parameters)
    params["w_spare"] = Tensor(np.ones(3), name="w_spare")
    batch = {"features": Tensor(np.array([[[3.0]]])), "targets": Tensor(np.zeros((1, 1, 1)))}
    _, loss, tape = forward_with_loss(model, batch, mse_loss)
    grads = backward(tape, loss, params)
    assert grads.unreached == {"w_spare"}
    assert np.array_equal(grads.by_name["w_spare"], np.zeros(3))


def _fd_agreement(model, batch, loss_fn, step_size=1e-6):
    _, loss, tape = forward_with_loss(model, batch, loss_fn)
    analytic = backward(tape, loss, model.parameters)

    def scalar_loss(m, b):
        _, l, _ = forward_with_loss(m, b, loss_fn)
        return l.item()

    numeric = finite_difference_gradient(model, batch, scalar_loss, step=step_size)
    worst = 0.0
    for name in analytic.by_name:
        diff = np.abs(analytic.by_name[name] - numeric[name])
        ok = (diff <= 1e-8) | (diff <= 1e-6 * np.abs(numeric[name]))
        assert ok.all(), f"{name}: max diff {diff.max()}"
        worst = max(worst, float(diff.max()))
    return worst


def test_gradients_match_finite_differences_two_layer():
    model = MlpRegressor(4, hidden_widths=[6], num_targets=2, activation="tanh")
    model.init_parameters(11)
    batch = {
        "features": Tensor(rng.normal(size=(3, 2, 2))),
        "targets": Tensor(rng.normal(size=(3, 1, 2))),
    }
    _fd_agreement(model, batch, mse_loss)


def test_classifier_gradients_match_finite_differences():
    model = LogisticClassifier(4, num_classes=3)
    model.init_parameters(5)
    batch = {
        "features": Tensor(rng.normal(size=(4, 2, 2))),
        "targets": Tensor(np.array([0.0, 2.0, 1.0, 2.0])),
    }
    _fd_agreement(model, batch, cross_entropy_loss)


def test_finite_difference_on_pure_quadratic():
    model = _linear_w2()
    batch = {"features": Tensor(np.array([[[3.0]]])), "targets": Tensor(np.zeros((1, 1, 1)))}

    def scalar_loss(m, b):
        _, l, _ = forward_with_loss(m, b, mse_loss)
        return l.item()

    numeric = finite_difference_gradient(model, batch, scalar_loss, step=1e-6)
    assert abs(numeric["w_out"].reshape(()) - 36.0) < 1e-5  # O(step^2) truncation


def test_finite_difference_zero_parameter_model():
    class NoParams(ModelInstance):
        def __init__(self):
            super().__init__(1, 1)

        def parameter_specs(self):
            return []

        def compute(self, x2d, batch):
            from slotbench.engine import autodiff as ad

            return ad.reshape(x2d, (x2d.data.shape[0], 1, 1))

    model = NoParams()
    model.init_parameters(0)
    batch = {"features": Tensor(np.ones((2, 1, 1))), "targets": Tensor(np.zeros((2, 1, 1)))}
    assert finite_difference_gradient(model, batch, lambda m, b: 0.0) == {}


def test_sgd_update_rule():
    params = {"w": Tensor(np.array(1.0))}
    updated, _ = step(OptimizerState(kind="sgd", lr=0.1), params, {"w": np.array(2.0)})
    assert updated["w"].data == pytest.approx(0.8)


def test_adamw_zero_decay_equals_adam():
    params = {"w": Tensor(np.array([1.0, -2.0, 0.3]))}
    grads = {"w": np.array([0.5, 0.25, -1.0])}
    a, _ = step(OptimizerState(kind="adam", lr=0.01), dict(params), dict(grads))
    b, _ = step(OptimizerState(kind="adamw", lr=0.01, weight_decay=0.0), dict(params), dict(grads))
    assert np.array_equal(a["w"].data, b["w"].data)


def test_adamw_decay_is_decoupled():
    params = {"w": Tensor(np.array([1.0]))}
    grads = {"w": np.array([0.5])}
    plain, _ = step(OptimizerState(kind="adamw", lr=0.01, weight_decay=0.0), dict(params), dict(grads))
    decayed, _ = step(OptimizerState(kind="adamw", lr=0.01, weight_decay=0.1), dict(params), dict(grads))
    assert decayed["w"].data == pytest.approx(plain["w"].data - 0.01 * 0.1 * 1.0)


def test_non_finite_gradient_guard():
    params = {"w": Tensor(np.array(1.0))}
    with pytest.raises(NonFiniteGradient):
        step(OptimizerState(kind="sgd", lr=0.1), params, {"w": np.array(np.nan)})


def test_tiny_lr_is_a_near_fixed_point():
    params = {"w": Tensor(np.array([1.0, 2.0]))}
    updated, _ = step(OptimizerState(kind="sgd", lr=1e-15), params, {"w": np.ones(2)})
    assert np.abs(updated["w"].data - params["w"].data).max() <= 1e-14


def test_sgd_monotone_on_convex_quadratic():
    # f(w) = w^2, curvature 2, stable for lr < 1
    w = 5.0
    opt = OptimizerState(kind="sgd", lr=0.4)
    losses = []
    params = {"w": Tensor(np.array(w))}
    for _ in range(30):
        losses.append(float(params["w"].data) ** 2)
        params, opt = step(opt, params, {"w": 2.0 * params["w"].data})
    assert all(a >= b for a, b in zip(losses, losses[1:]))


def test_clip_gradients_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped = clip_gradients(grads, 1.0)
    norm = np.sqrt(sum(float((g * g).sum()) for g in clipped.values()))
    assert norm == pytest.approx(1.0)
    assert clip_gradients(grads, 10.0) is grads


def _fittable_split(n=32, seed=0):
    g = np.random.default_rng(seed)
    x = g.normal(size=(n, 2, 2))
    w = np.array([1.0, -2.0, 0.5, 3.0]).reshape(4, 1)
    y = (x.reshape(n, 4) @ w).reshape(n, 1, 1)
    return SplitArrays(features=x, targets=y)


def test_fit_exactly_fittable_linear_regression():
    # closed-form least squares reaches 0 on this data; training must get below 1e-8
    split = _fittable_split()
    flat = split.features.reshape(len(split), 4)
    residual = flat @ np.linalg.lstsq(flat, split.targets.reshape(-1), rcond=None)[0]
    assert np.abs(residual - split.targets.reshape(-1)).max() < 1e-10

    model = LinearRegressor(4, 1)
    model.init_parameters(0)
    result = fit(
        model, OptimizerState(kind="adam", lr=0.05), split, None, mse_loss,
        TrainBudget(max_epochs=600), seed=0, batch_size=32,
    )
    assert result.final_train_loss < 1e-8


def test_plateau_scheduler_reduces_after_patience():
    sched = PlateauScheduler(patience=5, factor=0.9)
    assert sched.observe(1.0) is False
    reductions = [sched.observe(1.0) for _ in range(5)]
    assert reductions == [False, False, False, False, True]


def test_fit_plateau_reduces_lr():
    # constant targets: loss is flat after the first epochs, triggering the scheduler
    split = SplitArrays(features=np.zeros((8, 1, 1)), targets=np.zeros((8, 1, 1)))
    model = LinearRegressor(1, 1)
    model.zero_parameters()
    opt = OptimizerState(
        kind="sgd", lr=0.1, scheduler=PlateauScheduler(patience=5, factor=0.9)
    )
    result = fit(model, opt, split, None, mse_loss, TrainBudget(max_epochs=7), seed=0)
    assert result.lr_history[4] == pytest.approx(0.1)
    assert result.lr_history[6] == pytest.approx(0.09)


def test_fit_same_seed_identical_history():
    split = _fittable_split()
    histories = []
    for _ in range(2):
        model = LinearRegressor(4, 1)
        model.init_parameters(3)
        result = fit(
            model, OptimizerState(kind="adamw", lr=0.01), split, None, mse_loss,
            TrainBudget(max_epochs=20), seed=9, batch_size=8,
        )
        histories.append(result.loss_history)
    assert histories[0] == histories[1]


def test_checkpoint_round_trip(tmp_path):
    split = _fittable_split(n=8)
    model = LinearRegressor(4, 1)
    model.init_parameters(1)
    result = fit(
        model, OptimizerState(kind="adamw", lr=0.01), split, None, mse_loss,
        TrainBudget(max_epochs=3), seed=0, batch_size=8,
    )
    save_checkpoint(tmp_path / "ckpt", result.model, result.optimizer)
    params, optimizer = load_checkpoint(tmp_path / "ckpt")
    for name, tensor in result.model.parameters.items():
        assert np.array_equal(params[name].data, tensor.data)
    assert optimizer.kind == "adamw"
    assert optimizer.step_count == result.optimizer.step_count
    for name in result.optimizer.moments:
        assert np.array_equal(
            optimizer.moments[name]["m"], result.optimizer.moments[name]["m"]
        )


def test_history_csv_format(tmp_path):
    split = _fittable_split(n=8)
    model = LinearRegressor(4, 1)
    model.init_parameters(1)
    result = fit(
        model, OptimizerState(kind="sgd", lr=0.01), split, None, mse_loss,
        TrainBudget(max_epochs=2), seed=0, batch_size=8,
    )
    path = tmp_path / "history.csv"
    write_history_csv(path, result)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,train_loss,val_metric,lr"
    assert len(lines) == 3
    epoch, train_loss, val_metric, lr = lines[1].split(",")
    assert int(epoch) == 1 and float(lr) == 0.01
    assert float(train_loss) == result.loss_history[0]


def test_batch_fit_estimate_monotone_in_batch_size():
    model = MlpRegressor(8, hidden_widths=[4])
    model.init_parameters(0)

    def bytes_at(b):
        batch = {
            "features": Tensor(np.zeros((b, 2, 4))),
            "targets": Tensor(np.zeros((b, 1, 1))),
        }
        return bytes_for_batch(model, batch, "adamw")

    small, large = bytes_at(512), bytes_at(1024)
    assert small < large
    assert bytes_at(512) > 0


def test_moment_buffers_counted():
    model = LinearRegressor(4, 1)
    model.init_parameters(0)
    batch = {"features": Tensor(np.zeros((2, 2, 2))), "targets": Tensor(np.zeros((2, 1, 1)))}
    with_moments = bytes_for_batch(model, batch, "adam")
    without = bytes_for_batch(model, batch, "sgd")
    assert with_moments - without == 2 * model.parameter_count() * 8
