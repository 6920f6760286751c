import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slotbench.data import (
    SplitDatasetContainer,
    TransformSpec,
    UnitSeries,
    WindowSpec,
    apply_transform,
    attach_targets,
    compute_fit_statistics,
    construct_rul_targets,
    expected_window_count,
    fit_transform,
    inverse_transform,
    leakage_audit,
    load_container,
    save_container,
    window,
)
from slotbench.contracts import TaskContract
from slotbench.errors import EmptyTrainSplit, UnknownChannel
from slotbench.synthetic import SyntheticDegradationSpec, generate_synthetic

PROG = TaskContract.for_task("prognostics")
DIAG = TaskContract.for_task("diagnostics", evaluation_unit="window", num_targets=3)


def unit(uid, values, labels=None):
    arr = np.asarray(values, dtype=np.float64).reshape(-1, 1)
    return UnitSeries(
        unit_id=uid, channels=arr, channel_names=["s0"],
        labels=None if labels is None else np.asarray(labels),
    )


def container_of(train=(), val=(), test=()):
    return SplitDatasetContainer(splits={"train": list(train), "val": list(val), "test": list(test)})


ZSPEC = TransformSpec(name="zscore", fit_on="train", apply_to=("train", "val", "test"), assign_to="all")


# --- target construction ---

def test_rul_targets_clipped_countdown():
    u = unit("u", np.zeros(10))
    assert construct_rul_targets(u, 5).tolist() == [5, 5, 5, 5, 5, 4, 3, 2, 1, 0]


def test_rul_targets_zero_clip():
    u = unit("u", np.zeros(4))
    assert construct_rul_targets(u, 0).tolist() == [0, 0, 0, 0]


def test_rul_targets_inactive_clip():
    u = unit("u", np.zeros(5))
    assert construct_rul_targets(u, 99).tolist() == [4, 3, 2, 1, 0]


@settings(max_examples=80, deadline=None)
@given(length=st.integers(1, 50), clip=st.floats(0, 100, allow_nan=False))
def test_targets_non_increasing_and_end_at_zero(length, clip):
    targets = construct_rul_targets(unit("u", np.zeros(length)), clip)
    assert (np.diff(targets) <= 0).all()
    assert targets[-1] == 0.0


# --- transforms ---

def test_zscore_statistics_over_train():
    fitted = fit_transform(ZSPEC, container_of(train=[unit("a", [0.0, 2.0])]))
    assert fitted.fitted_statistics["mean"].tolist() == [1.0]
    assert fitted.fitted_statistics["std"].tolist() == [1.0]


def test_zscore_apply_and_inverse():
    cont = container_of(train=[unit("a", [0.0, 2.0])], test=[unit("b", [3.0])])
    fitted = fit_transform(ZSPEC, cont)
    out = apply_transform(fitted, cont)
    assert out.units("test")[0].channels.reshape(-1).tolist() == [2.0]
    restored = inverse_transform(fitted, np.array([[2.0]]))
    assert restored.reshape(()).item() == pytest.approx(3.0, abs=1e-12)


def test_apply_respects_apply_to_routing():
    cont = container_of(train=[unit("a", [0.0, 2.0])], test=[unit("b", [3.0, 5.0])])
    spec = TransformSpec(name="zscore", fit_on="train", apply_to=("train",), assign_to="all")
    fitted = fit_transform(spec, cont)
    before = hashlib.sha256(cont.units("test")[0].channels.tobytes()).hexdigest()
    out = apply_transform(fitted, cont)
    after = hashlib.sha256(out.units("test")[0].channels.tobytes()).hexdigest()
    assert before == after
    assert out.units("train")[0].channels.reshape(-1).tolist() == [-1.0, 1.0]


def test_inverse_of_apply_is_identity():
    g = np.random.default_rng(0)
    values = g.normal(3.0, 2.5, size=(40, 1))
    cont = container_of(train=[unit("a", values)])
    fitted = fit_transform(ZSPEC, cont)
    out = apply_transform(fitted, cont)
    back = inverse_transform(fitted, out.units("train")[0].channels)
    assert np.abs(back - values).max() < 1e-12


def test_minmax_transform():
    spec = TransformSpec(name="minmax", fit_on="train", apply_to=("train",), assign_to="all")
    cont = container_of(train=[unit("a", [1.0, 3.0, 5.0])])
    fitted = fit_transform(spec, cont)
    out = apply_transform(fitted, cont)
    assert out.units("train")[0].channels.reshape(-1).tolist() == [0.0, 0.5, 1.0]


def test_unknown_channel_rejected():
    spec = TransformSpec(name="zscore", fit_on="train", apply_to=("train",), assign_to=["s9"])
    with pytest.raises(UnknownChannel):
        fit_transform(spec, container_of(train=[unit("a", [1.0])]))


def test_empty_train_split_rejected():
    with pytest.raises(EmptyTrainSplit):
        fit_transform(ZSPEC, container_of(test=[unit("a", [1.0])]))


def test_fingerprint_changes_with_train_membership():
    base = fit_transform(ZSPEC, container_of(train=[unit("a", [0.0, 2.0])]))
    extended = fit_transform(
        ZSPEC, container_of(train=[unit("a", [0.0, 2.0]), unit("b", [0.0, 2.0])])
    )
    # same statistics, different fitted membership -> different fingerprint
    assert np.array_equal(
        base.fitted_statistics["mean"], extended.fitted_statistics["mean"]
    )
    assert base.fit_fingerprint != extended.fit_fingerprint


# --- windowing ---

def test_window_starts_and_count():
    cont = attach_targets(container_of(train=[unit("u", np.arange(10))]), clip=99)
    ws = window(cont, WindowSpec(length=4, stride=2), PROG).split("train")
    assert ws.starts.tolist() == [0, 2, 4, 6]
    assert len(ws) == 4
    assert ws.features.shape == (4, 4, 1)


def test_window_too_short_unit_yields_nothing():
    cont = attach_targets(container_of(train=[unit("u", np.arange(3))]), clip=99)
    ws = window(cont, WindowSpec(length=4, stride=1), PROG).split("train")
    assert len(ws) == 0


def test_window_right_edge_target():
    cont = attach_targets(container_of(train=[unit("u", np.arange(10))]), clip=99)
    ws = window(cont, WindowSpec(length=4, stride=2), PROG).split("train")
    # window at start=6 covers t=6..9 and carries target(t=9) = 0
    row = ws.starts.tolist().index(6)
    assert ws.targets[row].reshape(()) == 0.0


def test_window_labels_for_diagnostics():
    labels = [0] * 5 + [2] * 5
    cont = container_of(train=[unit("u", np.arange(10), labels=labels)])
    ws = window(cont, WindowSpec(length=4, stride=2), DIAG).split("train")
    # right edges fall at t = 3, 5, 7, 9
    assert ws.targets.tolist() == [0.0, 2.0, 2.0, 2.0]


def test_window_canonical_ordering():
    cont = attach_targets(
        container_of(train=[unit("b", np.arange(6)), unit("a", np.arange(6))]), clip=99
    )
    ws = window(cont, WindowSpec(length=3, stride=3), PROG).split("train")
    assert ws.unit_ids == ["a", "a", "b", "b"]
    assert ws.starts.tolist() == [0, 3, 0, 3]


@settings(max_examples=100, deadline=None)
@given(
    length=st.integers(1, 60),
    window_length=st.integers(1, 20),
    stride=st.integers(1, 10),
)
def test_window_count_formula(length, window_length, stride):
    cont = attach_targets(container_of(train=[unit("u", np.zeros(length))]), clip=10)
    ws = window(cont, WindowSpec(length=window_length, stride=stride), PROG).split("train")
    # independent enumeration
    brute = sum(1 for start in range(0, length + 1) if start % stride == 0 and start + window_length <= length)
    assert len(ws) == brute
    assert len(ws) == expected_window_count(length, window_length, stride)


# --- leakage audit ---

def test_audit_clean_pipeline():
    cont = container_of(train=[unit("a", [0.0, 2.0])], test=[unit("b", [9.0, 11.0])])
    fitted = fit_transform(ZSPEC, cont)
    report = leakage_audit([fitted], cont)
    assert report.clean
    assert report.max_statistic_deviation == 0.0


def test_audit_flags_global_fit():
    cont = container_of(train=[unit("a", [0.0, 2.0])], test=[unit("b", [9.0, 11.0])])
    fitted = fit_transform(ZSPEC, cont)
    # plant statistics secretly computed over train + test
    fitted.fitted_statistics = compute_fit_statistics(
        ZSPEC, cont.units("train") + cont.units("test")
    )
    report = leakage_audit([fitted], cont)
    assert not report.clean
    assert any(v.rule_id == "empirical_mismatch" and v.slot == "transform" for v in report.violations)


def test_audit_flags_split_overlap():
    cont = container_of(train=[unit("a", [0.0, 2.0])], test=[unit("a", [1.0, 3.0])])
    fitted = fit_transform(ZSPEC, cont)
    report = leakage_audit([fitted], cont)
    assert any(v.rule_id == "split_overlap" and v.slot == "datasource" for v in report.violations)


def test_audit_flags_bad_declaration():
    cont = container_of(train=[unit("a", [0.0, 2.0])])
    fitted = fit_transform(ZSPEC, cont)
    object.__setattr__(fitted.spec, "fit_on", "all")
    report = leakage_audit([fitted], cont)
    assert any(v.rule_id == "leakage_decl" for v in report.violations)


# --- synthetic generator ---

def test_synthetic_determinism():
    spec = SyntheticDegradationSpec(seed=5)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    for split in ("train", "val", "test"):
        for ua, ub in zip(a.units(split), b.units(split)):
            assert ua.unit_id == ub.unit_id
            assert np.array_equal(ua.channels, ub.channels)
            assert np.array_equal(ua.labels, ub.labels)


def test_synthetic_unit_counts_and_distinct_ids():
    spec = SyntheticDegradationSpec(n_units={"train": 2, "val": 1, "test": 1}, seed=0)
    cont = generate_synthetic(spec)
    ids = cont.all_unit_ids()
    assert len(ids) == 4
    assert len(set(ids)) == 4
    assert cont.split_overlaps() == []


def test_synthetic_linear_zero_noise_degrades_to_floor():
    spec = SyntheticDegradationSpec(
        n_units={"train": 2, "val": 0, "test": 0}, noise_scale=0.0, degradation="linear", seed=3
    )
    for u in generate_synthetic(spec).units("train"):
        # latent hits exactly 0 at the final step: every channel ends at its offset
        # and decreases monotonically toward it (positive mixing coefficients)
        drop = u.channels - u.channels[-1]
        assert np.abs(drop[-1]).max() == 0.0
        assert (np.diff(drop, axis=0) <= 1e-12).all()
        assert u.labels[0] == 0 and u.labels[-1] == 2


def test_synthetic_exponential_monotone():
    spec = SyntheticDegradationSpec(
        n_units={"train": 1, "val": 0, "test": 0}, noise_scale=0.0,
        degradation="exponential", seed=3,
    )
    u = generate_synthetic(spec).units("train")[0]
    drop = u.channels - u.channels[-1]
    assert np.abs(drop[-1]).max() == 0.0
    assert (np.diff(drop, axis=0) <= 1e-12).all()


# --- pipeline purity and container IO ---

def test_pipeline_purity(synthetic_container):
    wspec = WindowSpec(length=16, stride=4)
    outputs = []
    for _ in range(2):
        cont = attach_targets(synthetic_container, clip=30)
        fitted = fit_transform(ZSPEC, cont)
        cont = apply_transform(fitted, cont)
        outputs.append(window(cont, wspec, PROG))
    a, b = outputs
    for split in ("train", "val", "test"):
        assert np.array_equal(a.split(split).features, b.split(split).features)
        assert np.array_equal(a.split(split).targets, b.split(split).targets)


def test_container_disk_round_trip(tmp_path, synthetic_container):
    save_container(synthetic_container, tmp_path)
    loaded = load_container(tmp_path)
    for split in ("train", "val", "test"):
        originals = synthetic_container.units(split)
        clones = loaded.units(split)
        assert [u.unit_id for u in clones] == [u.unit_id for u in originals]
        for orig, clone in zip(originals, clones):
            assert np.array_equal(orig.channels, clone.channels)
            assert clone.channel_names == orig.channel_names
            assert np.array_equal(orig.labels, clone.labels)


def test_unit_series_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        UnitSeries("u", np.array([[np.nan]]), ["s0"])
