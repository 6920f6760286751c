import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slotbench.config import (
    compose_tree,
    parse_config,
    replay_trace,
    tree_diff,
)
from slotbench.errors import InvalidOverridePath, ParseError, UnresolvedDefault


def test_parse_empty_document():
    assert parse_config("{}") == {}
    assert parse_config("") == {}


def test_parse_json_binding_with_scientific_float():
    tree = parse_config('{"model": "mlp", "lr": 1.0e-3}')
    assert tree == {"model": "mlp", "lr": 1.0e-3}
    assert list(tree) == ["model", "lr"]  # key order preserved


def test_parse_yaml_front_end_normalizes():
    tree = parse_config("model: mlp\nlr: 1.0e-3\n")
    assert tree == {"model": "mlp", "lr": 0.001}
    # PyYAML quirk: 1e-3 without the dot must still be a float
    assert parse_config("lr: 1e-3\n") == {"lr": 0.001}


def test_parse_duplicate_sibling_key_json():
    with pytest.raises(ParseError, match="duplicate key"):
        parse_config('{"a": 1, "a": 2}')


def test_parse_duplicate_sibling_key_yaml():
    with pytest.raises(ParseError, match="duplicate key"):
        parse_config("a: 1\na: 2\n")


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_config('{"a": }')
    assert err.value.line == 1
    assert err.value.column is not None


def test_compose_last_writer_wins():
    tree, _ = compose_tree({"lr": 1e-3}, overrides=["lr=5e-4"])
    assert tree["lr"] == 5e-4


def test_compose_ordered_defaults():
    tree, _ = compose_tree({}, defaults=[{"a": 1}, {"a": 2}])
    assert tree["a"] == 2


def test_compose_unresolved_default():
    with pytest.raises(UnresolvedDefault):
        compose_tree({}, defaults=["missing/document"], documents={})


def test_override_requires_existing_branch():
    with pytest.raises(InvalidOverridePath):
        compose_tree({}, overrides=["new.key=7"])


def test_create_prefix_override_and_trace_replay():
    base = {"a": {"b": 1}}
    tree, trace = compose_tree(base, overrides=["+new.key=7"])
    assert tree["new"]["key"] == 7
    assert replay_trace(base, trace) == tree


def test_nested_merge_recurses():
    tree, _ = compose_tree(
        {"opt": {"lr": 1e-3, "kind": "adam"}},
        defaults=[{"opt": {"lr": 5e-4}}],
    )
    assert tree["opt"] == {"lr": 5e-4, "kind": "adam"}


def test_tree_diff_lists_changed_leaves():
    a = {"m": {"w": 1, "x": 2}, "k": 3}
    b = {"m": {"w": 1, "x": 5}, "k": 3, "extra": 1}
    assert tree_diff(a, b) == ["extra", "m.x"]
    assert tree_diff(a, a) == []


_scalars = st.one_of(
    st.integers(-100, 100),
    st.floats(allow_nan=False, allow_infinity=False, width=32),
    st.text(st.characters(whitelist_categories=("Ll",)), min_size=1, max_size=6),
)
_keys = st.text(st.sampled_from("abcdef"), min_size=1, max_size=3)
_trees = st.recursive(
    st.dictionaries(_keys, _scalars, max_size=4),
    lambda kids: st.dictionaries(_keys, st.one_of(_scalars, kids), max_size=4),
    max_leaves=12,
)


@settings(max_examples=60, deadline=None)
@given(base=_trees, defaults=st.lists(_trees, max_size=3))
def test_composition_is_deterministic(base, defaults):
    first, trace1 = compose_tree(base, defaults=defaults)
    second, trace2 = compose_tree(base, defaults=defaults)
    assert first == second
    assert trace1 == trace2
    assert replay_trace(base, trace1, inline_defaults=defaults) == first
