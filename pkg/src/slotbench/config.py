"""Configuration-tree machinery: parsing, layered composition, overrides, diffs.

The on-disk reference format is JSON (canonical key order = sorted when the
harness serializes; authored order is preserved in memory). An
indentation-based front end (YAML) is accepted for human authoring and is
normalized to the same tree shape before composition. Trees are plain dicts
of str -> scalar | list | dict.

Composition is a deterministic layered merge: base, then an ordered list of
default documents (later writers win), then `path=value` override directives
applied last. A directive may only create new branches when prefixed with
`+`. Every applied directive is recorded in a composition trace that replays
to an identical tree.
"""

from __future__ import annotations

import hashlib
import json
import re
from typing import Any, Iterator, Mapping, Sequence

import yaml

from .errors import InvalidOverridePath, ParseError, UnresolvedDefault

Tree = dict

_SCIENTIFIC_FLOAT = re.compile(
    r"""^[-+]?(\.[0-9]+|[0-9]+(\.[0-9]*)?)([eE][-+]?[0-9]+)?$"""
)


def _reject_duplicates(pairs):
    tree = {}
    for key, value in pairs:
        if key in tree:
            raise ParseError(f"duplicate key {key!r} among siblings")
        tree[key] = value
    return tree


class _StrictYamlLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate keys and parses 1e-3 as a float."""


def _construct_strict_mapping(loader, node):
    mapping = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in mapping:
            mark = key_node.start_mark
            raise ParseError(
                f"duplicate key {key!r} among siblings",
                line=mark.line + 1,
                column=mark.column + 1,
            )
        mapping[key] = loader.construct_object(value_node, deep=True)
    return mapping


_StrictYamlLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_strict_mapping
)
# PyYAML's 1.1 resolver misses floats like `1e-3`; widen it.
_StrictYamlLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+][0-9]+)?)$""",
        re.X,
    ),
    list("-+0123456789."),
)


def parse_config(text: str, fmt: str = "auto") -> Tree:
    """Parse a configuration document into a key-value tree.

    Key order is preserved; no defaults are resolved. Raises ParseError
    (with line/column where the parser provides one) on malformed input,
    including duplicate sibling keys.
    """
    if fmt == "auto":
        stripped = text.lstrip()
        fmt = "json" if stripped.startswith(("{", "[")) or not stripped else "yaml"
    if fmt == "json":
        try:
            tree = json.loads(text or "{}", object_pairs_hook=_reject_duplicates)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from exc
    elif fmt == "yaml":
        try:
            tree = yaml.load(text, Loader=_StrictYamlLoader)
        except ParseError:
            raise
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            raise ParseError(
                exc.problem or "malformed document",
                line=None if mark is None else mark.line + 1,
                column=None if mark is None else mark.column + 1,
            ) from exc
        if tree is None:
            tree = {}
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if not isinstance(tree, dict):
        raise ParseError("top level of a configuration document must be a mapping")
    return tree


# --- tree primitives ---------------------------------------------------------

def deep_merge(base: Tree, overlay: Mapping) -> Tree:
    """Last-writer-wins merge; dict-on-dict recurses, anything else replaces."""
    merged = dict(base)
    for key, value in overlay.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = _copy_tree(value)
    return merged


def _copy_tree(value):
    if isinstance(value, Mapping):
        return {k: _copy_tree(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_copy_tree(v) for v in value]
    return value


def copy_tree(tree: Tree) -> Tree:
    return _copy_tree(tree)


def get_path(tree: Tree, path: str, default=None):
    node = tree
    for part in path.split("."):
        if not isinstance(node, Mapping) or part not in node:
            return default
        node = node[part]
    return node


def has_path(tree: Tree, path: str) -> bool:
    sentinel = object()
    return get_path(tree, path, sentinel) is not sentinel


def set_path(tree: Tree, path: str, value, create: bool = False) -> None:
    """Set a leaf in place. Without `create`, every branch and the leaf key
    must already exist."""
    parts = path.split(".")
    node = tree
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            if not create:
                raise InvalidOverridePath(
                    f"path {path!r} targets a non-existent branch (prefix with '+' to create)"
                )
            node[part] = {}
        node = node[part]
    if parts[-1] not in node and not create:
        raise InvalidOverridePath(
            f"path {path!r} targets a non-existent key (prefix with '+' to create)"
        )
    node[parts[-1]] = value


def parse_directive(directive: str) -> tuple[str, Any, bool]:
    """Split a `path=value` override into (path, parsed value, create flag)."""
    create = directive.startswith("+")
    body = directive[1:] if create else directive
    if "=" not in body:
        raise InvalidOverridePath(f"override {directive!r} is not of the form path=value")
    path, raw = body.split("=", 1)
    path = path.strip()
    if not path:
        raise InvalidOverridePath(f"override {directive!r} has an empty path")
    return path, parse_scalar(raw.strip()), create


def parse_scalar(raw: str):
    """Parse an override value: JSON when it is JSON, else the raw string."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        if _SCIENTIFIC_FLOAT.match(raw):
            try:
                return float(raw)
            except ValueError:
                pass
        return raw


def apply_override(tree: Tree, directive: str) -> None:
    path, value, create = parse_directive(directive)
    set_path(tree, path, value, create=create)


# --- layered composition -----------------------------------------------------

def compose_tree(
    base: Tree,
    defaults: Sequence[Tree | str] = (),
    overrides: Sequence[str] = (),
    documents: Mapping[str, Tree] | None = None,
) -> tuple[Tree, list[dict]]:
    """Deterministic left-to-right merge of base + defaults, then overrides.

    Entries in `defaults` may be inline trees or names resolved against
    `documents`. Returns the composed tree and the composition trace.
    """
    documents = documents or {}
    trace: list[dict] = [{"kind": "base", "ref": tree_digest(base)}]
    merged = copy_tree(base)
    for index, entry in enumerate(defaults):
        if isinstance(entry, str):
            if entry not in documents:
                raise UnresolvedDefault(f"defaults entry {entry!r} names a missing document")
            overlay, ref = documents[entry], entry
        else:
            overlay, ref = entry, f"<inline:{index}>"
        merged = deep_merge(merged, overlay)
        trace.append({"kind": "default", "ref": ref})
    for directive in overrides:
        apply_override(merged, directive)
        trace.append({"kind": "override", "ref": directive})
    return merged, trace


def replay_trace(
    base: Tree,
    trace: Sequence[Mapping],
    documents: Mapping[str, Tree] | None = None,
    inline_defaults: Sequence[Tree] = (),
) -> Tree:
    """Re-run a composition trace against the same base and documents."""
    documents = documents or {}
    merged = copy_tree(base)
    inline_iter: Iterator[Tree] = iter(inline_defaults)
    for entry in trace:
        kind, ref = entry["kind"], entry["ref"]
        if kind == "base":
            continue
        if kind == "default":
            overlay = next(inline_iter) if ref.startswith("<inline:") else documents[ref]
            merged = deep_merge(merged, overlay)
        elif kind in ("override", "repair", "impute"):
            apply_override(merged, ref)
        else:
            raise ValueError(f"unknown trace entry kind {kind!r}")
    return merged


# --- diffs and digests ---------------------------------------------------------

def iter_leaves(tree: Mapping, prefix: str = "") -> Iterator[tuple[str, Any]]:
    for key, value in tree.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(value, Mapping):
            if value:
                yield from iter_leaves(value, path)
            else:
                yield path, {}
        else:
            yield path, value


def tree_diff(a: Mapping, b: Mapping) -> list[str]:
    """Sorted leaf paths at which the two trees differ (missing counts as differing)."""
    left = dict(iter_leaves(a))
    right = dict(iter_leaves(b))
    missing = object()
    paths = set(left) | set(right)
    return sorted(
        p for p in paths if left.get(p, missing) != right.get(p, missing)
    )


def canonical_json(obj) -> str:
    """Canonical serialization: sorted keys, 2-space indent, trailing newline."""
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def tree_digest(obj) -> str:
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
