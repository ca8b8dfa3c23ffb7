"""File formats: native model JSON, booster JSON dumps, CSV datasets and attributions."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .cart import Dataset
from .shapley import Attribution
from .tree_model import (
    AGGREGATIONS,
    BOOSTED_SUM,
    LEAF,
    EnsembleModel,
    TreeArrays,
    assign_internal_values_from_leaves,
    tree_from_nodes,
    validate_tree,
)

FORMAT_VERSION = "1"
EFFICIENCY_TOL = 1e-7


class ModelFormatError(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


# ---------------------------------------------------------------- model JSON

def tree_to_nodes(tree: TreeArrays) -> list[dict]:
    nodes = []
    for j in range(tree.n_nodes):
        leaf = tree.left[j] == LEAF
        nodes.append({
            "id": j,
            "feature": None if leaf else int(tree.features[j]),
            "threshold": None if leaf else float(tree.thresholds[j]),
            "left": None if leaf else int(tree.left[j]),
            "right": None if leaf else int(tree.right[j]),
            "value": float(tree.values[j]),
            "cover": float(tree.cover[j]),
        })
    return nodes


def model_to_document(model: EnsembleModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "model_kind": model.aggregation,
        "base_offset": float(model.base_offset),
        "feature_names": list(model.feature_names),
        "metadata": model.metadata,
        "trees": [tree_to_nodes(t) for t in model.trees],
    }


def dumps_model(model: EnsembleModel) -> str:
    """Canonical serialization: fixed key order, shortest round-trip floats."""
    return json.dumps(model_to_document(model), indent=1, allow_nan=False) + "\n"


def write_model(model: EnsembleModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def _check_node(k: int, node, n: int) -> list[str]:
    where = f"tree {k} node {node.get('id', '?') if isinstance(node, dict) else '?'}"
    if not isinstance(node, dict):
        return [f"tree {k}: node entry is not an object"]
    errs = []
    for key in ("id", "feature", "threshold", "left", "right", "value", "cover"):
        if key not in node:
            errs.append(f"{where}: missing field {key!r}")
    if errs:
        return errs
    if not isinstance(node["id"], int) or not 0 <= node["id"] < n:
        errs.append(f"{where}: id must be an integer in [0, {n})")
    leaf_flags = [node["feature"] is None, node["left"] is None, node["right"] is None]
    if len(set(leaf_flags)) != 1:
        errs.append(f"{where}: feature/left/right must all be null (leaf) or all set")
    elif not leaf_flags[0]:
        if node["threshold"] is None:
            errs.append(f"{where}: internal node without threshold")
        for key in ("feature", "left", "right"):
            if not isinstance(node[key], int) or isinstance(node[key], bool):
                errs.append(f"{where}: {key} must be an integer")
    if node["value"] is None:
        errs.append(f"{where}: value missing (every node, internal included, needs a value)")
    elif not isinstance(node["value"], (int, float)) or not math.isfinite(node["value"]):
        errs.append(f"{where}: value must be a finite number")
    if not isinstance(node["cover"], (int, float)) or isinstance(node["cover"], bool):
        errs.append(f"{where}: cover must be a number")
    return errs


def model_from_document(doc: dict) -> EnsembleModel:
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION!r})")
    kind = doc.get("model_kind")
    if kind not in AGGREGATIONS:
        raise ModelFormatError(f"model_kind must be one of {AGGREGATIONS}, got {kind!r}")
    names = doc.get("feature_names")
    if not isinstance(names, list) or not all(isinstance(s, str) for s in names):
        raise ModelFormatError("feature_names must be a list of strings")
    trees_doc = doc.get("trees")
    if not isinstance(trees_doc, list) or not trees_doc:
        raise ModelFormatError("trees must be a non-empty list")
    errors: list[str] = []
    trees = []
    for k, nodes in enumerate(trees_doc):
        if not isinstance(nodes, list) or not nodes:
            errors.append(f"tree {k}: must be a non-empty node list")
            continue
        node_errs = [e for node in nodes for e in _check_node(k, node, len(nodes))]
        ids = [node.get("id") for node in nodes if isinstance(node, dict)]
        if not node_errs and sorted(ids) != list(range(len(nodes))):
            node_errs.append(f"tree {k}: node ids must be exactly 0..{len(nodes) - 1}")
        if node_errs:
            errors.extend(node_errs)
            continue
        tree = tree_from_nodes(nodes)
        errors.extend(f"tree {k} {p}" for p in validate_tree(tree))
        for f in tree.used_features():
            if f >= len(names):
                errors.append(f"tree {k}: feature index {f} >= {len(names)} feature names")
        trees.append(tree)
    if errors:
        raise ModelFormatError("invalid model document:\n  " + "\n  ".join(errors))
    return EnsembleModel(
        trees=trees,
        aggregation=kind,
        base_offset=float(doc.get("base_offset", 0.0)),
        feature_names=names,
        metadata=doc.get("metadata") or {},
    )


def loads_model(text: str) -> EnsembleModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return model_from_document(doc)


def read_model(path) -> EnsembleModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------- booster dumps

def _parse_dump_trees(text: str) -> list[dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed dump JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if isinstance(doc, dict):
        doc = [doc]
    if not isinstance(doc, list) or not doc:
        raise ModelFormatError("dump must be a JSON list of trees")
    trees = []
    for k, item in enumerate(doc):
        if isinstance(item, str):  # get_dump(dump_format="json") returns one string per tree
            try:
                item = json.loads(item)
            except json.JSONDecodeError as exc:
                raise ModelFormatError(f"tree {k}: malformed JSON at column {exc.colno}: {exc.msg}") from exc
        if not isinstance(item, dict):
            raise ModelFormatError(f"tree {k}: expected an object")
        trees.append(item)
    return trees


def _feature_index(split, names: Optional[Sequence[str]], where: str) -> int:
    if isinstance(split, int):
        return split
    if names is not None and split in names:
        return list(names).index(split)
    if isinstance(split, str) and split.startswith("f") and split[1:].isdigit():
        return int(split[1:])
    raise ModelFormatError(f"{where}: cannot resolve split feature {split!r}")


def _convert_dump_tree(k: int, root: dict, names, strict_thresholds: bool) -> tuple[TreeArrays, dict]:
    flat: dict[int, dict] = {}
    order: list[int] = []
    stack = [root]
    while stack:
        node = stack.pop()
        where = f"tree {k} node {node.get('nodeid', '?')}"
        if "nodeid" not in node:
            raise ModelFormatError(f"{where}: missing 'nodeid'")
        nid = node["nodeid"]
        if nid in flat:
            raise ModelFormatError(f"{where}: duplicate nodeid")
        if "cover" not in node:
            raise ModelFormatError(f"{where}: missing 'cover' (dump with statistics enabled)")
        flat[nid] = node
        order.append(nid)
        if "leaf" in node:
            continue
        for key in ("split", "split_condition", "yes", "no", "children"):
            if key not in node:
                raise ModelFormatError(f"{where}: missing {key!r}")
        if "missing" in node and node["missing"] != node["yes"]:
            raise ModelFormatError(
                f"{where}: missing-value branch {node['missing']} differs from yes branch "
                f"{node['yes']}; missing-data routing is not supported"
            )
        kids = {c.get("nodeid") for c in node["children"]}
        if kids != {node["yes"], node["no"]}:
            raise ModelFormatError(f"{where}: children do not match yes/no ids")
        by_id = {c["nodeid"]: c for c in node["children"]}
        stack.append(by_id[node["no"]])
        stack.append(by_id[node["yes"]])

    if sorted(flat) == list(range(len(flat))) and root["nodeid"] == 0:
        index = {nid: nid for nid in flat}
    else:
        index = {nid: i for i, nid in enumerate(order)}  # preorder, root first

    n = len(flat)
    raw_cover = np.zeros(n)
    nodes = [None] * n
    for nid, node in flat.items():
        j = index[nid]
        raw_cover[j] = float(node["cover"])
        if "leaf" in node:
            nodes[j] = {"id": j, "feature": None, "value": float(node["leaf"]), "cover": 0.0}
        else:
            t = float(node["split_condition"])
            if strict_thresholds:
                t = float(np.nextafter(t, -np.inf))
            nodes[j] = {
                "id": j,
                "feature": _feature_index(node["split"], names, f"tree {k} node {nid}"),
                "threshold": t,
                "left": index[node["yes"]],
                "right": index[node["no"]],
                "value": None,
                "cover": 0.0,
            }

    # dumps print covers rounded; rebuild internal covers as child sums
    cover = raw_cover.copy()
    rebuilt = False
    for j in reversed([index[nid] for nid in order]):
        node = nodes[j]
        if node["feature"] is not None:
            s = cover[node["left"]] + cover[node["right"]]
            if abs(s - raw_cover[j]) > 1e-3 * max(1.0, abs(raw_cover[j])):
                raise ModelFormatError(f"tree {k} node {j}: cover {raw_cover[j]} != child sum {s}")
            rebuilt |= s != raw_cover[j]
            cover[j] = s
    if not cover[0] > 0:
        raise ModelFormatError(f"tree {k}: root cover must be positive")
    cover = cover / cover[0]
    for j in range(n):
        nodes[j]["cover"] = float(cover[j])
    tree = tree_from_nodes(nodes)
    problems = validate_tree(tree, require_values=False)
    if problems:
        raise ModelFormatError(f"tree {k}: " + "; ".join(problems))
    return assign_internal_values_from_leaves(tree), {"covers_rebuilt_from_leaves": bool(rebuilt)}


def import_boosted_dump(text: str, base_score: float = 0.5, feature_names: Optional[Sequence[str]] = None,
                        n_features: Optional[int] = None, strict_thresholds: bool = False) -> EnsembleModel:
    """Convert a booster's per-tree JSON dump (with covers) to a boosted_sum model.

    The dump's branch rule is ``x < t -> yes``; here ``x <= t`` goes left.
    Thresholds are stored verbatim unless ``strict_thresholds`` is set, in
    which case each is moved to the next float below so the two rules agree
    bit-for-bit.
    """
    if not 0.0 < base_score < 1.0:
        raise ValueError("base_score must lie strictly between 0 and 1")
    trees = []
    rebuilt = []
    for k, root in enumerate(_parse_dump_trees(text)):
        tree, info = _convert_dump_tree(k, root, feature_names, strict_thresholds)
        trees.append(tree)
        rebuilt.append(info["covers_rebuilt_from_leaves"])
    used = max((max(t.used_features(), default=-1) for t in trees), default=-1) + 1
    if feature_names is None:
        n = max(used, n_features or 0)
        feature_names = [f"f{i}" for i in range(n)]
    elif used > len(feature_names):
        raise ModelFormatError(f"dump uses feature index {used - 1} beyond {len(feature_names)} names")
    return EnsembleModel(
        trees=trees,
        aggregation=BOOSTED_SUM,
        base_offset=math.log(base_score / (1.0 - base_score)),
        feature_names=feature_names,
        metadata={
            "source": "booster json dump",
            "base_score": base_score,
            "cover_semantics": "hessian-weighted counts normalized by the root cover",
            "internal_values": "cover-weighted average of leaf values",
            "threshold_rule": "strict (nudged)" if strict_thresholds else "verbatim; ties at t differ",
            "covers_rebuilt_from_leaves": rebuilt,
        },
    )


# ---------------------------------------------------------------- datasets

def _meta_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def read_dataset(path) -> Dataset:
    """Read a header-first CSV; an optional ``label`` column holds +-1 (or 0/1)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetFormatError(f"{path}: empty file (header required)")
    header = [h.strip() for h in rows[0]]
    label_col = header.index("label") if "label" in header else None
    feat_cols = [c for c in range(len(header)) if c != label_col]
    X = np.empty((len(rows) - 1, len(feat_cols)))
    raw_labels = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DatasetFormatError(f"{path}: row {r} has {len(row)} cells, header has {len(header)}")
        for c, cell in enumerate(row):
            cell = cell.strip()
            if cell == "" or cell.lower() in ("na", "nan"):
                raise DatasetFormatError(f"{path}: row {r} column {header[c]!r}: missing value")
            try:
                v = float(cell)
            except ValueError:
                raise DatasetFormatError(f"{path}: row {r} column {header[c]!r}: non-numeric {cell!r}") from None
            if not math.isfinite(v):
                raise DatasetFormatError(f"{path}: row {r} column {header[c]!r}: non-finite value")
            if c == label_col:
                raw_labels.append(v)
            else:
                X[r - 2, feat_cols.index(c)] = v
    y = None
    if label_col is not None:
        labs = set(raw_labels)
        if labs <= {-1.0, 1.0}:
            y = np.array(raw_labels, dtype=int)
        elif labs <= {0.0, 1.0}:
            y = np.where(np.array(raw_labels) > 0, 1, -1)
        else:
            raise DatasetFormatError(f"{path}: labels must be in {{-1, 1}} or {{0, 1}}, got {sorted(labs)}")
    meta = {}
    if _meta_path(path).exists():
        meta = json.loads(_meta_path(path).read_text(encoding="utf-8"))
    return Dataset(X, [header[c] for c in feat_cols], y, meta)


def write_dataset(data: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(data.feature_names) + (["label"] if data.y is not None else [])
        w.writerow(header)
        for i, row in enumerate(data.X):
            cells = [repr(float(v)) for v in row]
            if data.y is not None:
                cells.append(str(int(data.y[i])))
            w.writerow(cells)
    if data.metadata:
        _meta_path(path).write_text(json.dumps(data.metadata, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# ------------------------------------------------------------ attributions

def check_efficiency(att: Attribution, tol: float = EFFICIENCY_TOL) -> None:
    gap = att.efficiency_gap()
    if not gap <= tol:
        raise ValueError(
            f"instance {att.instance_id} ({att.method}): base + sum(phi) differs from full by {gap:.3g}"
        )


def write_attributions(path, attributions: Iterable[Attribution], feature_names: Sequence[str],
                       drop_base: bool = False) -> None:
    """Write one row per attribution; every row is efficiency-checked first."""
    atts = list(attributions)
    for att in atts:
        check_efficiency(att)
    cols = ["instance_id", "method"] + ([] if drop_base else ["base_value"]) + ["full_value"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols + list(feature_names))
        for att in atts:
            row = [att.instance_id, att.method]
            if not drop_base:
                row.append(repr(float(att.base_value)))
            row.append(repr(float(att.full_value)))
            w.writerow(row + [repr(float(v)) for v in att.phi])


def read_attributions(path) -> tuple[list[str], list[Attribution]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    has_base = "base_value" in header
    start = header.index("full_value") + 1
    out = []
    for row in rows[1:]:
        rec = dict(zip(header[:start], row[:start]))
        out.append(Attribution(
            phi=np.array([float(v) for v in row[start:]]),
            base_value=float(rec["base_value"]) if has_base else float("nan"),
            full_value=float(rec["full_value"]),
            method=rec["method"],
            instance_id=int(rec["instance_id"]),
        ))
    return header[start:], out


def write_null_flags(path, flags: np.ndarray, feature_names: Sequence[str], instance_ids=None) -> None:
    ids = range(len(flags)) if instance_ids is None else instance_ids
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance_id"] + list(feature_names))
        for i, row in zip(ids, flags):
            w.writerow([i] + [int(b) for b in row])


def read_null_flags(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0][1:], np.array([[c == "1" for c in r[1:]] for r in rows[1:]], dtype=bool).reshape(
        len(rows) - 1, len(rows[0]) - 1
    )
