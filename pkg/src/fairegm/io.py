"""Dataset loaders plus embedding, split and results files.

Supported dataset kinds:

``content-cites``
    LINQS Cora/Citeseer: ``<prefix>.content`` rows ``id f_0 .. f_{m-1} label``
    and ``<prefix>.cites`` rows ``cited citing``. The label is the sensitive
    attribute.
``snap-ego``
    SNAP ego network: ``<prefix>.edges``, ``<prefix>.feat``,
    ``<prefix>.featnames``. The two ``gender`` columns become the sensitive
    attribute and are removed from the features.
``generic-csv``
    ``nodes.csv`` with a header (``id``, ``label`` and feature columns) and
    ``edges.csv`` with two id columns.
``pubmed-tab``
    LINQS Pubmed-Diabetes: ``<prefix>.NODE.paper.tab`` and
    ``<prefix>.DIRECTED.cites.tab``.

Nodes are always ordered by original id, numerically when every id is an
integer and lexicographically otherwise.
"""
from __future__ import annotations

import csv
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, ParseError, SchemaError
from .graph import Graph, SplitResult, canonical_edges, one_hot

log = logging.getLogger(__name__)

DATASET_KINDS = ("content-cites", "snap-ego", "generic-csv", "pubmed-tab")


def _order_ids(ids) -> list:
    ids = list(ids)
    try:
        return sorted(ids, key=int)
    except ValueError:
        return sorted(ids)


def _lines(path):
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if line.strip():
                    yield lineno, line.rstrip("\n")
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read {path}: {exc}") from exc


def _float(path, lineno, token):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(path, lineno, f"not a number: {token!r}") from None
    if not np.isfinite(value):
        raise ParseError(path, lineno, f"non-finite value {token!r}")
    return value


def _edge_index(pairs, index, path):
    """Map id pairs to node indices, dropping unknown ids and self-pairs."""
    mapped, unknown, loops = [], 0, 0
    for a, b in pairs:
        if a not in index or b not in index:
            unknown += 1
            continue
        if a == b:
            loops += 1
            continue
        mapped.append((index[a], index[b]))
    if unknown:
        log.warning("%s: skipped %d edges with unknown node ids", path, unknown)
    edges = canonical_edges(mapped)
    return edges, {"edge_lines": len(pairs), "unknown_skipped": unknown, "self_loops_dropped": loops,
                   "edges_before_dedup": len(mapped), "edges": int(len(edges))}


def load_content_cites(content_path, cites_path) -> Graph:
    rows = {}
    width = None
    for lineno, line in _lines(content_path):
        tokens = line.split()
        if len(tokens) < 2:
            raise ParseError(content_path, lineno, "expected '<id> <features...> <label>'")
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise ParseError(content_path, lineno, f"expected {width} fields, got {len(tokens)}")
        node = tokens[0]
        if node in rows:
            raise ParseError(content_path, lineno, f"duplicate node id {node!r}")
        rows[node] = ([_float(content_path, lineno, t) for t in tokens[1:-1]], tokens[-1])
    if not rows:
        raise InvalidArgumentError(f"{content_path}: no nodes")

    ids = _order_ids(rows)
    index = {node: i for i, node in enumerate(ids)}
    features = np.array([rows[node][0] for node in ids], dtype=np.float64).reshape(len(ids), -1)
    labels = sorted({label for _, label in rows.values()})
    label_index = {label: j for j, label in enumerate(labels)}
    sensitive = one_hot([label_index[rows[node][1]] for node in ids], len(labels))

    pairs = []
    for lineno, line in _lines(cites_path):
        tokens = line.split()
        if len(tokens) != 2:
            raise ParseError(cites_path, lineno, "expected '<cited_id> <citing_id>'")
        pairs.append((tokens[0], tokens[1]))
    edges, meta = _edge_index(pairs, index, cites_path)
    meta["groups"] = labels
    return Graph(len(ids), edges, features, sensitive, tuple(ids), meta)


def load_snap_ego(prefix) -> Graph:
    prefix = str(prefix)
    featnames = {}
    for lineno, line in _lines(prefix + ".featnames"):
        parts = line.split(maxsplit=1)
        if len(parts) != 2 or not parts[0].isdigit():
            raise ParseError(prefix + ".featnames", lineno, "expected '<index> <name>'")
        featnames[int(parts[0])] = parts[1]
    gender = sorted(i for i, name in featnames.items() if "gender" in name.lower())
    if len(gender) != 2:
        raise SchemaError(f"{prefix}.featnames: expected exactly two gender columns, found {len(gender)}")

    rows = {}
    for lineno, line in _lines(prefix + ".feat"):
        tokens = line.split()
        if len(tokens) != len(featnames) + 1:
            raise ParseError(prefix + ".feat", lineno,
                             f"expected {len(featnames) + 1} fields, got {len(tokens)}")
        if tokens[0] in rows:
            raise ParseError(prefix + ".feat", lineno, f"duplicate node id {tokens[0]!r}")
        rows[tokens[0]] = [_float(prefix + ".feat", lineno, t) for t in tokens[1:]]
    if not rows:
        raise InvalidArgumentError(f"{prefix}.feat: no nodes")

    ids = _order_ids(rows)
    index = {node: i for i, node in enumerate(ids)}
    full = np.array([rows[node] for node in ids], dtype=np.float64)
    g0, g1 = full[:, gender[0]], full[:, gender[1]]
    classes = (g1 > g0).astype(np.int64)
    fallback = int(np.sum(g0 == g1))
    if fallback:
        log.warning("%s: %d nodes without a clear gender column fell back to class 0", prefix, fallback)
    features = np.delete(full, gender, axis=1)

    pairs = []
    for lineno, line in _lines(prefix + ".edges"):
        tokens = line.split()
        if len(tokens) != 2:
            raise ParseError(prefix + ".edges", lineno, "expected '<u> <v>'")
        pairs.append((tokens[0], tokens[1]))
    edges, meta = _edge_index(pairs, index, prefix + ".edges")
    meta["gender_fallback"] = fallback
    meta["gender_columns"] = gender
    return Graph(len(ids), edges, features, one_hot(classes, 2), tuple(ids), meta)


def load_generic_csv(nodes_path, edges_path, id_col: str = "id", label_col: str | None = "label",
                     sensitive_cols=None, delimiter: str = ",") -> Graph:
    """Nodes table with a header row plus a two-column edge list.

    The sensitive attribute is either ``label_col`` (categorical) or the argmax
    over ``sensitive_cols``, which are then dropped from the features. All
    other non-id columns are features.
    """
    with open(nodes_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidArgumentError(f"{nodes_path}: empty file") from None
        body = [(i, row) for i, row in enumerate(reader, 2) if row]
    if id_col not in header:
        raise SchemaError(f"{nodes_path}: missing id column {id_col!r}")
    sensitive_cols = list(sensitive_cols or [])
    skip = {id_col, label_col, *sensitive_cols}  # the label never doubles as a feature
    if sensitive_cols:
        missing = [c for c in sensitive_cols if c not in header]
        if missing:
            raise SchemaError(f"{nodes_path}: missing sensitive columns {missing}")
        label_col = None
    elif label_col not in header:
        raise SchemaError(f"{nodes_path}: missing label column {label_col!r}")
    feat_cols = [j for j, h in enumerate(header) if h not in skip]
    sens_idx = [header.index(c) for c in sensitive_cols]
    id_idx = header.index(id_col)

    rows = {}
    for lineno, row in body:
        if len(row) != len(header):
            raise ParseError(nodes_path, lineno, f"expected {len(header)} fields, got {len(row)}")
        node = row[id_idx].strip()
        if node in rows:
            raise ParseError(nodes_path, lineno, f"duplicate node id {node!r}")
        feats = [_float(nodes_path, lineno, row[j]) for j in feat_cols]
        if sens_idx:
            sens = [_float(nodes_path, lineno, row[j]) for j in sens_idx]
            group = int(np.argmax(sens))
        else:
            group = row[header.index(label_col)].strip()
        rows[node] = (feats, group)
    if not rows:
        raise InvalidArgumentError(f"{nodes_path}: no nodes")

    ids = _order_ids(rows)
    index = {node: i for i, node in enumerate(ids)}
    features = np.array([rows[node][0] for node in ids], dtype=np.float64).reshape(len(ids), -1)
    if sens_idx:
        sensitive = one_hot([rows[node][1] for node in ids], len(sens_idx))
        groups = list(sensitive_cols)
    else:
        groups = sorted({rows[node][1] for node in ids})
        gi = {lab: j for j, lab in enumerate(groups)}
        sensitive = one_hot([gi[rows[node][1]] for node in ids], len(groups))

    pairs = []
    with open(edges_path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter=delimiter), 1):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(edges_path, lineno, "expected two id columns")
            a, b = row[0].strip(), row[1].strip()
            if lineno == 1 and (a not in index or b not in index) and not (a.isdigit() and b.isdigit()):
                continue  # header row
            pairs.append((a, b))
    edges, meta = _edge_index(pairs, index, edges_path)
    meta["groups"] = groups
    return Graph(len(ids), edges, features, sensitive, tuple(ids), meta)


def load_pubmed_tab(prefix) -> Graph:
    node_path = f"{prefix}.NODE.paper.tab"
    cites_path = f"{prefix}.DIRECTED.cites.tab"
    lines = list(_lines(node_path))
    if len(lines) < 3:
        raise ParseError(node_path, len(lines), "missing header lines")
    vocab = [m.group(1) for m in re.finditer(r"numeric:([^:\t]+):", lines[1][1])]
    col = {name: j for j, name in enumerate(vocab)}
    rows = {}
    for lineno, line in lines[2:]:
        tokens = line.split("\t")
        node = tokens[0].strip()
        label = None
        feats = np.zeros(len(vocab))
        for tok in tokens[1:]:
            if "=" not in tok:
                continue
            key, value = tok.split("=", 1)
            if key == "label":
                label = value
            elif key in col:
                feats[col[key]] = _float(node_path, lineno, value)
        if label is None:
            raise ParseError(node_path, lineno, "row has no label")
        rows[node] = (feats, label)
    ids = _order_ids(rows)
    index = {node: i for i, node in enumerate(ids)}
    labels = sorted({lab for _, lab in rows.values()})
    li = {lab: j for j, lab in enumerate(labels)}
    features = np.array([rows[node][0] for node in ids])
    sensitive = one_hot([li[rows[node][1]] for node in ids], len(labels))

    pairs = []
    for lineno, line in list(_lines(cites_path))[2:]:
        tokens = [t.strip() for t in line.split("\t")]
        ends = [t.split(":", 1)[1] for t in tokens if t.startswith("paper:")]
        if len(ends) != 2:
            raise ParseError(cites_path, lineno, "expected 'paper:<id> | paper:<id>'")
        pairs.append((ends[0], ends[1]))
    edges, meta = _edge_index(pairs, index, cites_path)
    meta["groups"] = labels
    return Graph(len(ids), edges, features, sensitive, tuple(ids), meta)


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    paths: tuple[str, ...]
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise InvalidArgumentError(f"unknown dataset kind {self.kind!r}; choose from {DATASET_KINDS}")

    @classmethod
    def parse(cls, text: str) -> "DatasetSpec":
        """``kind:path[,path2]``, e.g. ``content-cites:data/cora/cora``."""
        kind, sep, rest = text.partition(":")
        if not sep or not rest:
            raise InvalidArgumentError(f"dataset must look like kind:path, got {text!r}")
        return cls(kind, tuple(p for p in rest.split(",") if p))

    def __str__(self):
        return f"{self.kind}:{','.join(self.paths)}"

    @property
    def name(self) -> str:
        """Short dataset name, e.g. ``cora`` for ``content-cites:data/cora/cora``."""
        return Path(self.paths[0].rstrip("/")).name.split(".")[0].lower()


def _resolve_prefix(path: str, suffix: str) -> str:
    p = Path(path)
    if p.is_dir():
        found = sorted(p.glob(f"*{suffix}"))
        if len(found) != 1:
            raise InvalidArgumentError(f"{p}: expected one *{suffix} file, found {len(found)}")
        return str(found[0])[: -len(suffix)]
    return path


def load_dataset(spec: DatasetSpec) -> Graph:
    if spec.kind == "content-cites":
        if len(spec.paths) == 2:
            return load_content_cites(*spec.paths)
        prefix = _resolve_prefix(spec.paths[0], ".content")
        return load_content_cites(prefix + ".content", prefix + ".cites")
    if spec.kind == "snap-ego":
        return load_snap_ego(_resolve_prefix(spec.paths[0], ".featnames"))
    if spec.kind == "generic-csv":
        if len(spec.paths) != 2:
            raise InvalidArgumentError("generic-csv needs nodes.csv,edges.csv")
        return load_generic_csv(*spec.paths, **spec.options)
    return load_pubmed_tab(_resolve_prefix(spec.paths[0], ".NODE.paper.tab"))


def _atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _fmt(x) -> str:
    return format(float(x), ".17g")


def export_embeddings(phi, g: Graph, path):
    """CSV: node_id, sensitive class index, then one column per dimension."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape[0] != g.n:
        raise InvalidArgumentError("embedding rows must match graph nodes")
    ids = g.node_ids if g.node_ids is not None else range(g.n)
    groups = g.groups
    lines = [",".join(["node_id", "sensitive"] + [f"e{j}" for j in range(phi.shape[1])])]
    for i, node in enumerate(ids):
        lines.append(",".join([str(node), str(int(groups[i]))] + [_fmt(x) for x in phi[i]]))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_embeddings(path):
    """Inverse of :func:`export_embeddings`: ``(node_ids, groups, phi)``."""
    ids, groups, rows = [], [], []
    header = None
    for lineno, line in _lines(path):
        fields = line.split(",")
        if header is None:
            header = fields
            if fields[:2] != ["node_id", "sensitive"]:
                raise ParseError(path, lineno, "header must start with node_id,sensitive")
            continue
        if len(fields) != len(header):
            raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(fields)}")
        ids.append(fields[0])
        try:
            groups.append(int(fields[1]))
        except ValueError:
            raise ParseError(path, lineno, f"bad sensitive class {fields[1]!r}") from None
        rows.append([_float(path, lineno, x) for x in fields[2:]])
    if header is None:
        raise ParseError(path, 1, "empty embedding file")
    return ids, np.asarray(groups, dtype=np.int64), np.asarray(rows, dtype=np.float64).reshape(len(ids), -1)


RESULT_COLUMNS = ("dataset", "model", "seed", "L_R", "L_D_sum", "L_D_mean", "auroc", "f1")


def result_columns(ks=(10, 20, 40)) -> list[str]:
    return list(RESULT_COLUMNS) + [f"dp{k}" for k in ks]


def write_results(cells, summaries, path, ks=(10, 20, 40)):
    """Per-run rows followed by ``mean`` and ``std`` rows per (dataset, model).

    ``cells`` is a list of ``(dataset, model, MetricsRecord)``;
    ``summaries`` maps ``(dataset, model)`` to a SummaryRecord.
    """
    columns = result_columns(ks)
    metric_cols = columns[3:]
    out = [",".join(columns)]
    for dataset, model, rec in cells:
        row = rec.as_row(ks)
        out.append(",".join([dataset, model, str(rec.seed)] + [_fmt(row[c]) for c in metric_cols]))
    for (dataset, model), summary in summaries.items():
        for label, values in (("mean", summary.mean), ("std", summary.std)):
            out.append(",".join([dataset, model, label] + [_fmt(values[c]) for c in metric_cols]))
    _atomic_write(path, "\n".join(out) + "\n")


def read_results(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in list(row):
            if key not in ("dataset", "model", "seed"):
                row[key] = float(row[key])
    return rows


def write_table(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(v if isinstance(v, str) else _fmt(v) if isinstance(v, float) else str(v) for v in r)
              for r in rows]
    _atomic_write(path, "\n".join(lines) + "\n")


def write_split(split: SplitResult, g: Graph, out_dir):
    """Materialize a split as CSVs keyed by original node id."""
    out_dir = Path(out_dir)
    ids = g.node_ids if g.node_ids is not None else tuple(range(g.n))
    train_ids = split.train.node_ids
    write_table(out_dir / "node_map.csv", ["node_id", "train_index"],
                [(str(ids[i]), int(split.node_map[i])) for i in range(g.n) if split.node_map[i] >= 0])
    write_table(out_dir / "train_edges.csv", ["u", "v"],
                [(str(train_ids[u]), str(train_ids[v])) for u, v in split.train.edges])
    write_table(out_dir / "test_edges.csv", ["u", "v"],
                [(str(train_ids[u]), str(train_ids[v])) for u, v in split.test_pos])


def read_split(g: Graph, out_dir) -> SplitResult:
    """Rebuild a SplitResult for ``g`` from :func:`write_split` output."""
    out_dir = Path(out_dir)
    ids = g.node_ids if g.node_ids is not None else tuple(range(g.n))
    lookup = {str(node): i for i, node in enumerate(ids)}

    def table(name):
        path = out_dir / name
        rows = []
        for lineno, line in list(_lines(path))[1:]:
            fields = line.split(",")
            if len(fields) != 2 or fields[0] not in lookup:
                raise ParseError(path, lineno, "unknown node id or malformed row")
            rows.append((fields[0], fields[1]))
        return rows

    node_map = np.full(g.n, -1, dtype=np.int64)
    for node, idx in table("node_map.csv"):
        node_map[lookup[node]] = int(idx)
    nodes = np.flatnonzero(node_map >= 0)[np.argsort(node_map[node_map >= 0])]

    def edges(name):
        return [(int(node_map[lookup[a]]), int(node_map[lookup[b]])) for a, b in table(name)]

    base = Graph(g.n, canonical_edges([], g.n), g.features, g.sensitive, g.node_ids, g.meta)
    train, _ = base.subgraph(nodes)
    train = Graph(train.n, canonical_edges(edges("train_edges.csv")), train.features, train.sensitive,
                  train.node_ids, train.meta)
    return SplitResult(train, canonical_edges(edges("test_edges.csv")), node_map)
