"""Heterogeneous graph storage and semantic graph construction.

A heterogeneous graph carries several vertex types (each with its own dense
float32 feature matrix) and several directed edge types. Inference never runs
on the heterogeneous graph directly: it runs on *semantic graphs*, one per
relation (edge type) or per metapath (a typed chain of relations). Semantic
graphs are stored in compressed sparse column form because aggregation always
iterates target-major: column v lists the in-neighbors of target vertex v.

The on-disk format is a JSON manifest next to raw little-endian blobs:
float32 for features, uint32 pairs for edge lists. `generate_synthetic`
produces deterministic power-law graphs so that pruning behaviour can be
studied without shipping real datasets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ManifestError, SpecError, ValidationError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class VertexType:
    name: str
    count: int
    dim: int


@dataclass(frozen=True)
class EdgeType:
    name: str
    src: str
    dst: str


@dataclass
class HetGraph:
    """Typed vertices/edges plus per-type feature matrices.

    Vertex ids are local to their type. Instances are validated on
    construction and treated as immutable afterwards.
    """

    vertex_types: list[VertexType]
    features: dict[str, np.ndarray]
    edge_types: list[EdgeType]
    edges: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        by_name = {vt.name: vt for vt in self.vertex_types}
        if len(by_name) != len(self.vertex_types):
            raise ValidationError("duplicate vertex type names")
        for vt in self.vertex_types:
            if vt.count < 0 or vt.dim < 1:
                raise ValidationError(f"vertex type {vt.name!r}: bad count/dim")
            feats = self.features.get(vt.name)
            if feats is None:
                raise ValidationError(f"vertex type {vt.name!r}: missing feature block")
            if feats.shape != (vt.count, vt.dim):
                raise ValidationError(
                    f"feature block {vt.name!r}: shape {feats.shape} != "
                    f"({vt.count}, {vt.dim})"
                )
        seen_et = set()
        for et in self.edge_types:
            if et.name in seen_et:
                raise ValidationError(f"duplicate edge type {et.name!r}")
            seen_et.add(et.name)
            if et.src not in by_name or et.dst not in by_name:
                raise ValidationError(
                    f"edge type {et.name!r}: unknown endpoint type "
                    f"{et.src!r} or {et.dst!r}"
                )
            pairs = self.edges.get(et.name)
            if pairs is None:
                raise ValidationError(f"edge type {et.name!r}: missing edge block")
            if pairs.ndim != 2 or (len(pairs) and pairs.shape[1] != 2):
                raise ValidationError(f"edge block {et.name!r}: expected (m, 2) pairs")
            if len(pairs):
                if pairs[:, 0].max(initial=0) >= by_name[et.src].count:
                    raise ValidationError(
                        f"edge block {et.name!r}: src id out of range for type "
                        f"{et.src!r} (count {by_name[et.src].count})"
                    )
                if pairs[:, 1].max(initial=0) >= by_name[et.dst].count:
                    raise ValidationError(
                        f"edge block {et.name!r}: dst id out of range for type "
                        f"{et.dst!r} (count {by_name[et.dst].count})"
                    )
                uniq = np.unique(pairs, axis=0)
                if len(uniq) != len(pairs):
                    raise ValidationError(f"edge block {et.name!r}: duplicate (src, dst) pair")

    def vertex_type(self, name: str) -> VertexType:
        for vt in self.vertex_types:
            if vt.name == name:
                return vt
        raise KeyError(name)

    def edge_type(self, name: str) -> EdgeType:
        for et in self.edge_types:
            if et.name == name:
                return et
        raise KeyError(name)


@dataclass(frozen=True)
class MetapathStep:
    """One relation hop; a reversed step walks edges dst-to-src."""

    edge_type: str
    reverse: bool = False


@dataclass(frozen=True)
class MetapathSpec:
    name: str
    steps: tuple[MetapathStep, ...]

    @staticmethod
    def parse(name: str, raw_steps) -> "MetapathSpec":
        steps = []
        for s in raw_steps:
            if isinstance(s, MetapathStep):
                steps.append(s)
                continue
            et, orient = s
            if orient not in ("forward", "reverse"):
                raise SpecError(f"metapath {name!r}: orientation {orient!r} invalid")
            steps.append(MetapathStep(et, orient == "reverse"))
        if not steps:
            raise SpecError(f"metapath {name!r}: needs at least one step")
        return MetapathSpec(name, tuple(steps))


@dataclass
class SemanticGraph:
    """CSC adjacency for one relation or metapath.

    Columns index target vertices of `vertex_type`; rows list the source
    vertices (of `src_vertex_type`, which differs for bipartite relations).
    Canonical form: col_ptr non-decreasing and row indices strictly
    increasing within each column.
    """

    semantic_id: int
    name: str
    vertex_type: str
    src_vertex_type: str
    num_vertices: int
    num_src: int
    col_ptr: np.ndarray
    row_idx: np.ndarray

    def __post_init__(self) -> None:
        cp, ri = self.col_ptr, self.row_idx
        if len(cp) != self.num_vertices + 1 or cp[0] != 0 or cp[-1] != len(ri):
            raise ValidationError(f"semantic {self.name!r}: malformed col_ptr")
        if np.any(np.diff(cp) < 0):
            raise ValidationError(f"semantic {self.name!r}: col_ptr not non-decreasing")
        if len(ri) and (ri.min() < 0 or ri.max() >= self.num_src):
            raise ValidationError(f"semantic {self.name!r}: row index out of range")
        for v in range(self.num_vertices):
            col = ri[cp[v]:cp[v + 1]]
            if len(col) > 1 and np.any(np.diff(col) <= 0):
                raise ValidationError(
                    f"semantic {self.name!r}: column {v} rows not strictly increasing"
                )

    @property
    def bipartite(self) -> bool:
        return self.vertex_type != self.src_vertex_type

    @property
    def num_edges(self) -> int:
        return int(len(self.row_idx))

    def neighbors(self, v: int) -> np.ndarray:
        return self.row_idx[self.col_ptr[v]:self.col_ptr[v + 1]]

    def in_degrees(self, exclude_self: bool = False) -> np.ndarray:
        """In-degree per target; optionally without explicit (v, v) edges.

        Self edges never stream through the pruner (the self term is handled
        out of band), so degree accounting for pruning excludes them.
        """
        deg = np.diff(self.col_ptr)
        if exclude_self and not self.bipartite and len(self.row_idx):
            dst = np.repeat(np.arange(self.num_vertices), deg)
            self_counts = np.zeros(self.num_vertices, dtype=np.int64)
            np.add.at(self_counts, dst[self.row_idx == dst], 1)
            deg = deg - self_counts
        return deg

    def edge_list(self) -> np.ndarray:
        """Expand back to (m, 2) (src, dst) pairs in canonical order."""
        dst = np.repeat(np.arange(self.num_vertices), np.diff(self.col_ptr))
        return np.column_stack([self.row_idx, dst]).astype(np.int64)


def csc_from_edges(pairs: np.ndarray, num_dst: int, num_src: int) -> tuple[np.ndarray, np.ndarray]:
    """Build canonical (col_ptr, row_idx) from (src, dst) pairs.

    Duplicates collapse; rows within a column come out strictly increasing.
    """
    if len(pairs) == 0:
        return np.zeros(num_dst + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    pairs = np.unique(np.asarray(pairs, dtype=np.int64), axis=0)
    order = np.lexsort((pairs[:, 0], pairs[:, 1]))
    src = pairs[order, 0]
    dst = pairs[order, 1]
    col_ptr = np.zeros(num_dst + 1, dtype=np.int64)
    np.add.at(col_ptr, dst + 1, 1)
    np.cumsum(col_ptr, out=col_ptr)
    return col_ptr, src


def build_relation_graphs(g: HetGraph) -> list[SemanticGraph]:
    """One semantic graph per edge type (bipartite when endpoint types differ)."""
    out = []
    for sid, et in enumerate(g.edge_types):
        n_dst = g.vertex_type(et.dst).count
        n_src = g.vertex_type(et.src).count
        col_ptr, row_idx = csc_from_edges(g.edges[et.name], n_dst, n_src)
        out.append(
            SemanticGraph(
                semantic_id=sid,
                name=et.name,
                vertex_type=et.dst,
                src_vertex_type=et.src,
                num_vertices=n_dst,
                num_src=n_src,
                col_ptr=col_ptr,
                row_idx=row_idx,
            )
        )
    return out


def _step_endpoints(g: HetGraph, step: MetapathStep) -> tuple[str, str]:
    et = g.edge_type(step.edge_type)
    return (et.dst, et.src) if step.reverse else (et.src, et.dst)


def metapath_endpoint_types(g: HetGraph, spec: MetapathSpec) -> tuple[str, str]:
    """Validate step compatibility and return (start type, end type)."""
    start, cur = _step_endpoints(g, spec.steps[0])
    for i, step in enumerate(spec.steps[1:], start=1):
        nxt_src, nxt_dst = _step_endpoints(g, step)
        if nxt_src != cur:
            raise SpecError(
                f"metapath {spec.name!r}: step {i - 1} ends at type {cur!r} but "
                f"step {i} ({step.edge_type!r}) starts at {nxt_src!r}"
            )
        cur = nxt_dst
    return start, cur


def _step_matrix(g: HetGraph, step: MetapathStep) -> sp.csr_matrix:
    et = g.edge_type(step.edge_type)
    pairs = g.edges[et.name]
    n_src = g.vertex_type(et.src).count
    n_dst = g.vertex_type(et.dst).count
    mat = sp.csr_matrix(
        (np.ones(len(pairs), dtype=np.bool_), (pairs[:, 0], pairs[:, 1])),
        shape=(n_src, n_dst),
    )
    return mat.T.tocsr() if step.reverse else mat


def build_metapath_graphs(
    g: HetGraph, specs: list[MetapathSpec], include_self: bool = True
) -> list[SemanticGraph]:
    """Semantic graphs whose edge (u, v) means a metapath instance joins u to v.

    The chain product is boolean: several instances between the same pair
    collapse to one edge. Self edges arising from round-trip instances are
    kept only when `include_self` is set.
    """
    out = []
    for sid, spec in enumerate(specs):
        start_t, end_t = metapath_endpoint_types(g, spec)
        prod = _step_matrix(g, spec.steps[0]).astype(np.bool_)
        for step in spec.steps[1:]:
            prod = (prod @ _step_matrix(g, step)).astype(np.bool_)
        coo = prod.tocoo()
        pairs = np.column_stack([coo.row, coo.col]).astype(np.int64)
        if not include_self and start_t == end_t:
            pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        n_dst = g.vertex_type(end_t).count
        n_src = g.vertex_type(start_t).count
        col_ptr, row_idx = csc_from_edges(pairs, n_dst, n_src)
        out.append(
            SemanticGraph(
                semantic_id=sid,
                name=spec.name,
                vertex_type=end_t,
                src_vertex_type=start_t,
                num_vertices=n_dst,
                num_src=n_src,
                col_ptr=col_ptr,
                row_idx=row_idx,
            )
        )
    return out


def _sample_power_law_degrees(rng: np.random.Generator, n: int, d_max: int, exponent: float) -> np.ndarray:
    """Truncated discrete power law on [1, d_max] via inverse-CDF sampling."""
    if d_max < 1:
        return np.zeros(n, dtype=np.int64)
    support = np.arange(1, d_max + 1, dtype=np.float64)
    pmf = support ** (-exponent)
    cdf = np.cumsum(pmf)
    cdf /= cdf[-1]
    return 1 + np.searchsorted(cdf, rng.random(n))


def generate_synthetic(
    num_types: int,
    counts: list[int],
    feature_dim: int,
    degree_exponent: float,
    seed: int,
) -> HetGraph:
    """Deterministic synthetic graph with power-law in-degrees.

    Every vertex type gets one self-relation (R<i>), and consecutive types
    are linked by a cross-relation (X<i>). Each target's in-degree is drawn
    from a truncated power law, and its sources are drawn without replacement
    (never the target itself), so no duplicate or explicit self edges occur.
    """
    if num_types < 1 or len(counts) != num_types:
        raise ValidationError("counts must list one entry per vertex type")
    if any(c < 1 for c in counts):
        raise ValidationError("every vertex type needs at least one vertex")
    if feature_dim < 1:
        raise ValidationError("feature_dim must be >= 1")
    if degree_exponent <= 1.0:
        raise ValidationError("degree_exponent must be > 1")

    rng = np.random.default_rng(seed)
    vertex_types = [VertexType(f"T{i}", counts[i], feature_dim) for i in range(num_types)]
    features = {
        vt.name: rng.standard_normal((vt.count, vt.dim)).astype(np.float32)
        for vt in vertex_types
    }

    edge_types: list[EdgeType] = []
    edges: dict[str, np.ndarray] = {}

    def fill_edges(name: str, n_src: int, n_dst: int, same_type: bool) -> None:
        cap = n_src - 1 if same_type else n_src
        degs = _sample_power_law_degrees(rng, n_dst, cap, degree_exponent)
        srcs, dsts = [], []
        for v in range(n_dst):
            d = int(degs[v])
            if d == 0:
                continue
            chosen = rng.choice(n_src if not same_type else n_src - 1, size=d, replace=False)
            if same_type:
                # shift ids >= v upward so the target itself is never drawn
                chosen = np.where(chosen >= v, chosen + 1, chosen)
            srcs.append(chosen)
            dsts.append(np.full(d, v, dtype=np.int64))
        if srcs:
            pairs = np.column_stack([np.concatenate(srcs), np.concatenate(dsts)])
        else:
            pairs = np.zeros((0, 2), dtype=np.int64)
        edges[name] = pairs.astype(np.uint32)

    for i, vt in enumerate(vertex_types):
        name = f"R{i}"
        edge_types.append(EdgeType(name, vt.name, vt.name))
        fill_edges(name, vt.count, vt.count, same_type=True)
    for i in range(num_types - 1):
        name = f"X{i}"
        edge_types.append(EdgeType(name, vertex_types[i].name, vertex_types[i + 1].name))
        fill_edges(name, vertex_types[i].count, vertex_types[i + 1].count, same_type=False)

    return HetGraph(vertex_types, features, edge_types, edges)


# ---------------------------------------------------------------------------
# manifest I/O


def save_hetgraph(g: HetGraph, out_dir: str | Path) -> Path:
    """Write manifest.json plus raw feature/edge blobs; returns manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"version": FORMAT_VERSION, "vertex_types": [], "edge_types": []}
    for vt in g.vertex_types:
        fname = f"features_{vt.name}.f32"
        g.features[vt.name].astype("<f4").tofile(out / fname)
        manifest["vertex_types"].append(
            {"name": vt.name, "count": vt.count, "dim": vt.dim, "features_file": fname}
        )
    for et in g.edge_types:
        fname = f"edges_{et.name}.u32"
        g.edges[et.name].astype("<u4").tofile(out / fname)
        manifest["edge_types"].append(
            {"name": et.name, "src": et.src, "dst": et.dst, "edges_file": fname}
        )
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2))
    return mpath


def _require(obj: dict, key: str, ctx: str):
    if key not in obj:
        raise ManifestError(f"{ctx}: missing field {key!r}")
    return obj[key]


def load_hetgraph(path: str | Path) -> HetGraph:
    """Load and validate a graph from its JSON manifest."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: line {e.lineno} col {e.colno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    version = _require(raw, "version", str(path))
    if version != FORMAT_VERSION:
        raise ManifestError(f"{path}: unsupported version {version!r}")
    base = path.parent

    vertex_types, features = [], {}
    for i, vt in enumerate(_require(raw, "vertex_types", str(path))):
        ctx = f"{path}: vertex_types[{i}]"
        name = _require(vt, "name", ctx)
        count = int(_require(vt, "count", ctx))
        dim = int(_require(vt, "dim", ctx))
        fname = base / _require(vt, "features_file", ctx)
        if not fname.exists():
            raise ManifestError(f"{ctx}: features file not found: {fname}")
        blob = np.fromfile(fname, dtype="<f4")
        if blob.size != count * dim:
            raise ValidationError(
                f"feature block {name!r}: file holds {blob.size} floats, "
                f"expected {count * dim}"
            )
        vertex_types.append(VertexType(name, count, dim))
        features[name] = blob.reshape(count, dim)

    edge_types, edges = [], {}
    for i, et in enumerate(_require(raw, "edge_types", str(path))):
        ctx = f"{path}: edge_types[{i}]"
        name = _require(et, "name", ctx)
        fname = base / _require(et, "edges_file", ctx)
        if not fname.exists():
            raise ManifestError(f"{ctx}: edges file not found: {fname}")
        blob = np.fromfile(fname, dtype="<u4")
        if blob.size % 2:
            raise ValidationError(f"edge block {name!r}: odd number of u32 words")
        edge_types.append(EdgeType(name, _require(et, "src", ctx), _require(et, "dst", ctx)))
        edges[name] = blob.reshape(-1, 2)

    return HetGraph(vertex_types, features, edge_types, edges)
