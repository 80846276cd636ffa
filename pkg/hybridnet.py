"""
HybridNet model
Topology pathway (graph attention over the net graph), geometric pathway
(positional encoding + continuous-filter convolutions over the Delaunay
graph) and the fusion head producing one congestion value per cell.
"""

import json
import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from autodiff import (
    Tensor,
    add,
    concat,
    default_dtype,
    gather_rows,
    leaky_relu,
    matmul,
    mul,
    reshape,
    scale_rows,
    segment_softmax,
    segment_sum,
    shifted_softplus,
    slice_cols,
)
from autodiff import sum as tensor_sum
from errors import TensorError
from multiview import TOPOLOGY_FEATURES, Graph, MultiViewGraph

logger = logging.getLogger(__name__)

MODES = ("full", "topo_only", "geo_only")
COORD_TOLERANCE = 1e-6


@dataclass
class HybridNetConfig:
    l: int = 3  # noqa: E741
    d: int = 64
    heads: int = 4
    K: int = 16
    cutoff: Optional[float] = None  # layout units; resolved from cutoff_tiles when None
    cutoff_tiles: float = 8.0
    fourier_bands: int = 4
    leaky_slope: float = 0.2
    out_mlp_width: int = 64
    pe_fourier: bool = True
    f_t: int = len(TOPOLOGY_FEATURES)
    f_g: int = len(TOPOLOGY_FEATURES) + 2

    def validate(self):
        errors = []
        if self.l < 1:
            errors.append(f"l must be >= 1, got {self.l}")
        if self.heads < 1 or self.d % self.heads != 0:
            errors.append(f"d ({self.d}) must be divisible by heads ({self.heads})")
        if self.K < 2:
            errors.append(f"K must be >= 2, got {self.K}")
        if self.cutoff is not None and self.cutoff <= 0:
            errors.append(f"cutoff must be > 0, got {self.cutoff}")
        if self.cutoff_tiles <= 0:
            errors.append(f"cutoff_tiles must be > 0, got {self.cutoff_tiles}")
        if self.fourier_bands < 0:
            errors.append("fourier_bands must be >= 0")
        if self.out_mlp_width < 1:
            errors.append("out_mlp_width must be >= 1")
        if errors:
            raise ValueError("Model configuration errors:\n" + "\n".join(f"  - {e}" for e in errors))
        return True

    @property
    def head_dim(self) -> int:
        return self.d // self.heads

    @property
    def pe_width(self) -> int:
        return 2 + 4 * self.fourier_bands if self.pe_fourier else 2

    def resolve_cutoff(self, tile_w: float) -> "HybridNetConfig":
        """Fix the distance cutoff in layout units for a grid with the given tile width."""
        if self.cutoff is not None:
            return self
        return replace(self, cutoff=self.cutoff_tiles * tile_w)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "HybridNetConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            logger.warning(f"Ignoring unknown model config keys: {', '.join(unknown)}")
        return cls(**{k: v for k, v in values.items() if k in known})

    def save(self, path: Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "HybridNetConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class HybridNetParams:
    """Named parameter tensors in a fixed order."""

    def __init__(self, tensors: Mapping[str, Tensor]):
        self.tensors: Dict[str, Tensor] = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def names(self) -> List[str]:
        return list(self.tensors)

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray], dtype=None) -> "HybridNetParams":
        return cls({name: Tensor(a, requires_grad=True, dtype=dtype or default_dtype()) for name, a in arrays.items()})

    def check_shapes(self, config: HybridNetConfig):
        expected = parameter_shapes(config)
        if list(expected) != self.names():
            raise TensorError("parameter names do not match the model configuration")
        for name, shape in expected.items():
            if self[name].shape != shape:
                raise TensorError(f"parameter {name} has shape {self[name].shape}, expected {shape}")


def is_bias(name: str) -> bool:
    return name.rsplit(".", 1)[-1].startswith("b")


def parameter_shapes(config: HybridNetConfig) -> Dict[str, Tuple[int, ...]]:
    """Every parameter name and shape, in initialization order."""
    d = config.d
    shapes: Dict[str, Tuple[int, ...]] = {}
    for i in range(config.l):
        d_in = config.f_t if i == 0 else d
        shapes[f"gat.{i}.W"] = (d_in, d)
        shapes[f"gat.{i}.a_src"] = (config.heads, config.head_dim)
        shapes[f"gat.{i}.a_dst"] = (config.heads, config.head_dim)
        shapes[f"gat.{i}.b"] = (d,)
    for i in range(config.l):
        d_in = config.f_g if i == 0 else d
        shapes[f"cf.{i}.W_in"] = (d_in, d)
        shapes[f"cf.{i}.b_in"] = (d,)
        shapes[f"cf.{i}.filter.W1"] = (config.K, d)
        shapes[f"cf.{i}.filter.b1"] = (d,)
        shapes[f"cf.{i}.filter.W2"] = (d, d)
        shapes[f"cf.{i}.filter.b2"] = (d,)
        shapes[f"cf.{i}.W_out"] = (d, d)
        shapes[f"cf.{i}.b_out"] = (d,)
        if i == 0:
            shapes[f"cf.{i}.W_res"] = (d_in, d)
    shapes["pe.W1"] = (config.pe_width, d)
    shapes["pe.b1"] = (d,)
    shapes["pe.W2"] = (d, d)
    shapes["pe.b2"] = (d,)
    shapes["fuse_t.W"] = (d + config.f_t, d)
    shapes["fuse_t.b"] = (d,)
    shapes["fuse_g.W"] = (d + config.f_g, d)
    shapes["fuse_g.b"] = (d,)
    shapes["out.W1"] = (2 * d, config.out_mlp_width)
    shapes["out.b1"] = (config.out_mlp_width,)
    shapes["out.W2"] = (config.out_mlp_width, 1)
    shapes["out.b2"] = (1,)
    return shapes


def init_params(config: HybridNetConfig, seed: int, dtype=None) -> HybridNetParams:
    """Glorot-uniform weights, zero biases, drawn in a fixed name order."""
    config.validate()
    rng = np.random.default_rng(seed)
    dtype = dtype or default_dtype()
    tensors = {}
    for name, shape in parameter_shapes(config).items():
        if is_bias(name):
            data = np.zeros(shape)
        else:
            s = np.sqrt(6.0 / (shape[0] + shape[1]))
            data = rng.uniform(-s, s, size=shape)
        tensors[name] = Tensor(data, requires_grad=True, dtype=dtype)
    return HybridNetParams(tensors)


def active_parameter_names(params: HybridNetParams, mode: str = "full") -> List[str]:
    """Parameters that take part in the forward pass for an ablation mode."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    if mode == "full":
        return params.names()
    prefixes = ("gat.", "fuse_t.", "out.") if mode == "topo_only" else ("cf.", "pe.", "fuse_g.", "out.")
    return [name for name in params if name.startswith(prefixes)]


# ============= TOPOLOGY PATHWAY =============


def gat_layer(h: Tensor, topo: Graph, params: HybridNetParams, layer: int, config: HybridNetConfig, last: bool = False) -> Tensor:
    """
    Multi-head additive attention over incoming edges plus one implicit
    self-edge per node. Heads are concatenated.
    """
    n = h.shape[0]
    p = f"gat.{layer}"
    nodes = np.arange(n, dtype=np.int64)
    src = np.concatenate([topo.src, nodes])
    dst = np.concatenate([topo.dst, nodes])
    dh = config.head_dim

    z = matmul(h, params[f"{p}.W"])
    outputs = []
    for k in range(config.heads):
        zk = slice_cols(z, k * dh, (k + 1) * dh)
        a_src = reshape(gather_rows(params[f"{p}.a_src"], [k]), (dh,))
        a_dst = reshape(gather_rows(params[f"{p}.a_dst"], [k]), (dh,))
        s_src = tensor_sum(mul(zk, a_src), axis=1)
        s_dst = tensor_sum(mul(zk, a_dst), axis=1)
        scores = leaky_relu(add(gather_rows(s_src, src), gather_rows(s_dst, dst)), config.leaky_slope)
        alpha = segment_softmax(scores, dst, n)
        outputs.append(segment_sum(scale_rows(gather_rows(zk, src), alpha), dst, n))

    out = add(concat(outputs, axis=1), params[f"{p}.b"])
    return out if last else leaky_relu(out, config.leaky_slope)


# ============= GEOMETRIC PATHWAY =============


def rbf_expand(dist: np.ndarray, config: HybridNetConfig) -> Tensor:
    """Gaussian radial basis expansion of edge distances, E -> E x K."""
    if config.cutoff is None:
        raise TensorError("rbf_expand needs a resolved cutoff")
    dist = np.asarray(dist, dtype=np.float64).reshape(-1)
    centers = np.arange(config.K, dtype=np.float64) * config.cutoff / (config.K - 1)
    gamma = ((config.K - 1) / config.cutoff) ** 2
    clipped = np.minimum(dist, config.cutoff)
    return Tensor(np.exp(-gamma * (clipped[:, None] - centers[None, :]) ** 2))


def fourier_features(coords: np.ndarray, bands: int, enabled: bool = True) -> np.ndarray:
    """[x, y, sin/cos(2^b pi x), sin/cos(2^b pi y) for each band]."""
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    columns = [coords[:, 0], coords[:, 1]]
    if enabled:
        for b in range(bands):
            freq = (2.0**b) * np.pi
            x, y = freq * coords[:, 0], freq * coords[:, 1]
            columns.extend([np.sin(x), np.cos(x), np.sin(y), np.cos(y)])
    return np.column_stack(columns)


def positional_encoding(coords: np.ndarray, params: HybridNetParams, config: HybridNetConfig) -> Tensor:
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    if np.any(coords < -COORD_TOLERANCE) or np.any(coords > 1.0 + COORD_TOLERANCE):
        raise TensorError("positional_encoding: coordinates must lie in [0, 1]^2")
    f = Tensor(fourier_features(coords, config.fourier_bands, config.pe_fourier))
    hidden = leaky_relu(add(matmul(f, params["pe.W1"]), params["pe.b1"]), config.leaky_slope)
    return add(matmul(hidden, params["pe.W2"]), params["pe.b2"])


def cfconv_layer(
    h: Tensor,
    geo: Graph,
    rbf: Tensor,
    params: HybridNetParams,
    layer: int,
    config: HybridNetConfig,
    pe: Optional[Tensor] = None,
) -> Tensor:
    """
    Continuous-filter convolution: neighbor embeddings modulated by filters
    generated from RBF-expanded distances, plus a skip connection.
    """
    if rbf.shape[0] != geo.num_edges:
        raise TensorError(f"cfconv_layer: {rbf.shape[0]} rbf rows for {geo.num_edges} edges")
    n = h.shape[0]
    p = f"cf.{layer}"

    m = add(matmul(h, params[f"{p}.W_in"]), params[f"{p}.b_in"])
    if pe is not None:
        m = add(m, pe)
    hidden = shifted_softplus(add(matmul(rbf, params[f"{p}.filter.W1"]), params[f"{p}.filter.b1"]))
    filters = add(matmul(hidden, params[f"{p}.filter.W2"]), params[f"{p}.filter.b2"])
    messages = mul(gather_rows(m, geo.src), filters)
    aggregated = segment_sum(messages, geo.dst, n)

    residual = f"{p}.W_res"
    skip = matmul(h, params[residual]) if residual in params.tensors else h
    return shifted_softplus(add(add(matmul(aggregated, params[f"{p}.W_out"]), params[f"{p}.b_out"]), skip))


# ============= FUSION =============


def fusion_head(
    h_t: Optional[Tensor],
    h_g: Optional[Tensor],
    x_t: Tensor,
    x_g: Tensor,
    params: HybridNetParams,
    config: HybridNetConfig,
) -> Tensor:
    """
    Per-pathway MLPs over [h | original features], then the output MLP over
    both. A pathway passed as None contributes a zero block.
    """
    n = x_t.shape[0]
    if x_g.shape[0] != n:
        raise TensorError(f"fusion_head: x_t has {n} rows, x_g has {x_g.shape[0]}")
    slope = config.leaky_slope
    zero = Tensor(np.zeros((n, config.d)), dtype=x_t.data.dtype)

    z_t = zero if h_t is None else leaky_relu(add(matmul(concat([h_t, x_t], axis=1), params["fuse_t.W"]), params["fuse_t.b"]), slope)
    z_g = zero if h_g is None else leaky_relu(add(matmul(concat([h_g, x_g], axis=1), params["fuse_g.W"]), params["fuse_g.b"]), slope)

    hidden = leaky_relu(add(matmul(concat([z_t, z_g], axis=1), params["out.W1"]), params["out.b1"]), slope)
    y = add(matmul(hidden, params["out.W2"]), params["out.b2"])
    return reshape(y, (n,))


def forward(mvg: MultiViewGraph, params: HybridNetParams, config: HybridNetConfig, mode: str = "full") -> Tensor:
    """Per-cell predictions (length N) for one design."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    if mvg.x_t.shape[1] != config.f_t or mvg.x_g.shape[1] != config.f_g:
        raise TensorError(
            f"feature widths {mvg.x_t.shape[1]}/{mvg.x_g.shape[1]} do not match model config {config.f_t}/{config.f_g}"
        )
    x_t = Tensor(mvg.x_t)
    x_g = Tensor(mvg.x_g)

    h_t = None
    if mode in ("full", "topo_only"):
        h = x_t
        for i in range(config.l):
            h = gat_layer(h, mvg.topo, params, i, config, last=i == config.l - 1)
        h_t = h

    h_g = None
    if mode in ("full", "geo_only"):
        rbf = rbf_expand(mvg.geo.edge_attr[:, 0], config)
        pe = positional_encoding(mvg.coords, params, config)
        h = x_g
        for i in range(config.l):
            h = cfconv_layer(h, mvg.geo, rbf, params, i, config, pe=pe if i == 0 else None)
        h_g = h

    return fusion_head(h_t, h_g, x_t, x_g, params, config)
