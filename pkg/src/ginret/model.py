"""Dual-path text/image network.

Text path: Chebyshev graph conv -> ReLU -> graph conv -> ReLU -> (dropout)
-> fully connected to the common space. Image path: fully connected from the
precomputed descriptor (optionally through extra ReLU hidden layers).
Scorer: elementwise product of the two embeddings followed by an FC layer
with one output ("inner" mode instead takes the scalar inner product and
applies a 1x1 affine map).

Gradients are hand-derived per layer; ``cmd grad-check`` and the test suite
verify them against central finite differences.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import SparseSym
from .loss import LossBreakdown, LossConfig, PairBatch, loss_gradient, pairwise_loss
from .spectral import DEFAULT_ORDER, cheb_adjoint, cheb_basis
from .text_graph import TextGraph, TextSample

CHECKPOINT_VERSION = 1
SCORE_MODES = ("hadamard", "inner")
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class ModelConfig:
    n_vertices: int
    image_dim: int
    channels: tuple[int, int] = (16, 32)
    order: int = DEFAULT_ORDER
    common_dim: int = 64
    dropout: float = 0.2
    image_hidden: tuple[int, ...] = ()
    score_mode: str = "hadamard"
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "image_hidden", tuple(int(c) for c in self.image_hidden))
        if len(self.channels) != 2 or min(self.channels) < 1:
            raise ValueError(f"channels must be two positive widths, got {self.channels}")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.n_vertices < 1 or self.image_dim < 1 or self.common_dim < 1:
            raise ValueError("dimensions must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.score_mode not in SCORE_MODES:
            raise ValueError(f"score_mode must be one of {SCORE_MODES}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")


@dataclass(frozen=True, eq=False)
class ImageSample:
    features: np.ndarray
    label: str
    img_id: str = ""

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 1 or not np.isfinite(f).all():
            raise ValueError(f"image {self.img_id!r}: features must be a finite vector")
        object.__setattr__(self, "features", f)


def _glorot(rng, shape, fan_in, fan_out, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass(eq=False)
class GcnLayer:
    theta: np.ndarray  # (in_channels, out_channels, K)
    bias: np.ndarray

    @property
    def in_channels(self):
        return self.theta.shape[0]

    @property
    def out_channels(self):
        return self.theta.shape[1]

    @property
    def order(self):
        return self.theta.shape[2]

    @classmethod
    def init(cls, rng, c_in, c_out, order, dtype="float64"):
        theta = _glorot(rng, (c_in, c_out, order), c_in * order, c_out * order, dtype)
        return cls(theta, np.zeros(c_out, dtype=dtype))

    def forward(self, lt: SparseSym, x):
        """``x`` is (N, B, C_in); returns (N, B, C_out) and the Chebyshev basis."""
        basis = cheb_basis(lt, x, self.order)
        out = np.tensordot(basis, self.theta, axes=([0, 3], [2, 0])) + self.bias
        return out, basis

    def backward(self, lt: SparseSym, basis, dout, need_input_grad=True):
        d_theta = np.tensordot(basis, dout, axes=([1, 2], [0, 1])).transpose(1, 2, 0)
        d_bias = dout.sum(axis=(0, 1))
        dx = None
        if need_input_grad:
            d_basis = np.moveaxis(np.tensordot(dout, self.theta, axes=([2], [1])), 3, 0)
            dx = cheb_adjoint(lt, d_basis)
        return d_theta, d_bias, dx


@dataclass(eq=False)
class DenseLayer:
    weight: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray

    @property
    def in_dim(self):
        return self.weight.shape[0]

    @property
    def out_dim(self):
        return self.weight.shape[1]

    @classmethod
    def init(cls, rng, d_in, d_out, dtype="float64"):
        return cls(_glorot(rng, (d_in, d_out), d_in, d_out, dtype), np.zeros(d_out, dtype=dtype))

    def forward(self, x):
        return x @ self.weight + self.bias

    def backward(self, x, dout):
        return x.T @ dout, dout.sum(axis=0), dout @ self.weight.T


@dataclass(eq=False)
class GinModel:
    config: ModelConfig
    text_conv1: GcnLayer
    text_conv2: GcnLayer
    text_fc: DenseLayer
    image_fc: DenseLayer
    score_fc: DenseLayer
    image_hidden: list[DenseLayer] = field(default_factory=list)

    @classmethod
    def init(cls, config: ModelConfig) -> "GinModel":
        rng = np.random.default_rng(config.seed)
        c1, c2 = config.channels
        dt = config.dtype
        conv1 = GcnLayer.init(rng, 1, c1, config.order, dt)
        conv2 = GcnLayer.init(rng, c1, c2, config.order, dt)
        text_fc = DenseLayer.init(rng, config.n_vertices * c2, config.common_dim, dt)
        hidden, d = [], config.image_dim
        for width in config.image_hidden:
            hidden.append(DenseLayer.init(rng, d, width, dt))
            d = width
        image_fc = DenseLayer.init(rng, d, config.common_dim, dt)
        score_in = config.common_dim if config.score_mode == "hadamard" else 1
        score_fc = DenseLayer.init(rng, score_in, 1, dt)
        return cls(config, conv1, conv2, text_fc, image_fc, score_fc, hidden)

    @property
    def common_dim(self):
        return self.config.common_dim

    @property
    def dropout_rate(self):
        return self.config.dropout

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def layers(self):
        yield "text_conv1", self.text_conv1
        yield "text_conv2", self.text_conv2
        yield "text_fc", self.text_fc
        for i, layer in enumerate(self.image_hidden):
            yield f"image_hidden{i}", layer
        yield "image_fc", self.image_fc
        yield "score_fc", self.score_fc

    def parameters(self) -> dict[str, np.ndarray]:
        """Live references to every parameter tensor, keyed ``layer.tensor``."""
        out = {}
        for name, layer in self.layers():
            if isinstance(layer, GcnLayer):
                out[f"{name}.theta"] = layer.theta
            else:
                out[f"{name}.weight"] = layer.weight
            out[f"{name}.bias"] = layer.bias
        return out

    def regularized(self) -> list[str]:
        return [k for k in self.parameters() if not k.endswith(".bias")]

    def copy(self) -> "GinModel":
        clone = GinModel.init(self.config)
        clone.load_parameters(self.parameters())
        return clone

    def load_parameters(self, params: dict[str, np.ndarray]) -> None:
        mine = self.parameters()
        if set(params) != set(mine):
            raise ValueError(f"parameter names differ: {sorted(set(params) ^ set(mine))}")
        for k, v in params.items():
            v = np.asarray(v)
            if v.shape != mine[k].shape:
                raise ValueError(f"shape mismatch for {k}: expected {mine[k].shape}, got {v.shape}")
            mine[k][...] = v


# --- forward ----------------------------------------------------------------


def _as_rows(x, width, dtype, what):
    x = np.asarray(x, dtype=dtype)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ValueError(f"{what} must have {width} features, got shape {x.shape}")
    return x


def _text_path(m: GinModel, lt: SparseSym, feats, rng=None):
    x = _as_rows(feats, m.config.n_vertices, m.dtype, "text features")
    if lt.n != m.config.n_vertices:
        raise ValueError(f"graph has {lt.n} vertices, model expects {m.config.n_vertices}")
    batch = x.shape[0]
    x = x.T[:, :, None]  # (N, B, 1)
    z1, basis1 = m.text_conv1.forward(lt, x)
    h1 = np.maximum(z1, 0)
    z2, basis2 = m.text_conv2.forward(lt, h1)
    h2 = np.maximum(z2, 0)
    flat = np.ascontiguousarray(h2.transpose(1, 0, 2)).reshape(batch, -1)
    mask = None
    if rng is not None and m.dropout_rate > 0:
        keep = 1.0 - m.dropout_rate
        mask = (rng.random(flat.shape) < keep).astype(m.dtype) / m.dtype.type(keep)
        flat_in = flat * mask
    else:
        flat_in = flat
    f_t = m.text_fc.forward(flat_in)
    cache = dict(basis1=basis1, z1=z1, h1=h1, basis2=basis2, z2=z2, flat_in=flat_in, mask=mask)
    return f_t, cache


def _image_path(m: GinModel, feats):
    x = _as_rows(feats, m.config.image_dim, m.dtype, "image features")
    acts = [x]
    for layer in m.image_hidden:
        acts.append(np.maximum(layer.forward(acts[-1]), 0))
    return m.image_fc.forward(acts[-1]), acts


def _score(m: GinModel, f_t, f_img):
    if m.config.score_mode == "hadamard":
        joint = f_t * f_img
    else:
        joint = np.sum(f_t * f_img, axis=1, keepdims=True)
    return m.score_fc.forward(joint)[:, 0], joint


def encode_texts(m: GinModel, g: TextGraph, feats, training=False, rng=None) -> np.ndarray:
    """Common-space embeddings for a (B, N) block of text features.

    Dropout is applied at the FC input only when ``training`` and an ``rng``
    is given.
    """
    f_t, _ = _text_path(m, g.scaled_laplacian, feats, rng if training else None)
    return f_t


def encode_images(m: GinModel, feats) -> np.ndarray:
    return _image_path(m, feats)[0]


def text_forward(m: GinModel, g: TextGraph, t, training=False, rng=None) -> np.ndarray:
    feats = t.features if isinstance(t, TextSample) else t
    return encode_texts(m, g, np.asarray(feats)[None, :], training, rng)[0]


def image_forward(m: GinModel, i, training=False) -> np.ndarray:
    feats = getattr(i, "features", i)
    return encode_images(m, np.asarray(feats)[None, :])[0]


def score_pair(m: GinModel, f_t, f_img) -> float:
    f_t = np.asarray(f_t)
    f_img = np.asarray(f_img)
    if f_t.shape != (m.common_dim,) or f_img.shape != (m.common_dim,):
        raise ValueError(f"embeddings must have length {m.common_dim}")
    return float(score_matrix(m, f_t[None, :], f_img[None, :])[0, 0])


def score_matrix(m: GinModel, f_texts, f_images) -> np.ndarray:
    """All-pairs scores, rows = texts, columns = images."""
    w = m.score_fc.weight[:, 0]
    b = m.score_fc.bias[0]
    if m.config.score_mode == "hadamard":
        return (f_texts * w) @ f_images.T + b
    return w[0] * (f_texts @ f_images.T) + b


def pair_scores(m, g, batch: PairBatch, text_feats, image_feats, rng=None):
    rows_t = np.asarray(text_feats)[batch.text_idx]
    rows_i = np.asarray(image_feats)[batch.image_idx]
    return forward_pairs(m, g.scaled_laplacian, rows_t, rows_i, rng)[0]


# --- backward ---------------------------------------------------------------


def forward_pairs(m: GinModel, lt: SparseSym, text_rows, image_rows, rng=None):
    """Scores for aligned (text, image) feature rows plus the cache needed by
    :func:`backward_pairs`."""
    f_t, tc = _text_path(m, lt, text_rows, rng)
    f_i, acts = _image_path(m, image_rows)
    scores, joint = _score(m, f_t, f_i)
    return scores, dict(text=tc, acts=acts, f_t=f_t, f_i=f_i, joint=joint)


def backward_pairs(m: GinModel, lt: SparseSym, cache, d_scores) -> dict[str, np.ndarray]:
    """Gradient of ``sum(d_scores * scores)`` for every parameter (no L2 term)."""
    ds = np.asarray(d_scores, dtype=m.dtype)[:, None]
    f_t, f_i, acts, tc = cache["f_t"], cache["f_i"], cache["acts"], cache["text"]
    grads = {}
    grads["score_fc.weight"], grads["score_fc.bias"], d_joint = m.score_fc.backward(cache["joint"], ds)
    # in "inner" mode d_joint is (B, 1) and broadcasts
    df_t, df_i = d_joint * f_i, d_joint * f_t

    grads["image_fc.weight"], grads["image_fc.bias"], d_act = m.image_fc.backward(acts[-1], df_i)
    for idx in range(len(m.image_hidden) - 1, -1, -1):
        d_act = d_act * (acts[idx + 1] > 0)
        gw, gb, d_act = m.image_hidden[idx].backward(acts[idx], d_act)
        grads[f"image_hidden{idx}.weight"], grads[f"image_hidden{idx}.bias"] = gw, gb

    grads["text_fc.weight"], grads["text_fc.bias"], d_flat = m.text_fc.backward(tc["flat_in"], df_t)
    if tc["mask"] is not None:
        d_flat = d_flat * tc["mask"]
    d_h2 = d_flat.reshape(-1, m.config.n_vertices, m.text_conv2.out_channels).transpose(1, 0, 2)
    d_z2 = d_h2 * (tc["z2"] > 0)
    grads["text_conv2.theta"], grads["text_conv2.bias"], d_h1 = m.text_conv2.backward(lt, tc["basis2"], d_z2)
    d_z1 = d_h1 * (tc["z1"] > 0)
    grads["text_conv1.theta"], grads["text_conv1.bias"], _ = m.text_conv1.backward(
        lt, tc["basis1"], d_z1, need_input_grad=False
    )
    return grads


def scores_to_loss(m: GinModel, batch: PairBatch, scores, loss_cfg: LossConfig):
    """Loss breakdown (L2 included) and d total / d scores."""
    params = m.parameters()
    weights = [params[k] for k in m.regularized()]
    pos, neg = scores[batch.match], scores[~batch.match]
    breakdown = pairwise_loss(pos, neg, loss_cfg, weights)
    d_pos, d_neg = loss_gradient(pos, neg, loss_cfg)
    ds = np.empty(scores.shape, dtype=np.float64)
    ds[batch.match] = d_pos
    ds[~batch.match] = d_neg
    return breakdown, ds


def add_l2_grad(m: GinModel, grads, loss_cfg: LossConfig):
    params = m.parameters()
    for k in m.regularized():
        grads[k] = grads[k] + 2.0 * loss_cfg.l2 * params[k]
    return {k: grads[k].astype(params[k].dtype, copy=False) for k in params}


def backward(m: GinModel, batch: PairBatch, g: TextGraph, loss_cfg: LossConfig,
             text_feats, image_feats, rng=None) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """Loss on ``batch`` and its gradient for every parameter tensor.

    ``text_feats`` / ``image_feats`` are the (rows, dim) feature blocks that
    ``batch`` indexes. Passing ``rng`` enables dropout.
    """
    lt = g.scaled_laplacian
    scores, cache = forward_pairs(
        m, lt, np.asarray(text_feats)[batch.text_idx], np.asarray(image_feats)[batch.image_idx], rng
    )
    breakdown, ds = scores_to_loss(m, batch, scores, loss_cfg)
    grads = backward_pairs(m, lt, cache, ds)
    return breakdown, add_l2_grad(m, grads, loss_cfg)


def batch_loss(m, g, batch, loss_cfg, text_feats, image_feats) -> float:
    """Deterministic (no dropout) total loss; used by finite-difference checks."""
    scores = pair_scores(m, g, batch, text_feats, image_feats)
    weights = [m.parameters()[k] for k in m.regularized()]
    return pairwise_loss(scores[batch.match], scores[~batch.match], loss_cfg, weights).total


# --- checkpoints ------------------------------------------------------------


def _zip_write(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    # fixed timestamp so identical models give byte-identical files
    info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def _npy_bytes(arr) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(path, m: GinModel, graph: TextGraph | None = None, run_config: dict | None = None) -> None:
    """Write a zip container: one ``.npy`` per tensor plus ``meta.json``.

    When ``graph`` is given its vocabulary, edge list and lambda_max are
    stored too, so the checkpoint alone suffices for evaluation.
    """
    params = m.parameters()
    meta = {
        "format": "gin-checkpoint",
        "version": CHECKPOINT_VERSION,
        "dtype": m.config.dtype,
        "model": asdict(m.config),
        "tensors": {k: list(v.shape) for k, v in params.items()},
        "run_config": run_config or {},
    }
    if graph is not None:
        meta["graph"] = {"k": graph.k, "lambda_max": graph.lambda_max, "words": list(graph.vocab.words)}
    with zipfile.ZipFile(path, "w") as zf:
        _zip_write(zf, "meta.json", json.dumps(meta, indent=2, sort_keys=True).encode())
        for k, v in params.items():
            _zip_write(zf, f"params/{k}.npy", _npy_bytes(v))
        if graph is not None:
            _zip_write(zf, "graph/edges.npy", _npy_bytes(graph.edges()))


def load_checkpoint(path):
    """Returns ``(model, graph_or_None, meta)``; raises on any shape or key mismatch."""
    from .text_graph import Vocabulary, graph_from_adjacency

    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format") != "gin-checkpoint":
            raise ValueError(f"{path}: not a checkpoint file")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        cfg = ModelConfig(**meta["model"])
        model = GinModel.init(cfg)
        expected = model.parameters()
        declared = {k: tuple(v) for k, v in meta["tensors"].items()}
        params = {}
        for k, ref in expected.items():
            if k not in declared:
                raise ValueError(f"{path}: missing tensor {k}")
            arr = np.load(io.BytesIO(zf.read(f"params/{k}.npy")), allow_pickle=False)
            if arr.shape != ref.shape or declared[k] != ref.shape:
                raise ValueError(f"{path}: shape mismatch for {k}: expected {ref.shape}, got {arr.shape}")
            if arr.dtype != ref.dtype:
                raise ValueError(f"{path}: dtype mismatch for {k}: expected {ref.dtype}, got {arr.dtype}")
            params[k] = arr
        extra = set(declared) - set(expected)
        if extra:
            raise ValueError(f"{path}: unexpected tensors {sorted(extra)}")
        model.load_parameters(params)
        graph = None
        if "graph" in meta:
            gm = meta["graph"]
            edges = np.load(io.BytesIO(zf.read("graph/edges.npy")), allow_pickle=False).reshape(-1, 2)
            vocab = Vocabulary(tuple(gm["words"]))
            adj = SparseSym.from_triplets(len(vocab), edges[:, 0], edges[:, 1], np.ones(len(edges)), symmetrize=True)
            graph = graph_from_adjacency(vocab, adj, gm["k"], gm["lambda_max"])
    return model, graph, meta
