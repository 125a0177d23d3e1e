"""Hypernetwork that writes field parameters from per-video latent codes.

One head MLP per field layer emits that layer's flat (weight, bias)
segment; the segments concatenate into the full theta vector. A fusion MLP
combines the learnable per-video context code c with a frozen semantic
code g into the instance code m that conditions the heads.

The semantic pathway is frozen: a seeded random projection of downsampled
grayscale frames (stand-in for externally computed per-frame embeddings,
which can also be supplied from file) aggregated by a 3-layer bidirectional
GRU. Only the context codes, fusion net and heads ever receive gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, ShapeError, Tensor
from .field import FieldArch, ThetaLayout, VideoTensor, layout_theta, mlp_apply, render_video
from .profiles import Profile
from .rng import gaussian, stream, uniform_fan_in

CODE_SIGMA_INIT = 0.01  # fresh context codes start near zero
HEAD_OUT_SCALE = 0.01   # final head weights start small; bias carries field init

# ---------------------------------------------------------------------------
# plain-MLP parameter plumbing

def mlp_dims(in_dim: int, hidden: int, num_hidden: int, out_dim: int):
    return [in_dim] + [hidden] * num_hidden + [out_dim]


def init_mlp(dims, rng) -> list[tuple[np.ndarray, np.ndarray]]:
    """He-uniform weights, zero biases."""
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        layers.append((uniform_fan_in(rng, (fan_in, fan_out), fan_in),
                       np.zeros(fan_out)))
    return layers


def mlp_leaves(graph: Graph, layers, requires_grad: bool, name: str):
    return [
        (graph.leaf(w, requires_grad=requires_grad, name=f"{name}.w{i}"),
         graph.leaf(b, requires_grad=requires_grad, name=f"{name}.b{i}"))
        for i, (w, b) in enumerate(layers)
    ]


def mlp_forward_np(x: np.ndarray, layers) -> np.ndarray:
    """Array-level MLP used where no gradients are needed (frozen paths)."""
    for i, (w, b) in enumerate(layers):
        x = x @ w + b
        if i < len(layers) - 1:
            x = np.maximum(x, 0.0)
    return x


# ---------------------------------------------------------------------------
# latent codebook

@dataclass
class LatentCodebook:
    """Per-video codes: learnable c rows, frozen semantic g rows."""

    c: np.ndarray  # (N, context_dim)
    g: np.ndarray  # (N, semantic_dim)

    def __post_init__(self):
        if self.c.ndim != 2 or self.g.ndim != 2 or len(self.c) != len(self.g):
            raise ShapeError("codebook arrays must be (N, dim) with equal N")

    def __len__(self):
        return len(self.c)


def _code_row(seed: int, index: int, dim: int, sigma: float) -> np.ndarray:
    return gaussian(stream(seed, "context-code", index), (dim,), sigma)


def codebook_init(count: int, seed: int, profile: Profile,
                  sigma_init: float = CODE_SIGMA_INIT) -> LatentCodebook:
    """Fresh codebook with Gaussian context codes and zeroed semantic codes.

    Codes are drawn from per-index streams, so extending later reproduces
    exactly what a larger fresh init would have produced.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    c = np.stack([_code_row(seed, i, profile.context_dim, sigma_init)
                  for i in range(count)]) if count else \
        np.zeros((0, profile.context_dim))
    g = np.zeros((count, profile.semantic_dim))
    return LatentCodebook(c, g)


def codebook_extend(codebook: LatentCodebook, added: int, seed: int,
                    profile: Profile,
                    sigma_init: float = CODE_SIGMA_INIT) -> LatentCodebook:
    """Append `added` freshly initialized codes; existing rows are kept
    bit-exactly. Shrinking is not a thing."""
    if added < 0:
        raise ValueError("codebook can only grow; shrink attempted")
    start = len(codebook)
    new_c = [_code_row(seed, start + i, profile.context_dim, sigma_init)
             for i in range(added)]
    c = np.vstack([codebook.c] + new_c) if added else codebook.c.copy()
    g = np.vstack([codebook.g, np.zeros((added, profile.semantic_dim))])
    return LatentCodebook(c, g)


# ---------------------------------------------------------------------------
# frozen semantic encoder

@dataclass(frozen=True)
class SemanticEncoderConfig:
    mode: str = "builtin-frozen"  # or "external-file"
    embed_dim: int = 512
    gru_hidden: int = 512
    gru_layers: int = 3
    patch: int = 16  # frames are reduced to patch x patch grayscale
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("builtin-frozen", "external-file"):
            raise ValueError(f"unknown semantic encoder mode {self.mode!r}")


@dataclass
class SemanticEncoder:
    """Frozen frame embedder + bidirectional GRU aggregator."""

    config: SemanticEncoderConfig
    projection: np.ndarray                    # (patch*patch, embed_dim)
    gru: list[dict[str, np.ndarray]]          # per (layer, direction) weights

    @classmethod
    def create(cls, config: SemanticEncoderConfig) -> "SemanticEncoder":
        rng = stream(config.seed, "semantic-encoder")
        proj = uniform_fan_in(rng, (config.patch ** 2, config.embed_dim),
                              config.patch ** 2)
        gru = []
        hid = config.gru_hidden
        for layer in range(config.gru_layers):
            in_dim = config.embed_dim if layer == 0 else 2 * hid
            for _direction in ("fwd", "bwd"):
                bound_x = np.sqrt(3.0 / in_dim)
                bound_h = np.sqrt(3.0 / hid)
                gru.append({
                    "wx": rng.uniform(-bound_x, bound_x, (in_dim, 3 * hid)),
                    "wh": rng.uniform(-bound_h, bound_h, (hid, 3 * hid)),
                    "bx": rng.uniform(-bound_h, bound_h, 3 * hid),
                    "bh": rng.uniform(-bound_h, bound_h, 3 * hid),
                })
        return cls(config, proj, gru)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _gru_direction(x: np.ndarray, w: dict, reverse: bool) -> np.ndarray:
    """One GRU pass over (T, in) -> (T, hidden); gates ordered (r, z, n)."""
    hid = w["wh"].shape[0]
    order = range(len(x) - 1, -1, -1) if reverse else range(len(x))
    h = np.zeros(hid)
    out = np.empty((len(x), hid))
    for t in order:
        gx = x[t] @ w["wx"] + w["bx"]
        gh = h @ w["wh"] + w["bh"]
        r = _sigmoid(gx[:hid] + gh[:hid])
        z = _sigmoid(gx[hid:2 * hid] + gh[hid:2 * hid])
        n = np.tanh(gx[2 * hid:] + r * gh[2 * hid:])
        h = (1.0 - z) * n + z * h
        out[t] = h
    return out


def _resample_axis(arr: np.ndarray, axis: int, n: int) -> np.ndarray:
    """Deterministic reduction of one axis to n samples: area averaging
    when the source is at least n long, nearest-neighbor otherwise."""
    size = arr.shape[axis]
    arr = np.moveaxis(arr, axis, 0)
    if size >= n:
        edges = (np.arange(n + 1) * size) // n
        out = np.stack([arr[edges[k]:edges[k + 1]].mean(axis=0)
                        for k in range(n)])
    else:
        idx = ((np.arange(n) + 0.5) * size / n).astype(int)
        out = arr[idx]
    return np.moveaxis(out, 0, axis)


def frame_embeddings(video: VideoTensor, encoder: SemanticEncoder) -> np.ndarray:
    """Builtin per-frame embeddings: patch-downsampled grayscale through
    the frozen random projection, unit-normalized."""
    patch = encoder.config.patch
    gray = video.pixels.mean(axis=3)                       # (T, H, W)
    small = _resample_axis(_resample_axis(gray, 1, patch), 2, patch)
    flat = small.reshape(len(small), patch * patch)
    emb = flat @ encoder.projection
    norms = np.maximum(np.linalg.norm(emb, axis=1, keepdims=True), 1e-12)
    return emb / norms


def semantic_encode(video: VideoTensor, encoder: SemanticEncoder,
                    external_rows: np.ndarray | None = None) -> np.ndarray:
    """Video -> frozen semantic code g.

    In external mode, `external_rows` must hold one embed_dim-wide row per
    frame (e.g. precomputed CLIP frame embeddings read from file); the
    builtin embedder is used otherwise. Either way the rows run through
    the frozen bidirectional GRU, and g is the mean over time of the final
    layer's two direction streams.
    """
    cfg = encoder.config
    if external_rows is not None:
        rows = np.asarray(external_rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != cfg.embed_dim:
            raise ShapeError(
                f"embedding rows must be (T, {cfg.embed_dim}), got {rows.shape}"
            )
        if rows.shape[0] != video.dims[0]:
            raise ShapeError(
                f"embedding file has {rows.shape[0]} rows but video has "
                f"{video.dims[0]} frames"
            )
    else:
        rows = frame_embeddings(video, encoder)
    x = rows
    for layer in range(cfg.gru_layers):
        fwd = _gru_direction(x, encoder.gru[2 * layer], reverse=False)
        bwd = _gru_direction(x, encoder.gru[2 * layer + 1], reverse=True)
        x = np.concatenate([fwd, bwd], axis=1)
    half = cfg.gru_hidden
    final = 0.5 * (x[:, :half] + x[:, half:])
    return final.mean(axis=0)


# ---------------------------------------------------------------------------
# hypernetwork heads and fusion

def init_heads(profile: Profile, arch: FieldArch, layout: ThetaLayout,
               seed: int) -> list[list[tuple[np.ndarray, np.ndarray]]]:
    """One head MLP per field layer.

    The final layer of each head starts with small weights and a bias equal
    to a standard init of the corresponding field layer, so an untrained
    hypernetwork already emits a trainable field.
    """
    heads = []
    for i, (fan_in, fan_out) in enumerate(arch.layer_dims()):
        rng = stream(seed, "head", i)
        dims = mlp_dims(profile.instance_dim, profile.head_hidden,
                        profile.head_layers, layout.layer_len(i))
        layers = init_mlp(dims, rng)
        w_last, _ = layers[-1]
        field_w = uniform_fan_in(stream(seed, "head-bias", i),
                                 fan_in * fan_out, fan_in)
        bias = np.concatenate([field_w, np.zeros(fan_out)])
        layers[-1] = (w_last * HEAD_OUT_SCALE, bias)
        heads.append(layers)
    return heads


def init_fusion(profile: Profile, seed: int):
    dims = mlp_dims(profile.context_dim + profile.semantic_dim,
                    profile.fusion_hidden, profile.fusion_layers,
                    profile.instance_dim)
    return init_mlp(dims, stream(seed, "fusion"))


def hypernet_apply(m: Tensor, head_leaves) -> Tensor:
    """m (V, instance_dim) -> theta (V, total_len); segments concatenate
    in field-layer order, matching the theta layout."""
    return ad.concat([mlp_apply(m, head) for head in head_leaves], axis=1)


def fusion_apply(cg: Tensor, fusion_leaves) -> Tensor:
    return mlp_apply(cg, fusion_leaves)


# ---------------------------------------------------------------------------
# whole-model state

@dataclass
class ModelState:
    """Everything a checkpoint holds: weights, codes, encoder, bookkeeping."""

    profile: Profile
    reg_mode: str
    seed: int
    heads: list = dc_field(repr=False, default=None)
    fusion: list = dc_field(repr=False, default=None)
    codebook: LatentCodebook = dc_field(repr=False, default=None)
    encoder: SemanticEncoder = dc_field(repr=False, default=None)
    stage: int = 0
    video_dims: list = dc_field(default_factory=list)
    config_hash: str = ""

    @property
    def arch(self) -> FieldArch:
        return FieldArch(num_bands=self.profile.num_bands,
                         hidden_width=self.profile.field_hidden)

    @property
    def layout(self) -> ThetaLayout:
        return layout_theta(self.arch)

    @property
    def uses_semantic(self) -> bool:
        return "semantic" in self.reg_mode

    def num_videos(self) -> int:
        return len(self.codebook)


REG_MODES = ("none", "gaussian", "semantic", "gaussian+semantic")


def init_model(profile: Profile, seed: int, reg_mode: str = "semantic",
               encoder_mode: str = "builtin-frozen") -> ModelState:
    if reg_mode not in REG_MODES:
        raise ValueError(f"unknown regularization mode {reg_mode!r}")
    arch = FieldArch(num_bands=profile.num_bands,
                     hidden_width=profile.field_hidden)
    layout = layout_theta(arch)
    enc_cfg = SemanticEncoderConfig(mode=encoder_mode,
                                    embed_dim=profile.semantic_dim,
                                    seed=seed)
    return ModelState(
        profile=profile,
        reg_mode=reg_mode,
        seed=seed,
        heads=init_heads(profile, arch, layout, seed),
        fusion=init_fusion(profile, seed),
        codebook=codebook_init(0, seed, profile),
        encoder=SemanticEncoder.create(enc_cfg),
    )


def register_videos(state: ModelState, videos, embeddings=None) -> None:
    """Extend the codebook with one entry per new video.

    Semantic codes are computed once here and frozen; in non-semantic
    regularization modes they stay zero and the fusion input degenerates
    to the context code alone.
    """
    start = len(state.codebook)
    state.codebook = codebook_extend(state.codebook, len(videos), state.seed,
                                     state.profile)
    for i, video in enumerate(videos):
        if state.uses_semantic:
            rows = None if embeddings is None else embeddings[i]
            state.codebook.g[start + i] = semantic_encode(
                video, state.encoder, external_rows=rows)
        state.video_dims.append(tuple(video.dims))


def fuse_latent(c: np.ndarray, g: np.ndarray, fusion_layers) -> np.ndarray:
    """Single-code fusion: c (context_dim,), g (semantic_dim,) -> m."""
    c = np.asarray(c, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if c.ndim != 1 or g.ndim != 1:
        raise ShapeError("fuse_latent expects single code vectors")
    expected = fusion_layers[0][0].shape[0]
    if c.shape[0] + g.shape[0] != expected:
        raise ShapeError(
            f"fusion input is {c.shape[0]}+{g.shape[0]}, expected {expected}"
        )
    graph = Graph()
    cg = graph.constant(np.concatenate([c, g])[None, :], name="cg")
    out = fusion_apply(cg, mlp_leaves(graph, fusion_layers, False, "fusion"))
    return ad.evaluate(graph, out)[0]


def m_codes(state: ModelState) -> np.ndarray:
    """Instance codes of the whole codebook under the current fusion net.

    Always computed over the full codebook in one batch, so every consumer
    sees identical bits for the same state.
    """
    if len(state.codebook) == 0:
        return np.zeros((0, state.profile.instance_dim))
    graph = Graph()
    cg = graph.constant(
        np.concatenate([state.codebook.c, state.codebook.g], axis=1), name="cg")
    out = fusion_apply(cg, mlp_leaves(graph, state.fusion, False, "fusion"))
    return ad.evaluate(graph, out)


def hypernet_forward(state: ModelState, m: np.ndarray) -> np.ndarray:
    """Instance code (instance_dim,) -> flat theta (total_len,)."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (state.profile.instance_dim,):
        raise ShapeError(
            f"instance code must be ({state.profile.instance_dim},), got {m.shape}"
        )
    layout = state.layout
    for i, head in enumerate(state.heads):
        if head[-1][1].shape[0] != layout.layer_len(i):
            raise ShapeError(
                f"head {i} emits {head[-1][1].shape[0]} values but layout "
                f"layer is {layout.layer_len(i)} long"
            )
    graph = Graph()
    m_t = graph.constant(m[None, :], name="m")
    heads = [mlp_leaves(graph, h, False, f"head{i}")
             for i, h in enumerate(state.heads)]
    theta = hypernet_apply(m_t, heads)
    return ad.evaluate(graph, theta)[0]


def render_from_latent(state: ModelState, m: np.ndarray, num_frames: int,
                       height: int, width: int,
                       chunk_size: int = 65536) -> VideoTensor:
    theta = hypernet_forward(state, m)
    return render_video(theta, state.arch, num_frames, height, width,
                        chunk_size=chunk_size)
