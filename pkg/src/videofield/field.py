"""The implicit video field: a coordinate MLP over (t, h, w) positions.

Includes the sin/cos positional encoding, the flat parameter-vector layout
the hypernetwork writes into, grid construction, forward evaluation and
chunked rendering at arbitrary resolution and length.

Pixel evaluation outside training always runs in fixed-size row blocks
(EVAL_QUANTUM rows, zero-padded), so a coordinate's value never depends on
how many other coordinates were evaluated alongside it. That makes renders
chunk-size invariant and keeps shared grid points (e.g. corner pixels)
bit-identical across output resolutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, ShapeError, Tensor

EVAL_QUANTUM = 4096  # rows per padded evaluation block


@dataclass(frozen=True)
class FieldArch:
    """Shape of the field MLP: ReLU hidden layers, linear RGB output."""

    num_bands: int = 8
    hidden_width: int = 256
    num_hidden_layers: int = 3
    out_dim: int = 3

    def __post_init__(self):
        if self.num_bands <= 0 or self.hidden_width <= 0:
            raise ValueError("num_bands and hidden_width must be positive")
        if self.num_hidden_layers <= 0 or self.out_dim <= 0:
            raise ValueError("num_hidden_layers and out_dim must be positive")

    @property
    def encoding_dim(self) -> int:
        return 6 * self.num_bands

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [(self.encoding_dim, self.hidden_width)]
        for _ in range(self.num_hidden_layers - 1):
            dims.append((self.hidden_width, self.hidden_width))
        dims.append((self.hidden_width, self.out_dim))
        return dims


@dataclass(frozen=True)
class Segment:
    layer: int
    kind: str  # "weight" | "bias"
    offset: int
    length: int


@dataclass(frozen=True)
class ThetaLayout:
    """Contiguous (weight, bias) segments covering the flat theta vector."""

    segments: tuple[Segment, ...]
    total_len: int

    def segment(self, layer: int, kind: str) -> Segment:
        for s in self.segments:
            if s.layer == layer and s.kind == kind:
                return s
        raise KeyError(f"no segment for layer {layer} kind {kind!r}")

    def layer_len(self, layer: int) -> int:
        return sum(s.length for s in self.segments if s.layer == layer)

    @property
    def num_layers(self) -> int:
        return 1 + max(s.layer for s in self.segments)


def layout_theta(arch: FieldArch) -> ThetaLayout:
    """Flat layout of the field parameters: per layer, row-major weight
    matrix (fan_in x fan_out) followed by the bias vector."""
    segments = []
    offset = 0
    for layer, (fan_in, fan_out) in enumerate(arch.layer_dims()):
        segments.append(Segment(layer, "weight", offset, fan_in * fan_out))
        offset += fan_in * fan_out
        segments.append(Segment(layer, "bias", offset, fan_out))
        offset += fan_out
    return ThetaLayout(tuple(segments), offset)


# ---------------------------------------------------------------------------
# coordinates and encoding

def axis_coords(n: int) -> np.ndarray:
    """n equally spaced points on [-1, 1] inclusive; a single point maps
    to the interval center 0."""
    if n < 1:
        raise ValueError(f"axis extent must be >= 1, got {n}")
    if n == 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, n)


@dataclass(frozen=True)
class CoordinateGrid:
    coords: np.ndarray  # (N, 3) rows of (t, h, w)
    dims: tuple[int, int, int]


def make_grid(num_frames: int, height: int, width: int) -> CoordinateGrid:
    """Full coordinate grid in t-major, then h, then w row order."""
    t, h, w = np.meshgrid(
        axis_coords(num_frames), axis_coords(height), axis_coords(width),
        indexing="ij",
    )
    coords = np.stack([t.ravel(), h.ravel(), w.ravel()], axis=1)
    return CoordinateGrid(coords, (num_frames, height, width))


def positional_encode(coords: np.ndarray, num_bands: int) -> np.ndarray:
    """sin/cos features at frequencies 2^k * pi for k in [0, num_bands).

    Column order is axis-major, then band, then (sin, cos), so each input
    column expands to 2*num_bands feature columns.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ShapeError(f"coords must be (N, 3), got {coords.shape}")
    if coords.size and (np.min(coords) < -1.0 or np.max(coords) > 1.0):
        raise ValueError("coordinate out of range [-1, 1]")
    freqs = (2.0 ** np.arange(num_bands)) * np.pi
    angles = coords[:, :, None] * freqs[None, None, :]          # (N, 3, L)
    feats = np.stack([np.sin(angles), np.cos(angles)], axis=-1)  # (N, 3, L, 2)
    return feats.reshape(coords.shape[0], 6 * num_bands)


# ---------------------------------------------------------------------------
# forward evaluation

def theta_layers(theta: Tensor, arch: FieldArch, layout: ThetaLayout,
                 batch: int | None = None):
    """Slice a flat theta Tensor into per-layer (weight, bias) Tensors.

    theta is (total,) when batch is None, else (batch, total); weights come
    out (fan_in, fan_out) or (batch, fan_in, fan_out) accordingly.
    """
    axis = 0 if batch is None else 1
    layers = []
    for layer, (fan_in, fan_out) in enumerate(arch.layer_dims()):
        ws = layout.segment(layer, "weight")
        bs = layout.segment(layer, "bias")
        w = ad.slice_axis(theta, axis, ws.offset, ws.offset + ws.length)
        b = ad.slice_axis(theta, axis, bs.offset, bs.offset + bs.length)
        if batch is None:
            w = ad.reshape(w, (fan_in, fan_out))
            b = ad.reshape(b, (1, fan_out))
        else:
            w = ad.reshape(w, (batch, fan_in, fan_out))
            b = ad.reshape(b, (batch, 1, fan_out))
        layers.append((w, b))
    return layers


def mlp_apply(x: Tensor, layers) -> Tensor:
    """ReLU-hidden MLP with a linear final layer; layers are (w, b) pairs."""
    for i, (w, b) in enumerate(layers):
        x = ad.add(ad.matmul(x, w), b)
        if i < len(layers) - 1:
            x = ad.relu(x)
    return x


def field_apply(theta: Tensor, features: Tensor, arch: FieldArch,
                layout: ThetaLayout) -> Tensor:
    """Batched training-path forward: theta (V, total), features
    (V, B, enc) -> (V, B, out). Differentiable in theta."""
    batch = theta.value.shape[0]
    if theta.value.ndim != 2 or theta.value.shape[1] != layout.total_len:
        raise ShapeError(
            f"theta must be (V, {layout.total_len}), got {theta.value.shape}"
        )
    return mlp_apply(features, theta_layers(theta, arch, layout, batch=batch))


def _eval_block(theta: Tensor, layers, feats: np.ndarray) -> Tensor:
    """Evaluate one coordinate block padded to EVAL_QUANTUM rows.

    Padding rows are sliced away before returning, so results do not
    depend on block population.
    """
    n = feats.shape[0]
    if n < EVAL_QUANTUM:
        padded = np.zeros((EVAL_QUANTUM, feats.shape[1]))
        padded[:n] = feats
        feats = padded
    x = theta.graph.constant(feats, name="features")
    out = mlp_apply(x, layers)
    if n < EVAL_QUANTUM:
        out = ad.slice_axis(out, 0, 0, n)
    return out


def field_eval(theta: Tensor, coords: np.ndarray, arch: FieldArch,
               layout: ThetaLayout) -> Tensor:
    """Row-stable forward at arbitrary coordinates: theta (total,),
    coords (S, 3) -> Tensor (S, out). Differentiable in theta; evaluation
    runs in fixed EVAL_QUANTUM blocks."""
    if theta.value.ndim != 1 or theta.value.shape[0] != layout.total_len:
        raise ShapeError(
            f"theta must be ({layout.total_len},), got {theta.value.shape}"
        )
    feats = positional_encode(coords, arch.num_bands)
    layers = theta_layers(theta, arch, layout)
    blocks = [
        _eval_block(theta, layers, feats[i:i + EVAL_QUANTUM])
        for i in range(0, feats.shape[0], EVAL_QUANTUM)
    ]
    return blocks[0] if len(blocks) == 1 else ad.concat(blocks, axis=0)


def field_forward(theta: np.ndarray, coords: np.ndarray,
                  arch: FieldArch) -> np.ndarray:
    """Plain-array forward pass: theta (total,), coords (N, 3) -> (N, out)."""
    layout = layout_theta(arch)
    graph = Graph()
    out = field_eval(graph.leaf(theta, name="theta"), coords, arch, layout)
    return ad.evaluate(graph, out)


# ---------------------------------------------------------------------------
# videos and rendering

@dataclass(frozen=True)
class VideoTensor:
    """Dense (T, H, W, 3) pixel volume with values in [0, 1]."""

    pixels: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 4 or px.shape[-1] != 3:
            raise ShapeError(f"video must be (T, H, W, 3), got {px.shape}")
        if px.size == 0:
            raise ShapeError("video must have at least one pixel")
        if not np.all(np.isfinite(px)):
            raise ValueError("video contains non-finite values")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("video values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.pixels.shape[:3]

    @property
    def num_pixels(self) -> int:
        t, h, w = self.dims
        return t * h * w


def render_video(theta: np.ndarray, arch: FieldArch, num_frames: int,
                 height: int, width: int,
                 chunk_size: int = 65536) -> VideoTensor:
    """Render the field over a full grid, clamped to [0, 1].

    chunk_size caps how many coordinate rows are materialized at once;
    because evaluation always runs in fixed padded blocks, the output is
    bit-identical for every chunk_size.
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    theta = np.asarray(theta, dtype=np.float64)
    layout = layout_theta(arch)
    grid = make_grid(num_frames, height, width)
    out = np.empty((grid.coords.shape[0], arch.out_dim))
    for start in range(0, grid.coords.shape[0], chunk_size):
        graph = Graph()
        theta_t = graph.leaf(theta, name="theta")
        chunk = field_eval(theta_t, grid.coords[start:start + chunk_size],
                           arch, layout)
        out[start:start + chunk_size] = ad.evaluate(graph, chunk)
    pixels = np.clip(out, 0.0, 1.0).reshape(num_frames, height, width, 3)
    return VideoTensor(pixels)
