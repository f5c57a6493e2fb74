"""Anisotropic convolution (ACN), the AIncep token mixer and a toy AMLNet.

Feature maps are float64 arrays shaped ``(C, W, H)``. Direction ``"x"``
runs along W (a 1xk kernel), direction ``"y"`` along H (kx1). All
convolutions are depthwise cross-correlations with zero same-padding.

ACN weight logits come from a bias-free point-wise convolution and are
interleaved per kernel size, ``(x_1, y_1, x_2, y_2, ...)``; the softmax is
taken separately over the x entries and over the y entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EvenKernel, ShapeMismatch
from .geometry import Pose2

DIRECTIONS = ("x", "y")
DEFAULT_SIZES = (3, 5, 7)
BAND_SIZE = 11


def as_tensor(x, channels: int | None = None) -> np.ndarray:
    """Validate and return a float64 ``(C, W, H)`` array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeMismatch(f"expected a C x W x H tensor, got shape {x.shape}")
    if channels is not None and x.shape[0] != channels:
        raise ShapeMismatch(f"expected {channels} channels, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("tensor has non-finite entries")
    return x


def _axis(direction: str) -> int:
    if direction == "x":
        return 1
    if direction == "y":
        return 2
    raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")


def _check_kernel(x: np.ndarray, kernel: np.ndarray) -> int:
    if kernel.ndim != 2 or kernel.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"kernel shape {kernel.shape} does not fit {x.shape[0]} channels")
    k = kernel.shape[1]
    if k % 2 == 0:
        raise EvenKernel(f"kernel size must be odd, got {k}")
    return k


def _pad(x: np.ndarray, axis: int, r: int) -> np.ndarray:
    widths = [(0, 0)] * 3
    widths[axis] = (r, r)
    return np.pad(x, widths)


def _window(xp: np.ndarray, axis: int, start: int, length: int) -> np.ndarray:
    if axis == 1:
        return xp[:, start : start + length, :]
    return xp[:, :, start : start + length]


def unidirectional_conv(x, kernel, direction: str) -> np.ndarray:
    """Depthwise 1xk (``"x"``) or kx1 (``"y"``) convolution; ``kernel`` is ``(C, k)``."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    k = _check_kernel(x, kernel)
    axis = _axis(direction)
    r = k // 2
    n = x.shape[axis]
    xp = _pad(x, axis, r)
    out = np.zeros_like(x)
    for j in range(k):
        out += kernel[:, j, None, None] * _window(xp, axis, j, n)
    return out


def unidirectional_conv_backward(x, kernel, direction: str, grad_out):
    """Return ``(grad_x, grad_kernel)`` for :func:`unidirectional_conv`."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    k = _check_kernel(x, kernel)
    axis = _axis(direction)
    r = k // 2
    n = x.shape[axis]
    xp = _pad(x, axis, r)
    grad_kernel = np.empty_like(kernel)
    for j in range(k):
        grad_kernel[:, j] = np.einsum("cwh,cwh->c", grad_out, _window(xp, axis, j, n))
    grad_x = unidirectional_conv(grad_out, kernel[:, ::-1], direction)
    return grad_x, grad_kernel


def pointwise_conv(x, zeta) -> np.ndarray:
    """1x1 convolution without bias: ``zeta`` is ``(L, C)``, output ``(L, W, H)``."""
    x = np.asarray(x, dtype=np.float64)
    zeta = np.asarray(zeta, dtype=np.float64)
    if zeta.ndim != 2 or zeta.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"zeta shape {zeta.shape} does not map {x.shape[0]} channels")
    return np.einsum("lc,cwh->lwh", zeta, x)


def _softmax(z: np.ndarray, axis: int = 0) -> np.ndarray:
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_per_direction(logits) -> np.ndarray:
    """Softmax over the x logits and, separately, over the y logits.

    ``logits`` has 2n entries along axis 0 in interleaved order; trailing
    axes (e.g. pixels) are carried through.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[0] % 2:
        raise ShapeMismatch(f"need an even number of logits, got {logits.shape[0]}")
    out = np.empty_like(logits)
    out[0::2] = _softmax(logits[0::2])
    out[1::2] = _softmax(logits[1::2])
    return out


@dataclass(frozen=True)
class AcnConfig:
    channels: int
    sizes: tuple[int, ...] = DEFAULT_SIZES

    def __post_init__(self):
        if not self.sizes:
            raise ValueError("ACN needs at least one kernel size")
        for k in self.sizes:
            if k <= 0 or k % 2 == 0:
                raise EvenKernel(f"kernel sizes must be odd and positive, got {k}")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")


@dataclass
class AcnLayer:
    """Parameters of one ACN layer.

    ``zeta`` maps C channels to 2n interleaved logits; ``phi[u][v]`` is the
    ``(C, k_v)`` depthwise kernel for direction ``u``.
    """

    sizes: tuple[int, ...]
    zeta: np.ndarray
    phi: dict[str, list[np.ndarray]]

    def __post_init__(self):
        AcnConfig(self.zeta.shape[1], tuple(self.sizes))
        n = len(self.sizes)
        if self.zeta.shape[0] != 2 * n:
            raise ShapeMismatch(f"zeta must have {2 * n} rows, got {self.zeta.shape[0]}")
        for u in DIRECTIONS:
            if len(self.phi[u]) != n:
                raise ShapeMismatch(f"need {n} kernels for direction {u}")
            for k, ker in zip(self.sizes, self.phi[u]):
                if ker.shape != (self.channels, k):
                    raise ShapeMismatch(f"kernel {u}/{k} has shape {ker.shape}")

    @property
    def channels(self) -> int:
        return self.zeta.shape[1]

    @classmethod
    def random(cls, channels: int, sizes=DEFAULT_SIZES, rng=None, scale: float = 0.3) -> AcnLayer:
        rng = np.random.default_rng(rng)
        sizes = tuple(sizes)
        zeta = rng.normal(scale=scale, size=(2 * len(sizes), channels))
        phi = {u: [rng.normal(scale=scale / np.sqrt(k), size=(channels, k)) for k in sizes] for u in DIRECTIONS}
        return cls(sizes, zeta, phi)

    @classmethod
    def zeros(cls, channels: int, sizes=DEFAULT_SIZES) -> AcnLayer:
        sizes = tuple(sizes)
        zeta = np.zeros((2 * len(sizes), channels))
        phi = {u: [np.zeros((channels, k)) for k in sizes] for u in DIRECTIONS}
        return cls(sizes, zeta, phi)

    def parameters(self) -> dict[str, np.ndarray]:
        """Flat name -> array view of every learnable parameter."""
        params = {"zeta": self.zeta}
        for u in DIRECTIONS:
            for k, ker in zip(self.sizes, self.phi[u]):
                params[f"phi_{u}[k={k}]"] = ker
        return params


def acn_weights(x, layer: AcnLayer) -> np.ndarray:
    """Per-pixel mixing weights, shape ``(2n, W, H)``."""
    return softmax_per_direction(pointwise_conv(x, layer.zeta))


def acn_forward(x, layer: AcnLayer) -> np.ndarray:
    x = as_tensor(x, layer.channels)
    w = acn_weights(x, layer)
    out = x.copy()
    for v, k in enumerate(layer.sizes):
        for d, u in enumerate(DIRECTIONS):
            out += w[2 * v + d][None] * unidirectional_conv(x, layer.phi[u][v], u)
    return out


@dataclass
class AcnGrads:
    x: np.ndarray
    zeta: np.ndarray
    phi: dict[str, list[np.ndarray]]

    def as_dict(self) -> dict[str, np.ndarray]:
        out = {"input": self.x, "zeta": self.zeta}
        for u in DIRECTIONS:
            for ker in self.phi[u]:
                out[f"phi_{u}[k={ker.shape[1]}]"] = ker
        return out


def acn_backward(x, layer: AcnLayer, grad_out) -> AcnGrads:
    """Gradients of ``sum(grad_out * acn_forward(x, layer))``."""
    x = as_tensor(x, layer.channels)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != x.shape:
        raise ShapeMismatch(f"upstream gradient {grad_out.shape} != input {x.shape}")
    w = acn_weights(x, layer)
    grad_x = grad_out.copy()  # residual path
    grad_w = np.empty_like(w)
    grad_phi: dict[str, list[np.ndarray]] = {u: [] for u in DIRECTIONS}
    for v, k in enumerate(layer.sizes):
        for d, u in enumerate(DIRECTIONS):
            ker = layer.phi[u][v]
            y = unidirectional_conv(x, ker, u)
            grad_w[2 * v + d] = np.sum(grad_out * y, axis=0)
            gx, gk = unidirectional_conv_backward(x, ker, u, w[2 * v + d][None] * grad_out)
            grad_x += gx
            grad_phi[u].append(gk)
    # softmax Jacobian, one simplex per direction
    grad_logits = np.empty_like(w)
    for d in range(2):
        ws, gs = w[d::2], grad_w[d::2]
        grad_logits[d::2] = ws * (gs - np.sum(ws * gs, axis=0, keepdims=True))
    grad_zeta = np.einsum("lwh,cwh->lc", grad_logits, x)
    grad_x += np.einsum("lc,lwh->cwh", layer.zeta, grad_logits)
    return AcnGrads(grad_x, grad_zeta, grad_phi)


# ---------------------------------------------------------------------------
# AIncep token mixer
# ---------------------------------------------------------------------------


def channel_split(channels: int) -> tuple[int, int, int, int]:
    """Channels for (identity, 1x11, 11x1, ACN); the remainder goes to identity."""
    q = channels // 4
    return channels - 3 * q, q, q, q


@dataclass
class AIncepBlock:
    split: tuple[int, int, int, int]
    band_w: np.ndarray  # (n_w, 11), direction x
    band_h: np.ndarray  # (n_h, 11), direction y
    acn: AcnLayer | None

    def __post_init__(self):
        n_id, n_w, n_h, n_a = self.split
        if min(self.split) < 0:
            raise ShapeMismatch(f"negative channel split {self.split}")
        if self.band_w.shape[0] != n_w or self.band_h.shape[0] != n_h:
            raise ShapeMismatch("band kernels do not match the channel split")
        if n_a and (self.acn is None or self.acn.channels != n_a):
            raise ShapeMismatch("ACN branch does not match the channel split")

    @property
    def channels(self) -> int:
        return sum(self.split)

    @classmethod
    def random(cls, channels: int, rng=None, sizes=DEFAULT_SIZES, band: int = BAND_SIZE, split=None):
        rng = np.random.default_rng(rng)
        split = tuple(split) if split is not None else channel_split(channels)
        band_w = rng.normal(scale=1.0 / np.sqrt(band), size=(split[1], band))
        band_h = rng.normal(scale=1.0 / np.sqrt(band), size=(split[2], band))
        acn = AcnLayer.random(split[3], sizes, rng) if split[3] else None
        return cls(split, band_w, band_h, acn)

    @classmethod
    def identity(cls, channels: int, sizes=DEFAULT_SIZES, band: int = BAND_SIZE, split=None):
        """Delta band kernels and a zero-kernel ACN: the block is the identity map."""
        split = tuple(split) if split is not None else channel_split(channels)
        delta = np.zeros(band)
        delta[band // 2] = 1.0
        acn = AcnLayer.zeros(split[3], sizes) if split[3] else None
        return cls(split, np.tile(delta, (split[1], 1)), np.tile(delta, (split[2], 1)), acn)

    def slices(self) -> list[slice]:
        edges = np.cumsum((0,) + tuple(self.split))
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def parameters(self) -> dict[str, np.ndarray]:
        params = {"band_w": self.band_w, "band_h": self.band_h}
        if self.acn is not None:
            params.update({f"acn.{k}": v for k, v in self.acn.parameters().items()})
        return params


def aincep_forward(x, block: AIncepBlock) -> np.ndarray:
    x = as_tensor(x, block.channels)
    s_id, s_w, s_h, s_a = block.slices()
    parts = [x[s_id]]
    parts.append(unidirectional_conv(x[s_w], block.band_w, "x") if block.split[1] else x[s_w])
    parts.append(unidirectional_conv(x[s_h], block.band_h, "y") if block.split[2] else x[s_h])
    parts.append(acn_forward(x[s_a], block.acn) if block.split[3] else x[s_a])
    return np.concatenate(parts, axis=0)


def aincep_backward(x, block: AIncepBlock, grad_out) -> dict[str, np.ndarray]:
    """Gradients of ``sum(grad_out * aincep_forward(x, block))`` keyed by parameter name."""
    x = as_tensor(x, block.channels)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != x.shape:
        raise ShapeMismatch(f"upstream gradient {grad_out.shape} != input {x.shape}")
    s_id, s_w, s_h, s_a = block.slices()
    grad_x = np.zeros_like(x)
    grads: dict[str, np.ndarray] = {}
    grad_x[s_id] = grad_out[s_id]
    if block.split[1]:
        grad_x[s_w], grads["band_w"] = unidirectional_conv_backward(x[s_w], block.band_w, "x", grad_out[s_w])
    else:
        grads["band_w"] = np.zeros_like(block.band_w)
    if block.split[2]:
        grad_x[s_h], grads["band_h"] = unidirectional_conv_backward(x[s_h], block.band_h, "y", grad_out[s_h])
    else:
        grads["band_h"] = np.zeros_like(block.band_h)
    if block.split[3]:
        g = acn_backward(x[s_a], block.acn, grad_out[s_a])
        grad_x[s_a] = g.x
        for k, v in g.as_dict().items():
            if k != "input":
                grads[f"acn.{k}"] = v
    grads["input"] = grad_x
    return grads


# ---------------------------------------------------------------------------
# Toy AMLNet
# ---------------------------------------------------------------------------

IMAGE_SIZE = 224


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


def downsample(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Non-overlapping 2x2 stride-2 convolution, ``weight`` is ``(C_out, C_in, 2, 2)``."""
    c, w, h = x.shape
    if w % 2 or h % 2:
        raise ShapeMismatch(f"cannot halve spatial size {w}x{h}")
    if weight.shape[1] != c:
        raise ShapeMismatch(f"downsample expects {weight.shape[1]} channels, got {c}")
    patches = x.reshape(c, w // 2, 2, h // 2, 2)
    return np.einsum("ocij,cwihj->owh", weight, patches)


@dataclass
class AmlNetToy:
    """Untrained AMLNet-shaped network: 4 x (downsample + AIncep), 2 FC neck layers, FC head.

    Only shapes, determinism and output ranges are meaningful.
    """

    seed: int = 0
    in_channels: int = 3
    widths: tuple[int, ...] = (8, 16, 32, 32)
    neck: tuple[int, int] = (64, 32)
    sizes: tuple[int, ...] = DEFAULT_SIZES
    shape_trace: list[tuple[str, tuple[int, ...]]] = field(default_factory=list, init=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        self.down: list[np.ndarray] = []
        self.blocks: list[AIncepBlock] = []
        c_in = self.in_channels
        for c_out in self.widths:
            fan_in = c_in * 4
            self.down.append(rng.normal(scale=np.sqrt(1.0 / fan_in), size=(c_out, c_in, 2, 2)))
            self.blocks.append(AIncepBlock.random(c_out, rng, self.sizes))
            c_in = c_out
        side = IMAGE_SIZE // 2 ** len(self.widths)
        self.final_spatial = side
        dims = [c_in * side * side, *self.neck, 4]
        self.fc = [
            (rng.normal(scale=np.sqrt(1.0 / a), size=(b, a)), np.zeros(b)) for a, b in zip(dims[:-1], dims[1:])
        ]

    def forward(self, image) -> tuple[float, Pose2]:
        x = as_tensor(image, self.in_channels)
        if x.shape[1:] != (IMAGE_SIZE, IMAGE_SIZE):
            raise ShapeMismatch(f"image must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {x.shape[1:]}")
        trace = [("input", x.shape)]
        for i, (wd, blk) in enumerate(zip(self.down, self.blocks)):
            x = downsample(x, wd)
            trace.append((f"down{i + 1}", x.shape))
            x = aincep_forward(x, blk)
            trace.append((f"aincep{i + 1}", x.shape))
        z = x.reshape(-1)
        trace.append(("flatten", z.shape))
        for j, (wm, b) in enumerate(self.fc):
            z = wm @ z + b
            if j < len(self.fc) - 1:
                z = np.maximum(z, 0.0)
            trace.append((f"fc{j + 1}", z.shape))
        self.shape_trace = trace
        o_hat = _sigmoid(float(z[0]))
        return o_hat, Pose2(z[1], z[2], z[3])


def amlnet_forward_toy(image, seed: int = 0) -> tuple[float, Pose2]:
    return AmlNetToy(seed=seed).forward(image)


# ---------------------------------------------------------------------------
# Finite-difference gradient verification
# ---------------------------------------------------------------------------

GRAD_TOL = 1e-4
FD_STEP = 1e-5
REL_FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numeric_gradient(f, param: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``param``, perturbed in place."""
    grad = np.zeros_like(param)
    flat = param.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def gradient_check(
    shape=(4, 16, 16), sizes=DEFAULT_SIZES, seed: int = 0, h: float = FD_STEP, corrupt: str | None = None
) -> dict[str, float]:
    """Compare analytic ACN and AIncep gradients against central differences.

    Returns the max relative error per parameter group. ``corrupt`` names a
    group whose analytic gradient is deliberately perturbed (negative control).
    """
    rng = np.random.default_rng(seed)
    c, w, hh = shape
    x = rng.normal(size=shape)
    g = rng.normal(size=shape)
    report: dict[str, float] = {}

    def check(prefix, params, analytic, loss):
        for name, arr in params.items():
            a = analytic[name].copy()
            if corrupt == f"{prefix}.{name}":
                a.reshape(-1)[0] += 1e-2 * (1.0 + abs(a.reshape(-1)[0]))
            report[f"{prefix}.{name}"] = relative_error(a, numeric_gradient(loss, arr, h))

    layer = AcnLayer.random(c, sizes, rng)
    acn_loss = lambda: float(np.sum(g * acn_forward(x, layer)))  # noqa: E731
    ga = acn_backward(x, layer, g).as_dict()
    check("acn", {"input": x, **layer.parameters()}, ga, acn_loss)

    block = AIncepBlock.random(c, rng, sizes)
    xb = rng.normal(size=shape)
    gb = rng.normal(size=shape)
    aincep_loss = lambda: float(np.sum(gb * aincep_forward(xb, block)))  # noqa: E731
    grads = aincep_backward(xb, block, gb)
    check("aincep", {"input": xb, **block.parameters()}, grads, aincep_loss)
    return report
