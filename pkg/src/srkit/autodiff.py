"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor owns a float64 ndarray plus, while gradients are enabled, the
records linking it to its parents: one vector-Jacobian product per parent.
`backward` linearizes the graph reachable from a scalar loss into a Tape
(reverse topological order) and replays it once, accumulating gradients on
every requires_grad leaf. Double precision throughout so finite-difference
checks can be tight.

conv2d is a direct convolution (vectorized window gather, no FFT). rfft
returns real/imaginary parts stacked on a new axis; its backward rule is
the exact adjoint of the linear map R^N -> R^(2F).
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import erf, expit

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """N-dimensional float64 value, optionally a differentiable leaf."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_needs")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if requires_grad and not np.all(np.isfinite(arr)):
            raise ValueError("leaf tensor contains non-finite values")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._needs = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, shape is {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # arithmetic sugar; scalars are promoted to constant tensors
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, key):
        return slice_(self, key)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(data: np.ndarray, parents) -> Tensor:
    """Op output; records parent links only when a grad path needs them."""
    out = Tensor(data)
    if _grad_enabled:
        kept = tuple((p, vjp) for p, vjp in parents if p._needs)
        if kept:
            out._parents = kept
            out._needs = True
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tape:
    """Reverse-topological record of the ops reachable from a root tensor."""

    def __init__(self, root: Tensor):
        self.nodes: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, emitted = stack.pop()
            if emitted:
                self.nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if parent._needs and id(parent) not in seen:
                    stack.append((parent, False))
        # nodes is parents-first; backward walks it reversed


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad leaf reachable from `loss`.

    Gradients accumulate (sum) into existing .grad buffers; call zero_grad
    between steps. Raises on non-scalar or non-finite loss.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    if not np.isfinite(loss.data):
        raise FloatingPointError(f"non-finite loss: {float(loss.data)}")
    if not loss._needs:
        return
    tape = Tape(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        for parent, vjp in node._parents:
            if not parent._needs:
                continue
            pg = vjp(g)
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg


# ---------------------------------------------------------------------------
# elementwise ops


def add(x: Tensor, y: Tensor) -> Tensor:
    return _make(
        x.data + y.data,
        [
            (x, lambda g: _unbroadcast(g, x.data.shape)),
            (y, lambda g: _unbroadcast(g, y.data.shape)),
        ],
    )


def sub(x: Tensor, y: Tensor) -> Tensor:
    return _make(
        x.data - y.data,
        [
            (x, lambda g: _unbroadcast(g, x.data.shape)),
            (y, lambda g: _unbroadcast(-g, y.data.shape)),
        ],
    )


def mul(x: Tensor, y: Tensor) -> Tensor:
    return _make(
        x.data * y.data,
        [
            (x, lambda g: _unbroadcast(g * y.data, x.data.shape)),
            (y, lambda g: _unbroadcast(g * x.data, y.data.shape)),
        ],
    )


def div(x: Tensor, y: Tensor) -> Tensor:
    return _make(
        x.data / y.data,
        [
            (x, lambda g: _unbroadcast(g / y.data, x.data.shape)),
            (y, lambda g: _unbroadcast(-g * x.data / (y.data * y.data), y.data.shape)),
        ],
    )


def neg(x: Tensor) -> Tensor:
    return _make(-x.data, [(x, lambda g: -g)])


def power(x: Tensor, p: float) -> Tensor:
    p = float(p)
    return _make(x.data**p, [(x, lambda g: g * p * x.data ** (p - 1.0))])


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, [(x, lambda g: g * out)])


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), [(x, lambda g: g / x.data)])


def abs_(x: Tensor) -> Tensor:
    return _make(np.abs(x.data), [(x, lambda g: g * np.sign(x.data))])


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)
    return _make(out, [(x, lambda g: g * out * (1.0 - out))])


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Tensor) -> Tensor:
    a = x.data
    cdf = 0.5 * (1.0 + erf(a * _INV_SQRT2))
    return _make(
        a * cdf,
        [(x, lambda g: g * (cdf + a * _INV_SQRT2PI * np.exp(-0.5 * a * a)))],
    )


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    mask = x.data >= 0
    scale = np.where(mask, 1.0, slope)
    return _make(x.data * scale, [(x, lambda g: g * scale)])


# ---------------------------------------------------------------------------
# shape ops


def reshape(x: Tensor, shape) -> Tensor:
    return _make(x.data.reshape(shape), [(x, lambda g: g.reshape(x.data.shape))])


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), [(x, lambda g: np.transpose(g, inv))])


def slice_(x: Tensor, key) -> Tensor:
    """Basic (slice/int/ellipsis) indexing; gradient scatters into zeros."""

    def vjp(g):
        z = np.zeros_like(x.data)
        z[key] = g
        return z

    return _make(x.data[key], [(x, vjp)])


def concat(xs: list[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.data.shape[axis] for t in xs]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def make_vjp(i):
        sl = [slice(None)] * xs[i].data.ndim
        sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
        sl = tuple(sl)
        return lambda g: g[sl]

    return _make(
        np.concatenate([t.data for t in xs], axis=axis),
        [(t, make_vjp(i)) for i, t in enumerate(xs)],
    )


def pad(x: Tensor, pad_width) -> Tensor:
    """Zero padding; pad_width as in np.pad (per-axis (before, after))."""
    pw = tuple((int(a), int(b)) for a, b in pad_width)
    core = tuple(slice(a, a + d) for (a, _), d in zip(pw, x.data.shape))
    return _make(np.pad(x.data, pw), [(x, lambda g: g[core])])


def roll(x: Tensor, shift, axis) -> Tensor:
    return _make(
        np.roll(x.data, shift, axis=axis),
        [(x, lambda g: np.roll(g, tuple(-s for s in np.atleast_1d(shift)), axis=axis))],
    )


# ---------------------------------------------------------------------------
# reductions


def _restore(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return _make(
        x.data.sum(axis=axis, keepdims=keepdims),
        [(x, lambda g: _restore(g, x.data.shape, axis, keepdims))],
    )


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod(
        [x.data.shape[a] for a in np.atleast_1d(axis)]
    )
    return _make(
        x.data.mean(axis=axis, keepdims=keepdims),
        [(x, lambda g: _restore(g, x.data.shape, axis, keepdims) / count)],
    )


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _make(
        s,
        [(x, lambda g: s * (g - (g * s).sum(axis=axis, keepdims=True)))],
    )


# ---------------------------------------------------------------------------
# linear algebra and convolution


def matmul(x: Tensor, y: Tensor) -> Tensor:
    """Batched matrix product; operands must be at least 2-D."""
    if x.data.ndim < 2 or y.data.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")

    def vjp_x(g):
        gx = np.matmul(g, np.swapaxes(y.data, -1, -2))
        return _unbroadcast(gx, x.data.shape)

    def vjp_y(g):
        gy = np.matmul(np.swapaxes(x.data, -1, -2), g)
        return _unbroadcast(gy, y.data.shape)

    return _make(np.matmul(x.data, y.data), [(x, vjp_x), (y, vjp_y)])


def conv2d(x: Tensor, w: Tensor, stride=(1, 1), padding=(0, 0)) -> Tensor:
    """Direct 2-D correlation. x: (B,C,H,W), w: (O,C,kh,kw) -> (B,O,Ho,Wo).

    Forward gathers sliding windows with stride tricks and contracts them
    against the kernel. The input gradient scatters one slice per kernel
    tap, which keeps everything exact for any stride/padding.
    """
    sh, sw = stride
    ph, pw = padding
    a = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    B, C, H, W = a.shape
    O, Cw, kh, kw = w.data.shape
    if Cw != C:
        raise ValueError(f"channel mismatch: input {C} vs kernel {Cw}")
    if H < kh or W < kw:
        raise ValueError("kernel larger than padded input")
    Ho = (H - kh) // sh + 1
    Wo = (W - kw) // sw + 1
    sb, sc, srow, scol = a.strides
    windows = as_strided(
        a,
        shape=(B, C, Ho, Wo, kh, kw),
        strides=(sb, sc, srow * sh, scol * sw, srow, scol),
    )
    out = np.tensordot(windows, w.data, axes=[(1, 4, 5), (1, 2, 3)])
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def vjp_x(g):
        gx = np.zeros_like(a)
        for i in range(kh):
            for j in range(kw):
                # (B,O,Ho,Wo) x (O,C) -> (B,C,Ho,Wo), placed at tap (i,j)
                contrib = np.tensordot(g, w.data[:, :, i, j], axes=[(1,), (0,)])
                gx[:, :, i : i + sh * Ho : sh, j : j + sw * Wo : sw] += (
                    contrib.transpose(0, 3, 1, 2)
                )
        if ph or pw:
            gx = gx[:, :, ph : ph + x.data.shape[2], pw : pw + x.data.shape[3]]
        return gx

    def vjp_w(g):
        return np.tensordot(g, windows, axes=[(0, 2, 3), (0, 2, 3)])

    return _make(out, [(x, vjp_x), (w, vjp_w)])


def conv1d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """1-D correlation via conv2d. x: (B,C,T), w: (O,C,k) -> (B,O,To)."""
    B, C, T = x.data.shape
    O, _, k = w.data.shape
    x4 = reshape(x, (B, C, 1, T))
    w4 = reshape(w, (O, C, 1, k))
    out = conv2d(x4, w4, stride=(1, stride), padding=(0, padding))
    return reshape(out, (B, O, out.data.shape[3]))


def frame(x: Tensor, frame_len: int, hop: int) -> Tensor:
    """Split the last axis into overlapping frames: (..., T) -> (..., nf, L)."""
    T = x.data.shape[-1]
    if T < frame_len:
        raise ValueError(f"signal length {T} shorter than frame {frame_len}")
    nf = (T - frame_len) // hop + 1
    idx = hop * np.arange(nf)[:, None] + np.arange(frame_len)[None, :]
    out = x.data[..., idx]

    def vjp(g):
        z = np.zeros_like(x.data)
        for i in range(nf):
            z[..., i * hop : i * hop + frame_len] += g[..., i, :]
        return z

    return _make(out, [(x, vjp)])


def overlap_add(frames: Tensor, hop: int) -> Tensor:
    """Adjoint of frame: (..., nf, L) -> (..., (nf-1)*hop + L)."""
    nf, L = frames.data.shape[-2:]
    T = (nf - 1) * hop + L
    out = np.zeros(frames.data.shape[:-2] + (T,))
    for i in range(nf):
        out[..., i * hop : i * hop + L] += frames.data[..., i, :]
    idx = hop * np.arange(nf)[:, None] + np.arange(L)[None, :]
    return _make(out, [(frames, lambda g: g[..., idx])])


def rfft(x: Tensor) -> Tensor:
    """Real FFT over the last axis, stacked as (..., 2, F): real then imag.

    Backward is the adjoint of the linear map: zero-pad the F cograd bins
    to the full spectrum and take N * Re(ifft(.)).
    """
    X = np.fft.rfft(x.data, axis=-1)
    out = np.stack([X.real, X.imag], axis=-2)
    N = x.data.shape[-1]

    def vjp(g):
        G = g[..., 0, :] + 1j * g[..., 1, :]
        full = np.zeros(g.shape[:-2] + (N,), dtype=np.complex128)
        full[..., : G.shape[-1]] = G
        return N * np.fft.ifft(full, axis=-1).real

    return _make(out, [(x, vjp)])


# ---------------------------------------------------------------------------
# composites used across models and losses


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then affine."""
    mu = mean(x, axis=-1, keepdims=True)
    xc = sub(x, mu)
    var = mean(mul(xc, xc), axis=-1, keepdims=True)
    rstd = power(add(var, Tensor(eps)), -0.5)
    return add(mul(mul(xc, rstd), gamma), beta)


def avg_pool1d(x: Tensor, kernel: int, stride: int, padding: int = 0) -> Tensor:
    """Average pooling over the last axis of (B,C,T)."""
    if padding:
        x = pad(x, ((0, 0), (0, 0), (padding, padding)))
    return mean(frame(x, kernel, stride), axis=-1)


# ---------------------------------------------------------------------------
# optimizer


class AdamW:
    """AdamW with decoupled weight decay.

    p <- p - lr*wd*p - lr*m_hat/(sqrt(v_hat)+eps), bias-corrected moments.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 2e-4,
        betas: tuple[float, float] = (0.8, 0.99),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        missing = [k for k, p in self.params.items() if p.grad is None]
        if missing:
            raise ValueError(f"missing gradients for: {', '.join(sorted(missing))}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = p.grad
            m = self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            v = self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data = p.data - self.lr * self.weight_decay * p.data - self.lr * update

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moments and step count, keyed for the training-state checkpoint."""
        out = {"opt.t": np.float64(self.t)}
        for k in self.params:
            out[f"opt.m.{k}"] = self.m[k]
            out[f"opt.v.{k}"] = self.v[k]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.t = int(arrays["opt.t"])
        for k in self.params:
            self.m[k] = np.array(arrays[f"opt.m.{k}"], dtype=np.float64)
            self.v[k] = np.array(arrays[f"opt.v.{k}"], dtype=np.float64)


# ---------------------------------------------------------------------------
# checkpoint serialization

MODEL_MAGIC = b"SRKT1"
STATE_MAGIC = b"SRKS1"
_DTYPES = {MODEL_MAGIC: "<f4", STATE_MAGIC: "<f8"}


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], magic: bytes = MODEL_MAGIC) -> None:
    """Write named arrays: magic, then per record [u32 name length, name,
    u32 rank, u32 dims, little-endian data]. SRKT1 stores float32 (model
    weights), SRKS1 float64 (training state)."""
    dtype = _DTYPES[magic]
    with open(path, "wb") as f:
        f.write(magic)
        for name in sorted(arrays):
            # ascontiguousarray would promote 0-d to 1-D and break the
            # shape roundtrip, so keep rank and only fix memory layout
            arr = np.asarray(arrays[name], dtype=dtype)
            if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
                arr = np.ascontiguousarray(arr)
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path: str | Path, magic: bytes = MODEL_MAGIC) -> dict[str, np.ndarray]:
    """Read a checkpoint written by save_checkpoint; bit-exact round trip."""
    dtype = np.dtype(_DTYPES[magic])
    arrays: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        head = f.read(len(magic))
        if head != magic:
            raise ValueError(f"bad checkpoint magic {head!r}, expected {magic!r}")
        while True:
            raw = f.read(4)
            if not raw:
                break
            if len(raw) != 4:
                raise ValueError("truncated checkpoint record")
            (name_len,) = struct.unpack("<I", raw)
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{rank}I", f.read(4 * rank)) if rank else ()
            count = int(np.prod(shape, dtype=np.int64)) if rank else 1
            buf = f.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise ValueError(f"truncated data for record {name!r}")
            arrays[name] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return arrays
