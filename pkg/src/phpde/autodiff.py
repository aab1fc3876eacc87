"""Minimal reverse-mode automatic differentiation over the primitives the
models need: elementwise arithmetic, tanh, pointwise affine layers across
channels, circular convolutions (plain and transposed), reductions, and
circulant solves.

Arrays inside networks carry shape [batch, channels, M]; a tape is built per
forward evaluation and walked once in reverse.  Node creation order is the
topological order, and gradient accumulation follows it, so repeated runs on
identical inputs are bitwise identical.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, SingularOperatorError, UsageError
from . import spatial


class Var:
    """A node on a tape: a value plus the reverse rule that produced it."""

    __slots__ = ("value", "tape", "idx", "parents", "vjp", "pname")

    def __init__(self, value, tape, parents=(), vjp=None, pname=None):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.vjp = vjp
        self.pname = pname
        self.idx = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """Ordered record of primitive nodes; one backward sweep per output."""

    def __init__(self):
        self.nodes: list[Var] = []
        self._param_nodes: dict[str, Var] = {}

    def input(self, value) -> Var:
        return Var(np.asarray(value, dtype=float), self)

    def param(self, name: str, value: np.ndarray) -> Var:
        """Bind a named parameter array as a leaf; one node per name per tape."""
        node = self._param_nodes.get(name)
        if node is None:
            node = Var(np.asarray(value, dtype=float), self, pname=name)
            self._param_nodes[name] = node
        return node

    def backward(self, output: Var, seed=None) -> "Gradients":
        if not self.nodes:
            raise UsageError("backward called on an empty tape")
        if output.tape is not self:
            raise UsageError("output does not belong to this tape")
        grads: list = [None] * len(self.nodes)
        if seed is None:
            seed = np.ones_like(output.value)
        grads[output.idx] = np.asarray(seed, dtype=float)
        for node in reversed(self.nodes[: output.idx + 1]):
            g = grads[node.idx]
            if g is None or node.vjp is None:
                continue
            for parent, pg in node.vjp(g):
                if grads[parent.idx] is None:
                    grads[parent.idx] = pg
                else:
                    grads[parent.idx] = grads[parent.idx] + pg
        return Gradients(self, grads)


class Gradients:
    """Backward-sweep result: cotangents for every reached node."""

    def __init__(self, tape: Tape, grads: list):
        self._tape = tape
        self._grads = grads

    def wrt(self, var: Var) -> np.ndarray:
        g = self._grads[var.idx]
        if g is None:
            return np.zeros_like(var.value)
        return g

    def by_name(self) -> dict:
        return {name: self.wrt(node) for name, node in self._tape._param_nodes.items()}


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise UsageError("operation needs at least one tape variable")


def add(a, b) -> Var:
    av, bv = _val(a), _val(b)
    tape = _tape_of(a, b)

    def vjp(g):
        out = []
        if isinstance(a, Var):
            out.append((a, _unbroadcast(g, av.shape)))
        if isinstance(b, Var):
            out.append((b, _unbroadcast(g, bv.shape)))
        return out

    return Var(av + bv, tape, vjp=vjp)


def sub(a, b) -> Var:
    av, bv = _val(a), _val(b)
    tape = _tape_of(a, b)

    def vjp(g):
        out = []
        if isinstance(a, Var):
            out.append((a, _unbroadcast(g, av.shape)))
        if isinstance(b, Var):
            out.append((b, _unbroadcast(-g, bv.shape)))
        return out

    return Var(av - bv, tape, vjp=vjp)


def mul(a, b) -> Var:
    av, bv = _val(a), _val(b)
    tape = _tape_of(a, b)

    def vjp(g):
        out = []
        if isinstance(a, Var):
            out.append((a, _unbroadcast(g * bv, av.shape)))
        if isinstance(b, Var):
            out.append((b, _unbroadcast(g * av, bv.shape)))
        return out

    return Var(av * bv, tape, vjp=vjp)


def scale(a: Var, c: float) -> Var:
    c = float(c)
    return Var(a.value * c, a.tape, vjp=lambda g: [(a, g * c)])


def neg(a: Var) -> Var:
    return scale(a, -1.0)


def tanh(a: Var) -> Var:
    v = np.tanh(a.value)
    return Var(v, a.tape, vjp=lambda g: [(a, g * (1.0 - v * v))])


def one_minus_square(a: Var) -> Var:
    """1 - a^2; the tanh derivative when a = tanh(z)."""
    v = 1.0 - a.value * a.value
    return Var(v, a.tape, vjp=lambda g: [(a, g * (-2.0 * a.value))])


def square(a: Var) -> Var:
    return Var(a.value * a.value, a.tape, vjp=lambda g: [(a, g * (2.0 * a.value))])


def absolute(a: Var) -> Var:
    v = np.abs(a.value)
    return Var(v, a.tape, vjp=lambda g: [(a, g * np.sign(a.value))])


def reshape(a: Var, shape) -> Var:
    old = a.value.shape
    return Var(a.value.reshape(shape), a.tape, vjp=lambda g: [(a, g.reshape(old))])


def concat_channels(parts) -> Var:
    """Concatenate [B, C_k, M] blocks along the channel axis."""
    vals = [_val(p) for p in parts]
    tape = _tape_of(*parts)
    sizes = [v.shape[-2] for v in vals]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        out = []
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if isinstance(p, Var):
                out.append((p, g[..., lo:hi, :]))
        return out

    return Var(np.concatenate(vals, axis=-2), tape, vjp=vjp)


def affine(x, W, b=None) -> Var:
    """Pointwise channel map: out[., o, i] = sum_c W[o, c] x[., c, i] + b[o]."""
    xv, Wv = _val(x), _val(W)
    v = np.matmul(Wv, xv)
    if b is not None:
        v = v + _val(b)[:, None]
    tape = _tape_of(x, W, b if b is not None else x)

    def vjp(g):
        out = []
        if isinstance(x, Var):
            out.append((x, np.matmul(Wv.T, g)))
        if isinstance(W, Var):
            out.append((W, np.einsum("...oi,...ci->oc", g, xv)))
        if b is not None and isinstance(b, Var):
            out.append((b, g.sum(axis=(0, 2)) if g.ndim == 3 else g.sum(axis=-1)))
        return out

    return Var(v, tape, vjp=vjp)


def affine_t(x, W) -> Var:
    """Transposed channel map: out[., c, i] = sum_o W[o, c] x[., o, i]."""
    xv, Wv = _val(x), _val(W)

    def vjp(g):
        out = []
        if isinstance(x, Var):
            out.append((x, np.matmul(Wv, g)))
        if isinstance(W, Var):
            out.append((W, np.einsum("...ci,...oi->oc", g, xv)))
        return out

    return Var(np.matmul(Wv.T, xv), _tape_of(x, W), vjp=vjp)


def conv_circ(x, kern, bias=None) -> Var:
    """Circular convolution along positions with kernel [O, C, 2m+1].

    out[., o, i] = sum_{c, j} kern[o, c, j+m] x[., c, (i+j) mod M] (+ bias[o]).
    """
    xv, kv = _val(x), _val(kern)
    m = (kv.shape[-1] - 1) // 2
    if xv.shape[-1] < kv.shape[-1]:
        raise ShapeError("kernel wider than the periodic axis")
    v = None
    for j in range(-m, m + 1):
        term = np.matmul(kv[:, :, j + m], np.roll(xv, -j, axis=-1))
        v = term if v is None else v + term
    if bias is not None:
        v = v + _val(bias)[:, None]
    tape = _tape_of(x, kern, bias if bias is not None else x)

    def vjp(g):
        out = []
        if isinstance(x, Var):
            gx = None
            for j in range(-m, m + 1):
                term = np.matmul(kv[:, :, j + m].T, np.roll(g, j, axis=-1))
                gx = term if gx is None else gx + term
            out.append((x, gx))
        if isinstance(kern, Var):
            gk = np.empty_like(kv)
            for j in range(-m, m + 1):
                gk[:, :, j + m] = np.einsum("...oi,...ci->oc", g, np.roll(xv, -j, axis=-1))
            out.append((kern, gk))
        if bias is not None and isinstance(bias, Var):
            out.append((bias, g.sum(axis=(0, 2)) if g.ndim == 3 else g.sum(axis=-1)))
        return out

    return Var(v, tape, vjp=vjp)


def conv_circ_t(x, kern) -> Var:
    """Transposed circular convolution: the adjoint of conv_circ in x.

    out[., c, l] = sum_{o, j} kern[o, c, j+m] x[., o, (l-j) mod M].
    """
    xv, kv = _val(x), _val(kern)
    m = (kv.shape[-1] - 1) // 2
    v = None
    for j in range(-m, m + 1):
        term = np.matmul(kv[:, :, j + m].T, np.roll(xv, j, axis=-1))
        v = term if v is None else v + term

    def vjp(g):
        out = []
        if isinstance(x, Var):
            gx = None
            for j in range(-m, m + 1):
                term = np.matmul(kv[:, :, j + m], np.roll(g, -j, axis=-1))
                gx = term if gx is None else gx + term
            out.append((x, gx))
        if isinstance(kern, Var):
            gk = np.empty_like(kv)
            for j in range(-m, m + 1):
                gk[:, :, j + m] = np.einsum("...ci,...oi->oc", g, np.roll(xv, j, axis=-1))
            out.append((kern, gk))
        return out

    return Var(v, _tape_of(x, kern), vjp=vjp)


def masked_embed(p: Var, mask: np.ndarray, base: np.ndarray) -> Var:
    """Scalar parameter placed into a fixed pattern: value = p * mask + base.

    Used to realize constrained stencils (e.g. symmetric width 3 with w_0
    pinned: mask [1, 0, 1], base [0, 1, 0]) from their single free component.
    """
    mask = np.asarray(mask, dtype=float)
    base = np.asarray(base, dtype=float)
    v = float(p.value.reshape(())) * mask + base
    return Var(v, p.tape, vjp=lambda g: [(p, np.array([np.sum(g * mask)]).reshape(p.value.shape))])


def circ_solve(kern, rhs, name="") -> Var:
    """Solve the circulant system C(kern) y = rhs along the last axis.

    Reverse rules: rhs cotangent solves the transposed system; kernel
    cotangent is  kbar_j = -sum_i bbar_i y_{(i+j) mod M}  with bbar the
    transposed solve of the incoming cotangent.
    """
    kv, bv = _val(kern), _val(rhs)
    width = kv.shape[-1]
    m = (width - 1) // 2
    M = bv.shape[-1]
    kobj = spatial.ConvKernel(m, kv, spatial.KernelConstraint.FREE, name)
    if spatial.is_singular(kobj, M):
        raise SingularOperatorError(
            f"circulant operator '{name or 'unnamed'}' is singular at M={M}", kernel_name=name
        )
    solver = spatial.CirculantSolver(kobj, M)
    y = solver.solve(bv)

    def vjp(g):
        bbar = solver.solve_transposed(g)
        out = []
        if isinstance(rhs, Var):
            out.append((rhs, bbar))
        if isinstance(kern, Var):
            gk = np.empty(width)
            flat_b = bbar.reshape(-1, M)
            flat_y = y.reshape(-1, M)
            for j in range(-m, m + 1):
                gk[j + m] = -np.sum(flat_b * np.roll(flat_y, -j, axis=-1))
            out.append((kern, gk.reshape(kv.shape)))
        return out

    return Var(y, _tape_of(kern, rhs), vjp=vjp)


def sum_last2(a: Var) -> Var:
    """Sum over channel and position axes: [B, C, M] -> [B]."""
    shp = a.value.shape

    def vjp(g):
        return [(a, np.broadcast_to(g[:, None, None], shp))]

    return Var(a.value.sum(axis=(-2, -1)), a.tape, vjp=vjp)


def mean_square(a: Var) -> Var:
    n = a.value.size
    v = np.float64(np.mean(a.value * a.value))
    return Var(np.asarray(v), a.tape, vjp=lambda g: [(a, g * (2.0 / n) * a.value)])


def mean_abs(a: Var) -> Var:
    n = a.value.size
    v = np.float64(np.mean(np.abs(a.value)))
    return Var(np.asarray(v), a.tape, vjp=lambda g: [(a, g * np.sign(a.value) / n)])


class ParamStore:
    """Named parameter arrays with a flat view for the optimizer.

    Constrained kernels register only their free components here, so the flat
    view is exactly the optimization vector and constraints survive every
    update by construction.
    """

    def __init__(self):
        self._arrays: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._arrays:
            raise UsageError(f"duplicate parameter name '{name}'")
        arr = np.array(value, dtype=float)
        self._arrays[name] = arr
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def names(self):
        return list(self._arrays.keys())

    def items(self):
        return self._arrays.items()

    @property
    def size(self) -> int:
        return sum(a.size for a in self._arrays.values())

    def flat(self) -> np.ndarray:
        if not self._arrays:
            return np.zeros(0)
        return np.concatenate([a.ravel() for a in self._arrays.values()])

    def set_flat(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise ShapeError(f"flat vector length {vec.shape} != {self.size}")
        ofs = 0
        for a in self._arrays.values():
            a[...] = vec[ofs : ofs + a.size].reshape(a.shape)
            ofs += a.size

    def flat_gradient(self, by_name: dict) -> np.ndarray:
        parts = []
        for name, a in self._arrays.items():
            g = by_name.get(name)
            parts.append(np.zeros(a.size) if g is None else np.asarray(g).ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, a in self._arrays.items():
            out.add(name, a.copy())
        return out


def finite_diff_gradient(f, u: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function; the test oracle."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    u = np.asarray(u, dtype=float)
    g = np.zeros_like(u)
    flat = u.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        fp = f(u)
        flat[i] = keep - eps
        fm = f(u)
        flat[i] = keep
        gflat[i] = (fp - fm) / (2.0 * eps)
    return g
