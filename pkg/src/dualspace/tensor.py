"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A ``Tensor`` wraps a numpy array together with an optional gradient buffer and
a back-reference to the operation that produced it. Calling ``backward()`` on
a scalar walks the graph in reverse topological order and accumulates
gradients additively across fan-out. The graph is freed afterwards unless
``retain_graph=True`` is passed.

Broadcasting is deliberately narrow: elementwise ops accept equal shapes,
python scalars, or arrays that broadcast along a single size-1 axis (row or
column vectors against matrices). Anything wilder must be reshaped explicitly.
"""

from __future__ import annotations

import struct

import numpy as np

LOG_FLOOR = 1e-12


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = ""

    # ------------------------------------------------------------------
    # basics
    # ------------------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Value-identical tensor with the graph link and grad flow cut."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    # ------------------------------------------------------------------
    # graph plumbing
    # ------------------------------------------------------------------
    def _make(self, data, parents, backward, op):
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
            out._op = op
        return out

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, retain_graph: bool = False):
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar root, got shape {self.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
            if not retain_graph and node is not self:
                node._parents = ()
                node._backward = None
        if not retain_graph:
            self._parents = ()
            self._backward = None

    # ------------------------------------------------------------------
    # elementwise arithmetic
    # ------------------------------------------------------------------
    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    @staticmethod
    def _check_broadcast(a: np.ndarray, b: np.ndarray):
        if a.shape == b.shape or a.size == 1 or b.size == 1:
            return
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            raise ValueError(f"shapes {a.shape} and {b.shape} do not broadcast") from None

    @staticmethod
    def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
        """Reduce a broadcast gradient back to the operand's shape."""
        if g.shape == tuple(shape):
            return g
        nd = len(shape)
        while g.ndim > nd:
            g = g.sum(axis=0)
        for ax, dim in enumerate(shape):
            if dim == 1 and g.shape[ax] != 1:
                g = g.sum(axis=ax, keepdims=True)
        return g.reshape(shape)

    def _binary(self, other, fwd, bwd_a, bwd_b, op):
        other = Tensor._lift(other)
        Tensor._check_broadcast(self.data, other.data)
        out_data = fwd(self.data, other.data)

        def backward(g):
            if self.requires_grad:
                self._accum(Tensor._unbroadcast(bwd_a(g, self.data, other.data), self.shape))
            if other.requires_grad:
                other._accum(Tensor._unbroadcast(bwd_b(g, self.data, other.data), other.shape))

        return self._make(out_data, (self, other), backward, op)

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b,
                            lambda g, a, b: g, lambda g, a, b: g, "add")

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b,
                            lambda g, a, b: g, lambda g, a, b: -g, "sub")

    def __rsub__(self, other):
        return Tensor._lift(other).__sub__(self)

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b,
                            lambda g, a, b: g * b, lambda g, a, b: g * a, "mul")

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        return self._binary(other, lambda a, b: a / b,
                            lambda g, a, b: g / b, lambda g, a, b: -g * a / (b * b), "div")

    def __rtruediv__(self, other):
        return Tensor._lift(other).__truediv__(self)

    def __neg__(self):
        return self * -1.0

    def scale(self, s: float) -> "Tensor":
        return self * float(s)

    # ------------------------------------------------------------------
    # unary ops
    # ------------------------------------------------------------------
    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)

        def backward(g):
            if self.requires_grad:
                self._accum(g * out_data)

        return self._make(out_data, (self,), backward, "exp")

    def log(self) -> "Tensor":
        """Natural log with a floor: log(max(x, 1e-12)) keeps masked zeros finite."""
        clipped = np.maximum(self.data, LOG_FLOOR)
        out_data = np.log(clipped)

        def backward(g):
            if self.requires_grad:
                grad = np.where(self.data > LOG_FLOOR, g / clipped, 0.0)
                self._accum(grad)

        return self._make(out_data, (self,), backward, "log")

    def relu(self) -> "Tensor":
        out_data = np.maximum(self.data, 0.0)

        def backward(g):
            if self.requires_grad:
                self._accum(g * (self.data > 0.0))

        return self._make(out_data, (self,), backward, "relu")

    def sqrt(self) -> "Tensor":
        out_data = np.sqrt(self.data)

        def backward(g):
            if self.requires_grad:
                self._accum(g * 0.5 / out_data)

        return self._make(out_data, (self,), backward, "sqrt")

    # ------------------------------------------------------------------
    # reductions and shape ops
    # ------------------------------------------------------------------
    def sum(self) -> "Tensor":
        out_data = np.array(self.data.sum())

        def backward(g):
            if self.requires_grad:
                self._accum(np.full_like(self.data, float(g)))

        return self._make(out_data, (self,), backward, "sum")

    def mean(self) -> "Tensor":
        n = self.data.size
        out_data = np.array(self.data.mean())

        def backward(g):
            if self.requires_grad:
                self._accum(np.full_like(self.data, float(g) / n))

        return self._make(out_data, (self,), backward, "mean")

    def sum_rows(self) -> "Tensor":
        """Row sums of a matrix, kept as an (n, 1) column."""
        if self.data.ndim != 2:
            raise ValueError(f"sum_rows needs a matrix, got shape {self.shape}")
        out_data = self.data.sum(axis=1, keepdims=True)

        def backward(g):
            if self.requires_grad:
                self._accum(np.broadcast_to(g, self.data.shape).copy())

        return self._make(out_data, (self,), backward, "sum_rows")

    def mean_rows(self) -> "Tensor":
        if self.data.ndim != 2:
            raise ValueError(f"mean_rows needs a matrix, got shape {self.shape}")
        c = self.data.shape[1]
        out_data = self.data.mean(axis=1, keepdims=True)

        def backward(g):
            if self.requires_grad:
                self._accum(np.broadcast_to(g / c, self.data.shape).copy())

        return self._make(out_data, (self,), backward, "mean_rows")

    def std(self) -> "Tensor":
        """Standard deviation over all elements (population, ddof=0)."""
        mu = self.data.mean()
        s = float(self.data.std())
        out_data = np.array(s)

        def backward(g):
            if self.requires_grad:
                denom = max(s, LOG_FLOOR) * self.data.size
                self._accum(float(g) * (self.data - mu) / denom)

        return self._make(out_data, (self,), backward, "std")

    def transpose(self) -> "Tensor":
        if self.data.ndim != 2:
            raise ValueError(f"transpose needs a matrix, got shape {self.shape}")
        out_data = self.data.T

        def backward(g):
            if self.requires_grad:
                self._accum(g.T)

        return self._make(out_data, (self,), backward, "transpose")

    def reshape(self, *shape) -> "Tensor":
        out_data = self.data.reshape(*shape)

        def backward(g):
            if self.requires_grad:
                self._accum(g.reshape(self.data.shape))

        return self._make(out_data, (self,), backward, "reshape")

    def slice_cols(self, start: int, stop: int) -> "Tensor":
        if self.data.ndim != 2:
            raise ValueError(f"slice_cols needs a matrix, got shape {self.shape}")
        out_data = self.data[:, start:stop]

        def backward(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                full[:, start:stop] = g
                self._accum(full)

        return self._make(out_data, (self,), backward, "slice_cols")

    def take_rows(self, indices) -> "Tensor":
        """Select whole rows by index (embedding lookup); backward scatter-adds."""
        idx = np.asarray(indices, dtype=np.int64)
        out_data = self.data[idx]

        def backward(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                np.add.at(full, idx, g)
                self._accum(full)

        return self._make(out_data, (self,), backward, "take_rows")

    def gather_rows(self, indices) -> "Tensor":
        """Pick one entry per row: out[i] = x[i, indices[i]], shape (n, 1)."""
        if self.data.ndim != 2:
            raise ValueError(f"gather_rows needs a matrix, got shape {self.shape}")
        idx = np.asarray(indices, dtype=np.int64)
        n = self.data.shape[0]
        if idx.shape != (n,):
            raise ValueError(f"gather_rows needs {n} indices, got shape {idx.shape}")
        rows = np.arange(n)
        out_data = self.data[rows, idx][:, None]

        def backward(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                full[rows, idx] = g[:, 0]
                self._accum(full)

        return self._make(out_data, (self,), backward, "gather_rows")

    # ------------------------------------------------------------------
    # matrix product and softmax
    # ------------------------------------------------------------------
    def matmul(self, other: "Tensor") -> "Tensor":
        other = Tensor._lift(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError(
                f"matmul needs matrices, got shapes {self.shape} and {other.shape}")
        if self.data.shape[1] != other.data.shape[0]:
            raise ValueError(
                f"matmul inner dimensions disagree: {self.shape} vs {other.shape}")
        out_data = self.data @ other.data

        def backward(g):
            if self.requires_grad:
                self._accum(g @ other.data.T)
            if other.requires_grad:
                other._accum(self.data.T @ g)

        return self._make(out_data, (self, other), backward, "matmul")

    def __matmul__(self, other):
        return self.matmul(other)

    def softmax_rows(self, tau: float = 1.0) -> "Tensor":
        """Tempered row-wise softmax with max-subtraction for stability."""
        if tau <= 0:
            raise ValueError(f"softmax temperature must be positive, got {tau}")
        if self.data.ndim != 2:
            raise ValueError(f"softmax_rows needs a matrix, got shape {self.shape}")
        z = self.data / tau
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        out_data = e / e.sum(axis=1, keepdims=True)

        def backward(g):
            if self.requires_grad:
                dot = (g * out_data).sum(axis=1, keepdims=True)
                self._accum(out_data * (g - dot) / tau)

        return self._make(out_data, (self,), backward, "softmax_rows")


# ----------------------------------------------------------------------
# free functions mirroring the method surface
# ----------------------------------------------------------------------
def concat_last_dim(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise ValueError(f"concat_last_dim needs matrices with equal rows, "
                         f"got shapes {a.shape} and {b.shape}")
    ca = a.data.shape[1]
    out_data = np.concatenate([a.data, b.data], axis=1)

    def backward(g):
        if a.requires_grad:
            a._accum(g[:, :ca])
        if b.requires_grad:
            b._accum(g[:, ca:])

    return a._make(out_data, (a, b), backward, "concat_last_dim")


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


# ----------------------------------------------------------------------
# flat binary blob serialization (checkpoints)
# ----------------------------------------------------------------------
def to_blob(t: Tensor) -> bytes:
    """Header (rank, dims as u64 LE) followed by float64 LE values."""
    shape = t.data.shape
    header = struct.pack("<Q", len(shape)) + b"".join(struct.pack("<Q", d) for d in shape)
    return header + t.data.astype("<f8").tobytes()


def from_blob(buf: bytes) -> Tensor:
    (rank,) = struct.unpack_from("<Q", buf, 0)
    dims = struct.unpack_from(f"<{rank}Q", buf, 8)
    offset = 8 + 8 * rank
    n = int(np.prod(dims)) if rank else 1
    values = np.frombuffer(buf, dtype="<f8", count=n, offset=offset)
    return Tensor(values.reshape(dims).copy())


def blob_size(shape) -> int:
    n = int(np.prod(shape)) if len(shape) else 1
    return 8 + 8 * len(shape) + 8 * n
