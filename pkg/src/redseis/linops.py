"""Linear measurement operators acting on vectorized sections.

Three kinds are shipped:

``Identity``
    ``p = q``, forward and adjoint are copies.
``DenseGaussian``
    i.i.d. N(0, 1/p) entries, so ``E|Ax|^2 = |x|^2``. Any ``p``, ``q``.
``RandomizedDCT``
    ``A = sqrt(q/p) * R_p * C * S`` with ``S`` a random sign flip, ``C`` the
    orthonormal DCT-II and ``R_p`` a uniform row subset (no replacement);
    requires ``p <= q``.

Operators are rebuilt bit-for-bit from ``(kind, p, q, seed)``.
"""
import json
import math

import numpy as np
import scipy.fft

from .rng import make_rng

KINDS = ("Identity", "DenseGaussian", "RandomizedDCT")


def dct_1d(x):
    """Orthonormal DCT-II."""
    return scipy.fft.dct(np.asarray(x, dtype=np.float64), type=2, norm="ortho")


def idct_1d(x):
    """Inverse of :func:`dct_1d`."""
    return scipy.fft.idct(np.asarray(x, dtype=np.float64), type=2, norm="ortho")


class LinearOperator:
    """Forward/adjoint pair with recorded construction parameters."""

    def __init__(self, kind, p, q, seed=0, scale=1.0):
        if p < 1 or q < 1:
            raise ValueError(f"operator dims must be >= 1, got p={p}, q={q}")
        self.kind = kind
        self.p = int(p)
        self.q = int(q)
        self.seed = int(seed)
        self.scale = float(scale)

    @property
    def shape(self):
        return (self.p, self.q)

    def _check_in(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.q,):
            raise ValueError(f"{self.kind} forward expects a vector of length {self.q}, got {x.shape}")
        return x

    def _check_out(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.p,):
            raise ValueError(f"{self.kind} adjoint expects a vector of length {self.p}, got {y.shape}")
        return y

    def forward(self, x):
        raise NotImplementedError

    def adjoint(self, y):
        raise NotImplementedError

    def to_dict(self):
        return {"kind": self.kind, "p": self.p, "q": self.q, "seed": self.seed}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def __repr__(self):
        return f"{self.kind}(p={self.p}, q={self.q}, seed={self.seed})"


class IdentityOperator(LinearOperator):
    def __init__(self, q, seed=0):
        super().__init__("Identity", q, q, seed)

    def forward(self, x):
        return self._check_in(x).copy()

    def adjoint(self, y):
        return self._check_out(y).copy()


class DenseGaussianOperator(LinearOperator):
    def __init__(self, p, q, seed=0):
        if p < 1:
            raise ValueError(f"operator dims must be >= 1, got p={p}, q={q}")
        super().__init__("DenseGaussian", p, q, seed, scale=1.0 / math.sqrt(p))
        self.matrix = make_rng(self.seed).standard_normal((self.p, self.q)) * self.scale
        self.matrix.setflags(write=False)

    def forward(self, x):
        return self.matrix @ self._check_in(x)

    def adjoint(self, y):
        return self.matrix.T @ self._check_out(y)


class RandomizedDCTOperator(LinearOperator):
    def __init__(self, p, q, seed=0, signs=None, rows=None):
        if p > q:
            raise ValueError(f"RandomizedDCT needs p <= q, got p={p}, q={q}")
        super().__init__("RandomizedDCT", p, q, seed, scale=math.sqrt(q / p))
        rng = make_rng(self.seed)
        drawn_signs = rng.choice(np.array([-1.0, 1.0]), size=self.q)
        drawn_rows = np.sort(rng.choice(self.q, size=self.p, replace=False))
        self.signs = drawn_signs if signs is None else np.asarray(signs, dtype=np.float64)
        self.rows = drawn_rows if rows is None else np.asarray(rows, dtype=np.intp)
        if self.signs.shape != (self.q,) or not np.all(np.abs(self.signs) == 1.0):
            raise ValueError("signs must be a length-q vector of +-1")
        if self.rows.shape != (self.p,) or len(np.unique(self.rows)) != self.p:
            raise ValueError("rows must be p distinct indices")
        if self.rows.min() < 0 or self.rows.max() >= self.q:
            raise ValueError("row index out of range")

    def forward(self, x):
        return self.scale * dct_1d(self.signs * self._check_in(x))[self.rows]

    def adjoint(self, y):
        full = np.zeros(self.q)
        full[self.rows] = self._check_out(y)
        return self.scale * self.signs * idct_1d(full)


def identity_operator(q):
    return IdentityOperator(q)


def gaussian_operator(p, q, seed=0):
    return DenseGaussianOperator(p, q, seed)


def randomized_dct_operator(p, q, seed=0, signs=None, rows=None):
    return RandomizedDCTOperator(p, q, seed, signs=signs, rows=rows)


def make_operator(kind, p, q, seed=0):
    """Rebuild an operator from its serialized ``(kind, p, q, seed)``."""
    if kind == "Identity":
        if p != q:
            raise ValueError(f"Identity needs p == q, got p={p}, q={q}")
        return IdentityOperator(q, seed)
    if kind == "DenseGaussian":
        return DenseGaussianOperator(p, q, seed)
    if kind == "RandomizedDCT":
        return RandomizedDCTOperator(p, q, seed)
    raise ValueError(f"unknown operator kind {kind!r}; expected one of {KINDS}")


def operator_from_dict(d):
    return make_operator(d["kind"], int(d["p"]), int(d["q"]), int(d.get("seed", 0)))


def adjoint_check(op, trials=10, seed=0):
    """Worst ``|<Ax, y> - <x, A^T y>| / (|Ax| |y|)`` over random pairs."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = make_rng(seed, 0xAD)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.q)
        y = rng.standard_normal(op.p)
        ax = op.forward(x)
        lhs = float(ax @ y)
        rhs = float(x @ op.adjoint(y))
        denom = float(np.linalg.norm(ax) * np.linalg.norm(y))
        if denom == 0.0:
            continue
        worst = max(worst, abs(lhs - rhs) / denom)
    return worst


def estimate_norm(op, iterations=20, seed=0):
    """Spectral norm estimate by power iteration on ``A^T A``."""
    v = make_rng(seed, 0x90E).standard_normal(op.q)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iterations):
        w = op.adjoint(op.forward(v))
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        sigma = math.sqrt(nw)
        v = w / nw
    return sigma
