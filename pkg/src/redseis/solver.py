"""Forward-backward splitting with a denoiser-driven regularizer.

The Deep-RED problem is

    min_s  |A s - y|^2 + lam * s^T (s - D(s))

solved by alternating a gradient step on the data term with one fixed-point
pass of the regularizer's proximal condition. Step sizes come from a
spectral (Barzilai-Borwein) guess safeguarded by non-monotone backtracking, or stay
fixed. An ISTA solver for the Lasso is provided as a classical baseline.
"""
import csv
import io
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, SolverDiverged
from .fileio import atomic_write_text
from .linops import estimate_norm
from .metrics import json_float

TAU_MIN = 1e-12
TAU_MAX = 1e12


class StopReason(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    STAGNATION = "stagnation"


@dataclass
class SolverOptions:
    """Solver knobs. ``lam`` is serialized under the key ``"lambda"``.

    ``tau0=None`` means ``1 / |A|^2`` with the norm estimated by
    ``power_iters`` power iterations (Deep-RED and ISTA only).
    """

    lam: float = 0.01
    tau0: float | None = None
    max_iters: int = 500
    rel_tol: float = 1e-6
    line_search: str = "adaptive"
    window: int = 10
    backtrack: float = 0.5
    max_backtracks: int = 60
    power_iters: int = 20

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.tau0 is not None and not self.tau0 > 0:
            raise ConfigError(f"tau0 must be positive, got {self.tau0}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol < 0:
            raise ConfigError(f"rel_tol must be >= 0, got {self.rel_tol}")
        if self.line_search not in ("fixed", "adaptive"):
            raise ConfigError(f"line_search must be 'fixed' or 'adaptive', got {self.line_search!r}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if not 0 < self.backtrack < 1:
            raise ConfigError(f"backtrack factor must lie in (0, 1), got {self.backtrack}")

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown solver option(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class SolverResult:
    estimate: np.ndarray
    cost_history: list = field(default_factory=list)
    tau_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stop_reason: StopReason = StopReason.MAX_ITERS

    def to_dict(self, include_estimate=True):
        d = {
            "iterations": self.iterations,
            "converged": self.converged,
            "stop_reason": self.stop_reason.value,
            "cost_history": [json_float(c) for c in self.cost_history],
            "tau_history": [json_float(t) for t in self.tau_history],
        }
        if include_estimate:
            d["estimate"] = [float(v) for v in np.ravel(self.estimate)]
        return d

    def write_json(self, path, include_estimate=True, **extra):
        d = self.to_dict(include_estimate)
        d.update(extra)
        atomic_write_text(path, json.dumps(d, indent=2, sort_keys=True) + "\n")

    def cost_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "cost", "tau"])
        for k, c in enumerate(self.cost_history):
            tau = self.tau_history[k - 1] if k > 0 else ""
            w.writerow([k, repr(float(c)), repr(float(tau)) if tau != "" else ""])
        return buf.getvalue()

    def write_cost_csv(self, path):
        atomic_write_text(path, self.cost_csv())


@dataclass(frozen=True)
class REDContext:
    denoiser: object
    lam: float = 0.01

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


def red_value(s, ctx):
    """``s^T (s - D(s))``."""
    s = np.asarray(s, dtype=np.float64)
    return float(np.sum(s * (s - ctx.denoiser(s))))


def red_gradient(s, ctx):
    """``2 (s - D(s))``, exact for locally homogeneous denoisers with symmetric Jacobian."""
    s = np.asarray(s, dtype=np.float64)
    return 2.0 * (s - ctx.denoiser(s))


def prox_red_single_step(s_hat, ctx, tau):
    """One fixed-point pass of ``s = (s_hat + 2 tau lam D(s)) / (1 + 2 tau lam)`` from ``s = s_hat``.

    Written as ``s_hat + w (D(s_hat) - s_hat)`` with ``w = 2 tau lam / (1 + 2 tau lam)``,
    so a denoiser with ``D(s_hat) == s_hat`` returns ``s_hat`` bit for bit.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    s_hat = np.asarray(s_hat, dtype=np.float64)
    if ctx.lam == 0:
        return s_hat.copy()
    c = 2.0 * tau * ctx.lam
    w = c / (1.0 + c)
    return s_hat + w * (ctx.denoiser(s_hat) - s_hat)


def soft_threshold(x, t):
    if t < 0:
        raise ValueError(f"threshold must be >= 0, got {t}")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def bb_step(ds, dg, fallback):
    """Barzilai-Borwein step ``<ds, ds> / <ds, dg>``, clamped; ``fallback`` on non-positive curvature."""
    sy = float(np.vdot(ds, dg))
    ss = float(np.vdot(ds, ds))
    if not sy > 0 or not math.isfinite(sy) or ss == 0.0:
        return _clamp(fallback)
    return _clamp(ss / sy)


class SpectralStep:
    """Adaptive BB step with a short memory (ABBmin).

    With ``cos^2`` the squared cosine between the iterate and gradient
    differences, the step is the long BB step ``<ds,ds>/<ds,dg>`` when
    ``cos^2 >= switch`` and otherwise the smallest short step
    ``<ds,dg>/<dg,dg>`` among the last ``memory`` iterations.
    """

    def __init__(self, memory=5, switch=0.8):
        self.short_steps = deque(maxlen=memory)
        self.switch = switch

    def __call__(self, ds, dg, fallback):
        sy = float(np.vdot(ds, dg))
        ss = float(np.vdot(ds, ds))
        yy = float(np.vdot(dg, dg))
        if not sy > 0 or not math.isfinite(sy) or ss == 0.0 or yy == 0.0:
            return _clamp(fallback)
        short = sy / yy
        self.short_steps.append(short)
        if sy * sy / (ss * yy) < self.switch:
            return _clamp(min(self.short_steps))
        return _clamp(ss / sy)


def sufficient_decrease(f_new, f_ref, d, g, tau):
    """Non-monotone acceptance test for a proximal-gradient step.

    Accept when ``f(s+) <= f_ref + <d, g> + |d|^2 / (2 tau)`` where ``f_ref`` is
    the largest smooth-term value in the recent window, ``d = s+ - s`` and
    ``g`` the gradient at ``s``. A relative slack of 1e-12 absorbs rounding.
    """
    bound = f_ref + float(np.vdot(d, g)) + float(np.vdot(d, d)) / (2.0 * tau)
    return f_new <= bound + 1e-12 * abs(f_ref)


def _clamp(tau):
    return min(max(float(tau), TAU_MIN), TAU_MAX)


def _rel_change(new, old):
    num = float(np.linalg.norm(new - old))
    den = float(np.linalg.norm(old))
    if num == 0.0:
        return 0.0
    return num / den if den > 0 else math.inf


def _check_finite(x, k):
    if not np.all(np.isfinite(x)):
        raise SolverDiverged(k)


def fbs_solve(grad_f, prox_g, s0, opts, f=None, cost=None):
    """Forward-backward splitting.

    ``prox_g(s_hat, tau)`` is the backward step. Adaptive line search needs
    the smooth term ``f``; ``cost`` (default ``f``) is recorded once per
    iterate, NaN when neither is supplied. Raises :class:`SolverDiverged` on
    a non-finite iterate.
    """
    if opts.tau0 is None:
        raise ConfigError("fbs_solve needs an explicit tau0")
    adaptive = opts.line_search == "adaptive"
    if adaptive and f is None:
        raise ConfigError("adaptive line search needs the smooth term f")
    cost_fn = cost if cost is not None else f

    s = np.array(s0, dtype=np.float64, copy=True)
    _check_finite(s, 0)
    tau = _clamp(opts.tau0)
    costs = [float(cost_fn(s)) if cost_fn else math.nan]
    taus = []
    g = grad_f(s)
    f_hist = deque([float(f(s))], maxlen=opts.window) if adaptive else None
    spectral = SpectralStep() if adaptive else None
    reason = StopReason.MAX_ITERS
    k = 0
    for k in range(1, opts.max_iters + 1):
        if adaptive:
            f_ref = max(f_hist)
            for _ in range(opts.max_backtracks + 1):
                s_new = prox_g(s - tau * g, tau)
                _check_finite(s_new, k)
                f_new = float(f(s_new))
                if sufficient_decrease(f_new, f_ref, s_new - s, g, tau):
                    break
                tau = _clamp(tau * opts.backtrack)
            else:
                k -= 1
                reason = StopReason.STAGNATION
                break
        else:
            s_new = prox_g(s - tau * g, tau)
            _check_finite(s_new, k)
        taus.append(tau)
        g_new = grad_f(s_new)
        rel = _rel_change(s_new, s)
        s_prev, s = s, s_new
        costs.append(float(cost_fn(s)) if cost_fn else math.nan)
        if adaptive:
            f_hist.append(f_new)
            tau = spectral(s - s_prev, g_new - g, tau)
        g = g_new
        if rel < opts.rel_tol:
            reason = StopReason.CONVERGED
            break
    return SolverResult(
        estimate=s,
        cost_history=costs,
        tau_history=taus,
        iterations=k,
        converged=reason == StopReason.CONVERGED,
        stop_reason=reason,
    )


class _DataTerm:
    """``|A s - y|^2`` and its gradient, sharing the last residual."""

    def __init__(self, op, y):
        self.op = op
        self.y = y
        self._s = None
        self._r = None

    def residual(self, s):
        if s is not self._s:
            self._r = self.op.forward(s) - self.y
            self._s = s
        return self._r

    def value(self, s):
        r = self.residual(s)
        return float(r @ r)

    def grad(self, s):
        return 2.0 * self.op.adjoint(self.residual(s))


def default_grid_shape(q):
    r = math.isqrt(q)
    return (r, r) if r * r == q else (1, q)


def default_tau(op, opts):
    if opts.tau0 is not None:
        return opts.tau0
    n = estimate_norm(op, opts.power_iters, seed=op.seed)
    if n == 0.0:
        raise ValueError("operator norm estimate is zero")
    return 1.0 / (n * n)


def deep_red_solve(op, y, ctx, opts=None, s0=None, shape=None):
    """Minimize ``|A s - y|^2 + lam s^T (s - D(s))`` from ``s0`` (default ``A^T y``).

    ``shape`` is the 2D grid the denoiser sees (default: square if ``q`` is a
    perfect square). The estimate in the result is a flat vector of length q.
    """
    opts = opts or SolverOptions(lam=ctx.lam)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (op.p,):
        raise ValueError(f"data has shape {y.shape}, operator produces ({op.p},)")
    shape = tuple(shape) if shape is not None else default_grid_shape(op.q)
    if shape[0] * shape[1] != op.q:
        raise ValueError(f"grid shape {shape} does not hold {op.q} samples")
    start = op.adjoint(y) if s0 is None else np.asarray(s0, dtype=np.float64).ravel()
    if start.shape != (op.q,):
        raise ValueError(f"initial estimate has {start.size} samples, expected {op.q}")

    data = _DataTerm(op, y)

    def prox(s_hat, tau):
        return prox_red_single_step(s_hat.reshape(shape), ctx, tau).ravel()

    def cost(s):
        c = data.value(s)
        if ctx.lam:
            c += ctx.lam * red_value(s.reshape(shape), ctx)
        return c

    run_opts = SolverOptions(**{**asdict(opts), "tau0": default_tau(op, opts)})
    return fbs_solve(data.grad, prox, start, run_opts, f=data.value, cost=cost)


def lasso_cost(op, m, x, lam):
    """``0.5 |m - A x|^2 + lam |x|_1``, the objective ISTA descends."""
    r = m - op.forward(x)
    return 0.5 * float(r @ r) + lam * float(np.sum(np.abs(x)))


def ista_solve(op, m, lam, opts=None, x0=None):
    """Iterative soft thresholding: ``x <- soft(x + tau A^T (m - A x), tau lam)``."""
    opts = opts or SolverOptions(lam=lam, line_search="fixed")
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (op.p,):
        raise ValueError(f"data has shape {m.shape}, operator produces ({op.p},)")
    tau = default_tau(op, opts)
    x = np.zeros(op.q) if x0 is None else np.array(x0, dtype=np.float64)
    costs = [lasso_cost(op, m, x, lam)]
    taus = []
    reason = StopReason.MAX_ITERS
    k = 0
    for k in range(1, opts.max_iters + 1):
        z = m - op.forward(x)
        x_new = soft_threshold(op.adjoint(z) * tau + x, tau * lam)
        _check_finite(x_new, k)
        rel = _rel_change(x_new, x)
        x = x_new
        taus.append(tau)
        costs.append(lasso_cost(op, m, x, lam))
        if rel < opts.rel_tol:
            reason = StopReason.CONVERGED
            break
    return SolverResult(x, costs, taus, k, reason == StopReason.CONVERGED, reason)
