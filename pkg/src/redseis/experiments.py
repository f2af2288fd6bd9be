"""Monte Carlo and sweep harnesses.

Scenarios
---------
``lh_study``
    Local-homogeneity factor of the bank's networks on noisy copies of one
    clean section, per SNR.
``denoise_mc``
    Noise added to Gaussian measurements ``A s``; compares the adjoint image,
    a direct denoiser applied to the adjoint image and the Deep-RED solve.
``cs_sweep``
    Randomized-DCT compressive measurements at several rates ``delta``,
    recovered by Deep-RED.
``real_patch``
    Patch-wise Deep-RED over a whole section, keeping per patch the bank
    member with the largest cost reduction.

Each realization draws its own generator from ``(master_seed, tag, cell,
realization)`` so results do not depend on worker count or scheduling.
Records go to CSV, per-cell mean and sample std to JSON. Failed solves are
kept as ``-inf`` and counted, never averaged.
"""
import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .denoiser import DnCNNDenoiser, load_bank
from .errors import ConfigError, FormatError, SolverDiverged
from .fileio import atomic_write_text
from .linops import IdentityOperator, gaussian_operator, make_operator, randomized_dct_operator
from .metrics import json_float, lh_factor, quality_q
from .rng import derive_seed, make_rng
from .section import SeismicSection, assemble_patches, partition_patches, rms, to_vector
from .solver import REDContext, SolverOptions, deep_red_solve
from .synth import generate_section

SCENARIOS = ("lh_study", "denoise_mc", "cs_sweep", "real_patch")
RECORD_FIELDS = ("scenario", "cell", "realization", "seed", "method", "value", "bank_index", "iterations", "failed")

# stream tags
_CLEAN, _OP, _NOISE = 1, 2, 3


@dataclass
class ExperimentConfig:
    """Harness configuration; JSON keys match field names except ``lam`` -> ``"lambda"``."""

    scenario: str = "denoise_mc"
    realizations: int = 100
    snrs: list = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0])
    deltas: list = field(default_factory=lambda: [0.9, 0.75, 0.5])
    ratio: float = 8.0
    lam: float = 0.01
    master_seed: int = 0
    bank: object = "desk"
    solver: dict = field(default_factory=dict)
    n_channels: int = 32
    n_time: int = 32
    n_events: int = 4
    cs_snr: float | None = None
    epsilon: float = 1e-3
    patch: int = 128
    operator: str = "Identity"
    workers: int | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.realizations < 1:
            raise ConfigError(f"realizations must be >= 1, got {self.realizations}")
        self.snrs = [float(v) for v in self.snrs]
        self.deltas = [float(v) for v in self.deltas]
        if not self.snrs or any(not v > 0 for v in self.snrs):
            raise ConfigError(f"snrs must be positive, got {self.snrs}")
        if not self.deltas or any(not 0 < v <= 1 for v in self.deltas):
            raise ConfigError(f"deltas must lie in (0, 1], got {self.deltas}")
        if not self.ratio > 0:
            raise ConfigError(f"ratio p/q must be positive, got {self.ratio}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.cs_snr is not None and not self.cs_snr > 0:
            raise ConfigError(f"cs_snr must be positive, got {self.cs_snr}")
        if self.operator not in ("Identity", "DenseGaussian"):
            raise ConfigError(f"patch operator must be Identity or DenseGaussian, got {self.operator!r}")
        if self.patch < 8:
            raise ConfigError(f"patch size must be >= 8, got {self.patch}")
        self.solver_options()  # validate early

    def solver_options(self):
        return SolverOptions.from_dict({**self.solver, "lambda": self.lam})

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown experiment option(s): {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid config JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config JSON must be an object")
        return cls.from_dict(d)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list
    aggregates: list

    def records_csv(self):
        return records_to_csv(self.records)

    def aggregates_json(self):
        return json.dumps(
            {"config": self.config.to_dict(), "aggregates": [_agg_json(a) for a in self.aggregates]},
            indent=2, sort_keys=True,
        ) + "\n"

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "records.csv", self.records_csv())
        atomic_write_text(out / "aggregates.json", self.aggregates_json())
        return out

    def table(self, method=None):
        """``{cell: (mean, std)}`` for one method (or the only one)."""
        rows = [a for a in self.aggregates if method is None or a["method"] == method]
        return {a["cell"]: (a["mean"], a["std"]) for a in rows}


def _agg_json(a):
    return {k: (json_float(v) if isinstance(v, float) else v) for k, v in a.items()}


def _record(scenario, cell, r, seed, method, value, bank_index=-1, iterations=0, failed=False):
    return {
        "scenario": scenario, "cell": float(cell), "realization": int(r), "seed": int(seed),
        "method": method, "value": float(value), "bank_index": int(bank_index),
        "iterations": int(iterations), "failed": bool(failed),
    }


def records_to_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for rec in sorted(records, key=_record_key):
        w.writerow([
            rec["scenario"], repr(rec["cell"]), rec["realization"], rec["seed"], rec["method"],
            repr(rec["value"]), rec["bank_index"], rec["iterations"], int(rec["failed"]),
        ])
    return buf.getvalue()


def records_from_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != RECORD_FIELDS:
        raise FormatError("records CSV has an unexpected header", offset=0)
    out = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(RECORD_FIELDS):
            raise FormatError(f"records CSV line {line} has {len(row)} fields", offset=line)
        try:
            out.append(_record(
                row[0], float(row[1]), int(row[2]), int(row[3]), row[4], float(row[5]),
                int(row[6]), int(row[7]), bool(int(row[8])),
            ))
        except ValueError as exc:
            raise FormatError(f"records CSV line {line}: {exc}", offset=line) from None
    return out


def _record_key(rec):
    return (rec["cell"], rec["method"], rec["realization"])


def aggregate(records):
    """Mean and sample std (n - 1) of ``value`` per ``(method, cell)``.

    Sums use :func:`math.fsum`, so the result is independent of record
    order. Failed records are counted but excluded. With one usable record
    the std is 0 and ``single`` is set.
    """
    records = list(records)
    if not records:
        raise ValueError("cannot aggregate an empty record set")
    groups = {}
    for rec in records:
        groups.setdefault((rec["method"], rec["cell"]), []).append(rec)
    out = []
    for (method, cell), recs in sorted(groups.items()):
        vals = [r["value"] for r in recs if not r["failed"] and math.isfinite(r["value"])]
        n = len(vals)
        failed = len(recs) - n
        if n == 0:
            mean = std = math.nan
        else:
            mean = math.fsum(vals) / n
            std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (n - 1)) if n > 1 else 0.0
        out.append({"method": method, "cell": cell, "n": n, "mean": mean, "std": std,
                    "failed": failed, "single": n == 1})
    return out


def load_report(out_dir):
    """Read a written report and check the stored aggregates against the records."""
    out = Path(out_dir)
    records = records_from_csv((out / "records.csv").read_text())
    stored = json.loads((out / "aggregates.json").read_text())
    cfg = ExperimentConfig.from_dict(stored["config"])
    recomputed = aggregate(records)
    if [_agg_json(a) for a in recomputed] != stored["aggregates"]:
        raise FormatError("stored aggregates do not match the records", path=str(out / "aggregates.json"))
    return ExperimentReport(cfg, records, recomputed)


# -- realization workers -------------------------------------------------


def _clean_section(cfg):
    return generate_section(cfg.n_channels, cfg.n_time, cfg.n_events,
                            make_rng(cfg.master_seed, _CLEAN))[0]


def _solve(op, y, handle, cfg, shape, s0=None):
    ctx = REDContext(handle, cfg.lam)
    return deep_red_solve(op, y, ctx, cfg.solver_options(), s0=s0, shape=shape)


def _best_solve(op, y, bank, cfg, shape, truth):
    """Full solve with every bank member; keep the highest Q."""
    best = (-math.inf, -1, 0)
    failures = 0
    for i, handle in enumerate(bank):
        try:
            res = _solve(op, y, handle, cfg, shape)
        except SolverDiverged:
            failures += 1
            continue
        q = quality_q(res.estimate.reshape(shape), truth)
        if math.isnan(q):
            q = -math.inf
        if q > best[0] or best[1] < 0:
            best = (q, i, res.iterations)
    return best, failures == len(bank)


def _best_direct(bank, m, truth):
    best = (-math.inf, -1)
    for i, handle in enumerate(bank):
        est = handle.denoise(m)
        q = quality_q(est, truth) if np.all(np.isfinite(est)) else -math.inf
        if q > best[0] or best[1] < 0:
            best = (q, i)
    return best


def _lh_realization(cfg, bank, truth, ci, snr, r):
    seed = derive_seed(cfg.master_seed, _NOISE, ci, r)
    g = np.asarray(truth)
    m = g + math.sqrt(rms(g) ** 2 / snr) * make_rng(seed).standard_normal(g.shape)
    q, idx = _best_direct(bank, m, g)
    handle = bank[idx]
    m_unit = m / rms(m)
    # the raw network map is what homogeneity is asked of; the amplitude
    # normalization wrapper is homogeneous by construction
    op = handle.network_residual if isinstance(handle, DnCNNDenoiser) else handle.residual
    try:
        lh, failed = lh_factor(op, m_unit, cfg.epsilon), False
    except ZeroDivisionError:
        lh, failed = math.nan, True
    return [_record("lh_study", snr, r, seed, "lh", lh, idx, 0, failed)]


def _denoise_realization(cfg, bank, truth, ci, snr, r):
    g = np.asarray(truth)
    shape = g.shape
    q = g.size
    p = int(round(cfg.ratio * q))
    op_seed = derive_seed(cfg.master_seed, _OP, r)
    seed = derive_seed(cfg.master_seed, _NOISE, ci, r)
    op = gaussian_operator(p, q, seed=op_seed)
    clean_data = op.forward(to_vector(truth))
    y = clean_data + math.sqrt(rms(clean_data) ** 2 / snr) * make_rng(seed).standard_normal(p)
    adj = op.adjoint(y).reshape(shape)
    recs = [_record("denoise_mc", snr, r, seed, "adjoint", quality_q(adj, g))]
    dq, di = _best_direct(bank, adj, g)
    recs.append(_record("denoise_mc", snr, r, seed, "direct", dq, di))
    (rq, ri, iters), failed = _best_solve(op, y, bank, cfg, shape, g)
    recs.append(_record("denoise_mc", snr, r, seed, "deep_red", rq, ri, iters, failed))
    return recs


def _cs_realization(cfg, bank, truth, ci, delta, r):
    g = np.asarray(truth)
    shape = g.shape
    q = g.size
    p = max(1, int(round(delta * q)))
    seed = derive_seed(cfg.master_seed, _OP, ci, r)
    op = randomized_dct_operator(p, q, seed=seed)
    y = op.forward(to_vector(truth))
    if cfg.cs_snr is not None:
        y = y + math.sqrt(rms(y) ** 2 / cfg.cs_snr) * make_rng(seed, _NOISE).standard_normal(p)
    (rq, ri, iters), failed = _best_solve(op, y, bank, cfg, shape, g)
    return [_record("cs_sweep", delta, r, seed, "deep_red", rq, ri, iters, failed)]


_WORKERS = {
    "lh_study": _lh_realization,
    "denoise_mc": _denoise_realization,
    "cs_sweep": _cs_realization,
}


def _run_chunk(cfg_dict, tasks):
    cfg = ExperimentConfig.from_dict(cfg_dict)
    bank = load_bank(cfg.bank)
    truth = _clean_section(cfg)
    fn = _WORKERS[cfg.scenario]
    out = []
    with threadpool_limits(limits=1):
        for ci, cell, r in tasks:
            out.extend(fn(cfg, bank, truth, ci, cell, r))
    return out


def worker_count(cfg, n_tasks):
    """Worker processes: config value, capped by ``RED_SEIS_THREADS`` and the task count."""
    n = cfg.workers or os.cpu_count() or 1
    env = os.environ.get("RED_SEIS_THREADS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ConfigError(f"RED_SEIS_THREADS must be an integer, got {env!r}") from None
    return max(1, min(n, n_tasks))


def _run(cfg, cells):
    _check_bank(cfg)
    tasks = [(ci, cell, r) for ci, cell in enumerate(cells) for r in range(cfg.realizations)]
    n = worker_count(cfg, len(tasks))
    if n == 1:
        records = _run_chunk(cfg.to_dict(), tasks)
    else:
        chunks = [tasks[k::n] for k in range(n)]
        with ProcessPoolExecutor(max_workers=n) as pool:
            parts = pool.map(_run_chunk, [cfg.to_dict()] * n, chunks)
            records = [rec for part in parts for rec in part]
    records.sort(key=_record_key)
    return ExperimentReport(cfg, records, aggregate(records))


def _check_bank(cfg):
    try:
        load_bank(cfg.bank)
    except (FileNotFoundError, ValueError) as exc:
        raise ConfigError(f"denoiser bank unavailable: {exc}") from None


def _scenario(cfg, name):
    if cfg.scenario != name:
        raise ConfigError(f"config scenario is {cfg.scenario!r}, expected {name!r}")


def run_lh_study(cfg):
    _scenario(cfg, "lh_study")
    return _run(cfg, cfg.snrs)


def run_denoise_mc(cfg):
    _scenario(cfg, "denoise_mc")
    return _run(cfg, cfg.snrs)


def run_cs_sweep(cfg):
    _scenario(cfg, "cs_sweep")
    return _run(cfg, cfg.deltas)


def _patch_operator(cfg, shape, seed):
    q = shape[0] * shape[1]
    if cfg.operator == "Identity":
        return IdentityOperator(q)
    return make_operator("DenseGaussian", int(round(cfg.ratio * q)), q, seed)


def run_real_patch(cfg, section):
    """Patch-wise Deep-RED; returns ``(section, report)``.

    Records carry the cost reduction ``cost[0] - cost[-1]`` of the kept
    bank member per patch (cell = patch index).
    """
    _scenario(cfg, "real_patch")
    try:
        bank = load_bank(cfg.bank)
    except (FileNotFoundError, ValueError) as exc:
        raise ConfigError(f"denoiser bank unavailable: {exc}") from None
    layout, patches = partition_patches(section, cfg.patch, cfg.patch)
    out, records = [], []
    with threadpool_limits(limits=1):
        for k, patch in enumerate(patches):
            shape = patch.shape
            seed = derive_seed(cfg.master_seed, _OP, k)
            op = _patch_operator(cfg, shape, seed)
            y = op.forward(patch.ravel())
            best = None
            for i, handle in enumerate(bank):
                try:
                    res = _solve(op, y, handle, cfg, shape)
                except SolverDiverged:
                    continue
                gain = res.cost_history[0] - res.cost_history[-1]
                if best is None or gain > best[0]:
                    best = (gain, i, res)
            if best is None:
                out.append(np.array(patch, dtype=np.float64))
                records.append(_record("real_patch", k, 0, seed, "deep_red", -math.inf, -1, 0, True))
                continue
            gain, i, res = best
            out.append(res.estimate.reshape(shape))
            records.append(_record("real_patch", k, 0, seed, "deep_red", gain, i, res.iterations))
    return assemble_patches(layout, out), ExperimentReport(cfg, records, aggregate(records))


def run_experiment(cfg, section=None):
    """Dispatch on ``cfg.scenario``; ``real_patch`` needs ``section``."""
    if cfg.scenario == "real_patch":
        if section is None:
            raise ConfigError("real_patch needs an input section")
        return run_real_patch(cfg, section)[1]
    return {"lh_study": run_lh_study, "denoise_mc": run_denoise_mc, "cs_sweep": run_cs_sweep}[cfg.scenario](cfg)
