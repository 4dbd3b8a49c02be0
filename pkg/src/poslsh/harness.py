"""Synthetic convergence experiments and their file formats.

A sweep runs one audit per ``(seed, sigma, s)`` cell. Within a seed the
attention instance is fixed, and mask sample ``i`` is drawn from child stream
``i`` of the seed, so the sample set for ``s`` is a prefix of the one for any
larger ``s``.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from poslsh._rng import QKV_STREAM, child_rng
from poslsh.attention import AttentionInstance
from poslsh.diagnostics import audit_error_bound
from poslsh.errors import ParameterError
from poslsh.mask_estimator import block_size_bound, block_stats
from poslsh.rbf_lsh import sample_partitions

DEFAULT_SIGMAS = (2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0)

CSV_HEADER = (
    "seed", "n", "sigma", "s", "res_spec", "res_max", "output_err", "beta_star",
    "p_two_inf", "d_tilde_min", "b_max", "block_flop_units", "wall_ms",
)


class MatrixFormatError(ValueError):
    def __init__(self, path, line, msg):
        self.path, self.line = path, line
        super().__init__(f"{path}:{line}: {msg}")


@dataclass
class ExperimentConfig:
    n: int = 256
    d: int = 16
    d_prime: int = 16
    sigma_list: list = field(default_factory=lambda: list(DEFAULT_SIGMAS))
    s_list: list = field(default_factory=lambda: [1, 10, 100, 1000])
    seeds: list = field(default_factory=lambda: [0])
    causal: bool = False
    delta: float = 0.01
    output_path: str = None
    # "gaussian:<scale>" or "file:<directory holding q.txt, k.txt, v.txt>"
    qkv_source: str = "gaussian:1.0"
    threads: int = 1
    record_wall_clock: bool = True
    inject_fault: bool = False

    def validate(self):
        if self.n < 1 or self.d < 1 or self.d_prime < 1:
            raise ParameterError("n, d and d_prime must be >= 1")
        for name in ("sigma_list", "s_list", "seeds"):
            if not getattr(self, name):
                raise ParameterError(f"{name} must be nonempty")
        if any(not sg > 0 for sg in self.sigma_list):
            raise ParameterError("every sigma must be positive")
        if any(s < 1 for s in self.s_list):
            raise ParameterError("every s must be >= 1")
        if not 0 < self.delta <= math.exp(-1) * (1 + 1e-12):
            raise ParameterError(f"delta must lie in (0, 1/e], got {self.delta}")
        kind, _, _ = self.qkv_source.partition(":")
        if kind not in ("gaussian", "file"):
            raise ParameterError(f"unknown qkv source {self.qkv_source!r}")
        return self


@dataclass
class ConvergenceRecord:
    seed: int
    n: int
    sigma: float
    s: int
    res_spec: float
    res_max: float
    output_err: float
    beta_star: float
    p_two_inf: float
    d_tilde_min: float
    b_max: int
    block_flop_units: int
    wall_ms: float
    bound_holds: bool = True

    def row(self):
        return [_fmt(getattr(self, k)) for k in CSV_HEADER]


@dataclass
class TailRecord:
    sigma: float
    s: int
    runs: int
    exceedances: int
    fraction: float
    bound: float
    max_b_max: int


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def gen_synthetic_instance(n, d, d_prime, seed, scale=1.0, sigma=8.0, causal=False):
    if n < 1 or d < 1 or d_prime < 1:
        raise ParameterError("n, d and d_prime must be >= 1")
    if scale < 0:
        raise ParameterError(f"scale must be nonnegative, got {scale}")
    rng = child_rng(seed, QKV_STREAM)
    Q = scale * rng.standard_normal((n, d))
    K = scale * rng.standard_normal((n, d))
    V = scale * rng.standard_normal((n, d_prime))
    return AttentionInstance(Q, K, V, sigma=sigma, causal=causal)


# -- matrix text files ---------------------------------------------------------

def write_matrix(path, A):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    with open(path, "w", newline="") as f:
        f.write(f"{A.shape[0]},{A.shape[1]}\n")
        for r in A:
            f.write(",".join(repr(float(x)) for x in r) + "\n")


def read_matrix(path):
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise MatrixFormatError(path, 1, "empty file")
    try:
        rows, cols = (int(x) for x in lines[0].split(","))
    except ValueError:
        raise MatrixFormatError(path, 1, f"expected 'rows,cols', got {lines[0]!r}") from None
    if rows < 1 or cols < 1:
        raise MatrixFormatError(path, 1, "dimensions must be positive")
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != rows:
        raise MatrixFormatError(path, len(body) + 2, f"expected {rows} data rows, found {len(body)}")
    A = np.empty((rows, cols))
    for i, line in enumerate(body):
        parts = line.split(",")
        if len(parts) != cols:
            raise MatrixFormatError(path, i + 2, f"expected {cols} values, found {len(parts)}")
        try:
            A[i] = [float(p) for p in parts]
        except ValueError as e:
            raise MatrixFormatError(path, i + 2, str(e)) from None
        if not np.isfinite(A[i]).all():
            raise MatrixFormatError(path, i + 2, "non-finite value")
    return A


def write_qkv(directory, inst):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, A in (("q", inst.Q), ("k", inst.K), ("v", inst.V)):
        write_matrix(directory / f"{name}.txt", A)


def read_qkv(directory, sigma=8.0, causal=False):
    directory = Path(directory)
    Q, K, V = (read_matrix(directory / f"{name}.txt") for name in ("q", "k", "v"))
    return AttentionInstance(Q, K, V, sigma=sigma, causal=causal)


# -- config files --------------------------------------------------------------

_LIST_KEYS = {"sigma_list": float, "s_list": int, "seeds": int}
_SCALAR_KEYS = {
    "n": int, "d": int, "d_prime": int, "delta": float, "output_path": str,
    "qkv_source": str, "threads": int,
}
_BOOL_KEYS = ("causal", "record_wall_clock", "inject_fault")


def parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"not a boolean: {text!r}")


def parse_int_list(text):
    """Comma-separated ints; ``a-b`` expands to the inclusive range."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        if sep and lo:
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def parse_config_text(text):
    """Parse ``key = value`` lines into a dict of typed config values."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip().replace("-", "_"), val.strip()
        if not sep:
            raise ParameterError(f"line {lineno}: expected 'key = value'")
        try:
            if key in _LIST_KEYS:
                conv = _LIST_KEYS[key]
                values[key] = parse_int_list(val) if conv is int else [conv(x) for x in val.split(",") if x.strip()]
            elif key in _SCALAR_KEYS:
                values[key] = _SCALAR_KEYS[key](val)
            elif key in _BOOL_KEYS:
                values[key] = parse_bool(val)
            else:
                raise ParameterError(f"line {lineno}: unknown key {key!r}")
        except ValueError as e:
            if isinstance(e, ParameterError):
                raise
            raise ParameterError(f"line {lineno}: bad value for {key}: {val!r}") from None
    return values


def load_config(path, **overrides):
    values = parse_config_text(Path(path).read_text())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values).validate()


# -- sweeps --------------------------------------------------------------------

def _load_instance(config, seed, sigma):
    kind, _, arg = config.qkv_source.partition(":")
    if kind == "file":
        return read_qkv(arg, sigma=sigma, causal=config.causal)
    scale = float(arg) if arg else 1.0
    return gen_synthetic_instance(config.n, config.d, config.d_prime, seed, scale=scale,
                                  sigma=sigma, causal=config.causal)


def _run_cell(config, seed, sigma, s):
    inst = _load_instance(config, seed, sigma)
    parts = sample_partitions(sigma, inst.n, s, seed)
    audit = audit_error_bound(inst, parts, fault=config.inject_fault)
    return ConvergenceRecord(
        seed=seed, n=inst.n, sigma=float(sigma), s=s,
        res_spec=audit.res_spec, res_max=audit.res_max, output_err=audit.output_err,
        beta_star=audit.beta_star, p_two_inf=audit.p_two_inf, d_tilde_min=audit.d_tilde_min,
        b_max=audit.b_max, block_flop_units=audit.work.block_flop_units,
        wall_ms=audit.wall_ms if config.record_wall_clock else 0.0,
        bound_holds=audit.bound_holds,
    )


def _write_csv(f, records):
    w = csv.writer(f, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())


def write_records(path, records):
    with open(path, "w", newline="") as f:
        _write_csv(f, records)


def read_records(path):
    with open(path, newline="") as f:
        rd = csv.DictReader(f)
        if tuple(rd.fieldnames or ()) != CSV_HEADER:
            raise ParameterError(f"unexpected CSV header {rd.fieldnames}")
        types = {f.name: f.type for f in fields(ConvergenceRecord)}
        out = []
        for row in rd:
            out.append(ConvergenceRecord(**{
                k: int(v) if types[k] is int else float(v) for k, v in row.items()
            }))
        return out


def run_convergence_sweep(config):
    """One record per ``(seed, sigma, s)`` cell, in that lexicographic order.

    When ``config.output_path`` is set the file is opened before any work so
    an unwritable path fails fast, and the CSV is written at the end.
    """
    config.validate()
    out = None
    if config.output_path:
        out = open(config.output_path, "w", newline="")
    try:
        cells = [(seed, sg, s) for seed in sorted(config.seeds)
                 for sg in sorted(config.sigma_list) for s in sorted(config.s_list)]
        if config.threads > 1:
            with ThreadPoolExecutor(config.threads) as pool:
                records = list(pool.map(lambda c: _run_cell(config, *c), cells))
        else:
            records = [_run_cell(config, *c) for c in cells]
        if out is not None:
            _write_csv(out, records)
    finally:
        if out is not None:
            out.close()
    return records


def run_blocksize_tail(config):
    """Fraction of seeds whose largest block exceeds the high-probability cap, per cell."""
    config.validate()
    out = []
    for sg in sorted(config.sigma_list):
        for s in sorted(config.s_list):
            bound = block_size_bound(sg, s, config.delta)
            maxes = [block_stats(sample_partitions(sg, config.n, s, seed)).b_max for seed in config.seeds]
            exceed = sum(1 for b in maxes if b > bound)
            out.append(TailRecord(sigma=float(sg), s=s, runs=len(maxes), exceedances=exceed,
                                  fraction=exceed / len(maxes), bound=bound, max_b_max=max(maxes)))
    return out


def fit_loglog_slope(points):
    """Least-squares slope of ``ln(value)`` against ``ln(s)``."""
    if len(points) < 3:
        raise ParameterError("need at least 3 points")
    s = np.array([p[0] for p in points], dtype=np.float64)
    v = np.array([p[1] for p in points], dtype=np.float64)
    if np.any(s <= 0) or np.any(v <= 0):
        raise ParameterError("log-log fit needs positive coordinates")
    x, y = np.log(s), np.log(v)
    x = x - x.mean()
    return float(np.dot(x, y - y.mean()) / np.dot(x, x))


def mean_by_s(records, attr):
    """``{s: (mean, standard error)}`` of ``attr`` over records."""
    by = {}
    for r in records:
        by.setdefault(r.s, []).append(getattr(r, attr))
    out = {}
    for s, vals in sorted(by.items()):
        a = np.asarray(vals)
        se = a.std(ddof=1) / math.sqrt(len(a)) if len(a) > 1 else 0.0
        out[s] = (float(a.mean()), float(se))
    return out
