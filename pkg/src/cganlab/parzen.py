"""Gaussian Parzen-window log-likelihood estimation.

A kernel of bandwidth sigma is placed on every generated sample; the score
of a query point q against samples s_1..s_N in D dimensions is

    LL(q) = logsumexp_i(-|q - s_i|^2 / (2 sigma^2)) - log N - (D/2) log(2 pi sigma^2)

evaluated entirely in the log domain with max subtraction, so any finite
input is safe. Kernel exponents are sorted before the reduction, which makes
the result exactly invariant to permutations of the sample set.

The evaluation protocol mirrors the usual conditional setup: per condition,
fit the window to generator samples, pick sigma on validation data by grid
search, report the mean log-likelihood of the test data with its standard
error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .models import generator_forward
from .rng import RngStream
from .tensor import Tensor


def default_sigma_grid(n=20, lo=0.01, hi=1.0) -> np.ndarray:
    """Log-spaced bandwidths bracketing the [-1, 1] data scale."""
    return np.geomspace(lo, hi, n)


@dataclass
class ParzenConfig:
    sigma_grid: np.ndarray = field(default_factory=default_sigma_grid)
    samples_per_condition: int = 2000
    chunk: int = 256
    sigma_mode: str = "per_condition"  # or "global"

    def validate(self):
        grid = np.asarray(self.sigma_grid, dtype=np.float64)
        if grid.size == 0 or np.any(grid <= 0):
            raise ConfigError("sigma grid must be non-empty and strictly positive")
        if np.any(np.diff(grid) <= 0):
            raise ConfigError("sigma grid must be sorted ascending without duplicates")
        if self.samples_per_condition < 1:
            raise ConfigError("samples_per_condition must be positive")
        if self.sigma_mode not in ("per_condition", "global"):
            raise ConfigError(f"unknown sigma mode {self.sigma_mode!r}")


@dataclass
class ParzenRow:
    """One evaluated condition; numeric fields are None for missing rows."""

    condition: int
    sigma: float | None
    mean_ll: float | None
    stderr: float | None
    n_test: int
    n_samples: int
    note: str = ""


def _sq_dists(queries: np.ndarray, samples: np.ndarray) -> np.ndarray:
    diff = queries[:, None, :] - samples[None, :, :]
    return np.einsum("tnd,tnd->tn", diff, diff)


def _ll_from_d2(d2: np.ndarray, sigma: float, n: int, dim: int) -> np.ndarray:
    k = -d2 / (2.0 * sigma * sigma)
    k = np.sort(k, axis=1)  # canonical reduction order
    m = k[:, -1]
    body = m + np.log(np.exp(k - m[:, None]).sum(axis=1))
    return body - math.log(n) - 0.5 * dim * math.log(2.0 * math.pi * sigma * sigma)


def parzen_log_likelihood(samples, queries, sigma: float, chunk: int = 256) -> np.ndarray:
    """Per-query log-likelihood under the sample-centered Gaussian window."""
    samples = np.asarray(samples, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    if samples.ndim != 2 or queries.ndim != 2:
        raise DimensionError(f"samples and queries must be 2-D, got {samples.shape} and {queries.shape}")
    if samples.shape[0] < 1:
        raise DataError("need at least one sample")
    if samples.shape[1] != queries.shape[1]:
        raise DimensionError(f"dimension mismatch: samples {samples.shape} vs queries {queries.shape}")
    if not sigma > 0:
        raise DataError(f"sigma must be positive, got {sigma}")
    n, dim = samples.shape
    out = np.empty(queries.shape[0])
    for at in range(0, queries.shape[0], chunk):
        q = queries[at:at + chunk]
        out[at:at + q.shape[0]] = _ll_from_d2(_sq_dists(q, samples), sigma, n, dim)
    return out


def select_sigma(samples, validation_queries, grid) -> tuple:
    """Grid sigma maximizing mean validation LL; ties go to the smaller sigma."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or np.any(grid <= 0):
        raise DataError("sigma grid must be non-empty and strictly positive")
    validation_queries = np.asarray(validation_queries, dtype=np.float64)
    if validation_queries.shape[0] < 1:
        raise DataError("validation set is empty")
    samples = np.asarray(samples, dtype=np.float64)
    n, dim = samples.shape
    best_sigma, best_ll = None, -np.inf
    # distances are sigma-independent; compute once and sweep the grid
    d2 = _sq_dists(validation_queries, samples)
    for sigma in grid:
        mean_ll = float(_ll_from_d2(d2, float(sigma), n, dim).mean())
        if mean_ll > best_ll:
            best_ll, best_sigma = mean_ll, float(sigma)
    return best_sigma, best_ll


def generate_samples(g_params, condition: int, count: int, stream: RngStream) -> np.ndarray:
    """Draw `count` generator outputs for a fixed condition, flattened to rows."""
    m = g_params.meta["cond_dim"]
    k = g_params.meta["noise_dim"]
    if not 0 <= condition < m:
        raise ConfigError(f"condition index {condition} out of range 0..{m - 1}")
    z = Tensor(stream.uniform(-1.0, 1.0, (count, k)))
    onehot = np.zeros((count, m))
    onehot[:, condition] = 1.0
    imgs = generator_forward(z, Tensor(onehot), g_params)
    return imgs.data.reshape(count, -1)


def conditional_eval(g_params, valid, test, cfg: ParzenConfig, seed,
                     condition_map=None) -> list:
    """Per-condition Parzen report rows for a generator checkpoint.

    condition_map optionally remaps the condition fed to the generator
    (used by shuffled-condition controls); evaluation data is always the
    true condition's split.
    """
    cfg.validate()
    m = g_params.meta["cond_dim"]
    if valid.cond_dim != m or test.cond_dim != m:
        raise DataError(f"dataset label width {test.cond_dim} != generator condition width {m}")
    root = RngStream(seed, ("parzen-eval",))
    valid_labels = valid.label_indices()
    test_labels = test.label_indices()
    grid = np.asarray(cfg.sigma_grid, dtype=np.float64)

    per_cond = []
    for cond in range(m):
        vq = valid.images[valid_labels == cond].reshape(-1, int(np.prod(valid.image_shape)))
        tq = test.images[test_labels == cond].reshape(-1, int(np.prod(test.image_shape)))
        if vq.shape[0] == 0 or tq.shape[0] == 0:
            missing = "validation" if vq.shape[0] == 0 else "test"
            per_cond.append((cond, None, None, ParzenRow(
                cond, None, None, None, tq.shape[0], 0,
                note=f"condition {cond} missing from {missing} split")))
            continue
        gen_cond = condition_map[cond] if condition_map is not None else cond
        samples = generate_samples(g_params, gen_cond, cfg.samples_per_condition,
                                   root.split(f"cond-{cond}"))
        per_cond.append((cond, samples, (vq, tq), None))

    global_sigma = None
    if cfg.sigma_mode == "global":
        pooled = []
        for cond, samples, data, row in per_cond:
            if row is not None:
                continue
            vq, _ = data
            d2 = _sq_dists(vq, samples)
            pooled.append((d2, samples.shape[0], samples.shape[1]))
        if not pooled:
            raise DataError("no evaluable conditions for global sigma selection")
        best, best_ll = None, -np.inf
        for sigma in grid:
            vals = np.concatenate([_ll_from_d2(d2, float(sigma), n, dim)
                                   for d2, n, dim in pooled])
            mean_ll = float(vals.mean())
            if mean_ll > best_ll:
                best, best_ll = float(sigma), mean_ll
        global_sigma = best

    rows = []
    for cond, samples, data, row in per_cond:
        if row is not None:
            rows.append(row)
            continue
        vq, tq = data
        if cfg.sigma_mode == "global":
            sigma = global_sigma
        else:
            sigma, _ = select_sigma(samples, vq, grid)
        lls = parzen_log_likelihood(samples, tq, sigma, cfg.chunk)
        mean_ll = float(lls.mean())
        stderr = float(lls.std(ddof=1) / math.sqrt(lls.shape[0])) if lls.shape[0] > 1 else 0.0
        rows.append(ParzenRow(cond, sigma, mean_ll, stderr, int(tq.shape[0]),
                              int(cfg.samples_per_condition)))
    return rows


# ----------------------------------------------------------------------
# report serialization


CSV_HEADER = "condition,sigma,mean_ll,stderr,n_test,n_samples"


def report_csv(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        sigma = "" if r.sigma is None else repr(r.sigma)
        mean_ll = "" if r.mean_ll is None else repr(r.mean_ll)
        stderr = "" if r.stderr is None else repr(r.stderr)
        lines.append(f"{r.condition},{sigma},{mean_ll},{stderr},{r.n_test},{r.n_samples}")
    return "\n".join(lines) + "\n"


def format_table(model_rows: dict, label_names=None) -> str:
    """Aligned text table: one column per condition, one row per model."""
    conds = sorted({r.condition for rows in model_rows.values() for r in rows})
    if label_names is None:
        label_names = [str(c) for c in conds]
    name_w = max([len("model")] + [len(str(n)) for n in model_rows])
    col_w = max([7] + [len(str(label_names[c])) + 2 for c in conds])
    header = "model".ljust(name_w) + " |" + "".join(str(label_names[c]).rjust(col_w) for c in conds)
    sep = "-" * name_w + "-+" + "-" * (col_w * len(conds))
    lines = [header, sep]
    for model, rows in model_rows.items():
        by_cond = {r.condition: r for r in rows}
        cells = []
        for c in conds:
            r = by_cond.get(c)
            cells.append(("n/a" if r is None or r.mean_ll is None else f"{r.mean_ll:.1f}").rjust(col_w))
        lines.append(str(model).ljust(name_w) + " |" + "".join(cells))
    return "\n".join(lines) + "\n"
