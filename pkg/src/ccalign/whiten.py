"""Mean/covariance estimation and regularized ZCA whitening.

The whitening operator is the symmetric inverse square root W = (Sigma + eps*I)^(-1/2)
applied to centered data, W (x - mu). ZCA (symmetric) form, not PCA form: W is built
as Q diag((lambda_i + eps)^(-1/2)) Q^T from the eigendecomposition of Sigma, which keeps
it symmetric and as close to the original basis as any whitener can be.

eps is relative: eps = epsilon_rel * max(lambda_max, tiny). A floor is mandatory
whenever N < d or the embeddings are norm-constrained (rank <= d-1); the default
epsilon_rel of 1e-6 is recorded on every fitted transform.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError
from .store import data_fingerprint, matrix_values

DEFAULT_EPSILON_REL = 1e-6

WHT_MAGIC = b"WHT1"
_WHT_HEADER = struct.Struct("<IQQd")  # version, dim, source_count, epsilon


@dataclass(frozen=True)
class MomentStats:
    """Sample mean and covariance of a dim x count matrix."""

    mean: np.ndarray
    cov: np.ndarray
    count: int
    fingerprint: str | None = None

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        cov = np.ascontiguousarray(self.cov, dtype=np.float64)
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise ValidationError(f"inconsistent moment shapes: mean {mean.shape}, cov {cov.shape}")
        if self.count < 2:
            raise ValidationError(f"moment estimation needs count >= 2, got {self.count}")
        scale = max(float(np.abs(cov).max()), np.finfo(np.float64).tiny)
        if float(np.abs(cov - cov.T).max()) > 1e-12 * scale:
            raise ValidationError("covariance is not symmetric within 1e-12 relative")
        trace = float(np.trace(cov))
        if float(np.linalg.eigvalsh(cov).min()) < -1e-10 * max(trace, np.finfo(np.float64).tiny):
            raise ValidationError("covariance is not PSD within tolerance")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class WhiteningTransform:
    """Frozen centering + inverse-square-root operator fitted on one dataset."""

    mean: np.ndarray
    operator: np.ndarray  # symmetric, (Sigma + eps*I)^{-1/2}
    epsilon: float  # absolute floor that was applied
    source_count: int
    fit_fingerprint: str | None = None

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        op = np.ascontiguousarray(self.operator, dtype=np.float64)
        if op.shape != (mean.shape[0], mean.shape[0]):
            raise ValidationError(f"operator shape {op.shape} does not match mean {mean.shape}")
        if not np.array_equal(op, op.T):
            raise ValidationError("whitening operator must be exactly symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "operator", op)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_moments(x) -> MomentStats:
    """Two-pass mean and (N-1)-normalized covariance, exactly symmetrized."""
    values = matrix_values(x)
    d, n = values.shape
    if n < 2:
        raise ValidationError(f"fit_moments needs at least 2 samples, got {n}")
    if not np.all(np.isfinite(values)):
        raise ValidationError("fit_moments input contains non-finite values")
    mean = values.mean(axis=1)
    centered = values - mean[:, None]
    cov = centered @ centered.T / (n - 1)
    cov = 0.5 * (cov + cov.T)
    return MomentStats(mean=mean, cov=cov, count=n, fingerprint=data_fingerprint(values))


def merge_moments(a: MomentStats, b: MomentStats) -> MomentStats:
    """Exact merge of two partial (mean, M2) accumulators over disjoint columns.

    With M2 = cov * (count - 1):
      n = na + nb, delta = mb - ma,
      mean = ma + delta * nb / n,
      M2 = M2a + M2b + outer(delta, delta) * na * nb / n.
    """
    if a.dim != b.dim:
        raise ValidationError(f"cannot merge moments of dims {a.dim} and {b.dim}")
    na, nb = a.count, b.count
    n = na + nb
    delta = b.mean - a.mean
    mean = a.mean + delta * (nb / n)
    m2 = a.cov * (na - 1) + b.cov * (nb - 1) + np.outer(delta, delta) * (na * nb / n)
    cov = m2 / (n - 1)
    return MomentStats(mean=mean, cov=0.5 * (cov + cov.T), count=n, fingerprint=None)


def fit_whitening(
    stats: MomentStats,
    epsilon_rel: float = DEFAULT_EPSILON_REL,
    rank: int | None = None,
) -> WhiteningTransform:
    """Build the ZCA operator from fitted moments.

    Eigenvalues are floored at zero and shifted by eps = epsilon_rel * max(lambda_max,
    tiny) before inversion, which keeps W full rank even for singular covariances.
    Passing ``rank`` instead truncates: directions beyond the top-``rank``
    eigenvalues are zeroed (useful in the N < d regime).
    """
    if epsilon_rel <= 0.0:
        raise ValidationError(f"epsilon_rel must be > 0, got {epsilon_rel}")
    lam, q = np.linalg.eigh(stats.cov)  # ascending
    eps = epsilon_rel * max(float(lam[-1]), np.finfo(np.float64).tiny)
    inv_sqrt = (np.maximum(lam, 0.0) + eps) ** -0.5
    if rank is not None:
        if not 1 <= rank <= stats.dim:
            raise ValidationError(f"rank must be in [1, {stats.dim}], got {rank}")
        inv_sqrt[: stats.dim - rank] = 0.0
    op = (q * inv_sqrt) @ q.T
    op = 0.5 * (op + op.T)
    return WhiteningTransform(
        mean=stats.mean,
        operator=op,
        epsilon=eps,
        source_count=stats.count,
        fit_fingerprint=stats.fingerprint,
    )


def apply_whitening(transform: WhiteningTransform, x) -> np.ndarray:
    """W (x - mu), column-wise. Pure function: never refits statistics."""
    values = matrix_values(x)
    if values.shape[0] != transform.dim:
        raise ValidationError(
            f"whitening dim {transform.dim} does not match data dim {values.shape[0]}"
        )
    return transform.operator @ (values - transform.mean[:, None])


# ---------------------------------------------------------------------------
# WHT1 serialization (embedded inside CCA1 model files, or standalone)
# ---------------------------------------------------------------------------


def write_whitening(transform: WhiteningTransform, f) -> None:
    d = transform.dim
    f.write(WHT_MAGIC)
    f.write(_WHT_HEADER.pack(1, d, transform.source_count, transform.epsilon))
    f.write(np.ascontiguousarray(transform.mean, dtype="<f8").tobytes())
    f.write(np.ascontiguousarray(transform.operator, dtype="<f8").tobytes())


def read_whitening(f) -> WhiteningTransform:
    magic = f.read(4)
    if magic != WHT_MAGIC:
        raise FormatError(f"expected whitening section magic {WHT_MAGIC!r}, found {magic!r}")
    version, d, source_count, epsilon = _WHT_HEADER.unpack(f.read(_WHT_HEADER.size))
    if version != 1:
        raise FormatError(f"WHT1 version {version} not supported")
    mean = np.frombuffer(f.read(8 * d), dtype="<f8").copy()
    op = np.frombuffer(f.read(8 * d * d), dtype="<f8").reshape(d, d).copy()
    return WhiteningTransform(
        mean=mean, operator=op, epsilon=epsilon, source_count=source_count
    )
