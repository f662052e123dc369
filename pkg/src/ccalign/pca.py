"""Variance-based projection baseline.

Fits the top-k eigenvectors of the training covariance (the covariance is
already what stats fitting produces, so no separate SVD of the data). In
experiments the target k is always min(d_x, d_y), i.e. the same output
dimensionality a CCA projection of the pair would have; the harness enforces
that pairing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagicError, UnsupportedVersionError, ValidationError
from .store import matrix_values
from .whiten import fit_moments

PCA_MAGIC = b"PCA1"
_PCA_HEADER = struct.Struct("<IQQ")  # version, dim, k


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (dim,)
    components: np.ndarray  # (k, dim), orthonormal rows
    variances: np.ndarray  # (k,), descending, nonnegative
    fit_fingerprint: str | None = None

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        comps = np.ascontiguousarray(self.components, dtype=np.float64)
        var = np.ascontiguousarray(self.variances, dtype=np.float64)
        if comps.ndim != 2 or comps.shape[1] != mean.shape[0] or var.shape != (comps.shape[0],):
            raise ValidationError(
                f"inconsistent PCA shapes: mean {mean.shape}, "
                f"components {comps.shape}, variances {var.shape}"
            )
        if var.min() < 0.0 or np.any(np.diff(var) > 0.0):
            raise ValidationError("variances must be descending and nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "variances", var)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[0]


def fit_pca(x, k: int) -> PcaModel:
    """Top-k eigenvectors of the train covariance, deterministic sign convention."""
    values = matrix_values(x)
    d, n = values.shape
    if not 1 <= k <= min(d, n - 1):
        raise ValidationError(f"k must be in [1, min(dim={d}, count-1={n - 1})], got {k}")
    stats = fit_moments(values)
    lam, q = np.linalg.eigh(stats.cov)  # ascending
    comps = q.T[::-1][:k].copy()
    var = np.maximum(lam[::-1][:k], 0.0)
    # Same sign rule as the CCA module: largest-magnitude entry positive.
    anchor = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(k), anchor])
    signs[signs == 0.0] = 1.0
    comps *= signs[:, None]
    return PcaModel(
        mean=stats.mean, components=comps, variances=var, fit_fingerprint=stats.fingerprint
    )


def project(model: PcaModel, x) -> np.ndarray:
    """components (x - mean); output is k x count. Train-fitted model only."""
    values = matrix_values(x)
    if values.shape[0] != model.dim:
        raise ValidationError(f"expected dim {model.dim}, got {values.shape[0]}")
    return model.components @ (values - model.mean[:, None])


def write_pca_model(model: PcaModel, dest) -> None:
    with open(dest, "wb") as f:
        f.write(PCA_MAGIC)
        f.write(_PCA_HEADER.pack(1, model.dim, model.k))
        for arr in (model.mean, model.components, model.variances):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_pca_model(src) -> PcaModel:
    with open(src, "rb") as f:
        magic = f.read(4)
        if magic != PCA_MAGIC:
            raise BadMagicError(f"{src}: expected magic {PCA_MAGIC!r}, found {magic!r}")
        version, d, k = _PCA_HEADER.unpack(f.read(_PCA_HEADER.size))
        if version != 1:
            raise UnsupportedVersionError(f"{src}: PCA1 version {version} not supported")
        mean = np.frombuffer(f.read(8 * d), dtype="<f8").copy()
        comps = np.frombuffer(f.read(8 * k * d), dtype="<f8").reshape(k, d).copy()
        var = np.frombuffer(f.read(8 * k), dtype="<f8").copy()
    return PcaModel(mean=mean, components=comps, variances=var)
