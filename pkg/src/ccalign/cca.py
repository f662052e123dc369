"""Paired canonical projections via SVD of the whitened cross-covariance.

Fitting pipeline: whiten each view with its own train statistics, form
T = X_w Y_w^T / (N-1), take the thin SVD T = P Lambda Q^T, and keep
u = P^T, v = Q^T (top d = min(d_x, d_y) rows). Projections are then
u W_x (x - mu_x) and v W_y (y - mu_y); the correlations Lambda are never used
to scale projections.

Conventions that make fitted models reproducible across eigensolver backends:

* correlations sorted descending by (-lambda, original SVD index), clamped to
  [0, 1] on output (raw values kept for diagnostics);
* per-pair sign fixed by flipping (u_i, v_i) jointly so the maximum-magnitude
  entry of u_i is positive, ties broken by lowest index.

``fit_cca_oracle`` solves the same problem as a pair of generalized symmetric
eigenproblems. It exists so tests can cross-check the SVD path against an
independent derivation; it is deliberately limited to small dimensions.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import BadMagicError, FormatError, UnsupportedVersionError, ValidationError
from .store import matrix_values
from .whiten import (
    DEFAULT_EPSILON_REL,
    WhiteningTransform,
    apply_whitening,
    fit_moments,
    fit_whitening,
    read_whitening,
    write_whitening,
)

logger = logging.getLogger(__name__)

ORACLE_MAX_DIM_PRODUCT = 10_000

CCA_MAGIC = b"CCA1"
_CCA_HEADER = struct.Struct("<IQQQQd")  # version, d_x, d_y, d, fit_count, epsilon_rel


@dataclass(frozen=True)
class CcaModel:
    """Paired projections u, v with canonical correlations, plus the whiteners."""

    u: np.ndarray  # (d, d_x), rows orthonormal
    v: np.ndarray  # (d, d_y), rows orthonormal
    correlations: np.ndarray  # (d,), descending, clamped to [0, 1]
    whiten_x: WhiteningTransform
    whiten_y: WhiteningTransform
    fit_count: int
    epsilon_rel: float
    raw_correlations: np.ndarray | None = None  # pre-clamp diagnostics
    rank_deficient: bool = False

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=np.float64)
        v = np.ascontiguousarray(self.v, dtype=np.float64)
        corr = np.ascontiguousarray(self.correlations, dtype=np.float64)
        d = corr.shape[0]
        if u.shape != (d, self.whiten_x.dim) or v.shape != (d, self.whiten_y.dim):
            raise ValidationError(
                f"inconsistent model shapes: u {u.shape}, v {v.shape}, {d} correlations"
            )
        if d > min(self.whiten_x.dim, self.whiten_y.dim):
            raise ValidationError("more correlation pairs than min view dimensionality")
        if corr.min() < 0.0 or corr.max() > 1.0 or np.any(np.diff(corr) > 0.0):
            raise ValidationError("correlations must be descending within [0, 1]")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "correlations", corr)

    @property
    def d(self) -> int:
        return self.correlations.shape[0]

    @property
    def dim_x(self) -> int:
        return self.whiten_x.dim

    @property
    def dim_y(self) -> int:
        return self.whiten_y.dim


def _fix_signs(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # np.argmax returns the lowest index on ties, which is the documented rule.
    anchor = np.argmax(np.abs(u), axis=1)
    signs = np.sign(u[np.arange(u.shape[0]), anchor])
    signs[signs == 0.0] = 1.0
    return u * signs[:, None], v * signs[:, None]


def fit_cca(x, y, epsilon_rel: float = DEFAULT_EPSILON_REL) -> CcaModel:
    """Fit canonical projections on two sample-aligned views (dim x count)."""
    xv = matrix_values(x)
    yv = matrix_values(y)
    n = xv.shape[1]
    if yv.shape[1] != n:
        raise ValidationError(f"views must share sample count: x has {n}, y has {yv.shape[1]}")
    if n < 2:
        raise ValidationError(f"fit_cca needs at least 2 samples, got {n}")

    whiten_x = fit_whitening(fit_moments(xv), epsilon_rel)
    whiten_y = fit_whitening(fit_moments(yv), epsilon_rel)
    xw = apply_whitening(whiten_x, xv)
    yw = apply_whitening(whiten_y, yv)

    t = xw @ yw.T / (n - 1)
    p, sing, qt = np.linalg.svd(t, full_matrices=False)
    order = np.argsort(-sing, kind="stable")  # no-op for LAPACK output, by contract
    u, v = _fix_signs(p.T[order], qt[order])
    raw = sing[order]

    rank_deficient = (n - 1) < max(xv.shape[0], yv.shape[0])
    if rank_deficient:
        logger.warning(
            "rank warning: N-1=%d < max view dim %d; trailing correlations are noise",
            n - 1, max(xv.shape[0], yv.shape[0]),
        )
    return CcaModel(
        u=u,
        v=v,
        correlations=np.clip(raw, 0.0, 1.0),
        whiten_x=whiten_x,
        whiten_y=whiten_y,
        fit_count=n,
        epsilon_rel=epsilon_rel,
        raw_correlations=raw,
        rank_deficient=rank_deficient,
    )


def project_x(model: CcaModel, x) -> np.ndarray:
    """u W_x (x - mu_x); output is d x count. Train-fitted statistics only."""
    values = matrix_values(x)
    if values.shape[0] != model.dim_x:
        raise ValidationError(f"expected dim {model.dim_x} for view x, got {values.shape[0]}")
    return model.u @ apply_whitening(model.whiten_x, values)


def project_y(model: CcaModel, y) -> np.ndarray:
    """v W_y (y - mu_y); mirror of project_x."""
    values = matrix_values(y)
    if values.shape[0] != model.dim_y:
        raise ValidationError(f"expected dim {model.dim_y} for view y, got {values.shape[0]}")
    return model.v @ apply_whitening(model.whiten_y, values)


def truncate(model: CcaModel, k: int) -> CcaModel:
    """Keep the top-k correlation pairs, order preserved."""
    if not 1 <= k <= model.d:
        raise ValidationError(f"k must be in [1, {model.d}], got {k}")
    raw = None if model.raw_correlations is None else model.raw_correlations[:k]
    return replace(
        model,
        u=model.u[:k],
        v=model.v[:k],
        correlations=model.correlations[:k],
        raw_correlations=raw,
    )


def mean_correlation(model: CcaModel, k: int) -> float:
    """Arithmetic mean of the top-k canonical correlations."""
    if not 1 <= k <= model.d:
        raise ValidationError(f"k must be in [1, {model.d}], got {k}")
    return float(model.correlations[:k].mean())


def fit_cca_oracle(x, y, epsilon_rel: float = DEFAULT_EPSILON_REL) -> CcaModel:
    """Classical CCA as paired generalized eigenproblems; tests only.

    Solves Sigma_xy (Sigma_y + eps_y I)^{-1} Sigma_yx w = rho^2 (Sigma_x + eps_x I) w
    (and the mirrored problem for v) with the same relative regularization as
    the SVD path, then re-expresses the eigenvectors in the whitened metric so
    the returned model has the same shape and conventions as ``fit_cca``.
    """
    xv = matrix_values(x)
    yv = matrix_values(y)
    dx, n = xv.shape
    dy = yv.shape[0]
    if dx * dy > ORACLE_MAX_DIM_PRODUCT:
        raise ValidationError(
            f"oracle size guard: d_x*d_y = {dx * dy} exceeds {ORACLE_MAX_DIM_PRODUCT}"
        )
    if yv.shape[1] != n:
        raise ValidationError(f"views must share sample count: x has {n}, y has {yv.shape[1]}")
    stats_x = fit_moments(xv)
    stats_y = fit_moments(yv)
    xc = xv - stats_x.mean[:, None]
    yc = yv - stats_y.mean[:, None]
    cross = xc @ yc.T / (n - 1)

    tiny = np.finfo(np.float64).tiny

    def regularized(stats):
        lam, q = np.linalg.eigh(stats.cov)
        eps = epsilon_rel * max(float(lam[-1]), tiny)
        shifted = np.maximum(lam, 0.0) + eps
        b = (q * shifted) @ q.T
        sqrt_b = (q * np.sqrt(shifted)) @ q.T
        return 0.5 * (b + b.T), 0.5 * (sqrt_b + sqrt_b.T)

    bx, sqrt_bx = regularized(stats_x)
    by, sqrt_by = regularized(stats_y)

    def solve_side(b, c_ab, b_other):
        # c_ab (b_other)^{-1} c_ab^T w = rho^2 b w, eigenvectors B-orthonormal
        a = c_ab @ np.linalg.solve(b_other, c_ab.T)
        a = 0.5 * (a + a.T)
        vals, vecs = scipy.linalg.eigh(a, b)
        order = np.argsort(-vals, kind="stable")
        return vals[order], vecs[:, order]

    d = min(dx, dy)
    vals_x, wx = solve_side(bx, cross, by)
    _, wy = solve_side(by, cross.T, bx)
    raw = np.sqrt(np.maximum(vals_x[:d], 0.0))

    # Re-express eigenvectors in the whitened metric: projection u W (x - mu)
    # must equal w^T (x - mu), so u = w^T B^{1/2}; B-orthonormality of w makes
    # the rows of u orthonormal.
    u = wx[:, :d].T @ sqrt_bx
    v = wy[:, :d].T @ sqrt_by

    # The two solves pair eigenvectors only up to sign; flip v rows so the
    # per-pair cross-covariance of the canonical variates is nonnegative.
    variates_x = wx[:, :d].T @ xc
    variates_y = wy[:, :d].T @ yc
    pair_cov = np.einsum("ij,ij->i", variates_x, variates_y) / (n - 1)
    flip = np.where(pair_cov < 0.0, -1.0, 1.0)
    v = v * flip[:, None]
    u, v = _fix_signs(u, v)

    rank_deficient = (n - 1) < max(dx, dy)
    return CcaModel(
        u=u,
        v=v,
        correlations=np.clip(raw, 0.0, 1.0),
        whiten_x=fit_whitening(stats_x, epsilon_rel),
        whiten_y=fit_whitening(stats_y, epsilon_rel),
        fit_count=n,
        epsilon_rel=epsilon_rel,
        raw_correlations=raw,
        rank_deficient=rank_deficient,
    )


# ---------------------------------------------------------------------------
# CCA1 model files
# ---------------------------------------------------------------------------


def write_cca_model(model: CcaModel, dest) -> None:
    with open(dest, "wb") as f:
        f.write(CCA_MAGIC)
        f.write(
            _CCA_HEADER.pack(
                1, model.dim_x, model.dim_y, model.d, model.fit_count, model.epsilon_rel
            )
        )
        write_whitening(model.whiten_x, f)
        write_whitening(model.whiten_y, f)
        for arr in (model.u, model.v, model.correlations):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_cca_model(src) -> CcaModel:
    with open(src, "rb") as f:
        magic = f.read(4)
        if magic != CCA_MAGIC:
            raise BadMagicError(f"{src}: expected magic {CCA_MAGIC!r}, found {magic!r}")
        version, dx, dy, d, fit_count, epsilon_rel = _CCA_HEADER.unpack(f.read(_CCA_HEADER.size))
        if version != 1:
            raise UnsupportedVersionError(f"{src}: CCA1 version {version} not supported")
        whiten_x = read_whitening(f)
        whiten_y = read_whitening(f)
        if whiten_x.dim != dx or whiten_y.dim != dy:
            raise FormatError(f"{src}: whitening sections do not match header dims")
        u = np.frombuffer(f.read(8 * d * dx), dtype="<f8").reshape(d, dx).copy()
        v = np.frombuffer(f.read(8 * d * dy), dtype="<f8").reshape(d, dy).copy()
        corr = np.frombuffer(f.read(8 * d), dtype="<f8").copy()
    return CcaModel(
        u=u,
        v=v,
        correlations=corr,
        whiten_x=whiten_x,
        whiten_y=whiten_y,
        fit_count=fit_count,
        epsilon_rel=epsilon_rel,
    )
