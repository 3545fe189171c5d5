"""Numerical checks of the pushforward KL relation.

Mapping a Gaussian posterior and prior through the same map can only lose
KL, never gain it, with equality for invertible maps.  This module provides
closed-form Gaussian KL, the invariance check under shared affine maps, the
marginal (coordinate-dropping) inequality, and a Monte Carlo equivalence
check of the two ELBO routes through an invertible elementwise map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .rng import Rng
from .vae import VaeModel
from .autodiff import Tensor


@dataclass
class GaussianSpec:
    """Multivariate normal with full or diagonal covariance."""
    mean: np.ndarray
    cov: np.ndarray          # (d, d) full or (d,) diagonal variances

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        if self.mean.ndim != 1:
            raise ValueError("mean must be a vector")
        d = self.mean.shape[0]
        if self.cov.shape == (d,):
            if np.any(self.cov <= 0):
                raise ValueError("diagonal variances must be positive")
        elif self.cov.shape == (d, d):
            if not np.allclose(self.cov, self.cov.T, atol=1e-12):
                raise ValueError("covariance must be symmetric")
        else:
            raise ValueError(f"cov shape {self.cov.shape} does not fit "
                             f"dimension {d}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self.cov.ndim == 1

    def full_cov(self) -> np.ndarray:
        return np.diag(self.cov) if self.is_diagonal else self.cov

    def cholesky(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.full_cov())
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive definite") from exc


def _diag_kl_terms(q: GaussianSpec, p: GaussianSpec) -> np.ndarray:
    """Per-dimension KL for diagonal Gaussians, clamped at 0 so partial sums
    are monotone in the kept set."""
    var_q, var_p = q.cov, p.cov
    terms = 0.5 * (var_q / var_p + (q.mean - p.mean) ** 2 / var_p
                   - 1.0 + np.log(var_p) - np.log(var_q))
    return np.maximum(terms, 0.0)


def kl_gaussian_closed_form(q: GaussianSpec, p: GaussianSpec) -> float:
    """KL(q || p) between Gaussians, via Cholesky factors."""
    if q.dim != p.dim:
        raise ValueError("dimension mismatch")
    if q.is_diagonal and p.is_diagonal:
        return float(_diag_kl_terms(q, p).sum())
    lq = q.cholesky()
    lp = p.cholesky()
    a = solve_triangular(lp, lq, lower=True)
    trace = float((a * a).sum())
    v = solve_triangular(lp, q.mean - p.mean, lower=True)
    quad = float(v @ v)
    logdet_p = 2.0 * float(np.log(np.diag(lp)).sum())
    logdet_q = 2.0 * float(np.log(np.diag(lq)).sum())
    return 0.5 * (trace + quad - q.dim + logdet_p - logdet_q)


def check_affine_invariance(q: GaussianSpec, p: GaussianSpec,
                            a_mat: np.ndarray, b_vec: np.ndarray,
                            tol: float = 1e-9) -> tuple[float, float, float]:
    """KL is unchanged when both Gaussians ride through z = A y + b.

    Returns (kl before, kl after, |difference|); raises on a singular A or a
    difference beyond tol.
    """
    a_mat = np.asarray(a_mat, dtype=np.float64)
    b_vec = np.asarray(b_vec, dtype=np.float64)
    d = q.dim
    if a_mat.shape != (d, d) or b_vec.shape != (d,):
        raise ValueError("A must be (d, d) and b (d,)")
    sign, _ = np.linalg.slogdet(a_mat)
    if sign == 0:
        raise ValueError("affine map must be invertible (det A != 0)")
    before = kl_gaussian_closed_form(q, p)

    def push(g: GaussianSpec) -> GaussianSpec:
        cov = a_mat @ g.full_cov() @ a_mat.T
        cov = 0.5 * (cov + cov.T)
        return GaussianSpec(a_mat @ g.mean + b_vec, cov)

    after = kl_gaussian_closed_form(push(q), push(p))
    delta = abs(after - before)
    if delta > tol:
        raise AssertionError(
            f"affine invariance violated: |{after} - {before}| = {delta}")
    return before, after, delta


def check_marginal_inequality(q: GaussianSpec, keep_dims,
                              p: GaussianSpec | None = None
                              ) -> tuple[float, float]:
    """Dropping coordinates cannot raise KL against a diagonal reference.

    q (and p, default standard normal) must be diagonal.  Returns
    (kl of the kept marginal, full kl); the full value is assembled as
    kept + dropped from the same per-dimension terms, so the inequality
    holds exactly in floating point.
    """
    if not q.is_diagonal:
        raise ValueError("marginal check needs a diagonal q")
    if p is None:
        p = GaussianSpec(np.zeros(q.dim), np.ones(q.dim))
    if not p.is_diagonal or p.dim != q.dim:
        raise ValueError("reference must be diagonal with matching dimension")
    keep = np.asarray(sorted(set(int(i) for i in keep_dims)), dtype=np.int64)
    if keep.size == 0:
        raise ValueError("keep_dims is empty")
    if keep.size == q.dim:
        raise ValueError("keep_dims keeps every coordinate; drop at least one")
    if keep.min() < 0 or keep.max() >= q.dim:
        raise ValueError("keep_dims out of range")
    terms = _diag_kl_terms(q, p)
    mask = np.zeros(q.dim, dtype=bool)
    mask[keep] = True
    kl_marginal = float(terms[mask].sum())
    kl_full = kl_marginal + float(terms[~mask].sum())
    return kl_marginal, kl_full


# ---------------------------------------------------------------------------
# invertible probe maps and the two-route ELBO comparison

class InvertibleTestMap:
    """Analytically invertible maps with exact log-determinants.

    kind "affine": z = A y + b.
    kind "smooth_elementwise": z_d = y_d + a * tanh(y_d) with a >= 0, slope
    in [1, 1 + a]; inverted per coordinate by Newton iteration.
    """

    def __init__(self, kind: str, a_mat: np.ndarray | None = None,
                 b_vec: np.ndarray | None = None, a: float = 0.5):
        if kind == "affine":
            self.a_mat = np.asarray(a_mat, dtype=np.float64)
            self.b_vec = np.asarray(b_vec, dtype=np.float64)
            sign, self._logdet = np.linalg.slogdet(self.a_mat)
            if sign == 0:
                raise ValueError("affine test map must have det A != 0")
            self._sign = sign
        elif kind == "smooth_elementwise":
            if a < 0:
                raise ValueError("smooth elementwise map needs a >= 0")
            self.a = float(a)
        else:
            raise ValueError(f"unknown test map kind {kind!r}")
        self.kind = kind

    def forward(self, y: np.ndarray) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        if self.kind == "affine":
            return y @ self.a_mat.T + self.b_vec
        return y + self.a * np.tanh(y)

    def inverse(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if self.kind == "affine":
            return np.linalg.solve(self.a_mat, (z - self.b_vec).T).T
        y = z.copy()
        for _ in range(100):
            t = np.tanh(y)
            resid = y + self.a * t - z
            if np.max(np.abs(resid)) < 1e-14:
                break
            y = y - resid / (1.0 + self.a * (1.0 - t * t))
        if np.max(np.abs(y + self.a * np.tanh(y) - z)) > 1e-10:
            raise FloatingPointError("elementwise inversion did not converge")
        return y

    def log_det_jacobian(self, y: np.ndarray) -> np.ndarray:
        """Per-row log |det dz/dy| evaluated at y."""
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        if self.kind == "affine":
            return np.full(y.shape[0], self._logdet)
        t = np.tanh(y)
        return np.log1p(self.a * (1.0 - t * t)).sum(axis=1)


def _log_gaussian_diag(x: np.ndarray, mean: np.ndarray,
                       std: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return (-0.5 * np.log(2.0 * np.pi) - np.log(std)
            - 0.5 * ((x - mean) / std) ** 2).sum(axis=1)


@dataclass
class ElboEquivalenceResult:
    elbo_y_route: float       # mean recon - closed-form KL in y-space
    elbo_z_route: float       # mean recon - MC KL in z-space
    delta: float
    stderr: float
    kl_closed_form: float
    kl_mc_terms: np.ndarray   # per-draw log q_z - log p_z
    y_route_terms: np.ndarray  # per-draw log q_y - log p_y at the same draws


def check_elbo_equivalence(model: VaeModel, test_map: InvertibleTestMap,
                           x: np.ndarray, n_mc: int, seed: int,
                           tol_sigmas: float = 3.0) -> ElboEquivalenceResult:
    """Estimate the ELBO through y-space and through z-space and compare.

    The y-route uses the closed-form Gaussian KL.  The z-route maps each
    posterior draw through the test map, recovers y by the map's inverse,
    and applies the change of variables to both densities; the log-det
    cancels in their difference, which is the equality the pushforward
    relation asserts for invertible maps.  The shared reconstruction average
    is computed once.  Raises when |delta| exceeds tol_sigmas standard
    errors of the z-route KL terms.
    """
    if test_map.kind != "smooth_elementwise":
        raise ValueError("equivalence check needs the smooth elementwise map "
                         "(exact per-sample log-det)")
    if n_mc < 100:
        raise ValueError("n_mc too small for a meaningful stderr")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] != 1:
        raise ValueError("pass a single observation x")

    mu_t, log_std_t = model.encode(Tensor(x))
    mu = mu_t.value[0]
    std = np.exp(log_std_t.value[0])

    eps = Rng(seed).normals(n_mc * model.dim_latent)
    y = mu + std * eps.reshape(n_mc, model.dim_latent)
    z = test_map.forward(y)

    recon = model.recon_log_lik(
        Tensor(np.repeat(x, n_mc, axis=0)), model.decode(Tensor(z)))
    mean_recon = float(recon.value.mean())

    ones = np.ones(model.dim_latent)
    y_terms = (_log_gaussian_diag(y, mu, std)
               - _log_gaussian_diag(y, np.zeros(model.dim_latent), ones))

    y_back = test_map.inverse(z)
    logdet = test_map.log_det_jacobian(y_back)
    log_q_z = _log_gaussian_diag(y_back, mu, std) - logdet
    log_p_z = _log_gaussian_diag(y_back, np.zeros(model.dim_latent),
                                 ones) - logdet
    kl_terms = log_q_z - log_p_z

    q_spec = GaussianSpec(mu, std ** 2)
    p_spec = GaussianSpec(np.zeros(model.dim_latent), np.ones(model.dim_latent))
    kl_cf = kl_gaussian_closed_form(q_spec, p_spec)

    elbo_y_route = mean_recon - kl_cf
    elbo_z_route = mean_recon - float(kl_terms.mean())
    stderr = float(kl_terms.std(ddof=1) / np.sqrt(n_mc))
    delta = elbo_y_route - elbo_z_route
    if abs(delta) > tol_sigmas * max(stderr, 1e-300):
        raise AssertionError(
            f"ELBO routes disagree: delta={delta}, stderr={stderr}")
    return ElboEquivalenceResult(elbo_y_route, elbo_z_route, delta, stderr,
                                 kl_cf, kl_terms, y_terms)
