"""One Gaussian renormalisation step.

For ``0 < M < c`` the covariance splits as ``M^-1 = c^-1 I + B^-1``. Spins are
smoothed at scale ``c``; the field ``phi`` then has density
``exp(-(phi, B phi)/2 - sum_x V(phi_x))`` where
``V(psi) = -log int exp(-c |psi - s|^2 / 2) mu(ds)``, and ``Hess V = c I - c^2 cov``
of the tilted measure with field ``c psi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import eigen
from .coupling import CouplingMatrix
from .singlespin import SingleSpinModel, tilted_moments

PSI_MAX = 50.0
TABLE_NODES = 4096
ROUND_TRIP_RTOL = 1e-8


class SpectralConditionError(ValueError):
    """Coupling spectrum is not inside ``(0, c)``."""


def renormalized_potential(model: SingleSpinModel, c: float, psi) -> float:
    """``V(psi)`` with the normalised single-spin measure (so ``V(0) = c/2`` on spheres)."""
    if not c > 0:
        raise ValueError("smoothing scale c must be positive")
    psi = np.atleast_1d(np.asarray(psi, dtype=np.float64))
    r2 = float(psi @ psi)
    if model.measure_kind == "general-bounded":
        # |s|^2 is not constant off the sphere: fold it into the weights
        x, w = model.nodes, model.weights
        expo = -0.5 * c * (psi[0] - x) ** 2
        top = float(np.max(expo))
        return -(top + math.log(float(w @ np.exp(expo - top))))
    return 0.5 * c * (r2 + 1.0) - model.log_partition(c * psi)


def _ising_potential(c: float):
    def v(r):
        x = np.abs(c * r)
        return 0.5 * c * (1.0 + r * r) - (x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0))

    return v


class PotentialTable:
    """Radial cubic-spline table of ``V`` on ``[0, psi_max]``.

    Arguments beyond the table are evaluated directly by quadrature.
    """

    def __init__(self, model: SingleSpinModel, c: float, psi_max: float = PSI_MAX, nodes: int = TABLE_NODES):
        self.model, self.c, self.psi_max = model, c, psi_max
        if model.measure_kind == "general-bounded":
            self.r = np.linspace(-psi_max, psi_max, nodes)
        else:
            self.r = np.linspace(0.0, psi_max, nodes)
        self.v = np.array([self._direct(r) for r in self.r])
        self.spline = CubicSpline(self.r, self.v)

    def _direct(self, r: float) -> float:
        psi = np.zeros(self.model.n)
        psi[0] = r
        return renormalized_potential(self.model, self.c, psi)

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        out = self.spline(r)
        outside = np.abs(r) > self.psi_max
        if np.any(outside):
            out = np.where(outside, 0.0, out)
            for idx in zip(*np.nonzero(outside)):
                out[idx] = self._direct(float(r[idx]))
        return out

    def rows(self, fd_step: float = 1e-3) -> list[tuple[float, float, float, float]]:
        """``(|psi|, V, V'' analytic, V'' finite-difference)`` along the table radius."""
        c, out = self.c, []
        for r in self.r:
            h = np.zeros(self.model.n)
            h[0] = c * r
            var = tilted_moments(self.model, h).covariance[0, 0]
            fd = (self._direct(r + fd_step) - 2 * self._direct(r) + self._direct(r - fd_step)) / fd_step**2
            out.append((float(r), float(self._direct(r)), float(c - c * c * var), float(fd)))
        return out


def site_potential(model: SingleSpinModel, c: float, table_nodes: int = TABLE_NODES) -> Callable:
    """Vectorised ``phi -> V(phi)`` acting on arrays of shape ``(..., n)``."""
    if model.measure_kind == "sphere" and model.n == 1:
        v1 = _ising_potential(c)
        return lambda phi: v1(phi[..., 0])
    table = PotentialTable(model, c, nodes=table_nodes)
    if model.measure_kind == "general-bounded":
        return lambda phi: table(phi[..., 0])
    return lambda phi: table(np.linalg.norm(phi, axis=-1))


@dataclass
class RenormalizedModel:
    c: float
    B: np.ndarray
    spin_dimension: int
    lambda_be: float
    m_eigenvalues: np.ndarray
    b_eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    potential: Optional[Callable] = field(default=None, repr=False)
    condition_number: float = 1.0
    round_trip_error: float = 0.0

    def log_density(self, phi: np.ndarray) -> np.ndarray:
        """Unnormalised log density for ``phi`` of shape ``(..., N, n)``."""
        quad = np.einsum("...xk,xy,...yk->...", phi, self.B, phi)
        out = -0.5 * quad
        if self.potential is not None:
            out = out - np.sum(self.potential(phi), axis=-1)
        return out

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "lambdaBE": self.lambda_be,
            "spinDimension": self.spin_dimension,
            "mEigenvalues": self.m_eigenvalues.tolist(),
            "bEigenvalues": self.b_eigenvalues.tolist(),
            "B": self.B.tolist(),
            "conditionNumber": self.condition_number,
            "roundTripError": self.round_trip_error,
        }


def _entries(m) -> np.ndarray:
    return m.entries if isinstance(m, CouplingMatrix) else np.asarray(m, dtype=np.float64)


def split_covariance(
    m, c: float, spin: Optional[SingleSpinModel] = None, n: Optional[int] = None
) -> RenormalizedModel:
    """Split ``M^-1 = c^-1 I + B^-1`` on the eigenbasis of ``M``.

    Each eigenvalue ``m_i`` of ``M`` maps to ``b_i = c m_i / (c - m_i)``. The
    spin dimension comes from ``spin`` (which also supplies the potential) or
    ``n``.
    """
    a = _entries(m)
    if n is None:
        n = spin.n if spin is not None else 1
    w, v = eigen.eigh(a)
    bad = [float(x) for x in w if not 0.0 < x < c]
    if bad:
        raise SpectralConditionError(
            f"eigenvalue {bad[0]!r} of the coupling is outside (0, c={c!r}); shift the coupling first"
        )
    b = c * w / (c - w)
    bmat = (v * b) @ v.T
    bmat = 0.5 * (bmat + bmat.T)
    # independent route: invert M^-1 - c^-1 I directly
    direct = np.linalg.inv(np.linalg.inv(a) - np.eye(len(a)) / c)
    rt = float(np.linalg.norm(direct - bmat) / np.linalg.norm(bmat))
    cond = float(b[-1] / b[0])
    potential = site_potential(spin, c) if spin is not None else None
    return RenormalizedModel(c, bmat, n, c - c * c / n, w, b, v, potential, cond, rt)


def regularize(m, n: int, c: Optional[float] = None) -> tuple[np.ndarray, float, float]:
    """Shift ``m`` to be positive definite and pick a smoothing scale.

    Returns ``(M', c, delta)`` with ``M' = M - (lambda_min - delta) I`` so that the
    spectrum of ``M'`` is ``[delta, span + delta]`` and ``c = span + 2 delta``.
    Without an explicit ``c``, ``delta = (n - span) / 4`` when ``span < n`` (so
    ``c`` is halfway between ``span`` and ``n``), else ``delta = 1/4``.
    """
    a = _entries(m)
    w = eigen.eigh(a)[0]
    span = float(w[-1] - w[0])
    if c is None:
        delta = (n - span) / 4.0 if span < n else 0.25
        c = span + 2.0 * delta
    else:
        if not c > span:
            raise SpectralConditionError(f"c={c!r} must exceed the spectral span {span!r}")
        delta = (c - span) / 2.0
    shifted = a - (w[0] - delta) * np.eye(len(a))
    return shifted, float(c), float(delta)


@dataclass(frozen=True)
class HessianReport:
    min_eig_hess: float
    lambda_be: float
    pass_: bool
    max_fd_deviation: float
    argmin_psi: np.ndarray

    def to_dict(self) -> dict:
        return {
            "minEigHess": self.min_eig_hess,
            "lambdaBE": self.lambda_be,
            "pass": self.pass_,
            "maxFiniteDifferenceDeviation": self.max_fd_deviation,
            "argminPsi": self.argmin_psi.tolist(),
        }


def analytic_hessian(model: SingleSpinModel, c: float, psi) -> np.ndarray:
    psi = np.atleast_1d(np.asarray(psi, dtype=np.float64))
    cov = tilted_moments(model, c * psi).covariance
    return c * np.eye(model.n) - c * c * cov


def fd_hessian(model: SingleSpinModel, c: float, psi, step: float = 2e-4) -> np.ndarray:
    """Central second differences of ``V``."""
    psi = np.atleast_1d(np.asarray(psi, dtype=np.float64))
    n = model.n

    def v(p):
        return renormalized_potential(model, c, p)

    e = np.eye(n) * step
    out = np.empty((n, n))
    v0 = v(psi)
    for i in range(n):
        out[i, i] = (v(psi + e[i]) - 2 * v0 + v(psi - e[i])) / step**2
        for j in range(i):
            out[i, j] = out[j, i] = (
                v(psi + e[i] + e[j]) - v(psi + e[i] - e[j]) - v(psi - e[i] + e[j]) + v(psi - e[i] - e[j])
            ) / (4 * step**2)
    return out


def standard_psi_grid(n: int, radii=(0.0, 0.05, 0.2, 0.5, 1.0, 2.0, 4.0), seed: int = 1) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    if n == 1:
        units = [np.array([1.0]), np.array([-1.0])]
    else:
        units = [np.eye(n)[0]] + [u / np.linalg.norm(u) for u in rng.normal(size=(2, n))]
    return [r * u for r in radii for u in units]


def hessian_lower_bound_check(model: SingleSpinModel, c: float, psi_grid, tol: float = 1e-8) -> HessianReport:
    """Minimum eigenvalue of ``Hess V`` over the grid against ``c - c^2/n``.

    ``Hess V`` comes from the covariance identity and is cross-checked against
    finite differences of ``V``.
    """
    psi_grid = list(psi_grid)
    if not psi_grid:
        raise ValueError("psi grid must be nonempty")
    lam = c - c * c / model.n
    best, arg, dev = math.inf, None, 0.0
    for psi in psi_grid:
        h = analytic_hessian(model, c, psi)
        dev = max(dev, float(np.max(np.abs(h - fd_hessian(model, c, psi)))))
        low = float(np.linalg.eigvalsh(h)[0])
        if low < best:
            best, arg = low, np.atleast_1d(np.asarray(psi, dtype=np.float64))
    return HessianReport(best, lam, best >= lam - tol, dev, arg)


@dataclass(frozen=True)
class GaussianIdentityReport:
    max_log_ratio_deviation: float
    pass_: bool
    samples: int

    def to_dict(self) -> dict:
        return {"maxLogRatioDeviation": self.max_log_ratio_deviation, "pass": self.pass_, "samples": self.samples}


def convolved_quadratic_form(bmat: np.ndarray, c: float) -> np.ndarray:
    """Quadratic form of ``int exp(-c|phi - s|^2/2 - (phi, B phi)/2) dphi`` in ``s``: ``c I - c^2 (c I + B)^-1``."""
    k = len(bmat)
    return c * np.eye(k) - c * c * np.linalg.solve(c * np.eye(k) + bmat, np.eye(k))


def gaussian_identity_check(m, c: float, sigma_samples, tol: float = 1e-9) -> GaussianIdentityReport:
    """Check that ``exp(-(s, M s)/2)`` and the Gaussian convolution differ by a constant factor.

    Configurations have shape ``(N,)`` or ``(N, n)``; components are independent.
    """
    a = _entries(m)
    if a.shape[0] * max(1, np.asarray(sigma_samples[0]).reshape(len(a), -1).shape[1]) > 64:
        raise ValueError("closed-form check limited to N * n <= 64")
    model = split_covariance(a, c)
    q = convolved_quadratic_form(model.B, c)
    ratios = []
    for s in sigma_samples:
        s = np.asarray(s, dtype=np.float64).reshape(len(a), -1)
        lhs = -0.5 * np.einsum("xk,xy,yk->", s, a, s)
        rhs = -0.5 * np.einsum("xk,xy,yk->", s, q, s)
        ratios.append(lhs - rhs)
    spread = float(np.max(ratios) - np.min(ratios))
    return GaussianIdentityReport(spread, spread < tol, len(ratios))


@dataclass
class RenormalizedSamples:
    """Chains of field configurations, shape ``(chains, steps, N, n)``."""

    phi: np.ndarray
    acceptance_rate: float
    step_size: float
    burn_in: int

    @property
    def flat(self) -> np.ndarray:
        return self.phi.reshape(-1, *self.phi.shape[2:])

    @property
    def chain_length(self) -> int:
        return self.phi.shape[1]

    def diagnostics(self) -> dict:
        return {
            "acceptanceRate": self.acceptance_rate,
            "stepSize": self.step_size,
            "burnIn": self.burn_in,
            "chains": self.phi.shape[0],
            "chainLength": self.chain_length,
        }


def sample_renormalized(
    model: RenormalizedModel,
    count: int,
    seed: int,
    chains: int = 64,
    burn_in: int = 2000,
    target_acceptance: float = 0.4,
) -> RenormalizedSamples:
    """Random-walk Metropolis samples of the renormalised field measure.

    ``chains`` independent chains run in lockstep. The common step size is
    adapted towards ``target_acceptance`` during burn-in and then frozen, so
    the production phase is an exact Metropolis chain.
    """
    if not model.lambda_be > 0 and model.potential is not None:
        raise ValueError("sampler requires lambda_be > 0")
    rng = np.random.default_rng(seed)
    n_sites, n = len(model.B), model.spin_dimension
    per_chain = -(-count // chains)
    dim = n_sites * n
    step = 2.4 / math.sqrt(dim) / math.sqrt(max(float(model.b_eigenvalues[0]), 1e-12) + max(model.lambda_be, 0.0))
    phi = rng.normal(size=(chains, n_sites, n)) / math.sqrt(float(model.b_eigenvalues[-1]) + 1.0)
    logp = model.log_density(phi)

    def advance(phi, logp, step):
        prop = phi + step * rng.normal(size=phi.shape)
        logq = model.log_density(prop)
        accept = np.log(rng.random(chains)) < logq - logp
        phi = np.where(accept[:, None, None], prop, phi)
        logp = np.where(accept, logq, logp)
        return phi, logp, accept

    log_step = math.log(step)
    for t in range(burn_in):
        phi, logp, acc = advance(phi, logp, math.exp(log_step))
        log_step += (acc.mean() - target_acceptance) / math.sqrt(t + 1.0)
    step = math.exp(log_step)
    out = np.empty((chains, per_chain, n_sites, n))
    accepted = 0
    for t in range(per_chain):
        phi, logp, acc = advance(phi, logp, step)
        accepted += int(acc.sum())
        out[:, t] = phi
    return RenormalizedSamples(out, accepted / (chains * per_chain), step, burn_in)
