"""Brute-force ground truth for small Ising systems.

Everything here enumerates ``{-1, 1}^N``: the Gibbs law, the flip Dirichlet
form ``D(f) = sum_x nu(|f(s) - f(s^x)|^2)``, its exact spectral gap, a numerical
probe of the optimal log-Sobolev rate, and checks of the single-site
covariance estimate and of the field-mixture representation.

States are indexed by bit masks: bit x set means ``s_x = +1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import eigen
from .coupling import CouplingMatrix
from .renorm import RenormalizedModel, regularize, sample_renormalized, split_covariance
from .singlespin import SingleSpinModel

MAX_SITES = 16
MAX_SEARCH_SITES = 10
MIN_PROBABILITY = 1e-250


class OracleError(ValueError):
    pass


def all_states(n_sites: int) -> np.ndarray:
    idx = np.arange(1 << n_sites)
    return np.where((idx[:, None] >> np.arange(n_sites)) & 1, 1.0, -1.0)


def _entries(m) -> np.ndarray:
    return m.entries if isinstance(m, CouplingMatrix) else np.asarray(m, dtype=np.float64)


@dataclass
class ExactChain:
    coupling: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    probabilities: np.ndarray = field(repr=False)
    log_partition: float
    edge_a: np.ndarray = field(repr=False)
    edge_b: np.ndarray = field(repr=False)
    edge_w: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.states.shape[1]

    def expectation(self, values: np.ndarray) -> float:
        return float(self.probabilities @ values)

    def dirichlet(self, f: np.ndarray) -> float:
        d = f[self.edge_a] - f[self.edge_b]
        return float(self.edge_w @ (d * d))

    @cached_property
    def dirichlet_form_matrix(self) -> np.ndarray:
        """Symmetric ``L`` with ``D(f) = f^T L f``."""
        size = len(self.probabilities)
        lmat = np.zeros((size, size))
        np.add.at(lmat, (self.edge_a, self.edge_a), self.edge_w)
        np.add.at(lmat, (self.edge_b, self.edge_b), self.edge_w)
        np.add.at(lmat, (self.edge_a, self.edge_b), -self.edge_w)
        np.add.at(lmat, (self.edge_b, self.edge_a), -self.edge_w)
        return lmat

    @cached_property
    def _gap_pair(self) -> tuple[float, np.ndarray]:
        return _generalized_gap(self)

    @property
    def exact_gap(self) -> float:
        return self._gap_pair[0]

    @property
    def gap_function(self) -> np.ndarray:
        """A minimiser of ``D(f) / var(f)`` (normalised in ``L^2(nu)``)."""
        return self._gap_pair[1]


def enumerate_gibbs(m) -> ExactChain:
    """Exact Gibbs law ``nu(s) ~ exp(-(s, M s)/2)`` on ``{-1, 1}^N``."""
    a = _entries(m)
    n_sites = len(a)
    if n_sites > MAX_SITES:
        raise OracleError(f"enumeration limited to N <= {MAX_SITES}, got {n_sites}")
    states = all_states(n_sites)
    logw = -0.5 * np.einsum("sx,xy,sy->s", states, a, states)
    top = float(logw.max())
    log_z = top + math.log(float(np.exp(logw - top).sum()))
    p = np.exp(logw - log_z)
    idx = np.arange(1 << n_sites)
    ea, eb = [], []
    for x in range(n_sites):
        low = idx[(idx >> x & 1) == 0]
        ea.append(low)
        eb.append(low | 1 << x)
    ea = np.concatenate(ea)
    eb = np.concatenate(eb)
    # each unordered flip pair is visited from both endpoints
    w = p[ea] + p[eb]
    return ExactChain(a, states, p, log_z, ea, eb, w)


def _generalized_gap(chain: ExactChain) -> tuple[float, np.ndarray]:
    p = chain.probabilities
    if p.min() < MIN_PROBABILITY:
        raise OracleError(f"state probability {p.min():.3e} underflows; generalized eigenproblem is degenerate")
    s = 1.0 / np.sqrt(p)
    sym = chain.dirichlet_form_matrix * s[:, None] * s[None, :]
    sym = 0.5 * (sym + sym.T)
    w, v = eigen.eigh(sym)
    # drop the eigenvector aligned with sqrt(nu) (constants)
    overlap = np.abs(v.T @ np.sqrt(p))
    keep = np.ones(len(w), dtype=bool)
    keep[int(np.argmax(overlap))] = False
    k = int(np.argmin(np.where(keep, w, np.inf)))
    return float(w[k]), v[:, k] * s


def exact_spectral_gap(chain: ExactChain) -> float:
    """Smallest nonzero eigenvalue of ``D f = lambda diag(nu) f``."""
    return chain.exact_gap


def entropy(chain: ExactChain, F: np.ndarray) -> float:
    """``ent_nu(F) = nu(F log F) - nu(F) log nu(F)`` for ``F > 0`` (natural log)."""
    p = chain.probabilities
    mean = float(p @ F)
    return mean * float(p @ _phi(F / mean - 1.0))


def _phi(u: np.ndarray) -> np.ndarray:
    """``(1 + u) log(1 + u) - u``, accurate for small ``u``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(u > -1.0, (1.0 + u) * np.log1p(np.maximum(u, -1.0)) - u, 1.0)
    small = np.abs(u) < 1e-2
    if np.any(small):
        us = u[small]
        acc = np.zeros_like(us)
        term = us * us
        for k in range(2, 14):
            acc += (-1) ** k * term / (k * (k - 1))
            term = term * us
        out[small] = acc
    return out


def _lsi_objective(g: np.ndarray, chain: ExactChain):
    with np.errstate(under="ignore"):
        return _lsi_objective_raw(g, chain)


def _lsi_objective_raw(g: np.ndarray, chain: ExactChain):
    p = chain.probabilities
    g = g - float(np.max(g))
    f = np.exp(g)
    F = f * f
    mean = float(p @ F)
    u = F / mean - 1.0
    ent = mean * float(p @ _phi(u))
    a, b, w = chain.edge_a, chain.edge_b, chain.edge_w
    # f(a) - f(b); expm1 keeps precision when the two are close
    gd = g[a] - g[b]
    diff = np.where(np.abs(gd) < 1.0, f[b] * np.expm1(np.clip(gd, -1.0, 1.0)), f[a] - f[b])
    dform = float(w @ (diff * diff))
    if not ent > 1e-300:
        return math.inf, np.zeros_like(g), ent / mean
    size = len(g)
    flux = np.bincount(a, w * diff, size) - np.bincount(b, w * diff, size)
    grad_d = 2.0 * f * flux
    grad_e = 2.0 * p * F * (2.0 * g - math.log(mean))
    val = 2.0 * dform / ent
    grad = 2.0 * (grad_d * ent - dform * grad_e) / ent**2
    return val, grad, ent / mean


@dataclass
class LsiSearchResult:
    rho_hat: float
    rho_descent: float
    gap_limit: float
    best_g: np.ndarray = field(repr=False)
    restarts: int = 0
    degenerate: int = 0

    def to_dict(self, include_f: bool = False) -> dict:
        d = {
            "rhoHat": self.rho_hat,
            "rhoDescent": self.rho_descent,
            "gapLimit": self.gap_limit,
            "restarts": self.restarts,
            "degenerateRestarts": self.degenerate,
        }
        if include_f:
            d["optimizingF"] = np.exp(self.best_g).tolist()
        return d


def numeric_lsi_upper_bound(
    chain: ExactChain, restarts: int = 50, seed: int = 0, ftol: float = 1e-10, max_attempts: int = 5
) -> LsiSearchResult:
    """Upper bound on the optimal LSI rate ``inf_f 2 D(f) / ent(f^2)``.

    Minimises over ``f = exp(g)`` from random starts (L-BFGS). The linearisation
    ``f = 1 + eps u`` with ``eps -> 0`` reaches ``D(u)/var(u)``, so the exact gap
    is itself an attainable value of the infimum and is folded into the bound.
    """
    if chain.N > MAX_SEARCH_SITES:
        raise OracleError(f"LSI search limited to N <= {MAX_SEARCH_SITES}")
    rng = np.random.default_rng(seed)
    size = len(chain.probabilities)
    gap = chain.exact_gap
    best, best_g, degenerate = math.inf, np.zeros(size), 0
    starts = [1e-2 * chain.gap_function / np.max(np.abs(chain.gap_function))]
    done = 0
    while done < restarts:
        if starts:
            g0 = starts.pop()
        else:
            scale = math.exp(rng.uniform(math.log(0.05), math.log(4.0)))
            g0 = scale * rng.normal(size=size)
        attempt = 0
        while _lsi_objective(g0, chain)[2] < 1e-14:
            attempt += 1
            if attempt > max_attempts:
                raise OracleError("all LSI restarts degenerate")
            g0 = rng.normal(size=size)
        res = minimize(
            lambda g: _lsi_objective(g, chain)[:2],
            g0,
            jac=True,
            method="L-BFGS-B",
            options={"ftol": ftol, "gtol": 1e-12, "maxiter": 3000},
        )
        val, _, rel_ent = _lsi_objective(res.x, chain)
        done += 1
        if rel_ent < 1e-14 or not math.isfinite(val):
            degenerate += 1
            continue
        if val < best:
            best, best_g = val, res.x
    return LsiSearchResult(min(best, gap), best, gap, best_g, restarts, degenerate)


@dataclass
class OrderingReport:
    rho_cert: Optional[float]
    rho_hat: float
    exact_gap: float
    holds: bool
    effective_norm: float

    def to_dict(self) -> dict:
        return {
            "rhoCert": self.rho_cert,
            "rhoHat": self.rho_hat,
            "exactGap": self.exact_gap,
            "holds": self.holds,
            "effectiveNorm": self.effective_norm,
        }


def ordering_chain(m, gamma: float = 4.0, restarts: int = 50, seed: int = 0, slack: float = 1e-6) -> OrderingReport:
    """``rho_cert <= rho_hat <= exact gap`` on one instance."""
    from .coupling import certify_lsi

    cert = certify_lsi(m, 1, gamma)
    chain = enumerate_gibbs(m)
    search = numeric_lsi_upper_bound(chain, restarts, seed)
    gap = chain.exact_gap
    ok = search.rho_hat <= gap + slack
    if cert.certified:
        ok = ok and cert.certified_lsi_rate <= search.rho_hat + slack
    return OrderingReport(cert.certified_lsi_rate, search.rho_hat, gap, bool(ok), cert.effective_norm)


@dataclass
class DuplicationReport:
    checks: int
    violations: int
    min_slack: float
    max_identity_error: float
    max_derivative_error: float
    pass_: bool

    def to_dict(self) -> dict:
        return {
            "checks": self.checks,
            "violations": self.violations,
            "minSlack": self.min_slack,
            "maxIdentityError": self.max_identity_error,
            "maxDerivativeError": self.max_derivative_error,
            "pass": self.pass_,
        }


def duplication_inequality_check(fields, functions: np.ndarray, rtol: float = 1e-12) -> DuplicationReport:
    """Check ``|cov(F^2, s)|^2 <= 8 var(F) mu(F^2)`` under tilted two-point laws.

    ``functions`` has shape ``(k, 2)``: values ``(F(-1), F(+1))``. Also checks
    the duplication identity ``cov(F^2, s) = E E'[(F - F')(F + F')(s - s')]/2``
    and ``d/dh mu^h(F^2) = cov(F^2, s)`` (finite differences).
    """
    spins = np.array([-1.0, 1.0])
    functions = np.atleast_2d(np.asarray(functions, dtype=np.float64))
    checks = violations = 0
    min_slack, ident_err, deriv_err = math.inf, 0.0, 0.0

    def law(h):
        w = np.exp(h * spins - abs(h))
        return w / w.sum()

    for h in fields:
        p = law(h)
        pp = np.outer(p, p)
        for F in functions:
            F2 = F * F
            cov = p @ (F2 * spins) - (p @ F2) * (p @ spins)
            var = p @ (F * F) - (p @ F) ** 2
            lhs = cov * cov
            rhs = 8.0 * max(var, 0.0) * (p @ F2)
            dup = 0.5 * np.sum(pp * np.subtract.outer(F, F) * np.add.outer(F, F) * np.subtract.outer(spins, spins))
            ident_err = max(ident_err, abs(dup - cov))
            eps = 1e-5
            fd = (law(h + eps) @ F2 - law(h - eps) @ F2) / (2 * eps)
            deriv_err = max(deriv_err, abs(fd - cov) / max(1.0, abs(cov)))
            checks += 1
            if lhs > rhs * (1 + rtol) + 1e-300:
                violations += 1
            if rhs > 0:
                min_slack = min(min_slack, 1.0 - lhs / rhs)
    return DuplicationReport(checks, violations, min_slack, ident_err, deriv_err, violations == 0)


def observable_battery(n_sites: int) -> list[str]:
    names = ["magnetization", "energy"]
    names += [f"s{x}s{y}" for x in range(n_sites) for y in range(x + 1, n_sites)]
    return names


def exact_observables(chain: ExactChain) -> dict[str, float]:
    s, a = chain.states, chain.coupling
    out = {
        "magnetization": chain.expectation(s.mean(axis=1)),
        "energy": chain.expectation(0.5 * np.einsum("sx,xy,sy->s", s, a, s)),
    }
    for x in range(chain.N):
        for y in range(x + 1, chain.N):
            out[f"s{x}s{y}"] = chain.expectation(s[:, x] * s[:, y])
    return out


def conditional_observables(a: np.ndarray, c: float, phi: np.ndarray) -> dict[str, np.ndarray]:
    """``mu_phi`` expectations of the battery for fields ``phi`` of shape ``(..., N)``."""
    t = np.tanh(c * phi)
    n_sites = t.shape[-1]
    out = {"magnetization": t.mean(axis=-1)}
    off = a - np.diag(np.diag(a))
    out["energy"] = 0.5 * np.trace(a) + 0.5 * np.einsum("...x,xy,...y->...", t, off, t)
    for x in range(n_sites):
        for y in range(x + 1, n_sites):
            out[f"s{x}s{y}"] = t[..., x] * t[..., y]
    return out


@dataclass
class MixtureReport:
    rows: list
    c: float
    delta: float
    diagnostics: dict
    pass_: bool

    def to_dict(self) -> dict:
        return {"c": self.c, "delta": self.delta, "observables": self.rows, "diagnostics": self.diagnostics, "pass": self.pass_}


def mixture_identity_check(
    m, c: Optional[float] = None, count: int = 100_000, seed: int = 0, chains: int = 64, z_max: float = 3.0
) -> MixtureReport:
    """Compare exact ``nu(F)`` with Monte Carlo ``nu_r(mu_phi(F))``.

    The coupling is shifted to ``[delta, span + delta]`` (this leaves ``nu``
    unchanged) and smoothed at scale ``c``. Standard errors come from the
    spread of per-chain means.
    """
    a = _entries(m)
    if len(a) > 6:
        raise OracleError("mixture check limited to N <= 6")
    shifted, c, delta = regularize(a, 1, c)
    model = split_covariance(shifted, c, SingleSpinModel.sphere(1))
    samples = sample_renormalized(model, count, seed, chains=chains)
    exact = exact_observables(enumerate_gibbs(a))
    cond = conditional_observables(a, c, samples.phi[..., 0])
    rows, ok = [], True
    for name in observable_battery(len(a)):
        per_chain = cond[name].mean(axis=1)
        est = float(per_chain.mean())
        se = float(per_chain.std(ddof=1) / math.sqrt(len(per_chain)))
        z = abs(est - exact[name]) / se if se > 0 else (0.0 if est == exact[name] else math.inf)
        ok = ok and z <= z_max
        rows.append({"observable": name, "exact": exact[name], "estimate": est, "standardError": se, "z": z})
    return MixtureReport(rows, c, delta, samples.diagnostics(), ok)
