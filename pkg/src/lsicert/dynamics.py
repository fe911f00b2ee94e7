"""Single-site MCMC dynamics for the spin measure and relaxation-time estimates.

Ising spins (n = 1) use heat-bath Glauber updates; sphere spins (n >= 2) use
single-site Metropolis with a tangent Gaussian proposal. The local field at
site x is ``h_x = -sum_{y != x} M_xy s_y``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .coupling import CouplingMatrix, build_coupling
from .rng import seed_sequence, substream

CHUNK_SWEEPS = 4096
MAX_STEP = 4.0


class TraceTooShortError(ValueError):
    def __init__(self, length: int, tau: float, required: int):
        super().__init__(f"trace of length {length} too short for tau={tau:.3g}; need at least {required}")
        self.length, self.tau, self.required = length, tau, required


class ZeroVarianceError(ValueError):
    """Constant trace: the autocorrelation time is undefined."""


@dataclass
class SpinConfiguration:
    values: np.ndarray  # shape (N, n)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        norms = np.linalg.norm(v, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("spins must be unit vectors")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @classmethod
    def random(cls, n_sites: int, n: int, rng: np.random.Generator) -> "SpinConfiguration":
        if n == 1:
            return cls(rng.choice([-1.0, 1.0], size=(n_sites, 1)))
        v = rng.normal(size=(n_sites, n))
        return cls(v / np.linalg.norm(v, axis=1, keepdims=True))


@dataclass
class DynamicsTrace:
    observable: str
    samples: np.ndarray
    sweep_count: int
    seed: int
    model: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if len(self.samples) != self.sweep_count:
            raise ValueError("trace length must equal the sweep count")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("trace contains non-finite values")

    def to_csv(self) -> str:
        lines = ["sweep," + self.observable]
        lines += [f"{i},{x!r}" for i, x in enumerate(self.samples.tolist())]
        return "\n".join(lines) + "\n"


def heat_bath_up_probability(h: float) -> float:
    """``P(s_x = +1 | rest)`` for local field ``h``."""
    return 0.5 * (1.0 + math.tanh(h))


def local_field(m: np.ndarray, s: np.ndarray, x: int) -> float:
    return -(float(m[x] @ s) - m[x, x] * s[x])


@numba.njit(cache=True)
def _ising_sweeps(m, s, uniforms, energy_out, mag_out, hist_out, track_hist):
    n_sweeps, n_sites = uniforms.shape
    for t in range(n_sweeps):
        for x in range(n_sites):
            h = 0.0
            for y in range(n_sites):
                if y != x:
                    h -= m[x, y] * s[y]
            p_up = 0.5 * (1.0 + math.tanh(h))
            s[x] = 1.0 if uniforms[t, x] < p_up else -1.0
        e = 0.0
        mag = 0.0
        for x in range(n_sites):
            mag += s[x]
            for y in range(n_sites):
                e += m[x, y] * s[x] * s[y]
        energy_out[t] = 0.5 * e / n_sites
        mag_out[t] = mag / n_sites
        if track_hist:
            idx = 0
            for x in range(n_sites):
                if s[x] > 0:
                    idx |= 1 << x
            hist_out[idx] += 1


@numba.njit(cache=True)
def _sphere_sweeps(m, s, normals, uniforms, step, energy_out, mag_out):
    n_sweeps, n_sites, n = normals.shape
    accepted = 0
    for t in range(n_sweeps):
        for x in range(n_sites):
            h = np.zeros(n)
            for y in range(n_sites):
                if y != x:
                    for k in range(n):
                        h[k] -= m[x, y] * s[y, k]
            # tangent proposal
            dot = 0.0
            for k in range(n):
                dot += normals[t, x, k] * s[x, k]
            prop = np.empty(n)
            norm = 0.0
            for k in range(n):
                prop[k] = s[x, k] + step * (normals[t, x, k] - dot * s[x, k])
                norm += prop[k] * prop[k]
            norm = math.sqrt(norm)
            d = 0.0
            for k in range(n):
                prop[k] /= norm
                d += h[k] * (prop[k] - s[x, k])
            if d >= 0.0 or uniforms[t, x] < math.exp(d):
                for k in range(n):
                    s[x, k] = prop[k]
                accepted += 1
        e = 0.0
        for x in range(n_sites):
            for y in range(n_sites):
                for k in range(n):
                    e += m[x, y] * s[x, k] * s[y, k]
        energy_out[t] = 0.5 * e / n_sites
        mvec = np.zeros(n)
        for x in range(n_sites):
            for k in range(n):
                mvec[k] += s[x, k]
        mm = 0.0
        for k in range(n):
            mm += mvec[k] * mvec[k]
        mag_out[t] = math.sqrt(mm) / n_sites
    return accepted


@dataclass
class ChainResult:
    energy: np.ndarray
    magnetization: np.ndarray
    state: SpinConfiguration
    histogram: Optional[np.ndarray] = None
    acceptance_rate: float = 1.0
    step_size: float = 0.0


class GlauberChain:
    """A single chain with its own RNG stream.

    Runs systematic sweeps; records energy per site and magnetization per site
    (its norm for n >= 2) after every sweep.
    """

    def __init__(self, m, state: SpinConfiguration, seed: int, step: float = 0.5):
        self.m = np.ascontiguousarray(m.entries if isinstance(m, CouplingMatrix) else m, dtype=np.float64)
        if self.m.shape[0] != state.size:
            raise ValueError("state size does not match the coupling")
        self.state = SpinConfiguration(state.values.copy())
        self.rng = np.random.default_rng(seed)
        self.step = step

    def run(self, sweeps: int, track_histogram: bool = False) -> ChainResult:
        n_sites, n = self.state.size, self.state.n
        energy = np.empty(sweeps)
        mag = np.empty(sweeps)
        hist = np.zeros(1 << n_sites if track_histogram and n == 1 else 1, dtype=np.int64)
        accepted = 0
        done = 0
        while done < sweeps:
            k = min(CHUNK_SWEEPS, sweeps - done)
            sl = slice(done, done + k)
            if n == 1:
                s = self.state.values[:, 0].copy()
                u = self.rng.random((k, n_sites))
                _ising_sweeps(self.m, s, u, energy[sl], mag[sl], hist, track_histogram)
                self.state.values[:, 0] = s
                accepted += k * n_sites
            else:
                s = self.state.values.copy()
                z = self.rng.normal(size=(k, n_sites, n))
                u = self.rng.random((k, n_sites))
                accepted += _sphere_sweeps(self.m, s, z, u, self.step, energy[sl], mag[sl])
                self.state.values = s / np.linalg.norm(s, axis=1, keepdims=True)
            done += k
        return ChainResult(
            energy,
            mag,
            SpinConfiguration(self.state.values.copy()),
            hist if track_histogram and n == 1 else None,
            accepted / max(1, sweeps * n_sites),
            self.step,
        )

    def tune(self, sweeps: int, target: float = 0.4, rounds: int = 20) -> float:
        """Adapt the sphere proposal step towards ``target`` acceptance (burn-in only)."""
        if self.state.n == 1:
            return 0.0
        per = max(1, sweeps // rounds)
        for _ in range(rounds):
            rate = self.run(per).acceptance_rate
            # beyond MAX_STEP the tangent proposal is already near uniform on the sphere
            self.step = min(self.step * math.exp(2.0 * (rate - target)), MAX_STEP)
        return self.step


def glauber_sweep(m, state: SpinConfiguration, rng: np.random.Generator, step: float = 0.5) -> SpinConfiguration:
    """One systematic sweep (heat-bath for n = 1, Metropolis for n >= 2)."""
    chain = GlauberChain(m, state, int(rng.integers(2**63 - 1)), step)
    return chain.run(1).state


def random_site_kernel(m) -> np.ndarray:
    """Transition matrix of the random-site heat-bath kernel on ``{-1,1}^N``.

    States are indexed by bit masks (bit x set means ``s_x = +1``).
    """
    a = np.asarray(m.entries if isinstance(m, CouplingMatrix) else m, dtype=np.float64)
    n_sites = len(a)
    size = 1 << n_sites
    p = np.zeros((size, size))
    for idx in range(size):
        s = np.array([1.0 if idx >> x & 1 else -1.0 for x in range(n_sites)])
        for x in range(n_sites):
            up = heat_bath_up_probability(local_field(a, s, x))
            p[idx, idx | 1 << x] += up / n_sites
            p[idx, idx & ~(1 << x)] += (1.0 - up) / n_sites
    return p


@dataclass(frozen=True)
class RelaxationEstimate:
    integrated_autocorr_time: float
    standard_error: float
    tau_error: float
    window: int
    length: int

    def to_dict(self) -> dict:
        return {
            "integratedAutocorrTime": self.integrated_autocorr_time,
            "standardError": self.standard_error,
            "tauError": self.tau_error,
            "window": self.window,
            "length": self.length,
        }


def autocorrelation(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean()
    n = len(x)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n]
    return acf / acf[0]


def integrated_time(x, window_factor: float = 5.0) -> tuple[float, int]:
    """``tau = 1 + 2 sum_{t<=W} rho(t)`` with the smallest ``W >= window_factor * tau(W)``."""
    rho = autocorrelation(x)
    tau = 1.0
    for w in range(1, len(rho)):
        tau += 2.0 * rho[w]
        if w >= window_factor * tau:
            return tau, w
    return tau, len(rho) - 1


def batch_means_error(x: np.ndarray, batches: int = 32) -> float:
    """Standard error of the mean from non-overlapping batch means."""
    x = np.asarray(x, dtype=np.float64)
    size = len(x) // batches
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def estimate_relaxation(trace, min_length_factor: float = 100.0) -> RelaxationEstimate:
    """Integrated autocorrelation time with self-consistent windowing (window = 5 tau).

    Raises:
        ZeroVarianceError: for a constant trace.
        TraceTooShortError: if the trace is shorter than ``100 tau``.
    """
    x = np.asarray(trace.samples if isinstance(trace, DynamicsTrace) else trace, dtype=np.float64)
    if len(x) < 2 or np.ptp(x) == 0.0:
        raise ZeroVarianceError("trace has zero variance; autocorrelation time undefined")
    tau, w = integrated_time(x)
    tau = max(tau, 1e-12)
    required = int(math.ceil(min_length_factor * tau))
    if len(x) < required:
        raise TraceTooShortError(len(x), tau, required)
    return RelaxationEstimate(
        float(tau), batch_means_error(x), float(tau * math.sqrt(2.0 * (2 * w + 1) / len(x))), int(w), len(x)
    )


def run_trace(
    m,
    n: int,
    sweeps: int,
    seed: int,
    pilot_sweeps: int = 2000,
    model: Optional[dict] = None,
) -> dict[str, DynamicsTrace]:
    """Pilot run, burn-in of ``20 tau`` (pilot estimate), then a recorded run."""
    a = m.entries if isinstance(m, CouplingMatrix) else np.asarray(m)
    rng = substream(seed, "chain")
    state = SpinConfiguration.random(len(a), n, rng)
    chain = GlauberChain(a, state, int(rng.integers(2**63 - 1)))
    chain.tune(pilot_sweeps // 2)
    pilot = chain.run(pilot_sweeps)
    try:
        tau_pilot = integrated_time(pilot.energy)[0] if np.ptp(pilot.energy) > 0 else 1.0
    except ValueError:
        tau_pilot = 1.0
    chain.run(int(math.ceil(20 * max(tau_pilot, 1.0))))
    res = chain.run(sweeps)
    meta = dict(model or {}, n=n)
    return {
        "magnetization": DynamicsTrace("magnetization", res.magnetization, sweeps, seed, meta),
        "energy": DynamicsTrace("energy", res.energy, sweeps, seed, meta),
    }


def _family_coupling(family: str, n_sites: int, beta: float, seed: int, params: dict) -> CouplingMatrix:
    if family == "sk":
        from .goe import sample_goe

        h = sample_goe(n_sites, seed_sequence(seed, "model", n_sites)).H
        return CouplingMatrix(beta * h, "sk-goe", seed=seed, params={"n_sites": n_sites, "beta": beta})
    if family == "lattice-1d":
        return build_coupling("ferromagnet-lattice", dims=(n_sites,), weight=-beta * params.get("weight", 1.0))
    if family == "mean-field":
        return build_coupling("mean-field", n_sites=n_sites, strength=-beta / n_sites)
    raise ValueError(f"unknown model family {family!r}")


def _study_cell(args) -> dict:
    family, n_sites, beta, seed, n, sweeps, params = args
    m = _family_coupling(family, n_sites, beta, seed, params)
    traces = run_trace(m, n, sweeps, seed, model={"family": family, "N": n_sites, "beta": beta})
    row = {"family": family, "N": n_sites, "beta": beta, "seed": seed}
    for name, tr in traces.items():
        try:
            est = estimate_relaxation(tr)
            row[name] = est.to_dict()
        except (TraceTooShortError, ZeroVarianceError) as exc:
            row[name] = {"error": str(exc)}
    return row


def relaxation_study(
    family: str,
    sizes: Sequence[int],
    betas: Sequence[float],
    seeds: Sequence[int],
    n: int = 1,
    sweeps: int = 20000,
    workers: int = 1,
    params: Optional[dict] = None,
) -> list[dict]:
    """Relaxation times of magnetization and energy per (N, beta, seed) cell.

    Cells that fail (trace too short, zero variance) carry an ``error`` entry
    instead of estimates. Output order is by (N, beta, seed) regardless of
    ``workers``.
    """
    if not sizes or not betas or not seeds:
        raise ValueError("sizes, betas and seeds must be nonempty")
    cells = [(family, int(N), float(b), int(s), n, sweeps, dict(params or {})) for N in sizes for b in betas for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_study_cell, cells))
    return [_study_cell(c) for c in cells]


def loglog_slope(rows: list[dict], observable: str, resamples: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Least-squares slope of ``log tau`` against ``log N`` and its bootstrap standard error.

    The bootstrap resamples seeds within each size.
    """
    by_n: dict[int, list[float]] = {}
    for r in rows:
        est = r.get(observable, {})
        if "integratedAutocorrTime" in est:
            by_n.setdefault(r["N"], []).append(est["integratedAutocorrTime"])
    sizes = sorted(by_n)
    if len(sizes) < 2:
        raise ValueError("need at least two sizes with estimates")
    x = np.log(sizes)

    def slope(groups):
        y = np.array([np.log(np.mean(g)) for g in groups])
        return float(np.polyfit(x, y, 1)[0])

    base = slope([by_n[N] for N in sizes])
    rng = np.random.default_rng(seed)
    boot = [
        slope([rng.choice(by_n[N], size=len(by_n[N]), replace=True) for N in sizes]) for _ in range(resamples)
    ]
    return base, float(np.std(boot, ddof=1))
