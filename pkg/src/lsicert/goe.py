"""GOE sampling, spectral-edge statistics and the SK certification sweep.

Off-diagonal entries have variance ``1/N``; the diagonal uses the standard GOE
variance ``2/N`` so the ensemble is orthogonally invariant. With this scaling
the spectrum fills ``[-2, 2]`` and the edge span concentrates at 4.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coupling import SpectrumSummary, certify_lsi, spectrum
from .rng import seed_sequence
from .singlespin import ISING_GAMMA

DIAGONAL_VARIANCE = "2/N"


@dataclass(frozen=True)
class GoeSample:
    N: int
    seed: object
    H: np.ndarray = field(repr=False)
    spectrum: SpectrumSummary = field(repr=False)

    @property
    def edge_span(self) -> float:
        return self.spectrum.span


def sample_goe(N: int, seed, method: str = "lapack") -> GoeSample:
    """Draw an ``N x N`` GOE matrix; ``seed`` is an int or a ``SeedSequence``.

    The edge span is computed with ``method`` (LAPACK by default: sweeps draw
    hundreds of matrices with N in the hundreds).
    """
    if N < 2:
        raise ValueError("GOE samples need N >= 2")
    rng = np.random.default_rng(seed)
    h = np.triu(rng.normal(scale=math.sqrt(1.0 / N), size=(N, N)), 1)
    h = h + h.T
    h[np.diag_indices(N)] = rng.normal(scale=math.sqrt(2.0 / N), size=N)
    return GoeSample(N, seed, h, spectrum(h, method))


@dataclass(frozen=True)
class EdgeStatistics:
    N: int
    mean_span: float
    std_span: float
    histogram: np.ndarray
    bin_edges: np.ndarray

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "meanSpan": self.mean_span,
            "stdSpan": self.std_span,
            "histogram": self.histogram.tolist(),
            "binEdges": self.bin_edges.tolist(),
        }

    def to_csv(self) -> str:
        lines = ["bin_left,bin_right,count"]
        for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.histogram):
            lines.append(f"{lo!r},{hi!r},{int(c)}")
        return "\n".join(lines) + "\n"


def edge_statistics(samples: Sequence[GoeSample], bins: int = 20) -> EdgeStatistics:
    if not samples:
        raise ValueError("no samples")
    sizes = {s.N for s in samples}
    if len(sizes) != 1:
        raise ValueError(f"samples must share N, got {sorted(sizes)}")
    spans = np.array([s.edge_span for s in samples])
    hist, edges = np.histogram(spans, bins=bins)
    return EdgeStatistics(sizes.pop(), float(spans.mean()), float(spans.std()), hist, edges)


@dataclass
class SweepCell:
    beta: float
    N: int
    certified_fraction: float
    mean_edge_span: float
    sample_count: int
    mean_constant: float | None
    max_constant: float | None

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "N": self.N,
            "certifiedFraction": self.certified_fraction,
            "meanEdgeSpan": self.mean_edge_span,
            "sampleCount": self.sample_count,
            "meanCertifiedConstant": self.mean_constant,
            "maxCertifiedConstant": self.max_constant,
        }


@dataclass
class SweepResult:
    beta_grid: list
    sizes: list
    cells: list
    seed: int
    gamma: float
    spans: dict = field(default_factory=dict, repr=False)

    def cell(self, beta: float, N: int) -> SweepCell:
        for c in self.cells:
            if c.beta == beta and c.N == N:
                return c
        raise KeyError((beta, N))

    def to_dict(self) -> dict:
        return {
            "betaGrid": self.beta_grid,
            "sizes": self.sizes,
            "seed": self.seed,
            "gamma": self.gamma,
            "goeDiagonalVariance": DIAGONAL_VARIANCE,
            "perCell": [c.to_dict() for c in self.cells],
        }

    def to_csv(self) -> str:
        lines = ["beta,N,certified_fraction,mean_edge_span,sample_count,mean_certified_constant"]
        for c in self.cells:
            mc = "" if c.mean_constant is None else repr(c.mean_constant)
            lines.append(f"{c.beta!r},{c.N},{c.certified_fraction!r},{c.mean_edge_span!r},{c.sample_count},{mc}")
        return "\n".join(lines) + "\n"


def goe_cell_samples(N: int, count: int, seed: int) -> list[GoeSample]:
    """The ``count`` GOE samples of size ``N`` used by a sweep with root ``seed``."""
    return [sample_goe(N, seed_sequence(seed, "goe", N, i)) for i in range(count)]


def _spectra_for_size(args):
    N, count, seed = args
    return [s.spectrum for s in goe_cell_samples(N, count, seed)]


def sk_certification_sweep(
    beta_grid: Sequence[float],
    sizes: Sequence[int],
    samples_per_cell: int = 100,
    seed: int = 0,
    gamma: float = ISING_GAMMA,
    workers: int = 1,
) -> SweepResult:
    """Certified fraction of ``M = beta H`` (n = 1) per (beta, N).

    The same GOE draws are reused across the beta grid at each size, so the
    fraction is monotone in beta sample by sample.
    """
    beta_grid = [float(b) for b in beta_grid]
    sizes = [int(n) for n in sizes]
    if not beta_grid or not sizes or samples_per_cell < 1:
        raise ValueError("grids must be nonempty and samples_per_cell >= 1")
    jobs = [(N, samples_per_cell, seed) for N in sizes]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            spectra = list(pool.map(_spectra_for_size, jobs))
    else:
        spectra = [_spectra_for_size(j) for j in jobs]
    cells, spans = [], {}
    for N, specs in zip(sizes, spectra):
        spans[N] = [s.span for s in specs]
        for beta in beta_grid:
            certs = [certify_lsi(None, 1, gamma, spec=s.scaled(beta)) for s in specs]
            consts = [c.certified_constant for c in certs if c.certified]
            cells.append(
                SweepCell(
                    beta,
                    N,
                    len(consts) / len(certs),
                    float(np.mean(spans[N])),
                    len(certs),
                    float(np.mean(consts)) if consts else None,
                    float(np.max(consts)) if consts else None,
                )
            )
    return SweepResult(beta_grid, sizes, cells, seed, gamma, spans)
