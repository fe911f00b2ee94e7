"""Coupling matrices, their spectra, and LSI / spectral-gap certificates.

Sign convention: the Gibbs weight is ``exp(-(sigma, M sigma) / 2)``, so a
positive off-diagonal entry is antiferromagnetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import eigen

KINDS = ("ferromagnet-lattice", "mean-field", "sk-goe", "file")


class CouplingError(ValueError):
    """Invalid coupling parameters or matrix data."""


@dataclass(frozen=True)
class CouplingMatrix:
    entries: np.ndarray
    kind: str = "file"
    seed: Optional[int] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.array(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise CouplingError(f"coupling must be a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise CouplingError("coupling entries must be finite")
        if not np.array_equal(a, a.T):
            i, j = np.unravel_index(np.argmax(np.abs(a - a.T)), a.shape)
            raise CouplingError(
                f"coupling is not symmetric: M[{i}][{j}]={a[i, j]!r} != M[{j}][{i}]={a[j, i]!r}"
            )
        if self.kind not in KINDS:
            raise CouplingError(f"unknown coupling kind {self.kind!r}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def to_dict(self) -> dict:
        return {"n": self.size, "rows": self.entries.tolist()}


def lattice_coupling(dims, weight: float, periodic: bool = True) -> np.ndarray:
    """Nearest-neighbour hypercubic lattice; every bond carries ``weight``."""
    dims = tuple(int(d) for d in np.atleast_1d(dims))
    if not dims or any(d < 1 for d in dims):
        raise CouplingError(f"invalid lattice dimensions {dims}")
    n = int(np.prod(dims))
    m = np.zeros((n, n))
    for flat in range(n):
        coord = np.unravel_index(flat, dims)
        for axis, length in enumerate(dims):
            for step in (-1, 1):
                c = list(coord)
                c[axis] += step
                if not 0 <= c[axis] < length:
                    if not periodic:
                        continue
                    c[axis] %= length
                other = int(np.ravel_multi_index(c, dims))
                if other != flat:
                    m[flat, other] = weight
    return m


def mean_field_coupling(n_sites: int, strength: float) -> np.ndarray:
    if n_sites < 1:
        raise CouplingError(f"mean-field size must be positive, got {n_sites}")
    m = np.full((n_sites, n_sites), float(strength))
    np.fill_diagonal(m, 0.0)
    return m


def build_coupling(kind: str, **params: Any) -> CouplingMatrix:
    """Build a coupling matrix from a model kind and its parameters.

    ``ferromagnet-lattice``: ``dims``, ``weight``, optional ``periodic``.
    ``mean-field``: ``n_sites``, ``strength``.
    ``sk-goe``: ``n_sites``, ``beta``, ``seed``.
    ``file``: ``path``.
    """
    try:
        if kind == "ferromagnet-lattice":
            m = lattice_coupling(params["dims"], float(params["weight"]), bool(params.get("periodic", True)))
            return CouplingMatrix(m, kind, params=dict(params))
        if kind == "mean-field":
            m = mean_field_coupling(int(params["n_sites"]), float(params["strength"]))
            return CouplingMatrix(m, kind, params=dict(params))
        if kind == "sk-goe":
            from .goe import sample_goe

            seed = int(params["seed"])
            n_sites = int(params["n_sites"])
            if n_sites < 2:
                raise CouplingError("sk-goe needs at least 2 sites")
            h = sample_goe(n_sites, seed).H
            return CouplingMatrix(float(params["beta"]) * h, kind, seed=seed, params=dict(params))
        if kind == "file":
            return load_coupling(params["path"])
    except KeyError as exc:
        raise CouplingError(f"missing parameter {exc.args[0]!r} for kind {kind!r}") from None
    raise CouplingError(f"unknown coupling kind {kind!r}")


def parse_coupling(doc: Any, source: str = "<data>") -> CouplingMatrix:
    if not isinstance(doc, dict) or "rows" not in doc:
        raise CouplingError(f"{source}: expected an object with 'n' and 'rows'")
    rows = doc["rows"]
    n = doc.get("n", len(rows))
    if not isinstance(rows, list) or len(rows) != n or any(
        not isinstance(r, list) or len(r) != n for r in rows
    ):
        raise CouplingError(f"{source}: 'rows' must be an {n}x{n} nested list")
    try:
        entries = np.array(rows, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise CouplingError(f"{source}: non-numeric entry ({exc})") from None
    try:
        return CouplingMatrix(entries, "file", params={"path": source})
    except CouplingError as exc:
        raise CouplingError(f"{source}: {exc}") from None


def load_coupling(path) -> CouplingMatrix:
    """Read ``{"n": N, "rows": [[...], ...]}``; asymmetric input is rejected."""
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CouplingError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_coupling(doc, str(path))


def save_coupling(m: CouplingMatrix, path) -> None:
    Path(path).write_text(json.dumps(m.to_dict()))


@dataclass(frozen=True)
class SpectrumSummary:
    lambda_min: float
    lambda_max: float
    residual: float
    eigenvalues: Optional[np.ndarray] = None
    eigenvectors: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def span(self) -> float:
        return self.lambda_max - self.lambda_min

    @property
    def error_bound(self) -> float:
        """Bound on the distance of each extreme computed eigenvalue from the exact one.

        The residual bounds the error for the computed pair; the rounding term
        covers the floating-point evaluation of the eigenvalues themselves.
        """
        return self.residual + 8 * np.finfo(float).eps * max(abs(self.lambda_min), abs(self.lambda_max))

    def scaled(self, factor: float) -> "SpectrumSummary":
        """Spectrum of ``factor * M`` for ``factor >= 0``."""
        if factor < 0:
            raise ValueError("scale factor must be nonnegative")
        ev = None if self.eigenvalues is None else factor * self.eigenvalues
        return SpectrumSummary(factor * self.lambda_min, factor * self.lambda_max, factor * self.residual, ev)

    def to_dict(self) -> dict:
        d = {"lambdaMin": self.lambda_min, "lambdaMax": self.lambda_max, "residual": self.residual}
        if self.eigenvalues is not None:
            d["eigenvalues"] = self.eigenvalues.tolist()
        return d


def spectrum(m, method: str = "auto") -> SpectrumSummary:
    a = m.entries if isinstance(m, CouplingMatrix) else np.asarray(m, dtype=np.float64)
    w, v = eigen.eigh(a, method)
    res = eigen.residual(a, w, v)
    tol = eigen.RESIDUAL_RTOL * max(1.0, float(np.linalg.norm(a)))
    if res > tol:
        raise eigen.EigenSolverError(f"eigen-residual {res:.3e} exceeds tolerance {tol:.3e}")
    return SpectrumSummary(float(w[0]), float(w[-1]), res, w, v)


def lsi_constant(c: float, n: int, gamma: float) -> float:
    """``(2/gamma) (1 + 2 n c / (n - c))`` for ``0 <= c < n``."""
    if not 0 <= c < n:
        raise ValueError(f"constant defined only for 0 <= c < n (c={c}, n={n})")
    return (2.0 / gamma) * (1.0 + 2.0 * n * c / (n - c))


@dataclass(frozen=True)
class LsiCertificate:
    spin_dimension: int
    shift: float
    effective_norm: float
    single_spin_lsi: float
    status: str
    certified_constant: Optional[float] = None
    certified_lsi_rate: Optional[float] = None
    failure_margin: Optional[float] = None
    kind: str = "lsi"

    @property
    def certified(self) -> bool:
        return self.status == "certified"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "spinDimension": self.spin_dimension,
            "shift": self.shift,
            "effectiveNorm": self.effective_norm,
            "singleSpinLsi": self.single_spin_lsi,
            "certifiedConstant": self.certified_constant,
            "certifiedLsiRate": self.certified_lsi_rate,
            "status": self.status,
            "failureMargin": self.failure_margin,
        }


def _certify(m, n: int, gamma: float, spec: Optional[SpectrumSummary], kind: str) -> LsiCertificate:
    if not gamma > 0:
        raise ValueError(f"single-spin constant must be positive, got {gamma}")
    if n < 1:
        raise ValueError(f"spin dimension must be >= 1, got {n}")
    if spec is None:
        spec = spectrum(m)
    # round-off must never turn a failure into a certificate
    c = max(spec.span, 0.0) + 2.0 * spec.error_bound
    if c < n:
        C = lsi_constant(c, n, gamma)
        return LsiCertificate(n, spec.lambda_min, c, float(gamma), "certified", C, 2.0 / C, kind=kind)
    return LsiCertificate(
        n, spec.lambda_min, c, float(gamma), "failed-spectral-condition", failure_margin=c - n, kind=kind
    )


def certify_lsi(m, n: int, gamma: float, spec: Optional[SpectrumSummary] = None) -> LsiCertificate:
    """Uniform LSI certificate after shifting the spectrum of ``m`` to start at 0.

    The effective norm is ``c = lambda_max - lambda_min``, padded by the
    eigenvalue error bound of the solver; the condition is ``c < n`` and the
    constant is evaluated at ``c`` itself. A precomputed
    ``spec`` of ``m`` may be passed to skip the eigensolve.
    """
    return _certify(m, n, gamma, spec, "lsi")


def certify_spectral_gap(m, n: int, gamma_sg: float, spec: Optional[SpectrumSummary] = None) -> LsiCertificate:
    """Spectral-gap certificate from a single-spin gap ``gamma_sg``.

    Reuses the LSI constant shape, so ``certified_lsi_rate`` is a lower bound
    on the spectral gap (an LSI with rate rho implies a gap of at least rho).
    """
    return _certify(m, n, gamma_sg, spec, "spectral-gap")


@dataclass(frozen=True)
class MeanFieldReport:
    row_sup_norm: float
    implies_condition: bool

    def to_dict(self) -> dict:
        return {"rowSupNorm": self.row_sup_norm, "impliesCondition": self.implies_condition}


def mean_field_bound_check(m, n: int) -> MeanFieldReport:
    """``sup_x sum_y |M_xy|`` against ``n``.

    Only meaningful as a sufficient condition when ``m`` is positive definite.
    """
    a = m.entries if isinstance(m, CouplingMatrix) else np.asarray(m, dtype=np.float64)
    r = float(np.max(np.sum(np.abs(a), axis=1)))
    return MeanFieldReport(r, r < n)
