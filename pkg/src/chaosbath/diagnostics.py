"""Chaos indicators and open-system quality measures.

Level-spacing statistics (with polynomial spectral unfolding) and the
ground-state echo under an integrability-breaking perturbation probe how
chaotic the bath is; purity and fidelity quantify what the bath does to
the detector qubit.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .errors import UnfoldingError, ValidationError
from .model import OperatorMatrix

HISTOGRAM_BINS = 24
HISTOGRAM_RANGE = (0.0, 4.0)
MIN_LEVELS = 50
DEGREE_RANGE = (3, 15)


def _as_matrix(op) -> np.ndarray:
    if isinstance(op, OperatorMatrix):
        return op.matrix
    return np.asarray(op, dtype=complex)


# ---------------------------------------------------------------------------
# state quality measures


def purity(rho: np.ndarray) -> float:
    """Tr(rho^2); 1 for pure states, 1/d for the maximally mixed state."""
    rho = np.asarray(rho)
    return float(np.einsum("ij,ji->", rho, rho).real)


def fidelity(rho: np.ndarray, rho_ideal: np.ndarray) -> float:
    """Overlap Tr(rho rho_ideal) against the interaction-free evolution."""
    rho = np.asarray(rho)
    rho_ideal = np.asarray(rho_ideal)
    if rho.shape != rho_ideal.shape:
        raise ValidationError(f"shape mismatch {rho.shape} vs {rho_ideal.shape}")
    value = complex(np.einsum("ij,ji->", rho, rho_ideal))
    if abs(value.imag) > 1e-10:
        raise ValidationError(f"fidelity has imaginary part {value.imag:.3e}")
    return value.real


# ---------------------------------------------------------------------------
# level-spacing statistics


def unfold_spectrum(energies, degree: int = 7) -> np.ndarray:
    """Rescale eigenvalues so the mean level spacing is one.

    Fits the cumulative level count N(E_i) = i - 1/2 with a least-squares
    polynomial of the given degree and returns its values at the E_i.
    The fit must be nondecreasing across the sorted eigenvalues; if it is
    not, the spectrum's local density is too structured for this degree
    and an UnfoldingError is raised (a lower degree often helps).
    """
    e = np.asarray(energies, dtype=float)
    if e.ndim != 1 or len(e) < MIN_LEVELS:
        raise ValidationError(f"need at least {MIN_LEVELS} eigenvalues, got {e.shape}")
    if np.any(np.diff(e) < 0):
        raise ValidationError("eigenvalues must be ascending")
    if not DEGREE_RANGE[0] <= degree <= DEGREE_RANGE[1]:
        raise ValidationError(
            f"degree must be within {DEGREE_RANGE[0]}..{DEGREE_RANGE[1]}, got {degree}"
        )
    staircase = np.arange(1, len(e) + 1) - 0.5
    fit = np.polynomial.Polynomial.fit(e, staircase, degree)
    unfolded = fit(e)
    if np.any(np.diff(unfolded) < 0):
        raise UnfoldingError(
            f"degree-{degree} staircase fit is non-monotone on the data range; "
            f"try a lower degree"
        )
    return unfolded


def unfold_with_fallback(energies, degree: int = 7,
                         min_degree: int = DEGREE_RANGE[0]):
    """unfold_spectrum, stepping the degree down until the fit is monotone.

    Returns (unfolded, degree_used).  Raises UnfoldingError when no degree
    in [min_degree, degree] yields a monotone fit.
    """
    last = None
    for deg in range(degree, min_degree - 1, -1):
        try:
            return unfold_spectrum(energies, deg), deg
        except UnfoldingError as exc:
            last = exc
    raise UnfoldingError(
        f"no monotone staircase fit for degrees {min_degree}..{degree}: {last}"
    )


@dataclass(frozen=True)
class SpacingStatistics:
    """Nearest-neighbour spacing sample and its distance to the two
    reference laws (level clustering vs level repulsion)."""

    unfolded: np.ndarray
    spacings: np.ndarray
    bin_edges: np.ndarray
    densities: np.ndarray
    d_poisson: float
    d_wigner_dyson: float
    mean_spacing: float
    raw_energies: np.ndarray | None = None
    degree: int | None = None

    @property
    def n_levels(self) -> int:
        return len(self.unfolded)

    def summary(self) -> dict:
        return {
            "D_poisson": self.d_poisson,
            "D_wd": self.d_wigner_dyson,
            "mean_spacing": self.mean_spacing,
            "n_levels": self.n_levels,
            "degree": self.degree,
        }

    def to_csv(self, path) -> None:
        centers = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_center", "density"])
            for c, d in zip(centers, self.densities):
                writer.writerow([f"{c:.17g}", f"{d:.17g}"])

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=1)


def poisson_cdf(s):
    return 1.0 - np.exp(-np.asarray(s, dtype=float))


def wigner_dyson_cdf(s):
    s = np.asarray(s, dtype=float)
    return 1.0 - np.exp(-np.pi * s**2 / 4.0)


def _sup_distance(sorted_sample: np.ndarray, cdf) -> float:
    n = len(sorted_sample)
    f = cdf(sorted_sample)
    lo = np.arange(0, n) / n
    hi = np.arange(1, n + 1) / n
    return float(max(np.max(np.abs(f - lo)), np.max(np.abs(f - hi))))


def spacing_distribution(unfolded, raw_energies=None,
                         degree: int | None = None) -> SpacingStatistics:
    """Spacing sample, display histogram, and sup-norm CDF distances."""
    u = np.asarray(unfolded, dtype=float)
    if len(u) < 2:
        raise ValidationError("need at least two eigenvalues for spacings")
    spacings = np.diff(u)
    if np.any(spacings < 0):
        raise ValidationError("unfolded eigenvalues must be ascending")
    counts, edges = np.histogram(spacings, bins=HISTOGRAM_BINS, range=HISTOGRAM_RANGE)
    total = counts.sum()
    widths = np.diff(edges)
    densities = counts / (total * widths) if total else np.zeros_like(widths)
    s_sorted = np.sort(spacings)
    return SpacingStatistics(
        unfolded=u,
        spacings=spacings,
        bin_edges=edges,
        densities=densities,
        d_poisson=_sup_distance(s_sorted, poisson_cdf),
        d_wigner_dyson=_sup_distance(s_sorted, wigner_dyson_cdf),
        mean_spacing=float(spacings.mean()),
        raw_energies=None if raw_energies is None else np.asarray(raw_energies, float),
        degree=degree,
    )


# ---------------------------------------------------------------------------
# echo


@dataclass(frozen=True)
class EchoSeries:
    """Overlap decay M(t) between evolutions with and without the
    integrability-breaking perturbation."""

    times: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if abs(m[0] - 1.0) > 1e-10:
            raise ValidationError(f"M(0) = {m[0]!r} deviates from 1 by > 1e-10")
        if np.any(m < -1e-10) or np.any(m > 1.0 + 1e-10):
            raise ValidationError("M(t) must stay within [0, 1]")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "M"])
            for t, v in zip(self.times, self.m):
                writer.writerow([f"{t:.17g}", f"{v:.17g}"])


def loschmidt_echo(h0, v, times) -> EchoSeries:
    """M(t) = |<psi0| e^{+i H0 t} e^{-i (H0+V) t} |psi0>|^2.

    psi0 is the ground state of h0.  Both exponentials are evaluated by
    spectral decomposition, so long windows cost one matvec per sample.
    A degenerate ground state is tolerated with a deterministic
    lowest-index tie-break (and a warning).
    """
    h0 = _as_matrix(h0)
    v = _as_matrix(v)
    if h0.shape != v.shape:
        raise ValidationError(f"shape mismatch {h0.shape} vs {v.shape}")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0 or times[0] != 0.0:
        raise ValidationError("echo time grid must start at t = 0")

    e0, v0 = eigh(h0)
    scale = max(1.0, float(np.max(np.abs(e0))))
    if len(e0) > 1 and e0[1] - e0[0] < 1e-10 * scale:
        warnings.warn(
            "ground state of the unperturbed Hamiltonian is degenerate; "
            "using the eigensolver's first column",
            stacklevel=2,
        )
    psi0 = v0[:, 0]
    e1, v1 = eigh(h0 + v)

    c0 = v0.conj().T @ psi0
    c1 = v1.conj().T @ psi0
    # amplitude(t) = (e^{-iH0 t} psi0)^dagger (e^{-i(H0+V) t} psi0)
    left = v0 @ (np.exp(-1j * np.outer(e0, times)) * c0[:, None])
    right = v1 @ (np.exp(-1j * np.outer(e1, times)) * c1[:, None])
    amp = np.einsum("it,it->t", left.conj(), right)
    m = np.abs(amp) ** 2
    return EchoSeries(times=times, m=np.minimum(m, 1.0 + 1e-12))


def echo_decay_rate(series: EchoSeries, floor: float = 0.2,
                    min_points: int = 5) -> float:
    """Exponential rate fitted to the early-time decay of M(t).

    The fit window runs from t = 0 to the first crossing below `floor`
    (the whole series if it never crosses), with at least min_points
    samples.  Returns -slope of the least-squares line through ln M.
    """
    m = np.asarray(series.m, dtype=float)
    t = np.asarray(series.times, dtype=float)
    below = np.nonzero(m < floor)[0]
    stop = int(below[0]) if len(below) else len(m)
    stop = max(stop, min_points)
    stop = min(stop, len(m))
    if stop < 2:
        raise ValidationError("echo series too short for a rate fit")
    tw = t[:stop]
    lw = np.log(np.maximum(m[:stop], 1e-300))
    design = np.vstack([np.ones_like(tw), tw]).T
    coef, *_ = np.linalg.lstsq(design, lw, rcond=None)
    return float(-coef[1])
