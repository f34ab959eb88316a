"""Bath eigenstructure: diagonalization, thermal weights, coupling elements.

The decoherence channel is controlled by how the bath coupling operator
looks in the bath eigenbasis; everything downstream (exact propagation of
thermally occupied eigenstates, the unitary-ensemble channel) consumes the
BathSpectrum produced here.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh

from .errors import NumericError, ValidationError
from .model import OperatorMatrix

TAIL_WEIGHT_WARN = 1e-3


def _as_matrix(op) -> np.ndarray:
    if isinstance(op, OperatorMatrix):
        return op.matrix
    return np.asarray(op, dtype=complex)


@dataclass(frozen=True)
class BathSpectrum:
    """Retained low-energy eigenpairs of the bath, plus thermal data.

    weights and coupling_diag start as None and are filled by
    boltzmann_weights / coupling_matrix_elements (or thermal_bath, which
    composes the whole pipeline).
    """

    energies: np.ndarray          # ascending, shape (m,)
    states: np.ndarray            # orthonormal columns, shape (dim, m)
    m: int
    weights: np.ndarray | None = None
    coupling_diag: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def with_weights(self, weights: np.ndarray) -> "BathSpectrum":
        return replace(self, weights=np.asarray(weights, dtype=float))

    def with_coupling_diag(self, diag: np.ndarray) -> "BathSpectrum":
        return replace(self, coupling_diag=np.asarray(diag, dtype=float))


@dataclass(frozen=True)
class CouplingMatrix:
    """Bath coupling operator in the retained eigenbasis."""

    entries: np.ndarray   # (m, m) complex
    energies: np.ndarray  # (m,) retained eigenvalues, for energy windows

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        scale = max(1.0, float(np.max(np.abs(e))) if e.size else 1.0)
        dev = float(np.max(np.abs(e - e.conj().T)))
        if dev > 1e-10 * scale:
            raise ValidationError(f"coupling matrix not Hermitian: deviation {dev:.3e}")
        object.__setattr__(self, "entries", e)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    def diagonal_real(self) -> np.ndarray:
        diag = np.diag(self.entries)
        bad = float(np.max(np.abs(diag.imag))) if diag.size else 0.0
        if bad > 1e-10:
            raise ValidationError(f"coupling diagonal has imaginary part {bad:.3e}")
        return diag.real.copy()

    def to_json(self) -> str:
        return json.dumps(
            {
                "m": self.m,
                "energies": list(self.energies),
                "real": [list(row) for row in self.entries.real],
                "imag": [list(row) for row in self.entries.imag],
            },
            indent=1,
        )


def diagonalize_bath(h_bath, m: int, method: str = "dense") -> BathSpectrum:
    """Lowest-m eigenpairs of the bath Hamiltonian (m = dim for the full set).

    method "dense" uses LAPACK on the full matrix; "lanczos" uses an
    iterative solver for the lowest block (useful well below dim).
    """
    hb = _as_matrix(h_bath)
    dim = hb.shape[0]
    if hb.shape[0] != hb.shape[1]:
        raise ValidationError(f"bath Hamiltonian must be square, got {hb.shape}")
    scale = max(1.0, float(np.max(np.abs(hb))))
    herm_dev = float(np.max(np.abs(hb - hb.conj().T)))
    if herm_dev > 1e-10 * scale:
        raise ValidationError(f"bath Hamiltonian not Hermitian: deviation {herm_dev:.3e}")
    if not 1 <= m <= dim:
        raise ValidationError(f"retained count m={m} outside 1..{dim}")

    if method == "lanczos" and m < dim - 1:
        try:
            energies, states = eigsh(hb, k=m, which="SA")
        except Exception as exc:  # ARPACK non-convergence
            raise NumericError(f"iterative eigensolver failed: {exc}") from exc
        order = np.argsort(energies)
        energies, states = energies[order], states[:, order]
    elif method in ("dense", "lanczos"):
        if m == dim:
            energies, states = eigh(hb)
        else:
            energies, states = eigh(hb, subset_by_index=(0, m - 1))
    else:
        raise ValidationError(f"unknown diagonalization method {method!r}")

    h_norm = float(np.linalg.norm(hb))  # Frobenius bound on the 2-norm
    resid = np.linalg.norm(hb @ states - states * energies, axis=0)
    worst = float(resid.max())
    if worst > 1e-10 * max(1.0, h_norm):
        raise NumericError(
            f"eigenpair residual {worst:.3e} exceeds 1e-10 * |H| = {1e-10 * h_norm:.3e}"
        )
    return BathSpectrum(energies=energies, states=states, m=m)


def boltzmann_weights(energies, kt: float, m: int | None = None) -> np.ndarray:
    """Thermal populations over the first m retained eigenvalues.

    Computed with a max-shift so arbitrarily large |E|/kT stays finite;
    the normalisation runs over the retained states only.  kt = 0 places
    all weight uniformly on the exactly degenerate ground set.
    """
    e = np.asarray(energies, dtype=float)
    if m is None:
        m = len(e)
    if m < 1 or m > len(e):
        raise ValidationError(f"retained count m={m} outside 1..{len(e)}")
    if kt < 0:
        raise ValidationError(f"temperature must be >= 0, got {kt}")
    e = e[:m]
    if kt == 0.0:
        ground = e == e[0]
        return ground.astype(float) / ground.sum()
    w = np.exp(-(e - e[0]) / kt)
    return w / w.sum()


def coupling_matrix_elements(coupling_bath, spectrum: BathSpectrum) -> CouplingMatrix:
    """Full m x m matrix of the bath coupling operator in the eigenbasis."""
    b = _as_matrix(coupling_bath)
    if b.shape[0] != spectrum.dim:
        raise ValidationError(
            f"coupling operator dim {b.shape[0]} != bath dim {spectrum.dim}"
        )
    v = spectrum.states
    entries = v.conj().T @ b @ v
    return CouplingMatrix(entries=entries, energies=spectrum.energies.copy())


def thermal_bath(h_bath, coupling_bath, kt: float, m: int,
                 method: str = "dense") -> tuple[BathSpectrum, CouplingMatrix]:
    """Diagonalize, weight, and project the coupling in one pass."""
    spectrum = diagonalize_bath(h_bath, m, method=method)
    weights = boltzmann_weights(spectrum.energies, kt, m)
    if weights[-1] > TAIL_WEIGHT_WARN:
        warnings.warn(
            f"retained-state truncation tail p[m-1] = {weights[-1]:.3e} > "
            f"{TAIL_WEIGHT_WARN:g}; consider increasing m",
            stacklevel=2,
        )
    coupling = coupling_matrix_elements(coupling_bath, spectrum)
    spectrum = spectrum.with_weights(weights).with_coupling_diag(
        coupling.diagonal_real()
    )
    return spectrum, coupling


@dataclass(frozen=True)
class OffdiagReport:
    """How far the coupling matrix is from diagonal, relative to the
    spread of its diagonal (the quantity that drives decoherence)."""

    ratio: float          # rms offdiag / rms diagonal deviation; inf sentinel
    rms_offdiag: float
    rms_diag_dev: float
    n_pairs: int
    window: float | None


def offdiag_suppression(coupling: CouplingMatrix, window: float | None = None) -> OffdiagReport:
    """Diagnostic ratio of off-diagonal weight to diagonal spread.

    Only pairs with |E_j - E_k| < window enter the numerator (window None
    means every pair).  A zero diagonal spread yields an infinite-ratio
    sentinel rather than an error.
    """
    m = coupling.m
    if m < 2:
        raise ValidationError("need at least two retained states")
    e = np.asarray(coupling.energies, dtype=float)
    offmask = ~np.eye(m, dtype=bool)
    if window is not None:
        offmask &= np.abs(e[:, None] - e[None, :]) < window
    n_pairs = int(offmask.sum())
    if n_pairs == 0:
        rms_off = 0.0
    else:
        rms_off = float(np.sqrt(np.mean(np.abs(coupling.entries[offmask]) ** 2)))
    diag = coupling.diagonal_real()
    rms_diag = float(np.sqrt(np.mean((diag - diag.mean()) ** 2)))
    ratio = math.inf if rms_diag == 0.0 else rms_off / rms_diag
    return OffdiagReport(
        ratio=ratio,
        rms_offdiag=rms_off,
        rms_diag_dev=rms_diag,
        n_pairs=n_pairs,
        window=window,
    )


def spectrum_to_csv(spectrum: BathSpectrum, path) -> None:
    """Columns: n, E_n, p_n, B_nn (blank when not yet computed)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "E_n", "p_n", "B_nn"])
        for n in range(spectrum.m):
            row = [n, f"{spectrum.energies[n]:.17g}"]
            row.append("" if spectrum.weights is None else f"{spectrum.weights[n]:.17g}")
            row.append(
                "" if spectrum.coupling_diag is None
                else f"{spectrum.coupling_diag[n]:.17g}"
            )
            writer.writerow(row)
