"""Unitary-ensemble channel for a chaotic bath.

When the bath coupling operator is diagonal in the bath eigenbasis, the
reduced dynamics collapses to a thermally weighted ensemble of unitaries,
each generated by the system Hamiltonian shifted by one diagonal coupling
element:

    rho(t) = sum_n p_n U_n(t) rho(0) U_n(t)^dag,
    U_n(t) = exp(-i (H_S + S * B_nn) t).

Each operator sqrt(p_n) U_n is a scaled unitary, so the channel is
trace-preserving and completely positive by construction.  For a qubit
the exponentials are evaluated in closed form; larger systems use one
spectral decomposition per branch, reused across the whole time grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory, build_trajectory
from .errors import ValidationError
from .model import OperatorMatrix
from .spectral import BathSpectrum


def _as_matrix(op) -> np.ndarray:
    if isinstance(op, OperatorMatrix):
        return op.matrix
    return np.asarray(op, dtype=complex)


@dataclass(frozen=True)
class KrausEnsemble:
    """Weighted unitary branches; generators[n] = H_S + S * B_nn."""

    weights: np.ndarray
    generators: tuple          # of (d, d) Hermitian ndarrays
    h_system: np.ndarray       # kept for the fidelity reference evolution

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if abs(w.sum() - 1.0) > 1e-14:
            raise ValidationError(f"branch weights sum to {w.sum()!r}, not 1")
        if np.any(w < 0):
            raise ValidationError("branch weights must be nonnegative")
        for g in self.generators:
            dev = float(np.max(np.abs(g - g.conj().T)))
            if dev > 1e-12 * max(1.0, float(np.max(np.abs(g)))):
                raise ValidationError(f"branch generator not Hermitian ({dev:.3e})")
        object.__setattr__(self, "weights", w)

    @property
    def n_branches(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.generators[0].shape[0]


def build_ensemble(h_system, coupling_system, spectrum: BathSpectrum) -> KrausEnsemble:
    """One branch per retained bath eigenstate."""
    hs = _as_matrix(h_system)
    s = _as_matrix(coupling_system)
    if hs.shape != s.shape:
        raise ValidationError(f"shape mismatch {hs.shape} vs {s.shape}")
    if spectrum.weights is None or spectrum.coupling_diag is None:
        raise ValidationError(
            "spectrum lacks weights or diagonal coupling elements; "
            "run thermal_bath first"
        )
    gens = tuple(hs + b * s for b in spectrum.coupling_diag)
    return KrausEnsemble(weights=spectrum.weights, generators=gens, h_system=hs)


# ---------------------------------------------------------------------------
# branch unitaries


def _unitary_closed_qubit(h: np.ndarray, times: np.ndarray) -> np.ndarray:
    """exp(-i h t) for a 2x2 Hermitian h on every t, via the axis-angle form."""
    c = 0.5 * (h[0, 0] + h[1, 1]).real
    traceless = h - c * np.eye(2)
    # Bloch radius: traceless[0,0] carries hz, traceless[0,1] carries hx - i hy
    radius = float(np.sqrt(abs(traceless[0, 0]) ** 2 + abs(traceless[0, 1]) ** 2))
    out = np.empty((len(times), 2, 2), dtype=complex)
    phase = np.exp(-1j * c * times)
    if radius == 0.0:
        out[:] = np.eye(2)
        return phase[:, None, None] * out
    axis = traceless / radius
    theta = radius * times
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    out = (
        cos_t[:, None, None] * np.eye(2)[None, :, :]
        - 1j * sin_t[:, None, None] * axis[None, :, :]
    )
    return phase[:, None, None] * out


def _unitary_spectral(h: np.ndarray, times: np.ndarray) -> np.ndarray:
    evals, vecs = np.linalg.eigh(h)
    phases = np.exp(-1j * np.outer(times, evals))
    return np.einsum("ij,tj,kj->tik", vecs, phases, vecs.conj())


def branch_unitaries(ensemble: KrausEnsemble, times, method: str = "auto") -> np.ndarray:
    """U_n(t) for every branch; shape (n_branches, T, d, d)."""
    times = np.asarray(times, dtype=float)
    if method == "auto":
        method = "closed2" if ensemble.dim == 2 else "spectral"
    if method == "closed2":
        if ensemble.dim != 2:
            raise ValidationError("closed2 evaluation is defined for qubits only")
        builder = _unitary_closed_qubit
    elif method == "spectral":
        builder = _unitary_spectral
    else:
        raise ValidationError(f"unknown unitary method {method!r}")
    return np.stack([builder(g, times) for g in ensemble.generators])


def propagate_kraus(ensemble: KrausEnsemble, rho0: np.ndarray, times,
                    method: str = "auto") -> Trajectory:
    """Apply the channel on a time grid: rho(t) = sum_n p_n U_n rho0 U_n^dag."""
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (ensemble.dim, ensemble.dim):
        raise ValidationError(
            f"rho0 shape {rho0.shape} does not match branch dimension {ensemble.dim}"
        )
    times = np.asarray(times, dtype=float)
    us = branch_unitaries(ensemble, times, method=method)
    rhos = np.einsum("n,ntij,jk,ntlk->til", ensemble.weights, us, rho0, us.conj())
    return build_trajectory(times, rhos, ensemble.h_system, rho0)


# ---------------------------------------------------------------------------
# closed-form qubit branch, specialised to the balanced initial state


@dataclass(frozen=True)
class QubitBranchCoefficients:
    """Analytic amplitudes of one branch acting on (|0> + |1>)/sqrt(2).

    b = sqrt(Bz^2 + 4 Bnn^2) is the precession energy, a = b/2 the
    angular frequency; c1/c0 are the |0> and |1> amplitudes of the
    evolved state.
    """

    bz: float
    bnn: float

    @property
    def b(self) -> float:
        return float(np.sqrt(self.bz**2 + 4.0 * self.bnn**2))

    @property
    def a(self) -> float:
        return self.b / 2.0

    def c1(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        if self.b == 0.0:
            return np.full(t.shape, np.sqrt(0.5), dtype=complex)
        ratio = (self.bz - 2.0 * self.bnn) / self.b
        return np.sqrt(0.5) * (np.cos(self.a * t) + 1j * ratio * np.sin(self.a * t))

    def c0(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        if self.b == 0.0:
            return np.full(t.shape, np.sqrt(0.5), dtype=complex)
        ratio = (self.bz + 2.0 * self.bnn) / self.b
        return np.sqrt(0.5) * (np.cos(self.a * t) - 1j * ratio * np.sin(self.a * t))

    def branch_density(self, times) -> np.ndarray:
        """(T, 2, 2) pure-state density [[|c1|^2, c1 c0*], [c0 c1*, |c0|^2]]."""
        c1 = self.c1(times)
        c0 = self.c0(times)
        out = np.empty((len(np.atleast_1d(c1)), 2, 2), dtype=complex)
        out[:, 0, 0] = np.abs(c1) ** 2
        out[:, 0, 1] = c1 * c0.conj()
        out[:, 1, 0] = c0 * c1.conj()
        out[:, 1, 1] = np.abs(c0) ** 2
        return out


def qubit_closed_form(bz: float, bnn: float, times) -> QubitBranchCoefficients:
    """Analytic branch amplitudes for the detector-qubit model.

    Valid for the balanced initial state (|0> + |1>)/sqrt(2); the b -> 0
    limit (bz = bnn = 0) degenerates to constant amplitudes.  `times`
    is accepted for interface symmetry and may be re-used via the
    returned object's c1/c0/branch_density methods.
    """
    del times
    return QubitBranchCoefficients(bz=float(bz), bnn=float(bnn))


# ---------------------------------------------------------------------------
# channel laws


def completeness_residual(ensemble: KrausEnsemble, t: float,
                          method: str = "auto") -> float:
    """Max deviation of sum_n p_n U U^dag and sum_n p_n U^dag U from identity."""
    us = branch_unitaries(ensemble, np.asarray([t], dtype=float), method=method)[:, 0]
    eye = np.eye(ensemble.dim)
    left = np.einsum("n,nij,nkj->ik", ensemble.weights, us, us.conj())
    right = np.einsum("n,nji,njk->ik", ensemble.weights, us.conj(), us)
    return float(max(np.max(np.abs(left - eye)), np.max(np.abs(right - eye))))


def choi_matrix(ensemble: KrausEnsemble, t: float, method: str = "auto") -> np.ndarray:
    """(d^2, d^2) Choi matrix of the channel at time t (column-stacked vec)."""
    us = branch_unitaries(ensemble, np.asarray([t], dtype=float), method=method)[:, 0]
    d = ensemble.dim
    out = np.zeros((d * d, d * d), dtype=complex)
    for w, u in zip(ensemble.weights, us):
        vec = u.flatten(order="F")
        out += w * np.outer(vec, vec.conj())
    return out
