"""Shared test oracles, independent of the package's production paths.

Dense operators here are assembled with np.kron chains; partial traces
with explicit index sums; propagators from full eigendecompositions.
"""

import numpy as np
import pytest

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_string(n_sites, factors, coefficient=1.0):
    """coefficient * prod sigma_axis(site) via an explicit kron chain."""
    labels = ["i"] * n_sites
    for site, axis in factors:
        labels[site] = axis
    out = np.array([[coefficient]], dtype=complex)
    for lab in labels:
        out = np.kron(out, PAULI[lab])
    return out


def kron_terms(terms, n_sites):
    """Dense matrix of a PauliTerm list via kron chains."""
    dim = 2**n_sites
    out = np.zeros((dim, dim), dtype=complex)
    for term in terms:
        out += kron_string(n_sites, term.factors, term.coefficient)
    return out


def spectral_propagate(h, v0, t):
    """exp(-i h t) v0 via full eigendecomposition."""
    evals, vecs = np.linalg.eigh(h)
    return vecs @ (np.exp(-1j * evals * t) * (vecs.conj().T @ v0))


def random_state(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def ptrace_system_oracle(v, n_bath):
    """Index-sum partial trace over the bath of |v><v| (system = MSB)."""
    dim_bath = 2**n_bath
    rho = np.zeros((2, 2), dtype=complex)
    for s in range(2):
        for sp in range(2):
            for b in range(dim_bath):
                rho[s, sp] += v[s * dim_bath + b] * np.conj(v[sp * dim_bath + b])
    return rho


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
