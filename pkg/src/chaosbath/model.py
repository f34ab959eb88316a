"""Test-model construction: a detector qubit coupled to a disordered spin bath.

The total Hamiltonian is

    H = -(1/2) B0z sz(0)  +  sx(0) * sum_i lam_i sx(i)
        - (1/2) sum_i [ Bx_i sx(i) + Bz_i sz(i) ]
        + sum_{i<j} Jxx_ij sx(i) sx(j)

with the detector on site 0 and bath qubits on sites 1..N.  All couplings
are drawn uniformly from configured intervals with a seeded PCG64 stream.

Conventions (fixed package-wide):
  * hbar = 1; energies in units of eps, times in hbar/eps.
  * sz|0> = +|0>, sz|1> = -|1>.
  * Basis index of the (N+1)-qubit space: site 0 (the system qubit) is the
    most significant bit, bath qubits follow in decreasing significance.
    This makes the partial trace over the bath a contiguous reshape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import CapacityError, ConfigError, ValidationError

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

DENSE_CAP_DEFAULT = 4096  # 2**12; largest dimension materialised densely

_AXES = ("x", "y", "z")


# ---------------------------------------------------------------------------
# configuration and sampled parameters


@dataclass(frozen=True)
class ModelConfig:
    """Scalar knobs of the model; the sampled arrays live in ModelParameters."""

    n_bath: int
    b0z: float = 1.0
    delta: float = 0.4
    lambda_max: float = 0.05
    jx_max: float = 2.0
    kt: float = 0.25
    seed: int = 1

    def validate(self) -> None:
        if self.n_bath < 1:
            raise ConfigError(f"n_bath must be >= 1, got {self.n_bath}")
        for name in ("delta", "lambda_max", "jx_max"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.kt < 0:
            raise ConfigError(f"kt must be >= 0, got {self.kt}")


_CONFIG_KEYS = {
    "n_bath": ("n_bath", int),
    "b0z": ("b0z", float),
    "delta": ("delta", float),
    "lambda": ("lambda_max", float),
    "jx": ("jx_max", float),
    "kt": ("kt", float),
    "seed": ("seed", int),
}


def parse_config_lines(lines) -> dict:
    """Parse `key = value` lines (# comments allowed) into a raw dict."""
    raw = {}
    for ln, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key] = value
    return raw


def load_config(path) -> ModelConfig:
    """Read a model configuration from a key-value text file."""
    raw = parse_config_lines(Path(path).read_text().splitlines())
    kwargs = {}
    for key, value in raw.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown model config key {key!r}")
        name, cast = _CONFIG_KEYS[key]
        try:
            kwargs[name] = cast(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    if "n_bath" not in kwargs:
        raise ConfigError("model config must set n_bath")
    config = ModelConfig(**kwargs)
    config.validate()
    return config


def save_config(config: ModelConfig, path) -> None:
    lines = [
        f"n_bath = {config.n_bath}",
        f"b0z = {config.b0z!r}",
        f"delta = {config.delta!r}",
        f"lambda = {config.lambda_max!r}",
        f"jx = {config.jx_max!r}",
        f"kt = {config.kt!r}",
        f"seed = {config.seed}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class ModelParameters:
    """One sampled realisation of the model couplings.

    Arrays follow the draw order documented in sample_parameters.  jxx is
    an (N, N) array with only the upper triangle (i < j) populated.
    """

    config: ModelConfig
    bz: np.ndarray
    bx: np.ndarray
    lam: np.ndarray
    jxx: np.ndarray

    @property
    def n_bath(self) -> int:
        return self.config.n_bath

    def to_json(self) -> str:
        """Audit/replay export; arrays appear in draw order."""
        n = self.n_bath
        upper = [self.jxx[i, j] for i in range(n) for j in range(i + 1, n)]
        doc = {
            "n_bath": n,
            "b0z": self.config.b0z,
            "delta": self.config.delta,
            "lambda": self.config.lambda_max,
            "jx": self.config.jx_max,
            "kt": self.config.kt,
            "seed": self.config.seed,
            "bz": list(self.bz),
            "bx": list(self.bx),
            "lambda_i": list(self.lam),
            "jxx_upper_row_major": upper,
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ModelParameters":
        doc = json.loads(text)
        n = doc["n_bath"]
        config = ModelConfig(
            n_bath=n,
            b0z=doc["b0z"],
            delta=doc["delta"],
            lambda_max=doc["lambda"],
            jx_max=doc["jx"],
            kt=doc["kt"],
            seed=doc["seed"],
        )
        jxx = np.zeros((n, n))
        flat = iter(doc["jxx_upper_row_major"])
        for i in range(n):
            for j in range(i + 1, n):
                jxx[i, j] = next(flat)
        return cls(
            config=config,
            bz=np.asarray(doc["bz"], dtype=float),
            bx=np.asarray(doc["bx"], dtype=float),
            lam=np.asarray(doc["lambda_i"], dtype=float),
            jxx=jxx,
        )


def sample_parameters(config: ModelConfig, seed: int | None = None) -> ModelParameters:
    """Draw one coupling realisation.

    Stream: numpy default_rng (PCG64) seeded with `seed` (falls back to
    config.seed).  Draw order is fixed: Bz[1..N], Bx[1..N], lambda[1..N],
    then the Jxx upper triangle row-major.  Each value is uniform on the
    half-open interval [low, high); identical (config, seed) therefore
    reproduce bit-identical arrays.
    """
    config.validate()
    if seed is None:
        seed = config.seed
    else:
        config = replace(config, seed=seed)
    n = config.n_bath
    rng = np.random.default_rng(seed)
    half = config.delta / 2.0
    bz = rng.uniform(config.b0z - half, config.b0z + half, n)
    bx = rng.uniform(config.b0z - half, config.b0z + half, n)
    lam = rng.uniform(-config.lambda_max, config.lambda_max, n)
    jxx = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            jxx[i, j] = rng.uniform(-config.jx_max, config.jx_max)
    return ModelParameters(config=config, bz=bz, bx=bx, lam=lam, jxx=jxx)


# ---------------------------------------------------------------------------
# operators


@dataclass(frozen=True)
class PauliTerm:
    """One weighted Pauli string: coefficient * prod_(site, axis) sigma_axis(site)."""

    coefficient: float
    factors: tuple

    def __post_init__(self):
        factors = tuple((int(s), str(a)) for s, a in self.factors)
        object.__setattr__(self, "factors", factors)
        sites = [s for s, _ in factors]
        if len(set(sites)) != len(sites):
            raise ValidationError(f"duplicate site in Pauli term: {factors}")
        for s, a in factors:
            if s < 0:
                raise ValidationError(f"negative site index {s}")
            if a not in _AXES:
                raise ValidationError(f"axis must be one of {_AXES}, got {a!r}")


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense complex operator on a 2**n space, optionally flagged Hermitian."""

    matrix: np.ndarray
    hermitian: bool = True

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"operator must be square, got shape {m.shape}")
        if self.hermitian:
            scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
            dev = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
            if dev > 1e-12 * scale:
                raise ValidationError(
                    f"operator flagged hermitian deviates by {dev:.3e}"
                )
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _n_sites_for(dim: int) -> int:
    n = dim.bit_length() - 1
    if dim != 1 << n:
        raise ValidationError(f"dimension {dim} is not a power of two")
    return n


def _term_action(term: PauliTerm, n_sites: int):
    """Compile a term to (xor mask, per-basis-state phase array).

    For basis state |b>:  P|b> = phase[b] |b ^ mask>.  Site 0 is the most
    significant bit, so site s occupies bit (n_sites - 1 - s).
    """
    dim = 1 << n_sites
    idx = np.arange(dim)
    mask = 0
    phase = np.full(dim, term.coefficient, dtype=complex)
    for site, axis in term.factors:
        if site >= n_sites:
            raise ValidationError(
                f"term touches site {site} but the space has {n_sites} sites"
            )
        bit = n_sites - 1 - site
        b = (idx >> bit) & 1
        if axis == "x":
            mask ^= 1 << bit
        elif axis == "y":
            mask ^= 1 << bit
            phase = phase * (1j * (1 - 2 * b))
        else:  # z
            phase = phase * (1 - 2 * b)
    return mask, phase


def apply_hamiltonian(terms, v: np.ndarray) -> np.ndarray:
    """Matrix-free H @ v for a list of Pauli terms.

    Accepts a single state of shape (2**n,) or a batch (2**n, k).
    """
    v = np.asarray(v, dtype=complex)
    n_sites = _n_sites_for(v.shape[0])
    dim = v.shape[0]
    out = np.zeros_like(v)
    idx = np.arange(dim)
    for term in terms:
        mask, phase = _term_action(term, n_sites)
        pv = phase[:, None] * v if v.ndim == 2 else phase * v
        out += pv[idx ^ mask] if mask else pv
    return out


def terms_to_dense(terms, n_sites: int) -> np.ndarray:
    """Materialise a term list as a dense matrix (row b^mask, column b)."""
    dim = 1 << n_sites
    idx = np.arange(dim)
    out = np.zeros((dim, dim), dtype=complex)
    for term in terms:
        mask, phase = _term_action(term, n_sites)
        out[idx ^ mask, idx] += phase
    return out


# ---------------------------------------------------------------------------
# model term lists and assembly

# Site labels below refer to the full (N+1)-site space: detector on 0,
# bath qubits on 1..N.  The bath-only builders label bath qubits 0..N-1.


def system_terms(p: ModelParameters):
    return [PauliTerm(-0.5 * p.config.b0z, ((0, "z"),))]


def coupling_terms(p: ModelParameters):
    return [PauliTerm(p.lam[i - 1], ((0, "x"), (i, "x"))) for i in range(1, p.n_bath + 1)]


def bath_field_terms(p: ModelParameters, offset: int = 0):
    """One-body bath terms; offset=1 places them in the full (N+1)-site space."""
    out = []
    for i in range(p.n_bath):
        out.append(PauliTerm(-0.5 * p.bx[i], ((i + offset, "x"),)))
        out.append(PauliTerm(-0.5 * p.bz[i], ((i + offset, "z"),)))
    return out


def bath_coupling_terms(p: ModelParameters, offset: int = 0):
    """Two-body sx-sx intra-bath terms."""
    out = []
    for i in range(p.n_bath):
        for j in range(i + 1, p.n_bath):
            out.append(PauliTerm(p.jxx[i, j], ((i + offset, "x"), (j + offset, "x"))))
    return out


def total_terms(p: ModelParameters):
    """All terms of the full Hamiltonian on N+1 sites."""
    return (
        system_terms(p)
        + coupling_terms(p)
        + bath_field_terms(p, offset=1)
        + bath_coupling_terms(p, offset=1)
    )


@dataclass(frozen=True)
class Hamiltonians:
    """Assembled dense operators plus the term list used for propagation."""

    params: ModelParameters
    h_system: OperatorMatrix        # 2 x 2
    coupling_system: OperatorMatrix  # sx on the detector, 2 x 2
    coupling_bath: OperatorMatrix   # sum_i lam_i sx(i), 2**N
    h_bath: OperatorMatrix          # 2**N
    h_bath_onebody: OperatorMatrix  # field part of h_bath
    h_bath_twobody: OperatorMatrix  # sx-sx part of h_bath
    h_total: OperatorMatrix         # 2**(N+1)
    total_terms: tuple = field(repr=False)

    @property
    def n_bath(self) -> int:
        return self.params.n_bath


def assemble_hamiltonians(p: ModelParameters, dense_cap: int = DENSE_CAP_DEFAULT) -> Hamiltonians:
    """Build every operator of the model densely (within the capacity cap)."""
    n = p.n_bath
    dim_total = 1 << (n + 1)
    if dim_total > dense_cap:
        raise CapacityError(
            f"total dimension {dim_total} exceeds dense cap {dense_cap}"
        )
    h_system = -0.5 * p.config.b0z * SIGMA_Z
    onebody = terms_to_dense(bath_field_terms(p), n)
    twobody = terms_to_dense(bath_coupling_terms(p), n)
    coupling_bath = terms_to_dense(
        [PauliTerm(p.lam[i], ((i, "x"),)) for i in range(n)], n
    )
    h_total = terms_to_dense(total_terms(p), n + 1)
    return Hamiltonians(
        params=p,
        h_system=OperatorMatrix(h_system),
        coupling_system=OperatorMatrix(SIGMA_X),
        coupling_bath=OperatorMatrix(coupling_bath),
        h_bath=OperatorMatrix(onebody + twobody),
        h_bath_onebody=OperatorMatrix(onebody),
        h_bath_twobody=OperatorMatrix(twobody),
        h_total=OperatorMatrix(h_total),
        total_terms=tuple(total_terms(p)),
    )
