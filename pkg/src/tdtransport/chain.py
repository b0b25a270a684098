"""Linear chain of two-level systems: geometry, site operators and Hamiltonian.

Basis convention (used everywhere in the package):

* Each site has local basis ``(|e>, |g>)``: index 0 is the excited state and
  index 1 the ground state, so ``sigma_z = diag(1, -1)`` and
  ``sigma_plus = |e><g| = [[0, 1], [0, 0]]``.
* Site 1 is the leftmost (most significant) Kronecker factor. A basis index
  ``a`` in ``range(2**N)`` therefore has site ``i`` (1-based) excited when bit
  ``N - i`` of ``a`` is 0.
* The all-ground product state is the last basis vector, index ``2**N - 1``.

Site indices are 1-based in every public interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np
import scipy.sparse as sp

MAX_SITES = 12

SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]])
SIGMA_MINUS = SIGMA_PLUS.T.copy()


@dataclass(frozen=True)
class ChainSpec:
    """Static description of the chain and its incoherent energy sources.

    All frequencies and rates are in units of the base frequency ``omega``.
    """

    n_sites: int
    frequencies: tuple[float, ...]
    couplings: tuple[float, ...]
    kappa_inj: float
    kappa_ext: float
    extraction_site: int
    injection_site: int = 1

    def __post_init__(self):
        object.__setattr__(self, "frequencies", tuple(float(w) for w in self.frequencies))
        object.__setattr__(self, "couplings", tuple(float(c) for c in self.couplings))
        if self.n_sites < 1:
            raise ValueError("n_sites must be >= 1")
        if len(self.frequencies) != self.n_sites:
            raise ValueError("need one frequency per site")
        if len(self.couplings) != self.n_sites - 1:
            raise ValueError("need n_sites - 1 couplings")
        if self.kappa_inj < 0 or self.kappa_ext < 0:
            raise ValueError("injection/extraction rates must be non-negative")
        for name, site in (("injection_site", self.injection_site),
                           ("extraction_site", self.extraction_site)):
            if not 1 <= site <= self.n_sites:
                raise ValueError(f"{name}={site} outside 1..{self.n_sites}")
        if self.n_sites > 1 and self.extraction_site == self.injection_site:
            raise ValueError("extraction and injection sites must differ")

    @classmethod
    def uniform(cls, n_sites: int, extraction_site: int, omega: float = 1.0,
                coupling: float = 0.1, kappa_inj: float = 0.01,
                kappa_ext: float = 0.01) -> "ChainSpec":
        """Uniform chain; defaults are the benchmark transport parameters."""
        return cls(n_sites, (omega,) * n_sites, (coupling,) * (n_sites - 1),
                   kappa_inj, kappa_ext, extraction_site)

    @classmethod
    def from_dict(cls, d: dict) -> "ChainSpec":
        """Build from a config block: either explicit lists or uniform values."""
        d = dict(d)
        n = int(d.pop("n_sites"))
        k = int(d.pop("extraction_site"))
        omega = d.pop("omega", 1.0)
        coupling = d.pop("coupling", 0.1)
        freqs = d.pop("frequencies", [omega] * n)
        coups = d.pop("couplings", [coupling] * (n - 1))
        spec = cls(n, tuple(freqs), tuple(coups), float(d.pop("kappa_inj", 0.01)),
                   float(d.pop("kappa_ext", 0.01)), k, int(d.pop("injection_site", 1)))
        if d:
            raise ValueError(f"unknown chain fields: {sorted(d)}")
        return spec

    def to_dict(self) -> dict:
        return {"n_sites": self.n_sites, "frequencies": list(self.frequencies),
                "couplings": list(self.couplings), "kappa_inj": self.kappa_inj,
                "kappa_ext": self.kappa_ext, "extraction_site": self.extraction_site,
                "injection_site": self.injection_site}

    @property
    def dim(self) -> int:
        return 2 ** self.n_sites

    @property
    def is_symmetric(self) -> bool:
        """Injection and extraction at opposite tips of the chain."""
        return {self.injection_site, self.extraction_site} == {1, self.n_sites}


@dataclass(frozen=True)
class SiteOperatorSet:
    """Sparse CSR embeddings of sigma_z, sigma_+, sigma_- for every site.

    Lists are indexed 0-based (``sz[0]`` is site 1); use :meth:`site` for
    1-based access.
    """

    n_sites: int
    sz: list = field(repr=False)
    sp: list = field(repr=False)
    sm: list = field(repr=False)

    @property
    def dim(self) -> int:
        return 2 ** self.n_sites

    def site(self, i: int):
        """Return ``(sigma_z, sigma_plus, sigma_minus)`` of 1-based site ``i``."""
        if not 1 <= i <= self.n_sites:
            raise IndexError(f"site {i} outside 1..{self.n_sites}")
        return self.sz[i - 1], self.sp[i - 1], self.sm[i - 1]

    def number_operator(self) -> sp.csr_matrix:
        return sum((p @ m for p, m in zip(self.sp, self.sm)),
                   sp.csr_matrix((self.dim, self.dim))).tocsr()


def embed(op: np.ndarray, site: int, n_sites: int) -> sp.csr_matrix:
    """Place a single-site 2x2 operator on 1-based ``site`` of an N-site chain."""
    left = sp.identity(2 ** (site - 1), format="csr")
    right = sp.identity(2 ** (n_sites - site), format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def build_operators(spec: ChainSpec, max_sites: int = MAX_SITES) -> SiteOperatorSet:
    if spec.n_sites > max_sites:
        raise ValueError(f"n_sites={spec.n_sites} exceeds the cap of {max_sites}")
    n = spec.n_sites
    return SiteOperatorSet(
        n,
        [embed(SIGMA_Z, i, n) for i in range(1, n + 1)],
        [embed(SIGMA_PLUS, i, n) for i in range(1, n + 1)],
        [embed(SIGMA_MINUS, i, n) for i in range(1, n + 1)],
    )


def build_hamiltonian(spec: ChainSpec, ops: SiteOperatorSet) -> sp.csr_matrix:
    """Nearest-neighbour exchange Hamiltonian (hbar = 1)."""
    dim = spec.dim
    H = sp.csr_matrix((dim, dim))
    for w, z in zip(spec.frequencies, ops.sz):
        H = H + 0.5 * w * z
    for i, lam in enumerate(spec.couplings):
        hop = ops.sp[i] @ ops.sm[i + 1]
        H = H + lam * (hop + hop.T)
    return H.tocsr()


def site_z_diagonals(n_sites: int) -> np.ndarray:
    """``(N, 2**N)`` array whose row ``i`` is the diagonal of sigma_z on site i+1."""
    idx = np.arange(2 ** n_sites)
    bits = (idx[None, :] >> (n_sites - 1 - np.arange(n_sites))[:, None]) & 1
    return 1.0 - 2.0 * bits


def excitation_numbers(n_sites: int) -> np.ndarray:
    """Number of excited sites in each computational basis state."""
    return ((1.0 + site_z_diagonals(n_sites)) / 2).sum(axis=0).astype(int)


def ground_state(n_sites: int) -> np.ndarray:
    """Density matrix with every site in its ground state."""
    d = 2 ** n_sites
    rho = np.zeros((d, d), dtype=complex)
    rho[-1, -1] = 1.0
    return rho


def site_populations(rho: np.ndarray, n_sites: int) -> np.ndarray:
    """Excited-state populations <sigma_i^+ sigma_i^-> for i = 1..N."""
    diag = np.real(np.diagonal(rho))
    return ((1.0 + site_z_diagonals(n_sites)) / 2) @ diag
