"""Right-hand side of the chain master equation.

Two representations are provided:

* :func:`apply_rhs` acts on a dense ``d x d`` density matrix with sparse
  operator products. It is the reference form.
* :class:`SectorGenerator` acts on the vector of density-matrix entries that
  connect states with equal excitation number. Every term of the generator
  preserves that block structure, so a state that starts block diagonal (the
  all-ground state does) never leaves it. The dimension drops from ``d**2``
  to ``sum_n C(N, n)**2`` (16384 -> 3432 for N = 7).

Superoperators use row-major vectorization, ``vec(A rho B) = kron(A, B.T) @ vec(rho)``,
which matches ``rho.ravel()``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .chain import (ChainSpec, SiteOperatorSet, build_hamiltonian, build_operators,
                    excitation_numbers, site_z_diagonals)
from .rates import RateModel

SUPEROPERATOR_MAX_SITES = 7


@dataclass(frozen=True)
class GeneratorContext:
    spec: ChainSpec
    model: RateModel
    ops: SiteOperatorSet = field(repr=False)
    H: sp.csr_matrix = field(repr=False)
    # elementwise factors: dephasing sum_i (z_i(a) z_i(b) - 1) / 2 and shift -i (Z(a) - Z(b))
    deph: np.ndarray = field(repr=False)
    shift: np.ndarray = field(repr=False)

    @property
    def use_shift(self) -> bool:
        return self.model.has_shift

    @property
    def dim(self) -> int:
        return self.spec.dim


def make_context(spec: ChainSpec, model: RateModel) -> GeneratorContext:
    ops = build_operators(spec)
    H = build_hamiltonian(spec, ops)
    z = site_z_diagonals(spec.n_sites)
    deph = 0.5 * (z.T @ z - spec.n_sites)
    ztot = z.sum(axis=0)
    shift = -1j * (ztot[:, None] - ztot[None, :])
    return GeneratorContext(spec, model, ops, H, deph, shift)


def apply_rhs(ctx: GeneratorContext, rho: np.ndarray, t: float,
              gamma: float | None = None, shift: float | None = None) -> np.ndarray:
    """d rho / dt at time ``t``.

    ``gamma`` / ``shift`` override the rate model (used to freeze the rate).
    """
    spec, ops = ctx.spec, ctx.ops
    g = float(ctx.model.rate(t)) if gamma is None else gamma
    Hrho = ctx.H @ rho
    # H is real symmetric, so rho H = (H rho^dagger)^dagger
    out = -1j * (Hrho - (ctx.H @ rho.conj().T).conj().T)
    out += g * ctx.deph * rho
    if ctx.use_shift or shift is not None:
        s = float(ctx.model.shift(t)) if shift is None else shift
        out += s * ctx.shift * rho
    _, sp_in, sm_in = ops.site(spec.injection_site)
    _, sp_ex, sm_ex = ops.site(spec.extraction_site)
    if spec.kappa_inj:
        out += _dissipator(sp_in, rho, spec.kappa_inj)
    if spec.kappa_ext:
        out += _dissipator(sm_ex, rho, spec.kappa_ext)
    return out


def _dissipator(L, rho, rate):
    """(rate / 2) (2 L rho L^+ - L^+ L rho - rho L^+ L) for a real sparse L."""
    Ld = L.T.tocsr()
    LdL = (Ld @ L).tocsr()
    L_rho_Ld = L @ (L @ rho.conj().T).conj().T  # L rho L^T
    rho_LdL = (LdL @ rho.conj().T).conj().T
    return 0.5 * rate * (2 * L_rho_Ld - LdL @ rho - rho_LdL)


def _spre(A, d):
    return sp.kron(A, sp.identity(d), format="csr")


def _spost(A, d):
    return sp.kron(sp.identity(d), A.T, format="csr")


def _lindblad_super(L, rate, d):
    LdL = (L.conj().T @ L).tocsr()
    return rate * (sp.kron(L, L.conj(), format="csr")
                   - 0.5 * _spre(LdL, d) - 0.5 * _spost(LdL, d))


def _static_superoperator(ctx: GeneratorContext) -> sp.csr_matrix:
    """Hamiltonian, injection and extraction parts (no dephasing or shift)."""
    d, spec = ctx.dim, ctx.spec
    L = -1j * (_spre(ctx.H, d) - _spost(ctx.H, d))
    if spec.kappa_inj:
        L = L + _lindblad_super(ctx.ops.site(spec.injection_site)[1], spec.kappa_inj, d)
    if spec.kappa_ext:
        L = L + _lindblad_super(ctx.ops.site(spec.extraction_site)[2], spec.kappa_ext, d)
    return L.tocsr()


def build_constant_superoperator(ctx: GeneratorContext, gamma: float,
                                 shift: float = 0.0, allow_large: bool = False
                                 ) -> sp.csr_matrix:
    """Sparse ``d**2 x d**2`` generator with the rate frozen at ``gamma``."""
    if ctx.spec.n_sites > SUPEROPERATOR_MAX_SITES and not allow_large:
        raise ValueError(f"superoperator for N={ctx.spec.n_sites} exceeds the cap "
                         f"N <= {SUPEROPERATOR_MAX_SITES}; pass allow_large=True")
    diag = gamma * ctx.deph.ravel() + shift * ctx.shift.ravel()
    return (_static_superoperator(ctx) + sp.diags(diag)).tocsr()


class SectorGenerator:
    """Master-equation generator restricted to excitation-number-diagonal blocks.

    State vectors ``v`` hold ``rho[a, b]`` for every kept pair ``(a, b)``;
    ``rhs(t, v)`` costs one sparse mat-vec plus two elementwise products.
    """

    def __init__(self, ctx: GeneratorContext):
        self.ctx = ctx
        d = ctx.dim
        n_exc = excitation_numbers(ctx.spec.n_sites)
        a, b = np.divmod(np.arange(d * d), d)
        self.keep = np.flatnonzero(n_exc[a] == n_exc[b])
        self.rows, self.cols = a[self.keep], b[self.keep]
        L = _static_superoperator(ctx)
        self.L0 = L[self.keep][:, self.keep].tocsr()
        self.deph = ctx.deph.ravel()[self.keep]
        self.shift = ctx.shift.ravel()[self.keep]
        self.diag_idx = np.flatnonzero(self.rows == self.cols)
        # position of (b, a) for every kept (a, b)
        pos = np.full(d * d, -1)
        pos[self.keep] = np.arange(len(self.keep))
        self.adjoint_idx = pos[self.cols * d + self.rows]
        self.blocks = [np.flatnonzero(n_exc == n) for n in range(ctx.spec.n_sites + 1)]
        self._zpop = (1.0 + site_z_diagonals(ctx.spec.n_sites)) / 2

    @property
    def size(self) -> int:
        return len(self.keep)

    def rhs(self, t, v):
        model = self.ctx.model
        diag = float(model.rate(t)) * self.deph
        if model.has_shift:
            diag = diag + float(model.shift(t)) * self.shift
        out = self.L0 @ v
        out += diag * v
        return out

    __call__ = rhs

    def frozen(self, gamma: float, shift: float = 0.0) -> sp.csr_matrix:
        """Reduced time-independent generator with the rates fixed."""
        return (self.L0 + sp.diags(gamma * self.deph + shift * self.shift)).tocsr()

    def to_vector(self, rho: np.ndarray) -> np.ndarray:
        return np.asarray(rho, dtype=complex).ravel()[self.keep]

    def off_sector_norm(self, rho: np.ndarray) -> float:
        flat = np.abs(np.asarray(rho).ravel()).copy()
        flat[self.keep] = 0.0
        return float(flat.max()) if flat.size else 0.0

    def to_matrix(self, v: np.ndarray) -> np.ndarray:
        d = self.ctx.dim
        rho = np.zeros(d * d, dtype=complex)
        rho[self.keep] = v
        return rho.reshape(d, d)

    def trace(self, v) -> complex:
        return v[self.diag_idx].sum()

    def hermiticity_residual(self, v) -> float:
        return float(np.abs(v - v[self.adjoint_idx].conj()).max())

    def hermitize(self, v):
        return 0.5 * (v + v[self.adjoint_idx].conj())

    def populations(self, v) -> np.ndarray:
        """Site excitations n_1..n_N; accepts a vector or a stack of vectors."""
        diag = np.real(np.asarray(v)[..., self.diag_idx])
        return diag @ self._zpop[:, self.rows[self.diag_idx]].T

    def min_eigenvalue(self, v) -> float:
        rho = self.to_matrix(v)
        return min(float(np.linalg.eigvalsh(rho[np.ix_(blk, blk)]).min())
                   for blk in self.blocks)
