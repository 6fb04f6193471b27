"""Single-excitation spin manifold, truncated boson mode and their product.

Joint-space kets are ordered site-major, phonon-minor: the ket with site
``j`` (0-based) excited and ``n`` phonons sits at index ``j * (cutoff + 1) + n``.
The 2**N spin space is never materialized.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .errors import ContractViolation, InvalidModelError

UP, DOWN = "↑", "↓"


def _freeze(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ManifoldBasis:
    """Kets |j>, j = 1..N, with exactly one site excited."""

    n_sites: int
    labels: tuple = field(default=())

    def __post_init__(self):
        if not self.labels:
            labels = tuple(
                "".join(UP if k == j else DOWN for k in range(self.n_sites))
                for j in range(self.n_sites)
            )
            object.__setattr__(self, "labels", labels)
        if len(self.labels) != self.n_sites:
            raise InvalidModelError("one label per site is required")

    @property
    def dim(self) -> int:
        return self.n_sites

    def ket(self, site: int) -> np.ndarray:
        """Electronic unit vector for a 1-based site index."""
        _check_site(site, self.n_sites)
        v = np.zeros(self.n_sites, dtype=complex)
        v[site - 1] = 1.0
        return v


@dataclass(frozen=True)
class FockSpace:
    """Boson mode truncated to phonon numbers 0..cutoff."""

    cutoff: int
    omega: float = 1.0

    def __post_init__(self):
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise InvalidModelError(f"cutoff must be an integer >= 1, got {self.cutoff}")
        if not self.omega > 0:
            raise InvalidModelError("omega must be positive")

    @property
    def dim(self) -> int:
        return self.cutoff + 1


@dataclass(frozen=True)
class JointOperator:
    """Matrix on (spin manifold) x (Fock space).

    ``n_sites`` or ``n_levels`` may be 1 for operators living on only one
    factor.
    """

    matrix: np.ndarray
    hermitian: bool
    n_sites: int
    n_levels: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.n_sites * self.n_levels
        if m.shape != (d, d):
            raise InvalidModelError(f"matrix shape {m.shape} does not match dimension {d}")
        if self.hermitian and m.size and np.max(np.abs(m - m.conj().T)) >= 1e-12:
            raise ContractViolation("operator flagged Hermitian is not Hermitian")
        object.__setattr__(self, "matrix", _freeze(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, other: "JointOperator") -> "JointOperator":
        if (self.n_sites, self.n_levels) != (other.n_sites, other.n_levels):
            raise InvalidModelError("operators act on different spaces")
        return JointOperator(self.matrix @ other.matrix, False, self.n_sites, self.n_levels)


@dataclass(frozen=True)
class DisplacedState:
    """Displaced Fock state D(alpha)|n> for real alpha."""

    alpha: float
    n: int

    def vector(self, fock: FockSpace) -> np.ndarray:
        return displaced_fock_state(self.alpha, self.n, fock.dim)


def _check_site(site, n_sites):
    if not 1 <= int(site) <= n_sites:
        raise IndexError(f"site {site} outside 1..{n_sites}")


def build_manifold_basis(n_sites: int) -> ManifoldBasis:
    if int(n_sites) != n_sites or n_sites < 2:
        raise InvalidModelError(f"need at least two sites, got {n_sites}")
    return ManifoldBasis(int(n_sites))


def sigma_z_manifold(basis: ManifoldBasis, site: int, fock: FockSpace | None = None) -> JointOperator:
    """sigma^z of one site restricted to the manifold: 2|site><site| - 1."""
    _check_site(site, basis.n_sites)
    diag = -np.ones(basis.n_sites)
    diag[site - 1] = 1.0
    k = 1 if fock is None else fock.dim
    return JointOperator(np.kron(np.diag(diag), np.eye(k)), True, basis.n_sites, k)


def ladder_matrices(dim: int):
    """Truncated annihilation and creation matrices of size ``dim``."""
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)
    return a, a.T.copy()


def boson_ops(fock: FockSpace, basis: ManifoldBasis | None = None):
    """(a, a_dagger, a_dagger a), lifted to the joint space when ``basis`` is given."""
    a, ad = ladder_matrices(fock.dim)
    num = np.diag(np.arange(fock.dim, dtype=float))
    n = 1 if basis is None else basis.n_sites
    lift = (lambda m: m) if n == 1 else (lambda m: np.kron(np.eye(n), m))
    return (
        JointOperator(lift(a), False, n, fock.dim),
        JointOperator(lift(ad), False, n, fock.dim),
        JointOperator(lift(num), True, n, fock.dim),
    )


def displacement(g: float, omega: float) -> float:
    """Equilibrium displacement of the mode for a site with coupling ``g``."""
    return -g / (2.0 * omega)


def displaced_fock_state(alpha: float, n: int, dim: int) -> np.ndarray:
    """Fock-basis amplitudes <m|D(alpha)|n>, m < dim, for real alpha.

    Uses the associated-Laguerre closed form; entries beyond ``dim`` are
    dropped, not renormalized.
    """
    m = np.arange(dim)
    x = alpha * alpha
    out = np.empty(dim)
    for k in m:
        lo, hi = (n, k) if k >= n else (k, n)
        sign_base = alpha if k >= n else -alpha
        if x == 0.0:
            out[k] = 1.0 if k == n else 0.0
            continue
        logpref = 0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - 0.5 * x + (hi - lo) * np.log(abs(sign_base))
        sgn = np.sign(sign_base) ** (hi - lo)
        out[k] = sgn * np.exp(logpref) * eval_genlaguerre(lo, hi - lo, x)
    return out


def displaced_fock_overlap(alpha_i: float, alpha_f: float, n: int) -> float:
    """Franck-Condon weight |<0, alpha_i | n, alpha_f>|^2.

    Poisson in the squared displacement difference.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    nt = (alpha_i - alpha_f) ** 2
    if nt == 0.0:
        return 1.0 if n == 0 else 0.0
    return float(np.exp(-nt + n * np.log(nt) - gammaln(n + 1)))


def trace_phonons(matrix: np.ndarray, n_sites: int, n_levels: int) -> np.ndarray:
    """Electronic reduced matrix (N x N)."""
    m = np.asarray(matrix).reshape(n_sites, n_levels, n_sites, n_levels)
    return np.einsum("imjm->ij", m)


def trace_sites(matrix: np.ndarray, n_sites: int, n_levels: int) -> np.ndarray:
    """Phonon reduced matrix (K x K)."""
    m = np.asarray(matrix).reshape(n_sites, n_levels, n_sites, n_levels)
    return np.einsum("imin->mn", m)


def reduced_two_qubit_state(rho, basis: ManifoldBasis, pair) -> np.ndarray:
    """Two-qubit state of ``pair`` (1-based sites) in the order {uu, ud, du, dd}.

    ``rho`` may be a joint-space state (object with ``.matrix`` or array) or
    an already phonon-traced N x N electronic matrix.
    """
    i, j = pair
    _check_site(i, basis.n_sites)
    _check_site(j, basis.n_sites)
    if i == j:
        raise IndexError("pair sites must differ")
    m = np.asarray(getattr(rho, "matrix", rho))
    n = basis.n_sites
    if m.shape[0] % n:
        raise ContractViolation("state dimension is not a multiple of the site count")
    el = m if m.shape[0] == n else trace_phonons(m, n, m.shape[0] // n)
    tr = np.trace(el)
    if abs(tr - 1.0) > 1e-8:
        raise ContractViolation(f"state trace {tr.real:.3g} is not 1")
    i0, j0 = i - 1, j - 1
    out = np.zeros((4, 4), dtype=complex)
    out[1, 1] = el[i0, i0]
    out[2, 2] = el[j0, j0]
    out[1, 2] = el[i0, j0]
    out[2, 1] = el[j0, i0]
    out[3, 3] = tr - el[i0, i0] - el[j0, j0]
    return out
