"""Geometry, couplings, Hamiltonians, exciton bases and disorder draws."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import InvalidModelError
from .hilbert import FockSpace, JointOperator, build_manifold_basis, ladder_matrices

SCHEMA_VERSION = 1
_NAMED_EPS = ("auto", "symmetric", "tilted")
_NAMED_G = ("alternating",)


@dataclass(frozen=True)
class ModelParams:
    """Physical parameterization; energies and rates in units of omega.

    ``epsilon_scheme`` is a named scheme or an explicit per-site tuple.
    ``"auto"`` picks the symmetric scheme for two monomers and the tilted
    ramp otherwise. ``g_scheme`` is likewise ``"alternating"`` (sign flips
    per monomer, magnitude ``g``) or a per-site tuple.
    """

    n_monomers: int = 2
    sites_per_monomer: int = 2
    coolants_per_gap: int = 2
    J: float = 0.3
    p: float = 1.0
    omega: float = 1.0
    epsilon: float = 3.0
    epsilon_scheme: Any = "auto"
    g: float = 1.0
    g_scheme: Any = "alternating"
    gamma: float = 0.039552
    nbar: float = 0.01
    gamma_d: float = 0.0
    phonon_cutoff: int = 15
    coupling_truncation: float | None = None
    alternating_J: bool = False

    def __post_init__(self):
        for name in ("epsilon_scheme", "g_scheme"):
            v = getattr(self, name)
            if not isinstance(v, str):
                object.__setattr__(self, name, tuple(float(x) for x in v))
        self.validate()

    def validate(self):
        if self.n_monomers < 2:
            raise InvalidModelError("need at least two monomers")
        if self.sites_per_monomer < 2:
            raise InvalidModelError("need at least two sites per monomer")
        if self.coolants_per_gap < 0:
            raise InvalidModelError("coolant count must be non-negative")
        if not self.J > 0:
            raise InvalidModelError("J must be positive")
        if not self.omega > 0:
            raise InvalidModelError("omega must be positive")
        if self.p < 0:
            raise InvalidModelError("power-law exponent must be non-negative")
        for name in ("gamma", "nbar", "gamma_d"):
            v = getattr(self, name)
            if not (v >= 0 and np.isfinite(v)):
                raise InvalidModelError(f"{name} must be finite and non-negative")
        if int(self.phonon_cutoff) != self.phonon_cutoff or self.phonon_cutoff < 1:
            raise InvalidModelError("phonon_cutoff must be an integer >= 1")
        if self.coupling_truncation is not None and self.coupling_truncation <= 0:
            raise InvalidModelError("coupling_truncation must be positive")
        for name, named in (("epsilon_scheme", _NAMED_EPS), ("g_scheme", _NAMED_G)):
            v = getattr(self, name)
            if isinstance(v, str):
                if v not in named:
                    raise InvalidModelError(f"unknown {name} {v!r}")
            elif len(v) != self.n_sites:
                raise InvalidModelError(f"{name} needs {self.n_sites} entries, got {len(v)}")
        if self.epsilon_scheme == "symmetric" and self.n_monomers != 2:
            raise InvalidModelError("the symmetric scheme is defined for two monomers")

    @property
    def n_sites(self) -> int:
        return self.n_monomers * self.sites_per_monomer

    @property
    def fock(self) -> FockSpace:
        return FockSpace(int(self.phonon_cutoff), self.omega)

    def monomer_of_site(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_monomers), self.sites_per_monomer)

    def site_energies(self) -> np.ndarray:
        s = self.epsilon_scheme
        if not isinstance(s, str):
            return np.array(s, dtype=float)
        m = self.monomer_of_site()
        if s == "symmetric" or (s == "auto" and self.n_monomers == 2):
            return np.where(m == 0, self.epsilon, -self.epsilon).astype(float)
        # linear ramp: +eps, -eps, -3eps, ...
        return self.epsilon * (1.0 - 2.0 * m)

    def site_couplings(self) -> np.ndarray:
        s = self.g_scheme
        if not isinstance(s, str):
            return np.array(s, dtype=float)
        return self.g * (-1.0) ** self.monomer_of_site()

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("epsilon_scheme", "g_scheme"):
            if isinstance(d[k], tuple):
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidModelError(f"unknown model keys: {sorted(unknown)}")
        return cls(**data)


def params_to_config(params: ModelParams) -> dict:
    """Versioned config mapping for ``params``."""
    return {"schema_version": SCHEMA_VERSION, "model": params.to_dict()}


def params_from_config(config: dict) -> ModelParams:
    version = config.get("schema_version")
    if version is None:
        raise InvalidModelError("config lacks schema_version")
    if version != SCHEMA_VERSION:
        raise InvalidModelError(f"unsupported schema_version {version}")
    return ModelParams.from_dict(dict(config.get("model", {})))


@dataclass(frozen=True)
class LatticeLayout:
    positions: np.ndarray
    distances: np.ndarray


@dataclass(frozen=True)
class ExcitonBasis:
    """Eigen-decomposition of one monomer's electronic block.

    Columns of ``eigenvectors`` are sorted by descending energy, so column 0
    is the top exciton E1.
    """

    monomer_index: int
    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    w_overlap: np.ndarray
    parity: np.ndarray
    degenerate_top: bool = False

    @property
    def top(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    def parity_order(self) -> np.ndarray:
        """Mirror-symmetric states first, then antisymmetric, each by descending energy."""
        idx = np.arange(len(self.eigenvalues))
        return np.concatenate([idx[self.parity > 0], idx[self.parity < 0]])


@dataclass(frozen=True)
class DisorderRealization:
    g_values: np.ndarray
    epsilon_values: np.ndarray
    seed: int
    realization_index: int = 0
    sigma_g: float = 0.0
    sigma_eps: float = 0.0


def build_layout(params: ModelParams) -> LatticeLayout:
    L, d = params.sites_per_monomer, params.coolants_per_gap
    m = params.monomer_of_site()
    k = np.tile(np.arange(L), params.n_monomers)
    pos = m * (L + d) + k
    dist = np.abs(pos[:, None] - pos[None, :])
    return LatticeLayout(pos.astype(int), dist.astype(int))


def coupling_matrix(layout: LatticeLayout, J: float, p: float, truncation=None, alternating=False) -> np.ndarray:
    """Power-law couplings J / d**p with optional distance cut."""
    if not J > 0:
        raise InvalidModelError("J must be positive")
    if p < 0:
        raise InvalidModelError("power-law exponent must be non-negative")
    d = np.asarray(layout.distances, dtype=float)
    off = ~np.eye(d.shape[0], dtype=bool)
    out = np.zeros_like(d)
    out[off] = J / d[off] ** p
    if truncation is not None:
        out[d > truncation] = 0.0
    if alternating:
        idx = np.arange(d.shape[0])
        out *= (-1.0) ** np.abs(idx[:, None] - idx[None, :])
    return out


def exciton_couplings_dimer(J: float, p: float, d: int):
    """(J_TT, J_SS, J_TS) between two-site monomers ``d`` coolants apart.

    J_ST equals -J_TS.
    """
    if d < 0:
        raise InvalidModelError("coolant count must be non-negative")
    near, mid, far = J / (1 + d) ** p, J / (2 + d) ** p, J / (3 + d) ** p
    j_tt = 0.5 * near + mid + 0.5 * far
    j_ss = -0.5 * near + mid - 0.5 * far
    j_ts = 0.5 * near - 0.5 * far
    return j_tt, j_ss, j_ts


def _monomer_block(L, J, p, alternating=False):
    idx = np.arange(L)
    dist = np.abs(idx[:, None] - idx[None, :])
    block = np.zeros((L, L))
    off = dist > 0
    block[off] = J / dist[off].astype(float) ** p
    if alternating:
        block *= (-1.0) ** dist
    return block


def _sign_fix(v):
    for x in v:
        if abs(x) > 1e-12:
            return v if x > 0 else -v
    return v


def monomer_exciton_basis(L: int, J: float, p: float, monomer_index: int = 0) -> ExcitonBasis:
    if not 2 <= L <= 6:
        raise InvalidModelError("monomer size must be between 2 and 6")
    if not p > 0:
        raise InvalidModelError("power-law exponent must be positive")
    w, v = np.linalg.eigh(_monomer_block(L, J, p))
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    v = np.column_stack([_sign_fix(v[:, k]) for k in range(L)])
    degenerate = bool(L > 1 and abs(w[0] - w[1]) < 1e-10 * max(1.0, abs(w[0])))
    wstate = np.ones(L) / np.sqrt(L)
    overlap = np.abs(v.T @ wstate) ** 2
    parity = np.sign(np.einsum("ik,ik->k", v[::-1], v)).astype(int)
    return ExcitonBasis(monomer_index, v, w, overlap, parity, degenerate)


def intermonomer_coupling_table(L: int, J: float, p: float, d: int, convention: str = "orthonormal") -> np.ndarray:
    """|J_AB| between donor (rows) and acceptor (columns) excitons.

    ``"orthonormal"`` conjugates the inter-monomer block with the
    energy-sorted orthonormal exciton vectors. ``"published"`` follows the
    tabulated convention: states grouped by mirror parity (each group by
    descending energy) and entry (D, A) scaled by n_D / n_A, where n_m is
    the norm of exciton m rescaled to unit amplitude on the first site.
    """
    basis = monomer_exciton_basis(L, J, p)
    params = ModelParams(n_monomers=2, sites_per_monomer=L, coolants_per_gap=d, J=J, p=p)
    jm = coupling_matrix(build_layout(params), J, p)
    inter = jm[:L, L:]
    u = basis.eigenvectors
    if convention == "orthonormal":
        return np.abs(u.T @ inter @ u)
    if convention != "published":
        raise ValueError(f"unknown convention {convention!r}")
    u = u[:, basis.parity_order()]
    scale = 1.0 / np.abs(u[0])
    return np.abs(u.T @ inter @ u) * scale[:, None] / scale[None, :]


def electronic_hamiltonian(params: ModelParams, realization: DisorderRealization | None = None) -> np.ndarray:
    """N x N electronic block: eps_j/2 on the diagonal plus J_ij."""
    eps = params.site_energies() if realization is None else np.asarray(realization.epsilon_values)
    jm = coupling_matrix(build_layout(params), params.J, params.p, params.coupling_truncation, params.alternating_J)
    return np.diag(eps / 2.0) + jm


def build_hamiltonian(params: ModelParams, realization: DisorderRealization | None = None) -> JointOperator:
    """Projector-form Hamiltonian on the joint space."""
    n, fock = params.n_sites, params.fock
    g = params.site_couplings() if realization is None else np.asarray(realization.g_values)
    if realization is not None and (len(g) != n or len(realization.epsilon_values) != n):
        raise InvalidModelError("disorder realization does not match the site count")
    h_el = electronic_hamiltonian(params, realization)
    a, ad = ladder_matrices(fock.dim)
    num = np.diag(np.arange(fock.dim, dtype=float))
    eye_k = np.eye(fock.dim)
    h = np.kron(h_el, eye_k) + params.omega * np.kron(np.eye(n), num)
    h += np.kron(np.diag(g / 2.0), a + ad)
    return JointOperator(h, True, n, fock.dim)


def sigma_z_to_projector(eps_sigma, g_sigma):
    """Map sigma^z-form site terms to projector-form coefficients.

    Within the single-excitation manifold
    sum_i (e_i/2) sz_i = sum_i e_i |i><i| - (sum_i e_i)/2, and the same
    identity holds for the vibronic term with (a + a^dag) attached. Returns
    ``(eps_proj, g_proj, energy_shift, uniform_force)`` such that the
    sigma^z form equals the projector form with ``eps_proj``/``g_proj``
    plus ``energy_shift`` + ``uniform_force`` (a + a^dag). Both residual
    terms vanish for schemes whose site values sum to zero.
    """
    e = np.asarray(eps_sigma, dtype=float)
    g = np.asarray(g_sigma, dtype=float)
    return 2.0 * e, 2.0 * g, -e.sum() / 2.0, -g.sum() / 2.0


_CHANNEL_G, _CHANNEL_EPS = 0, 1


def _normal_draws(seed, realization_index, channel, n):
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(realization_index), channel])
    return np.random.Generator(np.random.Philox(ss)).standard_normal(n)


def sample_disorder(params: ModelParams, sigma_g: float, sigma_eps: float, seed: int,
                    realization_index: int = 0) -> DisorderRealization:
    """Multiplicative Gaussian disorder on g_j and eps_j.

    Draws are keyed by (seed, realization_index, channel) and consumed in
    site order, so site j always receives the same variate for a given key
    regardless of how many realizations are drawn or in what order.
    """
    if sigma_g < 0 or sigma_eps < 0:
        raise InvalidModelError("disorder widths must be non-negative")
    n = params.n_sites
    g = params.site_couplings()
    e = params.site_energies()
    if sigma_g > 0:
        g = g * (1.0 + sigma_g * _normal_draws(seed, realization_index, _CHANNEL_G, n))
    if sigma_eps > 0:
        e = e * (1.0 + sigma_eps * _normal_draws(seed, realization_index, _CHANNEL_EPS, n))
    for arr in (g, e):
        arr.setflags(write=False)
    return DisorderRealization(g, e, int(seed), int(realization_index), float(sigma_g), float(sigma_eps))


def reorganization_energy(params: ModelParams) -> np.ndarray:
    return params.site_couplings() ** 2 / params.omega
