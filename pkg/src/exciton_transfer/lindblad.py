"""Master-equation time evolution, initial states and steady states."""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _kernels
from .errors import (ContractViolation, ConvergenceError, CutoffWarning,
                     DegenerateSteadyStateWarning, IntegrationFailure, InvalidModelError)
from .hilbert import JointOperator, displaced_fock_state, ladder_matrices, trace_phonons
from .model import DisorderRealization, ModelParams, build_hamiltonian, monomer_exciton_basis

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10
DEFAULT_RECORDS = 1001
CUTOFF_WARN = 1e-4
FAIL_TOL = 1e-6


def default_horizon(omega: float = 1.0) -> float:
    """t_sim with omega t_sim / 2 pi = 100."""
    return 200.0 * np.pi / omega


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray
    n_sites: int
    n_levels: int

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.n_sites * self.n_levels,) * 2:
            raise ContractViolation(f"density matrix shape {m.shape} does not match the joint space")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_ket(cls, psi, n_sites, n_levels) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), n_sites, n_levels)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def validate(self, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8):
        m = self.matrix
        herm = float(np.max(np.abs(m - m.conj().T)))
        if herm > herm_tol:
            raise ContractViolation(f"state is not Hermitian (deviation {herm:.2e})")
        tr = np.trace(m)
        if abs(tr - 1.0) > trace_tol:
            raise ContractViolation(f"state trace {tr.real:.10f} differs from 1")
        lam = self.min_eigenvalue()
        if lam < -eig_tol:
            raise ContractViolation(f"state has negative eigenvalue {lam:.2e}")
        return self

    def electronic(self) -> np.ndarray:
        return trace_phonons(self.matrix, self.n_sites, self.n_levels)

    def purity(self) -> float:
        return float(np.sum(np.abs(self.matrix) ** 2))


@dataclass(frozen=True)
class ChannelSet:
    """Cooling rate gamma (n+1), heating gamma n, and per-site dephasing."""

    gamma: float
    nbar: float = 0.0
    gamma_d: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "nbar", "gamma_d"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise InvalidModelError(f"{name} must be finite and non-negative")

    @classmethod
    def from_params(cls, params: ModelParams) -> "ChannelSet":
        return cls(params.gamma, params.nbar, params.gamma_d)


def _split_monomers(monomer_sizes, n_sites):
    if monomer_sizes is None:
        if n_sites % 2:
            raise InvalidModelError("give monomer_sizes for an odd site count")
        monomer_sizes = (n_sites // 2, n_sites // 2)
    sizes = tuple(int(s) for s in monomer_sizes)
    if sum(sizes) != n_sites or len(sizes) < 2:
        raise InvalidModelError("monomer sizes must partition the sites into at least two blocks")
    return sizes


@dataclass(frozen=True)
class Trajectory:
    """Recorded observables on a time grid.

    ``rho_el`` holds the phonon-traced electronic state at every record, so
    site, monomer and exciton populations and pair concurrences can all be
    derived after the fact.
    """

    times: np.ndarray
    rho_el: np.ndarray
    phonon_number: np.ndarray
    top_fock: np.ndarray
    purity: np.ndarray
    trace: np.ndarray
    final_state: DensityMatrix
    monomer_sizes: tuple
    stats: dict = field(default_factory=dict)

    @property
    def n_sites(self) -> int:
        return self.rho_el.shape[1]

    @property
    def n_monomers(self) -> int:
        return len(self.monomer_sizes)

    def site_populations(self) -> np.ndarray:
        return np.real(np.einsum("tii->ti", self.rho_el))

    def monomer_slices(self):
        edges = np.concatenate([[0], np.cumsum(self.monomer_sizes)])
        return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]

    def monomer_populations(self) -> np.ndarray:
        pops = self.site_populations()
        return np.column_stack([pops[:, s].sum(axis=1) for s in self.monomer_slices()])

    @property
    def P_D(self) -> np.ndarray:
        return self.monomer_populations()[:, 0]

    @property
    def P_A(self) -> np.ndarray:
        return self.monomer_populations()[:, -1]

    def P_I(self, k: int) -> np.ndarray:
        """Population of intermediate monomer k (1-based)."""
        if not 1 <= k <= self.n_monomers - 2:
            raise IndexError(f"no intermediate monomer {k}")
        return self.monomer_populations()[:, k]

    def state_population(self, vector, monomer: int = -1) -> np.ndarray:
        """<v|rho_el|v> for a vector on one monomer's sites (0-based, -1 = acceptor)."""
        s = self.monomer_slices()[monomer]
        v = np.zeros(self.n_sites, dtype=complex)
        v[s] = np.asarray(vector, dtype=complex)
        v /= np.linalg.norm(v)
        return np.real(np.einsum("i,tij,j->t", v.conj(), self.rho_el, v))

    def pair_concurrence(self, pair) -> np.ndarray:
        from .analysis import concurrence
        from .hilbert import ManifoldBasis, reduced_two_qubit_state
        basis = ManifoldBasis(self.n_sites)
        return np.array([concurrence(reduced_two_qubit_state(r, basis, pair)) for r in self.rho_el])

    def to_frame(self):
        """Table with the standard trajectory columns."""
        import pandas as pd
        cols = {"t": self.times, "P_D": self.P_D, "P_A": self.P_A}
        for k in range(1, self.n_monomers - 1):
            cols[f"P_I_{k}"] = self.P_I(k)
        L = self.monomer_sizes[-1]
        if L == 2:
            cols["P_TA"] = self.state_population([1, 1])
            cols["P_SA"] = self.state_population([1, -1])
        else:
            cols["P_E1A"] = self.state_population(monomer_exciton_basis(L, 1.0, 1.0).top)
            cols["P_WA"] = self.state_population(np.ones(L))
        cols["n_phonon"] = self.phonon_number
        cols["purity"] = self.purity
        n = self.n_sites
        cols["C12"] = self.pair_concurrence((1, 2))
        cols[f"C{n - 1}{n}"] = self.pair_concurrence((n - 1, n))
        return pd.DataFrame(cols)


def _structure(H: JointOperator, tol=1e-12):
    """Decompose H into (hel, gh, hph) if it has the model's block form."""
    n, k = H.n_sites, H.n_levels
    m = H.matrix
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m.imag)) > tol * scale:
        return None
    h4 = m.real.reshape(n, k, n, k)
    hph = np.array([h4[0, q, 0, q] - h4[0, 0, 0, 0] for q in range(k)])
    hel = np.array([[h4[i, 0, j, 0] for j in range(n)] for i in range(n)])
    hel[np.diag_indices(n)] = [h4[i, 0, i, 0] for i in range(n)]
    gh = np.array([h4[i, 0, i, 1] if k > 1 else 0.0 for i in range(n)])
    a, ad = ladder_matrices(k)
    rebuilt = np.kron(hel, np.eye(k)) + np.kron(np.eye(n), np.diag(hph)) + np.kron(np.diag(gh), a + ad)
    if np.max(np.abs(rebuilt - m.real)) > tol * scale:
        return None
    return hel, gh, hph


def _structured_params(hel, gh, hph, channels: ChannelSet):
    n, k = hel.shape[0], hph.shape[0]
    d = n * k
    g, nb = channels.gamma, channels.nbar
    q = np.tile(np.arange(k, dtype=float), n)
    site = np.repeat(np.arange(n), k)
    top = q == k - 1
    # diagonal of gamma(n+1) a^dag a + gamma n a a^dag with truncated products
    gdiag = g * (nb + 1) * q + g * nb * np.where(top, 0.0, q + 1)
    G = -0.5 * (gdiag[:, None] + gdiag[None, :])
    G -= 4.0 * channels.gamma_d * (site[:, None] != site[None, :])
    dn = np.where(top, 0.0, np.sqrt(g * (nb + 1) * (q + 1)))
    up = np.sqrt(g * nb * q)
    sq = np.sqrt(np.arange(k, dtype=float))
    return (np.ascontiguousarray(hel, dtype=float), np.asarray(gh, dtype=float),
            np.asarray(hph, dtype=float), sq, G, dn, up, np.empty((d, d)), np.empty((d, d)))


def jump_operators(n_sites: int, n_levels: int, channels: ChannelSet):
    """List of (rate, operator) pairs on the joint space."""
    a, ad = ladder_matrices(n_levels)
    eye_n = np.eye(n_sites)
    out = []
    if channels.gamma > 0:
        out.append((channels.gamma * (channels.nbar + 1), np.kron(eye_n, a)))
        if channels.nbar > 0:
            out.append((channels.gamma * channels.nbar, np.kron(eye_n, ad)))
    if channels.gamma_d > 0:
        for j in range(n_sites):
            sz = -np.ones(n_sites)
            sz[j] = 1.0
            out.append((channels.gamma_d, np.kron(np.diag(sz), np.eye(n_levels))))
    return out


def liouvillian(H: JointOperator, channels: ChannelSet) -> sp.csr_matrix:
    """Sparse generator acting on row-major vec(rho)."""
    d = H.dim
    h = sp.csr_matrix(H.matrix)
    eye = sp.identity(d, format="csr")
    L = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
    for rate, c in jump_operators(H.n_sites, H.n_levels, channels):
        c = sp.csr_matrix(c)
        cdc = (c.conj().T @ c).tocsr()
        L = L + rate * (sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T))
    return sp.csr_matrix(L)


def _csr_params(H, channels):
    L = liouvillian(H, channels)
    lr, li = L.real, L.imag
    M = sp.bmat([[lr, -li], [li, lr]], format="csr")
    M.sort_indices()
    return (M.indptr.astype(np.int64), M.indices.astype(np.int64), M.data.astype(float))


def _prepare(H: JointOperator, channels: ChannelSet, force_generic=False):
    parts = None if force_generic else _structure(H)
    if parts is not None:
        return _kernels.structured_rhs, _structured_params(*parts, channels), "structured"
    return _kernels.csr_rhs, _csr_params(H, channels), "generic"


def evolve(H: JointOperator, channels: ChannelSet, rho0: DensityMatrix, t_final: float,
           record_grid=None, *, monomer_sizes=None, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
           max_steps=10_000_000, force_generic=False, warn_cutoff=True) -> Trajectory:
    """Integrate the master equation and record observables.

    Parameters
    ----------
    record_grid : array, optional
        Strictly increasing times starting at 0 and ending at ``t_final``.
        Defaults to 1001 uniform points.
    monomer_sizes : tuple, optional
        Site counts per monomer used to label donor, intermediate and
        acceptor populations; defaults to two equal halves.
    force_generic : bool
        Skip the structured kernel and use the sparse generator.
    """
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    if (rho0.n_sites, rho0.n_levels) != (H.n_sites, H.n_levels):
        raise InvalidModelError("initial state and Hamiltonian live on different spaces")
    rho0.validate()
    grid = np.linspace(0.0, t_final, DEFAULT_RECORDS) if record_grid is None else np.asarray(record_grid, float)
    if grid[0] != 0.0 or not np.isclose(grid[-1], t_final) or np.any(np.diff(grid) <= 0):
        raise ValueError("record grid must increase strictly from 0 to t_final")
    sizes = _split_monomers(monomer_sizes, H.n_sites)
    n, k = H.n_sites, H.n_levels
    d = n * k
    rhs, params, kind = _prepare(H, channels, force_generic)

    y = np.concatenate([rho0.matrix.real.ravel(), rho0.matrix.imag.ravel()])
    work = np.zeros((8, y.size))
    rhs(params, y, work[0])
    ctrl = np.array([1e-4, 1.0, 0.0, 0.0])
    h = min(1e-2, grid[1] - grid[0])

    nrec = grid.size
    rho_el = np.empty((nrec, n, n), dtype=complex)
    nph = np.empty(nrec)
    top = np.empty(nrec)
    pur = np.empty(nrec)
    tr = np.empty(nrec)
    q = np.arange(k, dtype=float)
    eye = np.eye(d)
    tic = time.perf_counter()
    t = 0.0
    for r in range(nrec):
        if r > 0:
            t, h, status = _kernels.dp5_advance(rhs, params, y, t, grid[r], h, rtol, atol, work, ctrl, max_steps)
            if status:
                raise IntegrationFailure(
                    "step-size control failed" if status == 2 else "step budget exhausted",
                    {"t": t, "h": h, "nfev": int(ctrl[1])})
        A = y[: d * d].reshape(d, d)
        B = y[d * d:].reshape(d, d)
        diag = np.diag(A).reshape(n, k)
        tr[r] = diag.sum()
        nph[r] = diag.sum(axis=0) @ q
        top[r] = diag[:, -1].sum()
        pur[r] = float(np.dot(y, y))
        rho_el[r] = trace_phonons(A, n, k) + 1j * trace_phonons(B, n, k)
        if abs(tr[r] - 1.0) > FAIL_TOL:
            raise IntegrationFailure(f"trace drifted to {tr[r]:.10f} at t={t:.4g}",
                                     {"t": t, "trace": tr[r], "nfev": int(ctrl[1])})
        rho = A + 1j * B
        try:
            np.linalg.cholesky(rho + 1e-8 * eye)
        except np.linalg.LinAlgError:
            lam = np.linalg.eigvalsh(rho)[0]
            if lam < -FAIL_TOL:
                raise IntegrationFailure(f"state lost positivity (eigenvalue {lam:.2e}) at t={t:.4g}",
                                         {"t": t, "min_eigenvalue": lam, "nfev": int(ctrl[1])})
    wall = time.perf_counter() - tic
    if warn_cutoff and np.max(top) > CUTOFF_WARN:
        warnings.warn(f"top Fock level reached population {np.max(top):.2e}; raise the phonon cutoff",
                      CutoffWarning, stacklevel=2)
    final = DensityMatrix(A + 1j * B, n, k)
    stats = {"kernel": kind, "nfev": int(ctrl[1]), "accepted": int(ctrl[2]),
             "rejected": int(ctrl[3]), "wall_time": wall, "rtol": rtol, "atol": atol}
    for arr in (grid, rho_el, nph, top, pur, tr):
        arr.setflags(write=False)
    return Trajectory(grid, rho_el, nph, top, pur, tr, final, sizes, stats)


def nbar_to_temperature(nbar: float, omega: float = 1.0) -> float:
    """k_B T for a mode of frequency omega with mean occupation nbar."""
    if nbar <= 0:
        return 0.0
    return omega / np.log1p(1.0 / nbar)


def temperature_to_nbar(kT: float, omega: float = 1.0) -> float:
    if kT <= 0:
        return 0.0
    return 1.0 / np.expm1(omega / kT)


def donor_state(label: str, params: ModelParams) -> np.ndarray:
    """Electronic vector for a named initial state.

    ``triplet``/``singlet`` (two-site donors), ``E1`` (top donor exciton),
    ``W`` (uniform donor superposition) or ``product-k`` (site k, 1-based).
    """
    n, L = params.n_sites, params.sites_per_monomer
    v = np.zeros(n, dtype=complex)
    if label.startswith("product-"):
        k = int(label.split("-", 1)[1])
        if not 1 <= k <= n:
            raise IndexError(f"site {k} outside 1..{n}")
        v[k - 1] = 1.0
        return v
    if label in ("triplet", "singlet"):
        if L != 2:
            raise InvalidModelError("triplet/singlet states need two-site monomers")
        v[:2] = [1.0, 1.0 if label == "triplet" else -1.0]
    elif label == "W":
        v[:L] = 1.0
    elif label == "E1":
        v[:L] = monomer_exciton_basis(L, params.J, params.p).top
    else:
        raise InvalidModelError(f"unknown initial state {label!r}")
    return v / np.linalg.norm(v)


def thermal_initial_state(electronic, nbar: float, params: ModelParams,
                          realization: DisorderRealization | None = None) -> DensityMatrix:
    """Electronic state times a displaced thermal phonon mixture.

    The displacement is -<g>/(2 omega) with <g> the coupling averaged over
    the electronic state's site weights, which is exact for states living
    on sites with a common coupling.
    """
    psi = np.asarray(electronic, dtype=complex)
    if psi.shape != (params.n_sites,):
        raise InvalidModelError("electronic state length must equal the site count")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ContractViolation("electronic state must be normalized")
    if nbar < 0:
        raise InvalidModelError("nbar must be non-negative")
    g = params.site_couplings() if realization is None else np.asarray(realization.g_values)
    alpha = -float(np.abs(psi) ** 2 @ g) / (2.0 * params.omega)
    k = params.phonon_cutoff + 1
    if nbar == 0:
        phon = displaced_fock_state(alpha, 0, k)
        rho_ph = np.outer(phon, phon)
    else:
        ratio = nbar / (1.0 + nbar)
        tail = ratio ** k
        if tail > 1e-8:
            raise ConvergenceError(
                f"thermal weight beyond cutoff {params.phonon_cutoff} is {tail:.1e}; increase the phonon cutoff")
        rho_ph = np.zeros((k, k))
        for n in range(k):
            w = ratio ** n / (1.0 + nbar)
            v = displaced_fock_state(alpha, n, k)
            rho_ph += w * np.outer(v, v)
    lost = 1.0 - np.trace(rho_ph)
    if lost > 1e-8:
        warnings.warn(f"displaced phonon states lose {lost:.1e} norm at cutoff {params.phonon_cutoff}",
                      CutoffWarning, stacklevel=2)
    rho_ph /= np.trace(rho_ph)
    return DensityMatrix(np.kron(np.outer(psi, psi.conj()), rho_ph), params.n_sites, k)


def initial_state(label: str, params: ModelParams, realization=None) -> DensityMatrix:
    """Named initial state; ``thermal`` is the triplet (or E1) donor at the bath nbar."""
    if label == "thermal":
        base = "triplet" if params.sites_per_monomer == 2 else "E1"
        return thermal_initial_state(donor_state(base, params), params.nbar, params, realization)
    return thermal_initial_state(donor_state(label, params), 0.0, params, realization)


def _dynamics(params, label, realization=None, t_final=None, record_grid=None, **kw):
    H = build_hamiltonian(params, realization)
    rho0 = initial_state(label, params, realization)
    t_final = default_horizon(params.omega) if t_final is None else t_final
    sizes = (params.sites_per_monomer,) * params.n_monomers
    return evolve(H, ChannelSet.from_params(params), rho0, t_final, record_grid, monomer_sizes=sizes, **kw)


def simulate(params: ModelParams, init_state: str = "triplet", realization=None, t_final=None,
             record_grid=None, **kw) -> Trajectory:
    """Build the model, prepare a named initial state and evolve it."""
    return _dynamics(params, init_state, realization, t_final, record_grid, **kw)


DEFAULT_CUTOFF_LADDER = (1, 2, 4, 6, 8, 10, 15, 20, 25, 30, 40, 50, 60)


def cutoff_convergence(params: ModelParams, scenario: str = "triplet", tolerance: float = 1e-3,
                       cutoffs=DEFAULT_CUTOFF_LADDER, t_final=None, n_records=DEFAULT_RECORDS) -> int:
    """Smallest cutoff whose P_D and <a^dag a> curves match the next rung.

    Runs ``scenario`` (an initial-state label) at increasing cutoffs and
    returns the first cutoff whose maximum deviation from the following
    cutoff is below ``tolerance``.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    t_final = default_horizon(params.omega) if t_final is None else t_final
    grid = np.linspace(0.0, t_final, n_records)
    prev = None
    for c in cutoffs:
        p = params.replace(phonon_cutoff=int(c))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CutoffWarning)
                traj = simulate(p, scenario, t_final=t_final, record_grid=grid)
        except ConvergenceError:
            prev = None
            continue
        if prev is not None:
            dev = max(np.max(np.abs(traj.P_D - prev[1].P_D)),
                      np.max(np.abs(traj.phonon_number - prev[1].phonon_number)))
            if dev < tolerance:
                return prev[0]
        prev = (int(c), traj)
    raise ConvergenceError(f"no cutoff up to {cutoffs[-1]} met tolerance {tolerance}")


def steady_state(H: JointOperator, channels: ChannelSet, *, residual_tol=1e-10) -> DensityMatrix:
    """Stationary state from a direct sparse solve of the generator.

    When the stationary manifold is degenerate the solve is singular; a
    representative is then obtained by relaxing the maximally mixed state and
    a DegenerateSteadyStateWarning is emitted.
    """
    if not channels.gamma > 0:
        raise InvalidModelError("steady state requires gamma > 0")
    d = H.dim
    gen = liouvillian(H, channels)
    # two different normalisation rows: a unique fixed point gives the same
    # state from both, a degenerate kernel leaves each solve free to drift
    weights = np.linspace(1.0, 2.0, d)
    candidates = [_pinned_solve(gen, np.eye(d).ravel(), 0, d),
                  _pinned_solve(gen, np.diag(weights).ravel(), d * d - 1, d)]
    if all(c is not None for c in candidates):
        a, b = candidates
        res = max(np.max(np.abs(gen @ c.ravel())) for c in candidates)
        if (res < residual_tol and np.max(np.abs(a - b)) < 1e-8
                and np.linalg.eigvalsh(a)[0] > -1e-8):
            return DensityMatrix(a, H.n_sites, H.n_levels)
    warnings.warn("stationary state is not unique; returning the relaxed maximally mixed state",
                  DegenerateSteadyStateWarning, stacklevel=2)
    return _relax(H, channels, DensityMatrix(np.eye(d) / d, H.n_sites, H.n_levels))


def _pinned_solve(gen, functional, row, d):
    """Solve gen x = 0 with one equation replaced by functional . x = 1."""
    A = gen.tolil()
    A[row, :] = functional
    rhs = np.zeros(d * d, dtype=complex)
    rhs[row] = 1.0
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            x = splu(sp.csc_matrix(A)).solve(rhs)
    except (RuntimeError, Warning):
        return None
    if not np.all(np.isfinite(x)):
        return None
    rho = x.reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    return rho / tr if abs(tr) > 1e-12 else None


def _relax(H, channels, rho, tol=1e-10, max_rounds=20):
    span = 20.0 / channels.gamma
    sizes = (1, H.n_sites - 1)
    for _ in range(max_rounds):
        traj = evolve(H, channels, rho, span, np.linspace(0, span, 3), monomer_sizes=sizes, warn_cutoff=False)
        new = traj.final_state
        if np.max(np.abs(new.matrix - rho.matrix)) < tol:
            return new
        rho = new
    return rho
