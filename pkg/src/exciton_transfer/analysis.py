"""Rates, fits, golden-rule predictions, concurrence and resonance detection."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal, stats

from .errors import (ContractViolation, FitError, InvalidModelError, TruncationWarning,
                     UndefinedRateError, UnreliableScanWarning)
from .hilbert import displaced_fock_overlap, displacement
from .model import ModelParams, exciton_couplings_dimer


@dataclass(frozen=True)
class RateResult:
    k_T: float
    t_sim: float
    definition_tag: str


@dataclass(frozen=True)
class EquilibrationFit:
    Gamma: float
    P_SS: float
    ci95: tuple
    residual: float

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        return (1.0 - self.P_SS) * np.exp(-self.Gamma * t) + self.P_SS


@dataclass(frozen=True)
class FgrPrediction:
    total: float
    per_channel: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ResonancePeak:
    epsilon: float
    k_T: float
    classification: str


def _series(traj_or_t, values=None, use_acceptor_complement=False):
    if values is not None:
        return np.asarray(traj_or_t, float), np.asarray(values, float)
    P = 1.0 - traj_or_t.P_A if use_acceptor_complement else traj_or_t.P_D
    return np.asarray(traj_or_t.times, float), np.asarray(P, float)


def transfer_rate(traj, use_acceptor_complement: bool = False, *, times=None, population=None) -> RateResult:
    """Integral-ratio transfer rate with the finite-horizon correction.

    k_T = int P dt / int t P dt - 2 / t_sim using trapezoid quadrature on the
    record grid. Pass ``times`` and ``population`` instead of a trajectory to
    analyze raw data.
    """
    if traj is None:
        t, P = np.asarray(times, float), np.asarray(population, float)
    else:
        t, P = _series(traj, use_acceptor_complement=use_acceptor_complement)
    if t.size < 100:
        raise ValueError("transfer rate needs at least 100 record points")
    if t[0] != 0.0:
        raise ValueError("record grid must start at t = 0")
    t_sim = float(t[-1])
    num = np.trapezoid(P, t)
    den = np.trapezoid(t * P, t)
    if den == 0.0:
        raise UndefinedRateError("population integrates to zero; rate undefined")
    tag = "one-minus-acceptor" if use_acceptor_complement else "donor-population"
    return RateResult(float(num / den - 2.0 / t_sim), t_sim, tag)


def _relax_model(t, gamma, pss):
    return (1.0 - pss) * np.exp(-gamma * t) + pss


def fit_equilibration(traj, *, times=None, population=None, use_acceptor_complement=False) -> EquilibrationFit:
    """Least-squares fit of P(t) = (1 - P_SS) exp(-Gamma t) + P_SS.

    Confidence half-widths use the Student t quantile on the covariance
    returned by the fit.
    """
    if traj is None:
        t, P = np.asarray(times, float), np.asarray(population, float)
    else:
        t, P = _series(traj, use_acceptor_complement=use_acceptor_complement)
    if np.ptp(P) < 1e-9:
        raise FitError("population is constant; relaxation rate is indeterminate",
                       {"range": float(np.ptp(P))})
    pss0 = float(np.clip(P[-1], 0.0, 0.999))
    # initial rate from the 1/e crossing of the normalized decay
    norm = (P - pss0) / max(P[0] - pss0, 1e-12)
    below = np.nonzero(norm < np.exp(-1))[0]
    g0 = 1.0 / t[below[0]] if below.size and t[below[0]] > 0 else 1.0 / t[-1]
    try:
        popt, pcov = optimize.curve_fit(_relax_model, t, P, p0=(g0, pss0),
                                        bounds=([0.0, 0.0], [np.inf, 1.0]), maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"equilibration fit did not converge: {exc}", {"p0": (g0, pss0)}) from exc
    resid = P - _relax_model(t, *popt)
    rms = float(np.sqrt(np.mean(resid ** 2)))
    if not np.all(np.isfinite(pcov)) or popt[0] <= 0:
        raise FitError("equilibration fit is degenerate", {"params": tuple(popt), "rms": rms})
    q = stats.t.ppf(0.975, max(t.size - 2, 1))
    ci = tuple(float(x) for x in q * np.sqrt(np.diag(pcov)))
    return EquilibrationFit(float(popt[0]), float(popt[1]), ci, rms)


def _exciton_energy(eps_half, g, omega, n, shift):
    return n * omega - g ** 2 / (4.0 * omega) + eps_half + shift


def fgr_rate(params: ModelParams, initial_exciton: str = "T", n_max: int = 30) -> FgrPrediction:
    """Golden-rule transfer rate from a donor exciton to both acceptor excitons.

    Lorentzian-broadened (width gamma) and weighted by Poisson Franck-Condon
    factors; triplet levels sit at +J and singlet levels at -J.
    """
    if params.n_monomers != 2 or params.sites_per_monomer != 2:
        raise InvalidModelError("golden-rule rates are defined for the two-site dimer")
    eps = params.site_energies()
    g = params.site_couplings()
    if not (np.allclose(eps[:2], eps[0]) and np.allclose(eps[2:], eps[2])
            and np.allclose(g[:2], g[0]) and np.allclose(g[2:], g[2])):
        raise InvalidModelError("golden-rule rates need uniform energies and couplings per monomer")
    if initial_exciton not in ("T", "S"):
        raise ValueError("initial exciton must be 'T' or 'S'")
    J_tt, J_ss, J_ts = exciton_couplings_dimer(params.J, params.p, params.coolants_per_gap)
    coupling = {("T", "T"): J_tt, ("S", "S"): J_ss, ("T", "S"): J_ts, ("S", "T"): -J_ts}
    J_intra = params.J  # nearest-neighbour distance 1
    shift = {"T": J_intra, "S": -J_intra}
    w, gam = params.omega, params.gamma
    a_i, a_f = displacement(g[0], w), displacement(g[2], w)
    nt = (a_i - a_f) ** 2
    tail = 1.0 - sum(displaced_fock_overlap(a_i, a_f, n) for n in range(n_max + 1))
    if tail > 1e-8:
        warnings.warn(f"Franck-Condon tail beyond n={n_max} is {tail:.1e}", TruncationWarning, stacklevel=2)
    e_i = _exciton_energy(eps[0] / 2.0, g[0], w, 0, shift[initial_exciton])
    per = {}
    for f in ("T", "S"):
        jif = coupling[(initial_exciton, f)]
        for n in range(n_max + 1):
            dE = _exciton_energy(eps[2] / 2.0, g[2], w, n, shift[f]) - e_i
            fc = displaced_fock_overlap(a_i, a_f, n)
            per[(initial_exciton, f, n)] = gam * jif ** 2 / (dE ** 2 + gam ** 2 / 4.0) * fc
    return FgrPrediction(float(sum(per.values())), per)


_SY2 = np.array([[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]], dtype=complex)


def concurrence(rho_pair) -> float:
    """Wootters concurrence of a two-qubit density matrix."""
    rho = np.asarray(rho_pair, dtype=complex)
    if rho.shape != (4, 4):
        raise ContractViolation("concurrence needs a 4x4 density matrix")
    rho = 0.5 * (rho + rho.conj().T)
    lam, vec = np.linalg.eigh(rho)
    if lam[0] < -1e-8:
        raise ContractViolation(f"two-qubit state has negative eigenvalue {lam[0]:.2e}")
    sqrt_rho = (vec * np.sqrt(np.clip(lam, 0.0, None))) @ vec.conj().T
    # rho tilde-rho has the same spectrum as M M^dagger with M below, so the
    # square roots are singular values; this avoids sqrt of roundoff
    mu = np.linalg.svd(sqrt_rho @ _SY2 @ sqrt_rho.conj(), compute_uv=False)
    return float(max(0.0, mu[0] - mu[1] - mu[2] - mu[3]))


def resonance_scan(epsilon, k_T, *, J=None, omega=1.0, gamma=None, prominence=0.05,
                   initial="T", tolerance=None) -> list:
    """Locate and label transfer-rate resonances in a uniform epsilon sweep.

    Peaks need a prominence of at least ``prominence`` times the sweep
    maximum. A peak within ``tolerance`` (default one grid step) of
    n omega is labelled ``"{initial}->{initial}"``, of n omega - 2J
    ``"T->S"`` and of n omega + 2J ``"S->T"``; otherwise ``"unclassified"``.
    """
    eps = np.asarray(epsilon, float)
    k = np.asarray(k_T, float)
    if eps.size < 3:
        return []
    step = np.diff(eps)
    if not np.allclose(step, step[0], rtol=1e-6, atol=1e-12):
        raise ValueError("resonance scan needs a uniform grid")
    step = float(step[0])
    if gamma is not None and step > gamma:
        warnings.warn(f"grid step {step:g} exceeds the linewidth {gamma:g}", UnreliableScanWarning, stacklevel=2)
    tol = step * (1.0 + 1e-9) if tolerance is None else tolerance
    idx, _ = signal.find_peaks(k, prominence=prominence * np.max(k))
    offsets = {f"{initial}->{initial}": 0.0}
    if J is not None:
        offsets["T->S"] = -2.0 * J
        offsets["S->T"] = 2.0 * J
    out = []
    for i in idx:
        label, best = "unclassified", np.inf
        for name, off in offsets.items():
            n = np.round((eps[i] - off) / omega)
            dist = abs(eps[i] - (n * omega + off))
            if n >= 0 and dist <= tol and dist < best:
                label, best = name, dist
        out.append(ResonancePeak(float(eps[i]), float(k[i]), label))
    return out
