"""Exact time evolution and full-vs-effective comparison.

Evolution is unitary: dense eigendecomposition below a dimension
threshold, Lanczos propagation with adaptive substepping above it.
States are tracked through squared overlaps with dressed product
labels (full model) or spin product labels (effective model), which
makes the two sides directly comparable trace by trace.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .crystal import local_detunings
from .fock import SectorBasis, SectorError, SparseOperator
from .jchv import MANIFOLD_LABELS, build_full, site_manifold_states
from .params import DriveParams, SimConfig
from .superexchange import (
    SpinHalfModel,
    SpinOneModel,
    build_spin_hamiltonian,
    spin_half_general,
    spin_one_general,
    spin_product_index,
)

DENSE_THRESHOLD = 2000
KRYLOV_DIM = 30
KRYLOV_LOCAL_TOL = 1e-9
HERMITICITY_TOL = 1e-10

_LABEL_EXCITATION = {"up": 1, "down": 1, "1": 2, "0": 2, "-1": 2}


@dataclass(frozen=True)
class EvolutionResult:
    """Population traces of one trajectory plus conservation diagnostics."""

    times: np.ndarray  # ms
    labels: tuple
    populations: dict  # label tuple -> array over times
    norm_drift: float  # max |<psi|psi> - 1|
    energy_drift: float  # max relative drift of <psi|H|psi>
    final_state: np.ndarray

    def population_matrix(self):
        return np.array([self.populations[lab] for lab in self.labels])


@dataclass(frozen=True)
class ComparisonReport:
    """Per-label deviation between full-model and effective-model traces."""

    times: np.ndarray
    labels: tuple
    full: EvolutionResult
    effective: EvolutionResult
    max_abs_deviation: dict
    l2_deviation: dict
    parameters: dict = field(default_factory=dict)

    @property
    def overall_max_deviation(self):
        return max(self.max_abs_deviation.values()) if self.max_abs_deviation else 0.0


def dressed_product_state(labels, drive: DriveParams, basis: SectorBasis,
                          det_x=None, det_y=None):
    """Tensor product of single-site dressed states in the sector basis.

    det_x/det_y give per-site phonon detunings; None means the bare
    drive detuning on every site. Labels may mix manifolds as long as
    the summed excitation matches the sector.
    """
    n_sites = basis.n_sites
    if len(labels) != n_sites:
        raise SectorError(
            f"{len(labels)} labels for {n_sites} sites"
        )
    total = sum(_LABEL_EXCITATION[lab] for lab in labels)
    if total != basis.n_total:
        raise SectorError(
            f"labels carry {total} excitations, sector holds {basis.n_total}"
        )
    if det_x is None:
        det_x = np.full(n_sites, drive.Delta)
    if det_y is None:
        det_y = np.full(n_sites, drive.Delta)

    amplitudes = {(): 1.0}
    for j, lab in enumerate(labels):
        n_j = _LABEL_EXCITATION[lab]
        _, vectors = site_manifold_states(n_j, det_x[j], det_y[j], drive)
        site_vec = vectors[lab]
        amplitudes = {
            prefix + (state,): amp * coeff
            for prefix, amp in amplitudes.items()
            for state, coeff in site_vec.items()
        }
    psi = np.zeros(basis.dim, dtype=complex)
    for full_state, amp in amplitudes.items():
        psi[basis.index[full_state]] = amp
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-12:
        raise SectorError(f"product state norm {norm} != 1; basis incomplete?")
    return psi


def _lanczos_basis(matvec, psi, m):
    """Lanczos tridiagonalization with double full reorthogonalization.

    Returns (alpha, beta, basis rows, next beta). The next beta feeds
    the a-posteriori error estimate; near-zero means happy breakdown.
    """
    dim = psi.shape[0]
    k_max = min(m, dim)
    rows = np.empty((k_max, dim), dtype=complex)
    alpha = np.empty(k_max)
    betas = []
    rows[0] = psi
    b_next = 0.0
    k_used = k_max
    for j in range(k_max):
        w = matvec(rows[j])
        alpha[j] = float(np.real(np.vdot(rows[j], w)))
        w = w - alpha[j] * rows[j]
        if j > 0:
            w = w - betas[j - 1] * rows[j - 1]
        for _ in range(2):
            w = w - (rows[: j + 1].conj() @ w) @ rows[: j + 1]
        b_next = float(np.linalg.norm(w))
        scale = max(np.max(np.abs(alpha[: j + 1])), 1e-30)
        if j == k_max - 1 or b_next < 1e-13 * scale:
            k_used = j + 1
            break
        betas.append(b_next)
        rows[j + 1] = w / b_next
    return alpha[:k_used], np.array(betas[: k_used - 1]), rows[:k_used], b_next


def _krylov_propagate(matvec, psi, dt_total, m, tol):
    """psi -> exp(-i H dt_total) psi, halving substeps until the
    residual estimate beta_next * |last Krylov coefficient| clears tol."""
    if dt_total == 0.0:
        return psi
    t_done = 0.0
    while t_done < dt_total * (1.0 - 1e-14):
        alpha, beta, rows, b_next = _lanczos_basis(matvec, psi, m)
        if len(alpha) == 1:
            ew = alpha.copy()
            eu = np.ones((1, 1))
        else:
            ew, eu = scipy.linalg.eigh_tridiagonal(alpha, beta)
        dt = dt_total - t_done
        for _ in range(80):
            y = eu @ (np.exp(-1j * ew * dt) * eu[0])
            if b_next * abs(y[-1]) <= tol:
                break
            dt *= 0.5
        psi = y @ rows
        t_done += dt
    return psi


def evolve(h: SparseOperator, psi0, times, label_states=None,
           dense_threshold=DENSE_THRESHOLD, krylov_dim=KRYLOV_DIM,
           local_tol=KRYLOV_LOCAL_TOL, track_energy=True):
    """Propagate psi0 over the time grid and record label populations.

    label_states maps label -> dense vector; populations are squared
    overlaps. Raises ValueError on non-Hermitian input or a bad grid.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("times must be a non-empty 1d grid")
    if times[0] < 0.0 or np.any(np.diff(times) < 0.0):
        raise ValueError("times must ascend from 0")
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-8:
        raise ValueError("psi0 is not normalized")
    scale = np.max(np.abs(h.mat.data)) if h.mat.nnz else 0.0
    if h.hermiticity_defect() > HERMITICITY_TOL * max(1.0, scale):
        raise ValueError("Hamiltonian fails the Hermiticity pre-check")

    label_states = dict(label_states or {})
    labels = tuple(label_states)
    if labels:
        overlap_rows = np.array([label_states[lab].conj() for lab in labels])
    else:
        overlap_rows = np.zeros((0, h.dim))

    if h.dim < dense_threshold:
        w, v = scipy.linalg.eigh(h.dense())
        c0 = v.conj().T @ psi0
        phases = np.exp(-1j * np.outer(times, w))
        psis = (phases * c0) @ v.T  # row i is v @ (phases[i] * c0)
    else:
        matvec = h.matvec
        psis = np.empty((len(times), h.dim), dtype=complex)
        psi = psi0.copy()
        t_prev = 0.0
        for i, t in enumerate(times):
            psi = _krylov_propagate(matvec, psi, t - t_prev, krylov_dim, local_tol)
            psis[i] = psi
            t_prev = t

    norms = np.einsum("ij,ij->i", psis.conj(), psis).real
    norm_drift = float(np.max(np.abs(norms - 1.0)))
    pops = np.abs(psis @ overlap_rows.T) ** 2 if labels else np.zeros((len(times), 0))

    energy_drift = 0.0
    if track_energy:
        energies = np.einsum("ij,ij->i", psis.conj(), (h.mat @ psis.T).T).real
        e0 = energies[0]
        energy_drift = float(
            np.max(np.abs(energies - e0)) / max(abs(e0), scale, 1e-30)
        )

    populations = {lab: pops[:, i] for i, lab in enumerate(labels)}
    return EvolutionResult(
        times=times,
        labels=labels,
        populations=populations,
        norm_drift=norm_drift,
        energy_drift=energy_drift,
        final_state=psis[-1],
    )


def estimate_period(model, initial_labels):
    """Superexchange transfer period of the effective model.

    Taken as pi over the dominant eigen-gap, the gap weighted by the
    initial state's overlaps; this is the pi/(4 K_xy) transfer time in
    the two-site flip-flop case, half a full population cycle. None if
    the initial state is stationary."""
    manifold = "half" if isinstance(model, SpinHalfModel) else "one"
    h = build_spin_hamiltonian(model).dense()
    w, v = scipy.linalg.eigh(h)
    idx = spin_product_index(initial_labels, manifold)
    weights = np.abs(v[idx]) ** 2
    gap_tol = max(1e-12 * np.max(np.abs(w)), 1e-30)
    best = None
    for a in range(len(w)):
        if weights[a] < 1e-12:
            continue
        for b in range(a + 1, len(w)):
            if weights[b] < 1e-12:
                continue
            gap = abs(w[b] - w[a])
            if gap <= gap_tol:
                continue
            weight = weights[a] * weights[b]
            if best is None or weight > best[0]:
                best = (weight, gap)
    if best is None:
        return None
    return np.pi / best[1]


def default_times(model, initial_labels, n_steps=400, t_final=None, n_periods=2.0):
    """Output grid covering n_periods of the dominant oscillation."""
    if t_final is None:
        period = estimate_period(model, initial_labels)
        t_final = n_periods * period if period is not None else 1.0
    return np.linspace(0.0, t_final, n_steps)


def _tracked_labels(manifold, n_sites, initial_labels, cap=512):
    single = MANIFOLD_LABELS[1 if manifold == "half" else 2]
    if len(single) ** n_sites <= cap:
        labels = [()]
        for _ in range(n_sites):
            labels = [pre + (s,) for pre in labels for s in single]
        return tuple(labels)
    return (tuple(initial_labels),)


def compare_full_vs_effective(cfg: SimConfig, initial_labels=None, times=None,
                              geometry=None, tracked=None):
    """Run matched full-sector and effective-spin evolutions.

    The full model evolves in the fixed total-excitation sector with
    dressed product states as tracked observables; the effective model
    evolves the coupling-table Hamiltonian over spin product states.
    """
    from .crystal import geometry_from_config

    if geometry is None:
        geometry = geometry_from_config(cfg)
    drive = cfg.drive
    n_per_site = cfg.run.n_excitations
    manifold = "half" if n_per_site == 1 else "one"
    if initial_labels is None:
        initial_labels = cfg.run.initial_state
    if initial_labels is None:
        raise SectorError("no initial state given (config key initial_state)")
    labels0 = tuple(initial_labels)
    for lab in labels0:
        if _LABEL_EXCITATION.get(lab) != n_per_site:
            raise SectorError(f"label {lab!r} does not live in the "
                              f"{n_per_site}-excitation manifold")

    if manifold == "half":
        model = spin_half_general(geometry, drive, homogeneous=cfg.homogeneous)
    else:
        model = spin_one_general(geometry, drive, homogeneous=cfg.homogeneous)

    if times is None:
        times = default_times(model, labels0, n_steps=cfg.run.n_steps,
                              t_final=cfg.run.t_final_ms)
    times = np.asarray(times, dtype=float)

    if tracked is None:
        tracked = _tracked_labels(manifold, geometry.n_ions, labels0)

    # full model in the conserved sector
    from .jchv import sector_basis_for

    basis = sector_basis_for(geometry.n_ions, n_per_site, dim_cap=cfg.dim_cap)
    h_full = build_full(basis, geometry, drive, homogeneous=cfg.homogeneous)
    det_x, det_y = local_detunings(geometry, drive, homogeneous=cfg.homogeneous)
    psi0_full = dressed_product_state(labels0, drive, basis, det_x, det_y)
    full_labels = {
        lab: dressed_product_state(lab, drive, basis, det_x, det_y)
        for lab in tracked
    }

    # effective model on the spin product space
    h_eff = build_spin_hamiltonian(model)
    dim_eff = h_eff.dim
    psi0_eff = np.zeros(dim_eff, dtype=complex)
    psi0_eff[spin_product_index(labels0, manifold)] = 1.0
    eff_labels = {}
    for lab in tracked:
        vec = np.zeros(dim_eff, dtype=complex)
        vec[spin_product_index(lab, manifold)] = 1.0
        eff_labels[lab] = vec

    with ThreadPoolExecutor(max_workers=2) as pool:
        fut_full = pool.submit(evolve, h_full, psi0_full, times, full_labels)
        fut_eff = pool.submit(evolve, h_eff, psi0_eff, times, eff_labels)
        res_full = fut_full.result()
        res_eff = fut_eff.result()

    max_dev = {}
    l2_dev = {}
    for lab in tracked:
        diff = res_full.populations[lab] - res_eff.populations[lab]
        max_dev[lab] = float(np.max(np.abs(diff)))
        l2_dev[lab] = float(np.sqrt(np.mean(diff**2)))
    parameters = {
        "n_ions": geometry.n_ions,
        "manifold": manifold,
        "g_x_khz": drive.g_x / (2.0 * np.pi),
        "g_y_khz": drive.g_y / (2.0 * np.pi),
        "delta_khz": drive.delta / (2.0 * np.pi),
        "homogeneous": cfg.homogeneous,
        "sector_dim": basis.dim,
        "initial_state": ",".join(labels0),
        "t_final_ms": float(times[-1]),
        "n_steps": len(times),
    }
    return ComparisonReport(
        times=times,
        labels=tuple(tracked),
        full=res_full,
        effective=res_eff,
        max_abs_deviation=max_dev,
        l2_deviation=l2_dev,
        parameters=parameters,
    )
