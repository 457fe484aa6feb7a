"""Sector basis enumeration and sparse operators for the V-type lattice.

A site state is (level, n_x, n_y) with level in {G, E1, E2}; its
excitation number is n_x + n_y + (level != G). The total excitation
operator N = sum_j N_j is exactly conserved, so the many-body basis is
enumerated sector by sector: restriction to fixed total N is exact, not
a truncation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

G, E1, E2 = 0, 1, 2
LEVEL_NAMES = ("g", "e1", "e2")

DROP_TOL = 1e-15
DEFAULT_DIM_CAP = 2_000_000


def site_excitation(state):
    """Excitation number of one site state (level, n_x, n_y)."""
    level, n_x, n_y = state
    return n_x + n_y + (1 if level != G else 0)


def site_states(n):
    """All site states with exactly n excitations, sorted by (level, n_x, n_y).

    There are 3n+1 of them: n+1 ground-level splits of n phonons plus n
    splits each for e1 and e2 (one quantum stored in the atom).
    """
    states = []
    for level in (G, E1, E2):
        n_ph = n - (1 if level != G else 0)
        if n_ph < 0:
            continue
        for n_x in range(n_ph + 1):
            states.append((level, n_x, n_ph - n_x))
    return sorted(states)


class SectorError(ValueError):
    """Basis request outside the supported sector constraints."""


@dataclass(frozen=True)
class SectorBasis:
    """Ordered many-body basis of one total-excitation sector.

    states are tuples of per-site (level, n_x, n_y) tuples in global
    lexicographic order (site 0 most significant); index maps a state
    back to its ordinal.
    """

    n_sites: int
    n_total: int
    states: tuple
    index: dict = field(repr=False)

    @property
    def dim(self):
        return len(self.states)

    def state_label(self, i):
        return " ".join(
            f"({LEVEL_NAMES[l]},{nx},{ny})" for l, nx, ny in self.states[i]
        )


def enumerate_sector(n_sites, n_total, dim_cap=DEFAULT_DIM_CAP):
    """Enumerate every configuration with sum_j n_j = n_total, lexicographically."""
    if n_sites < 1:
        raise SectorError("n_sites must be >= 1")
    if n_total < 0:
        raise SectorError("n_total must be >= 0")
    # per-site candidates with n <= budget, in (level, n_x, n_y) order
    candidates = {
        budget: sorted(
            s for n in range(budget + 1) for s in site_states(n)
        )
        for budget in range(n_total + 1)
    }
    states = []
    partial = [None] * n_sites

    def fill(site, budget):
        if site == n_sites - 1:
            for s in site_states(budget):
                partial[site] = s
                states.append(tuple(partial))
                if len(states) > dim_cap:
                    raise SectorError(
                        f"sector dimension exceeds cap {dim_cap}"
                    )
            return
        for s in candidates[budget]:
            partial[site] = s
            fill(site + 1, budget - site_excitation(s))

    fill(0, n_total)
    return SectorBasis(
        n_sites=n_sites,
        n_total=n_total,
        states=tuple(states),
        index={s: i for i, s in enumerate(states)},
    )


class SparseOperator:
    """Hermitian-friendly sparse operator on a SectorBasis.

    Backed by a CSR matrix; built from a coordinate list with duplicate
    accumulation and a 1e-15 drop tolerance.
    """

    def __init__(self, dim, mat):
        self.dim = dim
        self.mat = mat

    @classmethod
    def from_coo(cls, dim, rows, cols, vals, drop_tol=DROP_TOL):
        mat = sp.coo_matrix(
            (np.asarray(vals, dtype=complex), (rows, cols)), shape=(dim, dim)
        ).tocsr()
        mat.sum_duplicates()
        if mat.nnz:
            keep = np.abs(mat.data) > drop_tol
            if not keep.all():
                coo = mat.tocoo()
                keep = np.abs(coo.data) > drop_tol
                mat = sp.coo_matrix(
                    (coo.data[keep], (coo.row[keep], coo.col[keep])),
                    shape=(dim, dim),
                ).tocsr()
        return cls(dim, mat)

    def entries(self):
        """Yield (row, col, value) coordinate triplets."""
        coo = self.mat.tocoo()
        yield from zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())

    def dump(self, path):
        """Text dump 'row col re im', one entry per line, for cross-language diffing."""
        with open(path, "w", encoding="ascii") as fh:
            for r, c, v in self.entries():
                fh.write(f"{r} {c} {v.real!r} {v.imag!r}\n")

    def hermiticity_defect(self):
        diff = self.mat - self.mat.getH()
        return 0.0 if diff.nnz == 0 else np.max(np.abs(diff.data))

    def dense(self):
        return self.mat.toarray()

    def matvec(self, v):
        return self.mat @ v

    def expectation(self, v):
        return float(np.real(np.vdot(v, self.mat @ v)))

    def __add__(self, other):
        return SparseOperator(self.dim, self.mat + other.mat)

    def __mul__(self, scalar):
        return SparseOperator(self.dim, self.mat * scalar)

    __rmul__ = __mul__

    def commutator_norm(self, other):
        diff = self.mat @ other.mat - other.mat @ self.mat
        return 0.0 if diff.nnz == 0 else np.max(np.abs(diff.data))


def _build(basis, apply_state):
    """Assemble an operator from a per-basis-state generator of (target, amp)."""
    rows, cols, vals = [], [], []
    for col, state in enumerate(basis.states):
        for target, amp in apply_state(state):
            rows.append(basis.index[target])
            cols.append(col)
            vals.append(amp)
    return SparseOperator.from_coo(basis.dim, rows, cols, vals)


SITE_OPERATOR_KINDS = ("num_x", "num_y", "proj_e1", "proj_e2", "jc_x", "jc_y")


def build_site_operator(basis: SectorBasis, site, kind):
    """One-site operator embedded in the sector; kind in SITE_OPERATOR_KINDS.

    jc_x is a_x |e1><g| + h.c. and jc_y its e2/y counterpart; both conserve
    the site excitation N_j, as do the number and projector kinds.
    """
    if not 0 <= site < basis.n_sites:
        raise IndexError(f"site {site} out of range")
    if kind not in SITE_OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind: {kind}")

    def apply_state(state):
        level, n_x, n_y = state[site]
        if kind == "num_x":
            if n_x:
                yield state, complex(n_x)
        elif kind == "num_y":
            if n_y:
                yield state, complex(n_y)
        elif kind == "proj_e1":
            if level == E1:
                yield state, 1.0 + 0.0j
        elif kind == "proj_e2":
            if level == E2:
                yield state, 1.0 + 0.0j
        elif kind == "jc_x":
            if level == G and n_x:  # a_x |e1><g|
                new = state[:site] + ((E1, n_x - 1, n_y),) + state[site + 1 :]
                yield new, complex(np.sqrt(n_x))
            elif level == E1:  # a_x^dag |g><e1|
                new = state[:site] + ((G, n_x + 1, n_y),) + state[site + 1 :]
                yield new, complex(np.sqrt(n_x + 1))
        elif kind == "jc_y":
            if level == G and n_y:
                new = state[:site] + ((E2, n_x, n_y - 1),) + state[site + 1 :]
                yield new, complex(np.sqrt(n_y))
            elif level == E2:
                new = state[:site] + ((G, n_x, n_y + 1),) + state[site + 1 :]
                yield new, complex(np.sqrt(n_y + 1))

    return _build(basis, apply_state)


def build_hop_operator(basis: SectorBasis, j, k, species):
    """a_{b,j}^dag a_{b,k} + a_{b,j} a_{b,k}^dag for species b in {'x','y'}.

    Conserves total N but moves one excitation between sites j and k.
    """
    if j == k:
        raise ValueError("hop requires two distinct sites")
    if species not in ("x", "y"):
        raise ValueError(f"unknown species: {species}")
    pos = 1 if species == "x" else 2  # index of n_x / n_y inside the site tuple

    def _shift(state, site, delta):
        s = list(state[site])
        s[pos] += delta
        return state[:site] + (tuple(s),) + state[site + 1 :]

    def apply_state(state):
        n_j = state[j][pos]
        n_k = state[k][pos]
        if n_k:  # a_j^dag a_k
            amp = np.sqrt(n_k) * np.sqrt(n_j + 1)
            yield _shift(_shift(state, k, -1), j, +1), complex(amp)
        if n_j:  # a_j a_k^dag
            amp = np.sqrt(n_j) * np.sqrt(n_k + 1)
            yield _shift(_shift(state, j, -1), k, +1), complex(amp)

    return _build(basis, apply_state)


def total_excitation_operator(basis: SectorBasis):
    """N = sum_j (n_x + n_y + P_e1 + P_e2); diagonal and constant on a sector."""
    diag = np.array(
        [sum(site_excitation(s) for s in state) for state in basis.states],
        dtype=complex,
    )
    return SparseOperator(basis.dim, sp.diags(diag).tocsr())
