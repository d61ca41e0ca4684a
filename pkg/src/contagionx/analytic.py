"""Generating-function model for the mean default-cluster size.

Cells are the ``(k, l)`` degree classes of InOut banks: ``k`` out-links into
InOut, ``l`` out-links into In. Following a vulnerable IO->In link ends a branch;
following a vulnerable IO->IO link into a ``(u, t)`` bank continues through its
``u`` and ``t`` links. Differentiating the generating functions at ``x = y = 1``
gives the linear system ``(I - A) dM = gamma`` and the mean size

    S = sum_{k,l} P_IO(k,l) [k dM_{k,l} + l omega_{k,l}].
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import InputValidationError, NumericalError, PercolativePhaseError
from .topology import ConditionalTables

DENSE_LIMIT = 2000
SUBCRITICAL_MARGIN = 1e-9
RESIDUAL_TOL = 1e-10


@dataclass
class AnalyticInputs:
    P_IO: dict
    P_IO_In: dict
    P_IO_IO: dict
    v_IO_In: dict
    v_IO_IO: dict
    index: list = field(default_factory=list)
    unreachable: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("P_IO_In", "P_IO_IO"):
            for cell, row in getattr(self, name).items():
                if any(p < 0 for p in row.values()):
                    raise InputValidationError(f"{name}[{cell}] has a negative probability")
        if any(p < 0 for p in self.P_IO.values()):
            raise InputValidationError("P_IO has a negative probability")
        for name in ("v_IO_In", "v_IO_IO"):
            bad = [k for k, v in getattr(self, name).items() if not 0.0 <= v <= 1.0]
            if bad:
                raise InputValidationError(f"{name} values outside [0, 1] at {bad[:3]}")
        if not self.index:
            self.index, self.unreachable = _reachable_index(self)
        if len(set(self.index)) != len(self.index):
            raise InputValidationError("duplicate cells in index")

    @classmethod
    def from_tables(cls, tables: ConditionalTables) -> "AnalyticInputs":
        return cls(dict(tables.P_IO), {c: dict(r) for c, r in tables.P_IO_In.items()},
                   {c: dict(r) for c, r in tables.P_IO_IO.items()},
                   dict(tables.v_IO_In), dict(tables.v_IO_IO))

    def v_in(self, cell, r) -> float:
        return self.v_IO_In.get((cell, r), 0.0)

    def v_io(self, cell, utr) -> float:
        return self.v_IO_IO.get((cell, utr), 0.0)


def _reachable_index(inputs: AnalyticInputs):
    """Cells with P_IO > 0 plus every (u, t) reachable from them over IO->IO rows."""
    start = sorted(c for c, p in inputs.P_IO.items() if p > 0)
    seen = set(start)
    queue = deque(start)
    while queue:
        cell = queue.popleft()
        for (u, t, _r), p in inputs.P_IO_IO.get(cell, {}).items():
            if p > 0 and (u, t) not in seen:
                seen.add((u, t))
                queue.append((u, t))
    rows = set(inputs.P_IO_In) | set(inputs.P_IO_IO)
    return sorted(seen), sorted(rows - seen)


@dataclass
class AnalyticSolution:
    index: list
    A_matrix: object
    gamma: np.ndarray
    omega_sums: np.ndarray
    lambda_max: float
    row_sum_max: float
    dM: np.ndarray
    S: float
    subcritical: bool


def build_system(inputs: AnalyticInputs):
    """Return ``(A, gamma, omega_sums)`` over ``inputs.index``.

    ``A[(k,l),(u,t)] = sum_r u P(u,t,r|k,l) v(u,t,r|k,l)``; ``omega`` is the
    vulnerable share of IO->In links per source cell; ``gamma`` collects the
    one-step terms of the IO->IO derivative. Absent cells contribute zero.
    """
    pos = {c: i for i, c in enumerate(inputs.index)}
    n = len(pos)
    omega = np.zeros(n)
    for cell, i in pos.items():
        omega[i] = sum(p * inputs.v_in(cell, r) for r, p in inputs.P_IO_In.get(cell, {}).items())
    rows, cols, vals = [], [], []
    gamma = np.zeros(n)
    for cell, i in pos.items():
        for (u, t, r), p in inputs.P_IO_IO.get(cell, {}).items():
            pv = p * inputs.v_io(cell, (u, t, r))
            if pv == 0.0:
                continue
            j = pos[(u, t)]
            gamma[i] += pv * (1.0 + t * omega[j])
            if u:
                rows.append(i)
                cols.append(j)
                vals.append(u * pv)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    if n <= DENSE_LIMIT:
        A = A.toarray()
    return A, gamma, omega


@dataclass(frozen=True)
class SpectralCheck:
    lambda_max: float
    row_sum_max: float
    subcritical: bool
    iterations: int


def _perron_block(B, tol, max_iter, rng):
    """Power iteration on ``B + I`` for an irreducible nonnegative block.

    Stops once the Collatz-Wielandt bounds ``min (Bx)_i / x_i <= lambda <= max (Bx)_i / x_i``
    are within ``tol`` of each other, so the returned value is accurate to ``tol``.
    """
    n = B.shape[0]
    x = rng.uniform(0.5, 1.5, size=n)
    x /= x.sum()
    for it in range(1, max_iter + 1):
        Bx = B @ x
        ratio = Bx / x
        lo, hi = float(ratio.min()), float(ratio.max())
        if hi - lo < tol:
            return max(0.5 * (lo + hi), 0.0), it
        y = Bx + x
        x = y / y.sum()
    raise NumericalError(f"power iteration did not converge in {max_iter} iterations", max_iter)


def spectral_check(A, tol: float = 1e-10, max_iter: int = 10_000, seed: int = 0) -> SpectralCheck:
    """Perron root of a nonnegative matrix by power iteration.

    The spectrum of a reducible matrix is the union of the spectra of its
    irreducible diagonal blocks (strong components of the sparsity graph), so
    each block is iterated separately; on an irreducible block ``B + I`` is
    primitive and the iteration converges geometrically, also for periodic ``B``.
    """
    n = A.shape[0]
    if n == 0:
        return SpectralCheck(0.0, 0.0, True, 0)
    S = sp.csr_matrix(A)
    row_sum_max = float(np.max(np.asarray(S.sum(axis=1)).ravel()))
    n_comp, comp = connected_components(S, directed=True, connection="strong")
    rng = np.random.default_rng(seed)
    lam, iterations = 0.0, 0
    diag = S.diagonal()
    for c in range(n_comp):
        members = np.flatnonzero(comp == c)
        if len(members) == 1:
            lam = max(lam, float(diag[members[0]]))
            continue
        block = S[members][:, members]
        value, its = _perron_block(block, tol, max_iter, rng)
        lam = max(lam, value)
        iterations += its
    return SpectralCheck(lam, row_sum_max, lam < 1.0 - SUBCRITICAL_MARGIN, iterations)


def _solve(A, gamma):
    n = len(gamma)
    if n == 0:
        return gamma.copy()
    if sp.issparse(A):
        M = sp.identity(n, format="csr") - A
        dM, info = spla.gmres(M, gamma, rtol=1e-14, atol=RESIDUAL_TOL / 10, restart=min(n, 200),
                              maxiter=10_000)
        if info != 0:
            raise NumericalError(f"iterative solve failed (info={info})", info)
    else:
        M = np.eye(n) - A
        try:
            dM = np.linalg.solve(M, gamma)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular I - A: {exc}") from None
    resid = float(np.linalg.norm(M @ dM - gamma))
    if not np.isfinite(resid) or resid >= RESIDUAL_TOL:
        raise NumericalError(f"linear solve residual {resid:.3g} above {RESIDUAL_TOL}")
    return dM


def mean_cluster_size(inputs: AnalyticInputs) -> AnalyticSolution:
    A, gamma, omega = build_system(inputs)
    check = spectral_check(A)
    if not check.subcritical:
        raise PercolativePhaseError(check.lambda_max, check.row_sum_max)
    dM = _solve(A, gamma)
    pos = {c: i for i, c in enumerate(inputs.index)}
    S = 0.0
    for (k, l), p in inputs.P_IO.items():
        if p > 0:
            i = pos[(k, l)]
            S += p * (k * dM[i] + l * omega[i])
    return AnalyticSolution(list(inputs.index), A, gamma, omega, check.lambda_max,
                            check.row_sum_max, dM, float(S), True)


def _marginal(rows: dict, v: dict, weights: dict):
    """Source-weighted marginal of conditional rows and of the matching v values."""
    contributing = [c for c in rows if weights.get(c, 0.0) > 0 and rows[c]]
    if len(contributing) == 1:
        c = contributing[0]
        return dict(rows[c]), {key: v.get((c, key), 0.0) for key in rows[c]}
    mass, vmass = {}, {}
    total = sum(weights[c] for c in contributing)
    for c in contributing:
        w = weights[c] / total
        for key, p in rows[c].items():
            mass[key] = mass.get(key, 0.0) + w * p
            vmass[key] = vmass.get(key, 0.0) + w * p * v.get((c, key), 0.0)
    vm = {key: (min(1.0, vmass[key] / m) if m > 0 else 0.0) for key, m in mass.items()}
    return dict(sorted(mass.items())), vm


def uncorrelated_inputs(inputs: AnalyticInputs) -> AnalyticInputs:
    """Replace every source-conditional row by the edge-weighted marginal."""
    w_io = {c: inputs.P_IO.get(c, 0.0) * c[0] for c in inputs.P_IO_IO}
    w_in = {c: inputs.P_IO.get(c, 0.0) * c[1] for c in inputs.P_IO_In}
    row_io, v_io = _marginal(inputs.P_IO_IO, inputs.v_IO_IO, w_io)
    row_in, v_in = _marginal(inputs.P_IO_In, inputs.v_IO_In, w_in)
    P_IO_IO, P_IO_In, v_IO_IO, v_IO_In = {}, {}, {}, {}
    index = set(inputs.index) | {(u, t) for (u, t, _r) in row_io}
    for cell in sorted(index):
        k, l = cell
        if k > 0 and row_io:
            P_IO_IO[cell] = dict(row_io)
            v_IO_IO.update({(cell, key): val for key, val in v_io.items()})
        if l > 0 and row_in:
            P_IO_In[cell] = dict(row_in)
            v_IO_In.update({(cell, key): val for key, val in v_in.items()})
    return AnalyticInputs(dict(inputs.P_IO), P_IO_In, P_IO_IO, v_IO_In, v_IO_IO)


def mean_cluster_size_uncorrelated(inputs: AnalyticInputs) -> float:
    return mean_cluster_size(uncorrelated_inputs(inputs)).S


@dataclass
class GeneratingFunctionValues:
    N: dict
    M: dict
    F: float
    iterations: int


def evaluate_generating_functions(inputs: AnalyticInputs, x: float, y: float,
                                  tol: float = 1e-12, max_iter: int = 100_000) -> GeneratingFunctionValues:
    """N, the fixed point M and F at ``(x, y)``.

    Arguments may exceed 1 by a small margin so that central differences at
    ``x = y = 1`` can be taken. Cells without conditional rows have N = M = 1.
    """
    for name, val in (("x", x), ("y", y)):
        if not 0.0 <= val <= 1.0 + 1e-3:
            raise InputValidationError(f"{name}={val} outside [0, 1]")
    cells = list(inputs.index)
    pos = {c: i for i, c in enumerate(cells)}
    n = len(cells)
    N = np.ones(n)
    for cell, i in pos.items():
        row = inputs.P_IO_In.get(cell)
        if row:
            N[i] = sum(p * (1.0 - inputs.v_in(cell, r) + y * inputs.v_in(cell, r)) for r, p in row.items())

    const = np.ones(n)
    src, dst, coef, us, ts = [], [], [], [], []
    for cell, i in pos.items():
        row = inputs.P_IO_IO.get(cell)
        if not row:
            continue
        const[i] = 0.0
        for (u, t, r), p in row.items():
            v = inputs.v_io(cell, (u, t, r))
            const[i] += p * (1.0 - v)
            if p * v > 0:
                src.append(i)
                dst.append(pos[(u, t)])
                coef.append(p * v)
                us.append(u)
                ts.append(t)
    src, dst = np.array(src, dtype=int), np.array(dst, dtype=int)
    coef, us, ts = np.array(coef), np.array(us), np.array(ts)
    Nt = N[dst] ** ts if len(dst) else np.array([])

    M = np.ones(n)
    for it in range(1, max_iter + 1):
        contrib = coef * M[dst] ** us * Nt
        new = const + x * np.bincount(src, weights=contrib, minlength=n)
        if np.max(np.abs(new - M), initial=0.0) < tol:
            M = new
            break
        M = new
    else:
        raise NumericalError(f"generating-function fixed point did not converge in {max_iter} iterations",
                             max_iter)

    F = 0.0
    for (k, l), p in inputs.P_IO.items():
        if p > 0:
            i = pos[(k, l)]
            F += p * M[i] ** k * N[i] ** l
    return GeneratingFunctionValues({c: float(N[i]) for c, i in pos.items()},
                                    {c: float(M[i]) for c, i in pos.items()}, float(F), it)


def numerical_mean_size(inputs: AnalyticInputs, h: float = 1e-6) -> float:
    """Central difference of F along x = y at 1."""
    hi = evaluate_generating_functions(inputs, 1.0 + h, 1.0 + h).F
    lo = evaluate_generating_functions(inputs, 1.0 - h, 1.0 - h).F
    return (hi - lo) / (2 * h)


def solution_to_json(sol: AnalyticSolution, S_uncorrelated: float | None) -> dict:
    return {"lambda_max": sol.lambda_max, "row_sum_max": sol.row_sum_max,
            "S_correlated": sol.S, "S_uncorrelated": S_uncorrelated, "cells": len(sol.index)}
