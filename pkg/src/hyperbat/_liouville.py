"""Coherence-chain representation of the two-mode master equation.

The undriven Hamiltonian and the jump operator a both respect the shell
structure of total excitation number N = n_a + n_b: H keeps N fixed and a
lowers it by one. A density-matrix block rho_{N, N'} therefore only ever
feeds rho_{N-1, N'-1}, so the blocks with a fixed offset k = N - N' (a
"chain") evolve independently of all others, and a cutoff on N is closed
under the dynamics.

Inside each shell the normal modes c_pm = (a +- b)/sqrt(2) diagonalize the
coupling. The Liouvillian of a chain then splits into a diagonal part
(coupling, free rotation, the shell-uniform part of the loss), which is
exponentiated exactly, and a real sparse remainder R, which is
integrated with an integrating-factor (Lawson) RK4 step.

Chain vectors hold the blocks rho_{N'+k, N'} for N' = 0..n_max-k, each
raveled in row-major order, in the normal-mode basis. Blocks with k < 0
are the Hermitian conjugates and are never stored.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import IntegrationFailure


def shell_offsets(n_max: int) -> np.ndarray:
    """Start index of each shell in the global two-mode basis (ordered by N, then n_a)."""
    N = np.arange(n_max + 2)
    return N * (N + 1) // 2


# -- shell-local matrices -----------------------------------------------------
# ab basis of shell N: |j, N-j>, j = n_a.   normal basis: |p, N-p>, p = n_plus.


@lru_cache(maxsize=None)
def ab_lower_a(N: int) -> np.ndarray:
    """a restricted to shell N+1 -> N in the ab basis."""
    m = np.zeros((N + 1, N + 2))
    j = np.arange(1, N + 2)
    m[j - 1, j] = np.sqrt(j)
    return m


@lru_cache(maxsize=None)
def ab_lower_b(N: int) -> np.ndarray:
    m = np.zeros((N + 1, N + 2))
    j = np.arange(N + 1)
    m[j, j] = np.sqrt(N + 1 - j)
    return m


@lru_cache(maxsize=None)
def _nm_lower(N: int, sign: float) -> np.ndarray:
    """(c_plus + sign*c_minus)/sqrt(2) from shell N+1 to N in the normal basis."""
    m = np.zeros((N + 1, N + 2))
    p = np.arange(1, N + 2)
    m[p - 1, p] = np.sqrt(p)
    q = np.arange(N + 1)
    m[q, q] += sign * np.sqrt(N + 1 - q)
    return m / math.sqrt(2.0)


def nm_lower_a(N: int) -> np.ndarray:
    return _nm_lower(N, 1.0)


def nm_lower_b(N: int) -> np.ndarray:
    return _nm_lower(N, -1.0)


@lru_cache(maxsize=None)
def nm_mixing(N: int) -> np.ndarray:
    """c_plus^dag c_minus + h.c. within shell N (normal basis)."""
    p = np.arange(N)
    off = np.sqrt((p + 1) * (N - p))
    return np.diag(off, -1) + np.diag(off, 1)


@lru_cache(maxsize=None)
def basis_change(N: int) -> np.ndarray:
    """Real orthogonal W_N whose columns are the normal-mode Fock states of shell N in ab coordinates."""
    if N == 0:
        return np.ones((1, 1))
    prev = basis_change(N - 1)
    up_plus = (ab_lower_a(N - 1).T + ab_lower_b(N - 1).T) / math.sqrt(2.0)
    up_minus = (ab_lower_a(N - 1).T - ab_lower_b(N - 1).T) / math.sqrt(2.0)
    w = np.empty((N + 1, N + 1))
    w[:, 1:] = (up_plus @ prev) / np.sqrt(np.arange(1, N + 1))
    w[:, 0] = (up_minus @ prev[:, 0]) / math.sqrt(N)
    return w


# -- chains -----------------------------------------------------------------------


class ChainLayout:
    """Index bookkeeping for one chain k at cutoff n_max."""

    def __init__(self, k: int, n_max: int):
        self.k = k
        self.n_max = n_max
        self.lower_shells = list(range(0, n_max - k + 1))
        shapes = [(Np + k + 1, Np + 1) for Np in self.lower_shells]
        self.shapes = shapes
        sizes = [r * c for r, c in shapes]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.size = int(self.offsets[-1])

    def blocks(self, vec):
        for i, Np in enumerate(self.lower_shells):
            r, c = self.shapes[i]
            yield Np + self.k, Np, vec[self.offsets[i]:self.offsets[i + 1]].reshape(r, c)


@lru_cache(maxsize=64)
def _unit_remainder(k: int, n_max: int) -> sp.csr_matrix:
    """R / gamma for chain k: in-shell loss mixing plus the jump feed from the next block."""
    layout = ChainLayout(k, n_max)
    nb = len(layout.lower_shells)
    rows = [[None] * nb for _ in range(nb)]
    for i, Np in enumerate(layout.lower_shells):
        N = Np + k
        mix = sp.kron(sp.csr_matrix(nm_mixing(N)), sp.identity(Np + 1)) + sp.kron(
            sp.identity(N + 1), sp.csr_matrix(nm_mixing(Np))
        )
        rows[i][i] = -0.25 * mix
        if i + 1 < nb:
            rows[i][i + 1] = sp.kron(sp.csr_matrix(nm_lower_a(N)), sp.csr_matrix(nm_lower_a(Np)))
    if nb == 1:
        return sp.csr_matrix(rows[0][0])
    return sp.bmat(rows, format="csr")


def chain_diagonal(k: int, n_max: int, omega_b: float, g: float, gamma: float) -> np.ndarray:
    """Exactly integrable diagonal of the chain Liouvillian (lab frame)."""
    layout = ChainLayout(k, n_max)
    parts = []
    for Np in layout.lower_shells:
        N = Np + k
        p = np.arange(N + 1)[:, None]
        pp = np.arange(Np + 1)[None, :]
        hop = (2 * p - N) - (2 * pp - Np)
        parts.append((-1j * (omega_b * k + g * hop) - 0.25 * gamma * (N + Np)).ravel())
    return np.concatenate(parts) if parts else np.zeros(0, complex)


def chain_remainder(k: int, n_max: int, gamma: float) -> sp.csr_matrix:
    return _unit_remainder(k, n_max) * gamma


# -- conversion -------------------------------------------------------------------


def ket_to_chain(shell_kets, k: int, n_max: int) -> np.ndarray:
    """Chain vector of |psi><psi| given the normal-basis shell components of psi."""
    layout = ChainLayout(k, n_max)
    out = np.empty(layout.size, dtype=complex)
    for i, Np in enumerate(layout.lower_shells):
        block = np.outer(shell_kets[Np + k], np.conj(shell_kets[Np]))
        out[layout.offsets[i]:layout.offsets[i + 1]] = block.ravel()
    return out


def rho_to_chain(rho: np.ndarray, k: int, n_max: int) -> np.ndarray:
    off = shell_offsets(n_max)
    layout = ChainLayout(k, n_max)
    out = np.empty(layout.size, dtype=complex)
    for i, Np in enumerate(layout.lower_shells):
        N = Np + k
        block = rho[off[N]:off[N + 1], off[Np]:off[Np + 1]]
        out[layout.offsets[i]:layout.offsets[i + 1]] = (basis_change(N).T @ block @ basis_change(Np)).ravel()
    return out


def chains_to_rho(chains: dict, n_max: int) -> np.ndarray:
    """Assemble the full ab-basis density matrix; missing chains are zero."""
    off = shell_offsets(n_max)
    dim = int(off[n_max + 1])
    rho = np.zeros((dim, dim), dtype=complex)
    for k, vec in chains.items():
        for N, Np, block in ChainLayout(k, n_max).blocks(vec):
            ab = basis_change(N) @ block @ basis_change(Np).T
            rho[off[N]:off[N + 1], off[Np]:off[Np + 1]] = ab
            if k:
                rho[off[Np]:off[Np + 1], off[N]:off[N + 1]] = ab.conj().T
    return rho


# -- observables --------------------------------------------------------------------


def lowering_weights(k: int, n_max: int, operator) -> np.ndarray:
    """Weight vector w with <O> = w . chain_k for an operator lowering N by k.

    ``operator(Np)`` returns the normal-basis matrix from shell Np+k to Np.
    """
    layout = ChainLayout(k, n_max)
    w = np.zeros(layout.size)
    for i, Np in enumerate(layout.lower_shells):
        w[layout.offsets[i]:layout.offsets[i + 1]] = operator(Np).T.ravel()
    return w


def _number_like(left, right):
    def op(N):
        if N == 0:
            return np.zeros((1, 1))
        return left(N - 1).T @ right(N - 1)
    return op


def chain0_weights(n_max: int) -> dict:
    eye = lambda N: np.eye(N + 1)  # noqa: E731
    top = lambda N: np.eye(N + 1) * (N >= n_max - 1)  # noqa: E731
    return {
        "trace": lowering_weights(0, n_max, eye),
        "top": lowering_weights(0, n_max, top),
        "n_a": lowering_weights(0, n_max, _number_like(nm_lower_a, nm_lower_a)),
        "n_b": lowering_weights(0, n_max, _number_like(nm_lower_b, nm_lower_b)),
        "coh_ab": lowering_weights(0, n_max, _number_like(nm_lower_a, nm_lower_b)),
    }


def chain1_weights(n_max: int) -> dict:
    return {
        "a": lowering_weights(1, n_max, nm_lower_a),
        "b": lowering_weights(1, n_max, nm_lower_b),
    }


def chain2_weights(n_max: int) -> dict:
    return {
        "aa": lowering_weights(2, n_max, lambda Np: nm_lower_a(Np) @ nm_lower_a(Np + 1)),
        "bb": lowering_weights(2, n_max, lambda Np: nm_lower_b(Np) @ nm_lower_b(Np + 1)),
        "ab": lowering_weights(2, n_max, lambda Np: nm_lower_a(Np) @ nm_lower_b(Np + 1)),
    }


# -- propagation ---------------------------------------------------------------------


def _real_matvec(R):
    def apply(y):
        out = R @ y.view(np.float64).reshape(-1, 2)
        return np.ascontiguousarray(out).view(np.complex128).ravel()
    return apply


class ChainPropagator:
    """Lawson RK4 propagation of a set of chains sharing one parameter set.

    Lindblad evolution preserves the trace exactly, so the trace change of
    chain 0 over one step is an estimate of the local error. Steps with a
    drift above ``tol`` are rejected and retried at half the step; the step
    for the next output interval is adapted towards ``tol / 2``. Without
    chain 0 the step stays at a conservative fixed fraction of the cap.
    """

    _SAFETY = 0.9
    _MAX_REJECTIONS = 40
    _PHASE_STEP = 0.25

    def __init__(self, ks, n_max: int, omega_b: float, g: float, gamma: float, tol: float = 1e-9):
        self.ks = tuple(ks)
        self.n_max = n_max
        self.layouts = {k: ChainLayout(k, n_max) for k in self.ks}
        bounds = np.concatenate([[0], np.cumsum([self.layouts[k].size for k in self.ks])])
        self.slices = {k: slice(int(bounds[i]), int(bounds[i + 1])) for i, k in enumerate(self.ks)}
        self.D = np.concatenate([chain_diagonal(k, n_max, omega_b, g, gamma) for k in self.ks])
        R = sp.block_diag([chain_remainder(k, n_max, gamma) for k in self.ks], format="csr")
        self._apply = _real_matvec(R)
        # Loss mixing spans +-gamma*(N+N')/4: keep h*rate inside the RK4
        # stability interval. Interaction-frame coefficients rotate at 2g;
        # that phase error never shows in the trace, so it is capped directly.
        caps = [np.inf]
        if gamma > 0:
            caps.append(2.0 / (0.5 * gamma * n_max))
        if g > 0 and gamma > 0:  # without loss R vanishes and every step is exact
            caps.append(self._PHASE_STEP / (2.0 * g))
        self.h_cap = min(caps)
        self.tol = tol
        self._trace_w = None
        if 0 in self.ks:
            w = np.zeros(self.D.size)
            w[self.slices[0]] = lowering_weights(0, n_max, lambda N: np.eye(N + 1))
            self._trace_w = w
        self._h = 0.5 * self.h_cap
        self._phase_cache = {}
        self.steps_taken = 0
        self.rejections = 0

    def _phase(self, h):
        key = float(h)
        phi = self._phase_cache.get(key)
        if phi is None:
            if len(self._phase_cache) >= 6:
                self._phase_cache.pop(next(iter(self._phase_cache)))
            phi = self._phase_cache[key] = np.exp(0.5 * h * self.D)
        return phi

    def _trace(self, y):
        return float(np.real(self._trace_w @ y)) if self._trace_w is not None else 0.0

    def _step(self, y, h):
        phi = self._phase(h)
        R = self._apply
        k1 = R(y)
        tmp = k1 * (0.5 * h)
        tmp += y
        tmp *= phi
        k2 = R(tmp)
        py = phi * y
        np.multiply(k2, 0.5 * h, out=tmp)
        tmp += py
        k3 = R(tmp)
        np.multiply(k3, h, out=tmp)
        tmp += py
        tmp *= phi
        k4 = R(tmp)
        # y1 = phi^2 y + h/6 (phi^2 k1 + 2 phi (k2 + k3) + k4)
        k1 *= h / 6.0
        k1 += y
        k1 *= phi
        k2 += k3
        k2 *= h / 3.0
        k1 += k2
        k1 *= phi
        k4 *= h / 6.0
        k1 += k4
        return k1

    def _interval(self, y, span):
        """Advance by ``span``; returns the new vector."""
        n = max(1, math.ceil(span / min(self._h, self.h_cap) - 1e-9))
        done, worst, rejections = 0.0, 0.0, 0
        tr = self._trace(y)
        while span - done > 1e-14 * span:
            h = (span - done) / n
            y_new = self._step(y, h)
            new_tr = self._trace(y_new)
            drift = abs(new_tr - tr)
            if not np.isfinite(new_tr) or drift > self.tol:
                rejections += 1
                self.rejections += 1
                if rejections > self._MAX_REJECTIONS:
                    raise IntegrationFailure(
                        f"per-step trace drift stays above tol={self.tol} after {rejections} step reductions"
                    )
                n *= 2
                continue
            y, tr = y_new, new_tr
            done += h
            n -= 1
            worst = max(worst, drift)
            self.steps_taken += 1
            if n == 0:
                n = 1
        if self._trace_w is not None:
            target = 0.5 * self.tol
            factor = self._SAFETY * (target / worst) ** 0.2 if worst > 0 else 2.0
            self._h = min(self.h_cap, h * min(2.0, max(0.3, factor)))
        return y

    def propagate(self, y0, t0, times, observe=None):
        """Advance from t0 through ascending ``times``; call ``observe(t, y)`` at each."""
        y = np.ascontiguousarray(y0, dtype=complex)
        if not np.any(y):
            # zero stays zero under linear dynamics
            for t in times:
                if observe:
                    observe(t, y)
            return y
        t_prev = t0
        for t in times:
            span = t - t_prev
            if span < 0:
                raise ValueError("times must be ascending and not before the state time")
            if span > 0:
                y = self._interval(y, span)
            if observe:
                observe(t, y)
            t_prev = t
        return y

    def split(self, y):
        return {k: y[self.slices[k]] for k in self.ks}
