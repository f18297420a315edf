"""Conditional (no-jump) time evolution and slowest-decaying eigenpairs.

States evolve under i d|psi>/dt = H_eff |psi> with non-Hermitian H_eff, so
the norm decays; the squared norm is the probability that no quantum jump
has occurred. Amplitudes are renormalized every step with the factor
absorbed into an accumulated log-norm, which keeps survival probabilities
representable at N = 1e4 where P underflows double precision.

The integrator is an adaptive Krylov (Arnoldi) exponential propagator on
the banded operator. When the operator couples only k to k +- 2 and the
state occupies a single excitation parity, the evolution runs on the
compressed tridiagonal parity block (half the dimension, fraction of the
matvec cost). Dense scaling-and-squaring is the fallback for dim <= 512
if adaptive stepping fails.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .basis import SpinSector, SpinState
from . import squeezing as _squeezing


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalue with the largest imaginary part and its right eigenvector."""

    eigenvalue: complex
    right_eigenvector: SpinState
    residual: float


@dataclass(frozen=True)
class EvolutionTrace:
    """Sampled trajectory: squeezing snapshots on a recorded time grid."""

    params: object  # ModelParams of the generating run
    snapshots: tuple
    grid: str = ""

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    @property
    def xi2(self):
        return np.array([s.xi2 for s in self.snapshots])

    @property
    def alpha_min(self):
        return np.array([s.alpha_min for s in self.snapshots])

    @property
    def p(self):
        return np.array([s.p for s in self.snapshots])

    @property
    def jz_mean(self):
        return np.array([s.jz_mean for s in self.snapshots])


class _Tridiag:
    """Compressed parity block: diagonal d, symmetric off-diagonal b."""

    def __init__(self, d, b):
        self.d = d
        self.b = b
        self.dim = len(d)

    def matvec(self, x):
        y = self.d * x
        if self.dim > 1:
            y[:-1] += self.b * x[1:]
            y[1:] += self.b * x[:-1]
        return y


def _parity_support(amplitudes):
    """0 or 1 if the state occupies a single excitation parity, else None."""
    nz = np.flatnonzero(amplitudes != 0.0)
    if nz.size == 0:
        return None
    par = nz[0] % 2
    return int(par) if np.all(nz % 2 == par) else None


def _compress(h, parity):
    """Tridiagonal block of a {0, +-2}-banded operator on one parity."""
    dim = h.dim
    idx = np.arange(parity, dim, 2)
    d = h.bands.get(0, np.zeros(dim, dtype=complex))[idx]
    if 2 in h.bands and idx.size > 1:
        b = h.bands[2][idx[:-1]]
    else:
        b = np.zeros(max(idx.size - 1, 0), dtype=complex)
    return _Tridiag(d.astype(complex), b.astype(complex)), idx


def _arnoldi_step(op, v, tau, m):
    """One Krylov approximation of expm(-i tau H) v for unit-norm v.

    CGS2 orthogonalization with contiguous GEMVs; returns the step result,
    an a-posteriori error estimate, and the happy-breakdown flag.
    """
    V = np.empty((m + 1, v.shape[0]), dtype=complex)
    Hm = np.zeros((m + 1, m), dtype=complex)
    V[0] = v
    k_used, happy = m, False
    for j in range(m):
        w = op.matvec(V[j])
        Vj = V[: j + 1]
        c = np.conj(Vj @ np.conj(w))
        w -= c @ Vj
        c2 = np.conj(Vj @ np.conj(w))
        w -= c2 @ Vj
        c += c2
        Hm[: j + 1, j] = c
        hh = np.linalg.norm(w)
        Hm[j + 1, j] = hh
        if hh < 1e-12 * max(1.0, abs(Hm[j, j].real)):
            k_used, happy = j + 1, True
            break
        V[j + 1] = w / hh
    k = k_used
    E = sla.expm(-1j * tau * Hm[:k, :k])
    y = E[:, 0]
    w_out = y @ V[:k]
    err = 0.0 if happy else abs(Hm[k, k - 1]) * abs(E[k - 1, 0]) * abs(tau)
    return w_out, err, happy


def _propagate_krylov(op, psi, duration, tol, m):
    """Adaptive stepping on unit-norm psi; returns (psi, log_norm_gain)."""
    t = 0.0
    log_norm = 0.0
    tau = min(duration, 0.1)
    min_tau = max(duration * 1e-14, 1e-300)
    while t < duration * (1.0 - 1e-14):
        tau = min(tau, duration - t)
        w, err, happy = _arnoldi_step(op, psi, tau, m)
        tol_step = max(tol * tau, 1e-16)
        if np.isfinite(err) and err > tol_step:
            tau *= max(0.1, 0.9 * (tol_step / err) ** (2.0 / m))
            if tau < min_tau:
                raise _StepFailure("step size underflow")
            continue
        nw = np.linalg.norm(w)
        if not np.isfinite(nw) or nw == 0.0:
            raise RuntimeError("propagation diverged")
        psi = w / nw
        log_norm += np.log(nw)
        t += tau
        if err > 0.0 and not happy:
            grow = 0.9 * (tol_step / err) ** (2.0 / m)
            tau = min(tau * min(2.0, max(0.3, grow)), duration)
        elif happy:
            tau = min(tau * 2.0, duration)
    return psi, log_norm


class _StepFailure(RuntimeError):
    pass


def propagate(state, h, duration, tol=1e-9, krylov_dim=20):
    """Evolve a SpinState under exp(-i H duration), tracking the norm.

    tol is the allowed relative error per unit time (per-step local error
    bounded by tol * step). Exact for duration = 0. Uses the compressed
    parity block when h couples only k to k +- 2 and the state lives on one
    parity; falls back to dense scaling-and-squaring for dim <= 512 when
    adaptive stepping fails.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if h.dim != state.sector.dim:
        raise ValueError("operator and state dimensions differ")
    if duration == 0.0:
        return state

    parity = _parity_support(state.amplitudes)
    compressible = set(h.bands) <= {0, 2, -2} and parity is not None
    try:
        if compressible:
            op, idx = _compress(h, parity)
            psi_c = state.amplitudes[idx].copy()
            psi_c, gain = _propagate_krylov(op, psi_c, duration, tol, krylov_dim)
            amps = np.zeros(h.dim, dtype=complex)
            amps[idx] = psi_c
        else:
            amps, gain = _propagate_krylov(
                h, state.amplitudes.copy(), duration, tol, krylov_dim
            )
    except _StepFailure:
        if h.dim > 512:
            raise RuntimeError(
                "propagation step size underflow and dimension too large "
                "for the dense fallback"
            ) from None
        u = sla.expm(-1j * duration * h.to_dense())
        amps = u @ state.amplitudes
        nrm = np.linalg.norm(amps)
        if not np.isfinite(nrm) or nrm == 0.0:
            raise RuntimeError("propagation diverged") from None
        amps = amps / nrm
        gain = float(np.log(nrm))
    if not np.all(np.isfinite(amps)):
        raise RuntimeError("propagation diverged")
    return SpinState(state.sector, amps, state.log_norm + gain)


def survival_probability(state):
    """Exact no-jump probability ||psi||^2 = e^{2 log_norm}.

    Equals the exponential-decay formula e^{-<N_up> gamma t} only when
    <N_up> is constant along the trajectory; this is the exact norm.
    """
    return float(np.exp(2.0 * state.log_norm))


def _phase_fix(v):
    """Deterministic global phase: largest-magnitude component real > 0."""
    i = int(np.argmax(np.abs(v)))
    ph = v[i] / abs(v[i])
    return v / ph


def _rqi_polish(block, v, sigma, norm_scale, max_iter=15):
    """Rayleigh-quotient iteration on a tridiagonal block.

    Returns (eigenvalue, vector, residual). norm_scale sets the residual
    target 1e-9 * norm_scale.
    """
    n = block.dim
    ab = np.zeros((3, n), dtype=complex)
    target = 1e-9 * norm_scale
    best = None
    for _ in range(max_iter):
        ab[0, 1:] = block.b
        ab[1, :] = block.d - sigma
        ab[2, :-1] = block.b
        try:
            x = sla.solve_banded((1, 1), ab, v)
        except np.linalg.LinAlgError:
            sigma = sigma * (1.0 + 1e-12) + 1e-14
            continue
        nx = np.linalg.norm(x)
        if not np.isfinite(nx) or nx == 0.0:
            sigma = sigma * (1.0 + 1e-12) + 1e-14
            continue
        v = x / nx
        sigma = np.vdot(v, block.matvec(v))
        res = np.linalg.norm(block.matvec(v) - sigma * v)
        if best is None or res < best[2]:
            best = (sigma, v.copy(), res)
        if res < target:
            break
    return best


def _steady_dense(h, sector):
    w, vr = sla.eig(h.to_dense())
    order = np.argsort(w.imag)
    top, second = order[-1], order[-2]
    if w[top].imag - w[second].imag < 1e-12:
        raise ValueError("ambiguous steady state")
    v = _phase_fix(vr[:, top] / np.linalg.norm(vr[:, top]))
    ev = complex(w[top])
    res = float(np.linalg.norm(h.matvec(v) - ev * v))
    return ev, v, res


# largest parity block solved by dense eigensolve; beyond this the block
# falls back to long-time propagation (zgeev at 6000 already costs minutes)
_BLOCK_DENSE_MAX = 6000


def _block_top_dense(block):
    """Top-Im eigenpair of one tridiagonal block by dense eigensolve.

    Returns (eigenvalue, vector, residual, second_im) where second_im is
    the next-largest imaginary part inside this block.
    """
    a = np.diag(block.d)
    if block.dim > 1:
        a += np.diag(block.b, 1) + np.diag(block.b, -1)
    w, vr = sla.eig(a, check_finite=False)
    order = np.argsort(w.imag)
    top = order[-1]
    second_im = w[order[-2]].imag if block.dim > 1 else -np.inf
    v = vr[:, top] / np.linalg.norm(vr[:, top])
    ev = complex(w[top])
    res = float(np.linalg.norm(block.matvec(v) - ev * v))
    return ev, v, res, second_im


def _block_top_propagation(block, norm_scale):
    """Top-Im eigenpair of one block by long-time propagation.

    Evolution damps every mode against the slowest-decaying one; the
    Rayleigh quotient stops moving (< 1e-10 per unit time) once the block's
    top mode dominates, and an RQI polish drives the residual to solver
    level. No second eigenvalue comes out of this path.
    """
    v = np.zeros(block.dim, dtype=complex)
    v[0] = 1.0
    rq = None
    t_chunk = 0.05
    t_total = 0.0
    converged = False
    while t_total < 200.0:
        v, _ = _propagate_krylov(block, v, t_chunk, 1e-9, 20)
        t_total += t_chunk
        rq_new = np.vdot(v, block.matvec(v))
        if rq is not None and abs(rq_new - rq) / t_chunk < 1e-10:
            rq = rq_new
            converged = True
            break
        rq = rq_new
        t_chunk = min(t_chunk * 1.5, 5.0)
    polished = _rqi_polish(block, v, rq, norm_scale)
    if polished is None or (not converged and polished[2] > 1e-8 * norm_scale):
        raise RuntimeError(
            "steady-state iteration did not converge; best residual "
            f"{polished[2] if polished else np.inf:.3e}"
        )
    ev, v, res = polished
    return complex(ev), v, float(res), -np.inf


def _steady_blocks(h):
    """Top-Im eigenpair of a {0,+-2}-banded operator via its parity blocks.

    The operator couples k only to k +- 2, so its spectrum is the union of
    the two tridiagonal parity blocks. Each block is solved dense while it
    fits (half the full dimension, an eighth of the eigensolve cost) and by
    propagation beyond that.
    """
    norm_scale = h.norm_bound()
    candidates = []
    for parity in (0, 1):
        block, idx = _compress(h, parity)
        if block.dim == 0:
            continue
        if block.dim <= _BLOCK_DENSE_MAX:
            ev, v, res, second_im = _block_top_dense(block)
        else:
            ev, v, res, second_im = _block_top_propagation(block, norm_scale)
        candidates.append((ev, v, res, second_im, idx))
    candidates.sort(key=lambda c: c[0].imag)
    ev, vb, res, second_im, idx = candidates[-1]
    runner_up = max(
        [c[0].imag for c in candidates[:-1]] + [second_im]
    )
    if ev.imag - runner_up < 1e-12:
        raise ValueError("ambiguous steady state")
    full = np.zeros(h.dim, dtype=complex)
    full[idx] = vb
    return complex(ev), _phase_fix(full), float(res)


def _steady_from_trajectory(h, state):
    """Steady eigenpair by RQI seeded with a propagated state, or None.

    Late along a decaying trajectory the state is dominated by the
    slowest-decaying mode, so Rayleigh-quotient iteration from it converges
    to the steady eigenpair in a few O(dim) banded solves. Returns None
    when the seed is still too mixed (no convergence, the converged vector
    does not dominate the seed, or its eigenvalue decays faster than the
    seed's own Rayleigh quotient, which marks a subdominant capture), so
    callers can retry later.
    """
    if not (set(h.bands) <= {0, 2, -2}):
        return None
    parity = _parity_support(state.amplitudes)
    if parity is None:
        return None
    block, idx = _compress(h, parity)
    v = state.amplitudes[idx].astype(complex)
    v = v / np.linalg.norm(v)
    sigma = np.vdot(v, block.matvec(v))
    norm_scale = h.norm_bound()
    polished = _rqi_polish(block, v, sigma, norm_scale)
    if polished is None or polished[2] >= 1e-9 * norm_scale:
        return None
    ev, vb, res = polished
    if abs(np.vdot(vb, v)) < 0.5:
        return None
    # the seed's Rayleigh quotient mixes the decay rates of every mode it
    # contains, so the slowest mode satisfies Im(ev) >= Im(sigma); a pair
    # below that line is a faster-decaying capture, not the steady one
    if ev.imag < sigma.imag - 1e-8 * norm_scale:
        return None
    full = np.zeros(h.dim, dtype=complex)
    full[idx] = vb
    sector = SpinSector(h.dim - 1)
    return EigenPair(
        complex(ev), SpinState(sector, _phase_fix(full), 0.0), float(res)
    )


def steady_state(h):
    """Eigenpair of h whose eigenvalue has the largest imaginary part.

    Dense non-symmetric eigensolve for dim <= 2048; above that the parity
    blocks are solved separately (dense up to block dimension 6000, then
    long-time propagation with Rayleigh-quotient convergence, change
    < 1e-10 per unit time, plus an inverse-iteration polish). The block
    path is cross-validated against the dense path near the threshold.
    Raises "ambiguous steady state" when the top two imaginary parts are
    closer than 1e-12.
    """
    sector = SpinSector(h.dim - 1)
    if h.dim <= 2048:
        ev, v, res = _steady_dense(h, sector)
    else:
        if not (set(h.bands) <= {0, 2, -2}):
            raise ValueError("large-dim steady state needs a {0,+-2}-banded h")
        ev, v, res = _steady_blocks(h)
    norm_scale = h.norm_bound()
    if res >= 1e-8 * norm_scale:
        raise RuntimeError(
            f"steady-state residual {res:.3e} exceeds 1e-8 * ||H|| = "
            f"{1e-8 * norm_scale:.3e}"
        )
    return EigenPair(ev, SpinState(sector, v, 0.0), res)


def detect_steady_time(trace, rel_tol=0.01, xi2_steady=None):
    """Earliest sampled t after which xi^2 stays within rel_tol of steady.

    xi2_steady defaults to the value from the slowest-decaying eigenpair of
    the trace's model. Raises "not yet steady" if the trace has not
    converged into the band by its final sample.
    """
    from .operators import build_h_eff

    if xi2_steady is None:
        pair = steady_state(build_h_eff(trace.params))
        xi2_steady = _squeezing.squeezing_parameter(pair.right_eigenvector).xi2
    xi2 = trace.xi2
    times = trace.times
    dev = np.abs(xi2 - xi2_steady) / xi2_steady
    if dev[-1] >= rel_tol:
        raise ValueError("not yet steady")
    inside = dev < rel_tol
    j = len(times) - 1
    while j > 0 and inside[j - 1]:
        j -= 1
    return float(times[j])
