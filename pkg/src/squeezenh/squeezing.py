"""Squeezing parameter, optimal quadrature angle, Husimi Q, and power-law fits.

The squeezing parameter is the metrological (phase-estimation) one,
xi^2 = N * min-variance of the transverse spin / |<J>|^2; xi^2 < 1 means
phase sensitivity beyond the standard quantum limit.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .basis import SpinSector, SpinState


class SqueezingResult(NamedTuple):
    xi2: float
    alpha_min: float
    degenerate: bool


class SqueezingSnapshot(NamedTuple):
    """One sampled point of a conditional trajectory."""

    t: float
    xi2: float
    alpha_min: float
    p: float
    jz_mean: float


class MinimumEstimate(NamedTuple):
    """Refined interior minimum plus the raw grid minimum it came from."""

    t_min: float
    xi2_min: float
    t_grid: float
    xi2_grid: float


@dataclass(frozen=True)
class QGrid:
    """Husimi Q sampled on a theta x phi grid; values[i, j] = Q(theta_i, phi_j)."""

    n_atoms: int
    theta: np.ndarray
    phi: np.ndarray
    values: np.ndarray

    def norm_integral(self):
        """(N+1)/(4 pi) * integral of Q over the sphere, 1 for normalized states."""
        w = self.values * np.sin(self.theta)[:, None]
        inner = np.trapezoid(w, self.phi, axis=1)
        return float(
            (self.n_atoms + 1) / (4.0 * np.pi) * np.trapezoid(inner, self.theta)
        )


class PowerLawFit(NamedTuple):
    amplitude: float
    exponent: float
    residual: float


def _as_amplitudes(state):
    """Accept a SpinState or a bare vector; return (unit amps, sector)."""
    if isinstance(state, SpinState):
        return state.amplitudes, state.sector
    psi = np.asarray(state, dtype=complex)
    nrm = np.linalg.norm(psi)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise ValueError("state must have finite nonzero norm")
    return psi / nrm, SpinSector(psi.shape[0] - 1)


def _apply_jxyz(psi, sector):
    """Return (Jx psi, Jy psi, Jz psi) with O(dim) band arithmetic."""
    a = sector.ladder_amps()
    jp = np.zeros_like(psi)
    jp[1:] = a * psi[:-1]
    jm = np.zeros_like(psi)
    jm[:-1] = a * psi[1:]
    return 0.5 * (jp + jm), -0.5j * (jp - jm), sector.m_values() * psi


def _transverse_covariance(psi, sector):
    """Mean spin, its norm, and the 2x2 transverse covariance matrix.

    Transverse frame: e1 = +x, e2 = +y when the mean spin is along +-z
    (the parity-symmetric states of this model), else e1 = x projected
    transverse and e2 = n cross e1.
    """
    xp, yp, zp = _apply_jxyz(psi, sector)
    jmean = np.array(
        [np.vdot(psi, xp).real, np.vdot(psi, yp).real, np.vdot(psi, zp).real]
    )
    jnorm = np.linalg.norm(jmean)
    if jnorm <= 1e-8 * sector.j:
        raise ValueError("mean spin vanishes")
    n = jmean / jnorm
    if abs(n[2]) > 1.0 - 1e-12:
        e1 = np.array([1.0, 0.0, 0.0])
        e2 = np.array([0.0, 1.0, 0.0])
    else:
        e1 = np.array([1.0, 0.0, 0.0]) - n[0] * n
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
    v1 = e1[0] * xp + e1[1] * yp + e1[2] * zp
    v2 = e2[0] * xp + e2[1] * yp + e2[2] * zp
    m1 = np.vdot(psi, v1).real
    m2 = np.vdot(psi, v2).real
    c11 = np.vdot(v1, v1).real - m1 * m1
    c22 = np.vdot(v2, v2).real - m2 * m2
    c12 = np.vdot(v1, v2).real - m1 * m2  # Re<AB> = <{A,B}>/2 for Hermitian A, B
    return jmean, jnorm, np.array([[c11, c12], [c12, c22]])


def _fold_angle(alpha):
    while alpha <= -np.pi / 2:
        alpha += np.pi
    while alpha > np.pi / 2:
        alpha -= np.pi
    return alpha


def squeezing_parameter(state):
    """Wineland squeezing parameter and optimal quadrature angle.

    Returns (xi2, alpha_min, degenerate) with xi2 = N lambda_min / |<J>|^2
    and alpha_min the minimal-variance direction measured from e1, folded
    to (-pi/2, pi/2]. Invariant under rescaling the state. alpha_min is 0
    with degenerate=True when the covariance is isotropic (coherent states).
    """
    psi, sector = _as_amplitudes(state)
    _, jnorm, cov = _transverse_covariance(psi, sector)
    evals, evecs = np.linalg.eigh(cov)
    lam = evals[0]
    xi2 = sector.n_atoms * lam / jnorm**2
    if evals[1] - evals[0] <= 1e-14 * max(1.0, evals[1]):
        return SqueezingResult(float(xi2), 0.0, True)
    v = evecs[:, 0]
    alpha = _fold_angle(np.arctan2(v[1], v[0]))
    return SqueezingResult(float(xi2), float(alpha), False)


def variance_along(state, alpha):
    """Variance of J_perp(alpha) = Jx cos(alpha) + Jy sin(alpha).

    Only meaningful when the mean spin is along +-z so that (x, y) is the
    transverse plane; off-axis states need the general covariance in
    squeezing_parameter.
    """
    psi, sector = _as_amplitudes(state)
    jmean, jnorm, cov = _transverse_covariance(psi, sector)
    if abs(jmean[2]) < (1.0 - 1e-10) * jnorm:
        raise ValueError(
            "mean spin is not along +-z; use the covariance from "
            "squeezing_parameter instead"
        )
    c, s = np.cos(alpha), np.sin(alpha)
    return float(cov[0, 0] * c * c + 2.0 * cov[0, 1] * c * s + cov[1, 1] * s * s)


def husimi_q(state, theta_grid, phi_grid):
    """Husimi distribution Q(theta, phi) = |<theta, phi|psi>|^2.

    The spin-coherent state is (cos(theta/2)|up> + e^{i phi} sin(theta/2)
    |down>)^(x N), i.e. <theta, phi|k> = sqrt(C(N,k)) cos^k(theta/2)
    sin^(N-k)(theta/2) e^{-i phi (N-k)}. Binomials run through log-gamma so
    N = 1e4 cannot overflow; the theta and phi factorize into two GEMMs.
    """
    psi, sector = _as_amplitudes(state)
    n = sector.n_atoms
    theta = np.asarray(theta_grid, dtype=float)
    phi = np.asarray(phi_grid, dtype=float)
    if theta.size == 0 or phi.size == 0:
        raise ValueError("grids must be non-empty")
    k = np.arange(n + 1)
    logbin = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    c = np.maximum(np.cos(theta / 2.0), 1e-300)
    s = np.maximum(np.sin(theta / 2.0), 1e-300)
    logm = (
        0.5 * logbin[None, :]
        + k[None, :] * np.log(c)[:, None]
        + (n - k)[None, :] * np.log(s)[:, None]
    )
    b = np.exp(logm) * psi[None, :]
    # e^{-i phi (N-k)} = e^{-i phi N} e^{i phi k}; the first factor drops in |.|^2
    g = b @ np.exp(1j * np.outer(k, phi))
    return QGrid(n, theta, phi, np.abs(g) ** 2)


def to_db(xi2):
    """10 log10(xi2); squeezing is negative dB."""
    if np.any(np.asarray(xi2) <= 0):
        raise ValueError("xi2 must be positive")
    return 10.0 * np.log10(xi2)


def detect_t_min(trace):
    """Interior minimum of xi^2(t) over a trace, quadratically refined.

    Returns (t_min, xi2_min, t_grid, xi2_grid) where the first pair comes
    from the parabola through the three samples bracketing the raw grid
    minimum. Raises when the minimum sits on the trace boundary.
    """
    times = np.asarray(trace.times, dtype=float)
    xi2 = np.asarray(trace.xi2, dtype=float)
    if times.size < 3:
        raise ValueError("minimum not bracketed; extend duration")
    i = int(np.argmin(xi2))
    if i == 0 or i == times.size - 1:
        raise ValueError("minimum not bracketed; extend duration")
    t0, t1, t2 = times[i - 1 : i + 2]
    y0, y1, y2 = xi2[i - 1 : i + 2]
    d1 = (y1 - y0) / (t1 - t0)
    d2 = (y2 - y1) / (t2 - t1)
    curv = (d2 - d1) / (t2 - t0)
    if curv <= 0:
        return MinimumEstimate(float(t1), float(y1), float(t1), float(y1))
    t_v = 0.5 * (t0 + t1 - d1 / curv)
    t_v = min(max(t_v, t0), t2)
    # parabola value at the vertex from the Newton form
    y_v = y0 + d1 * (t_v - t0) + curv * (t_v - t0) * (t_v - t1)
    return MinimumEstimate(float(t_v), float(y_v), float(t1), float(y1))


def fit_power_law(xs, ys):
    """Least-squares fit of y = a x^b in log10 space.

    Returns (amplitude, exponent, rms residual in log10 units).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3:
        raise ValueError("need at least 3 points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log10(xs), np.log10(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    return PowerLawFit(float(10.0**intercept), float(slope), resid)
