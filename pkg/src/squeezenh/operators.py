"""Collective spin operators in the Dicke basis.

Everything here is banded: Jz and N_up are diagonal, Jx and Jy couple
k to k +- 1, and the twisting Hamiltonians couple k to k and k +- 2 only.
Operators are returned as BandedOperator instances; dense matrices are for
small-N cross-checks.
"""

from dataclasses import dataclass

import numpy as np

from .basis import SpinSector


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the twisting model.

    gamma_over_chi is the single dimensionless knob of the conditional
    dynamics; chi sets the overall rate and only rescales time.
    """

    n_atoms: int
    gamma_over_chi: float = 0.0
    chi: float = 1.0

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if self.gamma_over_chi < 0:
            raise ValueError("gamma_over_chi must be >= 0")
        if self.chi <= 0:
            raise ValueError("chi must be > 0")

    @property
    def gamma(self):
        return self.gamma_over_chi * self.chi

    @property
    def sector(self):
        return SpinSector(self.n_atoms)


class BandedOperator:
    """Banded matrix stored as {offset: band values}.

    Band at offset q >= 0 holds elements A[i, i+q]; at q < 0 it holds
    A[i-q, i] read as A[row, col] with row = col - q. Band length is
    dim - |q|. matvec is O(dim) per band.
    """

    def __init__(self, dim, bands):
        self.dim = int(dim)
        self.bands = {}
        for q, vals in bands.items():
            q = int(q)
            vals = np.asarray(vals, dtype=complex)
            if vals.shape != (self.dim - abs(q),):
                raise ValueError(f"band {q} has wrong length {vals.shape}")
            self.bands[q] = vals

    def matvec(self, x):
        y = np.zeros(self.dim, dtype=complex)
        for q, vals in self.bands.items():
            if q >= 0:
                y[: self.dim - q] += vals * x[q:]
            else:
                y[-q:] += vals * x[: self.dim + q]
        return y

    def to_dense(self):
        a = np.zeros((self.dim, self.dim), dtype=complex)
        for q, vals in self.bands.items():
            if q >= 0:
                a[np.arange(self.dim - q), np.arange(q, self.dim)] = vals
            else:
                a[np.arange(-q, self.dim), np.arange(self.dim + q)] = vals
        return a

    def norm_bound(self):
        """Infinity-norm upper bound, max absolute row sum."""
        rowsum = np.zeros(self.dim)
        for q, vals in self.bands.items():
            if q >= 0:
                rowsum[: self.dim - q] += np.abs(vals)
            else:
                rowsum[-q:] += np.abs(vals)
        return float(rowsum.max())

    def scaled(self, factor):
        return BandedOperator(
            self.dim, {q: factor * v for q, v in self.bands.items()}
        )


def build_jz(sector):
    return BandedOperator(sector.dim, {0: sector.m_values()})


def build_n_up(sector):
    return BandedOperator(sector.dim, {0: np.arange(sector.dim, dtype=float)})


def build_jx(sector):
    a = sector.ladder_amps()
    return BandedOperator(sector.dim, {1: a / 2.0, -1: a / 2.0})


def build_jy(sector):
    a = sector.ladder_amps()
    return BandedOperator(sector.dim, {1: 1j * a / 2.0, -1: -1j * a / 2.0})


def build_jx_squared(sector):
    """Jx^2 = (J+^2 + J-^2 + J+J- + J-J+)/4, bands at 0 and +-2."""
    a = sector.ladder_amps()
    a_ext = np.concatenate([[0.0], a, [0.0]])
    diag = (a_ext[:-1] ** 2 + a_ext[1:] ** 2) / 4.0
    if sector.dim < 3:
        return BandedOperator(sector.dim, {0: diag})
    band2 = a[:-1] * a[1:] / 4.0
    return BandedOperator(sector.dim, {0: diag, 2: band2, -2: band2})


def build_h_eff(params):
    """Conditional (no-jump) Hamiltonian chi*Jx^2 - i*(gamma/2)*N_up.

    Complex symmetric, pentadiagonal with empty +-1 bands. Eigenvalues have
    nonpositive imaginary part; the slowest-decaying eigenvector is the
    conditional steady state.
    """
    sector = params.sector
    jx2 = build_jx_squared(sector)
    bands = {q: params.chi * v for q, v in jx2.bands.items()}
    bands[0] = bands[0] - 0.5j * params.gamma * np.arange(sector.dim)
    return BandedOperator(sector.dim, bands)


def build_h_tact(params):
    """Two-axis counter-twisting chi*(Jx^2 - Jy^2) = chi*(J+^2 + J-^2)/2.

    Zero diagonal, bands at +-2 only.
    """
    sector = params.sector
    if sector.dim < 3:
        return BandedOperator(sector.dim, {0: np.zeros(sector.dim)})
    a = sector.ladder_amps()
    band2 = params.chi * a[:-1] * a[1:] / 2.0
    return BandedOperator(sector.dim, {0: np.zeros(sector.dim), 2: band2, -2: band2})


def expectation(op, psi):
    """Normalized expectation <psi|A|psi> / <psi|psi>.

    psi need not be normalized (conditional states decay); returns complex,
    take .real for Hermitian observables.
    """
    nrm2 = np.vdot(psi, psi).real
    if nrm2 == 0.0:
        raise ValueError("zero state has no expectation values")
    return np.vdot(psi, op.matvec(psi)) / nrm2
