"""Symmetric-sector (Dicke) basis for N spin-1/2 atoms.

States live in the maximal angular momentum sector j = N/2, dimension N+1.
Basis vectors are labeled by the number of excited atoms k = 0..N, so the
magnetic quantum number is m_k = k - N/2 and index 0 is the all-down state
|j, -j>. All operators in this package are banded in this basis.
"""

from dataclasses import dataclass

import numpy as np


class SpinSector:
    """Dimension bookkeeping for the j = N/2 sector of N atoms."""

    def __init__(self, n_atoms):
        if n_atoms < 1:
            raise ValueError("need at least one atom")
        self.n_atoms = int(n_atoms)
        self.dim = self.n_atoms + 1
        self.j = self.n_atoms / 2.0

    def m_values(self):
        """Jz eigenvalues m_k = k - N/2 for k = 0..N."""
        return np.arange(self.dim) - self.j

    def ladder_amps(self):
        """Raising amplitudes a_k = sqrt(j(j+1) - m_k (m_k + 1)), k = 0..N-1.

        J+ |k> = a_k |k+1> in the excitation-number labeling.
        """
        m = self.m_values()[:-1]
        return np.sqrt(self.j * (self.j + 1.0) - m * (m + 1.0))

    def all_down_state(self):
        """|j, -j>, every atom in the ground state. Unit norm, complex dtype."""
        psi = np.zeros(self.dim, dtype=complex)
        psi[0] = 1.0
        return psi

    def parity_indices(self, parity):
        """Indices of basis states with even (0) or odd (1) excitation number.

        H_eff and H_tact couple only k to k and k +- 2, so each parity block
        evolves independently; a state starting in one block stays there.
        """
        if parity not in (0, 1):
            raise ValueError("parity must be 0 or 1")
        return np.arange(parity, self.dim, 2)

    def __repr__(self):
        return f"SpinSector(n_atoms={self.n_atoms})"


@dataclass(frozen=True)
class SpinState:
    """Unit-norm amplitude vector plus accumulated log of the true norm.

    Conditional evolution shrinks the norm; storing amplitudes at unit norm
    with the factor in log_norm keeps survival probabilities representable
    when e^{2 log_norm} underflows double precision. The physical state is
    e^{log_norm} * amplitudes.
    """

    sector: SpinSector
    amplitudes: np.ndarray
    log_norm: float = 0.0

    @classmethod
    def from_amplitudes(cls, sector, amplitudes):
        amplitudes = np.asarray(amplitudes, dtype=complex)
        if amplitudes.shape != (sector.dim,):
            raise ValueError("amplitude vector has wrong length")
        nrm = np.linalg.norm(amplitudes)
        if nrm == 0.0 or not np.isfinite(nrm):
            raise ValueError("state must have finite nonzero norm")
        return cls(sector, amplitudes / nrm, float(np.log(nrm)))

    @classmethod
    def all_down(cls, sector):
        return cls(sector, sector.all_down_state(), 0.0)
