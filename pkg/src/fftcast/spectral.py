"""Half-spectrum Fourier codec with energy-threshold and RMSE-bound truncation.

Energies in the frequency domain always carry the ``1/n`` Parseval factor and
count interior bins twice (their conjugate mirrors are not stored), so the
energy of a full half-spectrum equals the time-domain energy of its batch.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_batch, check_even_length, check_fraction, check_positive
from .exceptions import InvalidInputError

REALNESS_TOL = 1e-9


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Bins ``0..n/2`` of the length-``n`` DFT of a real batch."""

    coefficients: np.ndarray
    n: int

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _frozen(self.coefficients, np.complex128))
        check_even_length(self.n)
        if self.coefficients.shape != (self.n // 2 + 1,):
            raise InvalidInputError(
                f"half-spectrum of n={self.n} needs {self.n // 2 + 1} bins, "
                f"got {self.coefficients.shape}"
            )

    def __eq__(self, other):
        if not isinstance(other, Spectrum):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.coefficients, other.coefficients)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TruncatedSpectrum:
    """The first ``k`` half-spectrum bins of a length-``n`` batch."""

    coefficients: np.ndarray
    n: int

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _frozen(self.coefficients, np.complex128))
        check_even_length(self.n)
        k = self.coefficients.shape[0] if self.coefficients.ndim == 1 else -1
        if not 1 <= k <= self.n // 2 + 1:
            raise InvalidInputError(f"k must lie in [1, {self.n // 2 + 1}], got {k}")

    @property
    def k(self):
        return self.coefficients.shape[0]

    def __eq__(self, other):
        if not isinstance(other, TruncatedSpectrum):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.coefficients, other.coefficients)

    __hash__ = None

    def __repr__(self):
        return f"TruncatedSpectrum(n={self.n}, k={self.k})"


@dataclass(frozen=True, eq=False)
class EnergyProfile:
    """Normalised cumulative energy per retained-prefix length.

    ``cumulative[k]`` is the fraction of energy held by the first ``k`` bins,
    so it has ``n/2 + 2`` entries running from 0 to 1.
    """

    cumulative: np.ndarray
    total_energy: float

    @property
    def degenerate(self):
        return self.total_energy == 0.0


def multiplicities(n, k=None):
    """Conjugate multiplicity of half-spectrum bins ``0..k-1``."""
    half = n // 2
    m = np.full(half + 1, 2.0)
    m[0] = 1.0
    m[half] = 1.0
    return m if k is None else m[:k]


def dft(batch):
    """Half-spectrum of the unnormalised forward DFT of ``batch``."""
    u = check_batch(batch)
    return Spectrum(np.fft.rfft(u), u.shape[0])


def idft(spectrum):
    """Inverse of :func:`dft`; returns a real array of length ``n``."""
    c = spectrum.coefficients
    if abs(c[0].imag) > REALNESS_TOL or abs(c[-1].imag) > REALNESS_TOL:
        raise InvalidInputError("DC and Nyquist bins of a real signal must be real")
    return np.fft.irfft(c, n=spectrum.n)


def signal_energy(batch):
    u = np.asarray(batch, dtype=np.float64)
    return float(np.dot(u, u))


def _bin_energies(coefficients, n):
    c = np.asarray(coefficients, dtype=np.complex128)
    return multiplicities(n, c.shape[0]) * (c.real**2 + c.imag**2) / n


def spectral_energy(spectrum_prefix, n, k=None):
    """Energy carried by the first ``k`` half-spectrum bins (all given bins by default)."""
    c = np.asarray(spectrum_prefix, dtype=np.complex128)
    if k is None:
        k = c.shape[0]
    if k > n // 2 + 1 or k > c.shape[0]:
        raise InvalidInputError(f"k={k} exceeds the available half-spectrum bins")
    return float(_bin_energies(c[:k], n).sum())


def energy_profile(spectrum):
    e = _bin_energies(spectrum.coefficients, spectrum.n)
    cum = np.concatenate(([0.0], np.cumsum(e)))
    total = float(cum[-1])
    if total == 0.0:
        return EnergyProfile(np.zeros_like(cum), 0.0)
    return EnergyProfile(cum / total, total)


def truncate_by_energy(spectrum, e):
    """Shortest prefix holding at least a fraction ``e`` of the batch energy."""
    e = check_fraction(e, "e")
    profile = energy_profile(spectrum)
    if profile.degenerate:
        k = 1
    else:
        # first k with cumulative[k] >= e; ties resolve to the smaller k
        k = max(1, int(np.searchsorted(profile.cumulative, e, side="left")))
        k = min(k, spectrum.n // 2 + 1)
    return TruncatedSpectrum(spectrum.coefficients[:k], spectrum.n)


def tail_rmse_bounds(spectrum):
    """``sqrt(E(L)/n)`` for every prefix length ``k = 1 .. n/2+1``.

    The lost energy is summed from the tail so small remainders keep full
    relative precision.
    """
    e = _bin_energies(spectrum.coefficients, spectrum.n)
    tail = np.cumsum(e[::-1])[::-1]
    lost = np.append(tail[1:], 0.0)
    return np.sqrt(lost / spectrum.n)


def truncate_by_rmse(spectrum, eps):
    """Shortest prefix whose discarded energy keeps the reconstruction RMSE <= ``eps``."""
    eps = check_positive(eps, "eps")
    bounds = tail_rmse_bounds(spectrum)
    k = int(np.argmax(bounds <= eps)) + 1  # bounds[-1] == 0 always qualifies
    return TruncatedSpectrum(spectrum.coefficients[:k], spectrum.n)


def truncate(spectrum, criterion, value):
    if criterion == "energy":
        return truncate_by_energy(spectrum, value)
    if criterion == "rmse":
        return truncate_by_rmse(spectrum, value)
    raise InvalidInputError(f"unknown truncation criterion {criterion!r}")


def reconstruct(trunc):
    full = np.zeros(trunc.n // 2 + 1, dtype=np.complex128)
    full[: trunc.k] = trunc.coefficients
    return idft(Spectrum(full, trunc.n))


def truncation_rmse(original, trunc):
    u = np.asarray(original, dtype=np.float64)
    if u.shape != (trunc.n,):
        raise InvalidInputError(f"batch length {u.shape} does not match n={trunc.n}")
    d = u - reconstruct(trunc)
    return float(np.sqrt(np.dot(d, d) / trunc.n))


class FourierTruncator(TransformerMixin, BaseEstimator):
    """Transformer mapping rows of equal-length batches to truncated spectra.

    ``transform`` returns a list of :class:`TruncatedSpectrum` (one per row) and
    ``inverse_transform`` maps such a list back to an ``(n_samples, n)`` array.

    Parameters
    ----------
    criterion : {"energy", "rmse"}
    threshold : float
        Energy fraction ``e`` in (0, 1] or RMSE bound ``eps > 0``.
    """

    def __init__(self, criterion="energy", threshold=0.9):
        self.criterion = criterion
        self.threshold = threshold

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        check_even_length(X.shape[1], "n_features")
        if self.criterion == "energy":
            check_fraction(self.threshold, "threshold")
        elif self.criterion == "rmse":
            check_positive(self.threshold, "threshold")
        else:
            raise InvalidInputError(f"unknown truncation criterion {self.criterion!r}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return [truncate(dft(row), self.criterion, self.threshold) for row in X]

    def inverse_transform(self, spectra):
        return np.vstack([reconstruct(t) for t in spectra])
