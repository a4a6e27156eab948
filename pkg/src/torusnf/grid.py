"""Spectral representation of 2pi-periodic functions on an equispaced grid.

Conventions
-----------
* grid points  x_j = 2*pi*j/N,  j = 0..N-1,  N even and >= 8;
* spectral indices xi run over the integers {-N/2, ..., N/2-1}, stored in
  numpy FFT order [0, 1, ..., N/2-1, -N/2, ..., -1];
* coefficients are normalized so that  u(x) = sum_xi  uhat(xi) e^{i xi x},
  i.e. uhat(xi) is the trapezoidal value of (1/2pi) * integral u e^{-i xi x} dx,
  exact for band-limited u;
* the unmatched mode xi = -N/2 is zeroed after product-type operations so
  that every operator built on top stays exactly Hermitian-representable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError

__all__ = [
    "GridFunction",
    "grid_points",
    "wavenumbers",
    "fourier_coefficients",
    "from_coefficients",
    "sobolev_norm",
    "frac_laplacian",
    "derivative",
    "inv_derivative",
    "l2_inner",
    "symplectic_form",
    "spectral_x_derivative",
    "trig_eval",
]


def _check_grid_size(n: int) -> None:
    if n < 8 or n % 2 != 0:
        raise ValueError(f"grid size must be an even integer >= 8, got {n}")


def grid_points(n: int) -> np.ndarray:
    """Equispaced nodes x_j = 2*pi*j/N."""
    _check_grid_size(n)
    return 2.0 * np.pi * np.arange(n) / n


def wavenumbers(n: int) -> np.ndarray:
    """Integer wavenumbers in FFT storage order."""
    _check_grid_size(n)
    return np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)


@dataclass(frozen=True)
class GridFunction:
    """Complex-valued function sampled on the N-point torus grid."""

    samples: np.ndarray
    grid_size: int = field(init=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 1:
            raise ValueError("samples must be a 1-d array")
        _check_grid_size(samples.size)
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "grid_size", samples.size)

    @classmethod
    def from_function(cls, f, n: int, t: float | None = None) -> "GridFunction":
        x = grid_points(n)
        vals = f(t, x) if t is not None else f(x)
        return cls(np.broadcast_to(np.asarray(vals, dtype=np.complex128), (n,)).copy())

    @classmethod
    def from_coefficients(cls, coeffs: np.ndarray) -> "GridFunction":
        return from_coefficients(coeffs)

    @property
    def x(self) -> np.ndarray:
        return grid_points(self.grid_size)

    @property
    def xi(self) -> np.ndarray:
        return wavenumbers(self.grid_size)

    def spectrum(self) -> np.ndarray:
        return fourier_coefficients(self)

    def dump_csv(self, path) -> None:
        """Physical dump, rows `j, x_j, Re, Im`."""
        from .reports import write_atomic

        x = self.x
        lines = [
            f"{j},{x[j]:.17g},{self.samples[j].real:.17g},{self.samples[j].imag:.17g}"
            for j in range(self.grid_size)
        ]
        write_atomic(path, "j,x,re,im\n" + "\n".join(lines) + "\n")

    def dump_spectrum_csv(self, path) -> None:
        """Spectral dump, rows `xi, Re, Im`, ascending in xi."""
        from .reports import write_atomic

        coeffs = self.spectrum()
        order = np.argsort(self.xi)
        lines = [
            f"{self.xi[k]},{coeffs[k].real:.17g},{coeffs[k].imag:.17g}"
            for k in order
        ]
        write_atomic(path, "xi,re,im\n" + "\n".join(lines) + "\n")


def _same_grid(u: GridFunction, v: GridFunction) -> None:
    if u.grid_size != v.grid_size:
        raise GridMismatchError(
            f"grid sizes differ: {u.grid_size} vs {v.grid_size}"
        )


def fourier_coefficients(u: GridFunction) -> np.ndarray:
    """Coefficients uhat(xi) in FFT order; trapezoidal value of
    (1/2pi) * integral u(x) e^{-i xi x} dx, exact for band-limited u."""
    return np.fft.fft(u.samples) / u.grid_size


def from_coefficients(coeffs: np.ndarray) -> GridFunction:
    """Inverse of :func:`fourier_coefficients`."""
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    return GridFunction(np.fft.ifft(coeffs * coeffs.size))


def sobolev_norm(u: GridFunction, s: float) -> float:
    """H^s norm (sum_xi <xi>^{2s} |uhat|^2)^{1/2} over the truncated range,
    with <xi> = (1 + xi^2)^{1/2}."""
    if not np.isfinite(s):
        raise ValueError("s must be finite")
    coeffs = fourier_coefficients(u)
    weights = (1.0 + wavenumbers(u.grid_size).astype(float) ** 2) ** s
    return float(np.sqrt(np.sum(weights * np.abs(coeffs) ** 2)))


def frac_laplacian(u: GridFunction, a: float) -> GridFunction:
    """|D|^a u: multiply uhat(xi) by |xi|^a chi(xi); the zero mode
    (and the cut-off transition region) is annihilated on the integer lattice."""
    from .cutoffs import chi

    xi = wavenumbers(u.grid_size).astype(float)
    mult = np.zeros_like(xi)
    nz = xi != 0
    mult[nz] = np.abs(xi[nz]) ** a * chi(xi[nz])
    return from_coefficients(fourier_coefficients(u) * mult)


def derivative(u: GridFunction) -> GridFunction:
    """Spectral d/dx; the unmatched mode -N/2 is zeroed."""
    xi = wavenumbers(u.grid_size).astype(float)
    mult = 1j * xi
    mult[xi == -u.grid_size // 2] = 0.0
    return from_coefficients(fourier_coefficients(u) * mult)


def inv_derivative(u: GridFunction) -> GridFunction:
    """Antiderivative normalized to zero mean: mode 0 -> 0, mode k -> /(ik)."""
    xi = wavenumbers(u.grid_size).astype(float)
    coeffs = fourier_coefficients(u).copy()
    nz = xi != 0
    coeffs[nz] = coeffs[nz] / (1j * xi[nz])
    coeffs[~nz] = 0.0
    return from_coefficients(coeffs)


def l2_inner(u: GridFunction, v: GridFunction) -> complex:
    """Trapezoidal value of integral u(x) conj(v(x)) dx."""
    _same_grid(u, v)
    return complex(np.sum(u.samples * np.conj(v.samples)) * 2.0 * np.pi / u.grid_size)


def symplectic_form(u1: GridFunction, u2: GridFunction) -> float:
    """i * integral (u1 conj(u2) - conj(u1) u2) dx; real and antisymmetric."""
    _same_grid(u1, u2)
    inner = l2_inner(u1, u2)
    return float((1j * (inner - np.conj(inner))).real)


def spectral_x_derivative(values: np.ndarray, order: int = 1, axis: int = 0) -> np.ndarray:
    """d^order/dx^order of grid samples along `axis`, unmatched mode zeroed."""
    values = np.asarray(values, dtype=np.complex128)
    n = values.shape[axis]
    xi = wavenumbers(n).astype(float)
    mult = (1j * xi) ** order
    mult[xi == -n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    coeffs = np.fft.fft(values, axis=axis) * mult.reshape(shape)
    return np.fft.ifft(coeffs, axis=axis)


def trig_eval(values_on_grid: np.ndarray, x: np.ndarray, deriv: int = 0) -> np.ndarray:
    """Evaluate the trigonometric interpolant of grid samples at arbitrary x.

    Exact for band-limited data; used for off-grid composition with torus
    diffeomorphisms.  `deriv` applies d/dx that many times (unmatched mode
    dropped).
    """
    values_on_grid = np.asarray(values_on_grid, dtype=np.complex128)
    n = values_on_grid.size
    xi = wavenumbers(n).astype(float)
    coeffs = np.fft.fft(values_on_grid) / n
    if deriv:
        coeffs = coeffs * (1j * xi) ** deriv
        coeffs[xi == -n // 2] = 0.0
    x = np.asarray(x, dtype=float)
    # direct evaluation of the truncated series; N * len(x) work
    phases = np.exp(1j * np.outer(x.ravel(), xi))
    out = phases @ coeffs
    return out.reshape(x.shape)
