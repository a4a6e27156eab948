"""Quantization to Fourier-basis matrices and symbolic operator calculus.

An operator with symbol a acts as  u |-> sum_xi a(t, x, xi) uhat(xi) e^{i x xi}.
Its matrix in the truncated Fourier basis has entries

    A[eta, xi] = ahat(t, eta - xi, xi),

the x-Fourier coefficient of a(t, ., xi) at wavenumber eta - xi.  Exact
composition, adjoint and averaging formulas follow from this convention:

    (a o b)(t, x, xi)  = sum_eta a(t, x, xi + eta) bhat(t, eta, xi) e^{i eta x}
    a*(t, x, xi)       = conj( sum_eta ahat(t, eta, xi - eta) e^{i eta x} )
    <a>_x(t, xi)       = (1/2pi) integral a(t, x, xi) dx

All sums are truncated to the lattice; identities that are exact only in
infinite dimensions are asserted on the centered block |xi| <= N/4 with
symbols band-limited to |eta| <= N/8 (the "headroom convention").
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ContractError, GridMismatchError, NumericalError
from .grid import (
    GridFunction,
    fourier_coefficients,
    from_coefficients,
    grid_points,
    wavenumbers,
)
from .symbols import Symbol, symbol_from_table

__all__ = [
    "OperatorMatrix",
    "FitWindowError",
    "OrderFit",
    "quantize",
    "apply",
    "symbol_from_matrix",
    "compose_exact",
    "compose_expansion",
    "adjoint_symbol",
    "poisson_bracket",
    "x_average",
    "inv_x_derivative",
    "estimate_order",
    "multiplier_matrix",
    "identity_matrix",
]


class FitWindowError(ContractError):
    """The order-fit window holds fewer than the required number of points."""


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense operator in the truncated Fourier basis.

    Entries are indexed (xi_out, xi_in), both in FFT storage order.
    """

    entries: np.ndarray
    time_tag: float = 0.0
    grid_size: int = field(init=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("entries must be a square matrix")
        if not np.all(np.isfinite(entries)):
            raise NumericalError("operator matrix has non-finite entries")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "grid_size", entries.shape[0])

    @property
    def xi(self) -> np.ndarray:
        return wavenumbers(self.grid_size)

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.entries.conj().T, time_tag=self.time_tag)

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def is_hermitian(self, rel_tol: float = 1e-10) -> bool:
        scale = max(float(np.max(np.abs(self.entries))), 1e-300)
        return self.hermiticity_residual() <= rel_tol * scale

    def unitarity_residual(self) -> float:
        n = self.grid_size
        return float(
            np.max(np.abs(self.entries.conj().T @ self.entries - np.eye(n)))
        )

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        if self.grid_size != other.grid_size:
            raise GridMismatchError("operator grid sizes differ")
        return OperatorMatrix(self.entries @ other.entries, time_tag=self.time_tag)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        if self.grid_size != other.grid_size:
            raise GridMismatchError("operator grid sizes differ")
        return OperatorMatrix(self.entries + other.entries, time_tag=self.time_tag)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        if self.grid_size != other.grid_size:
            raise GridMismatchError("operator grid sizes differ")
        return OperatorMatrix(self.entries - other.entries, time_tag=self.time_tag)

    def __mul__(self, c) -> "OperatorMatrix":
        return OperatorMatrix(self.entries * complex(c), time_tag=self.time_tag)

    __rmul__ = __mul__

    def dump_csv(self, path) -> None:
        """Rows `xi_out, xi_in, Re, Im`, both indices ascending."""
        from .reports import write_atomic

        xi = self.xi
        order = np.argsort(xi)
        rows = []
        for i in order:
            for j in order:
                v = self.entries[i, j]
                rows.append(f"{xi[i]},{xi[j]},{v.real:.17g},{v.imag:.17g}")
        write_atomic(path, "xi_out,xi_in,re,im\n" + "\n".join(rows) + "\n")


def identity_matrix(n: int, time_tag: float = 0.0) -> OperatorMatrix:
    return OperatorMatrix(np.eye(n, dtype=np.complex128), time_tag=time_tag)


def multiplier_matrix(values_on_lattice: np.ndarray, time_tag: float = 0.0) -> OperatorMatrix:
    """Diagonal (space-diagonal) operator from multiplier values in FFT order."""
    return OperatorMatrix(np.diag(np.asarray(values_on_lattice, dtype=np.complex128)),
                          time_tag=time_tag)


@lru_cache(maxsize=8)
def _quantize_indices(n: int):
    """Row/col index machinery mapping x-coefficients to matrix entries."""
    xi = wavenumbers(n)
    diff = xi[:, None] - xi[None, :]  # eta - xi
    half = n // 2
    # the unmatched offset -n/2 stays zero so operators remain
    # Hermitian-representable (dealiasing guard)
    valid = (diff > -half) & (diff <= half - 1)
    rows = diff % n
    cols = np.broadcast_to(np.arange(n), (n, n))
    return valid, rows, cols


def quantize(a: Symbol, t: float, n: int) -> OperatorMatrix:
    """Matrix of Op(a) at time t on the n-point grid."""
    vals = a.sample(t, n)
    if not np.all(np.isfinite(vals)):
        bad = np.argwhere(~np.isfinite(vals))
        j, k = bad[0]
        xg, xi = grid_points(n), wavenumbers(n)
        raise NumericalError(
            f"symbol {a.label!r} evaluated to a non-finite value at "
            f"(t={t}, x={xg[j]}, xi={xi[k]})"
        )
    coeffs = np.fft.fft(vals, axis=0) / n  # ahat(k, xi), k in FFT order
    coeffs[n // 2, :] = 0.0
    valid, rows, cols = _quantize_indices(n)
    entries = np.where(valid, coeffs[rows, cols], 0.0)
    return OperatorMatrix(entries, time_tag=t)


def apply(A: OperatorMatrix, u: GridFunction) -> GridFunction:
    """Apply the operator to a grid function (spectral mat-vec)."""
    if A.grid_size != u.grid_size:
        raise GridMismatchError("operator and function grid sizes differ")
    return from_coefficients(A.entries @ fourier_coefficients(u))


def symbol_from_matrix(A: OperatorMatrix, order: float, label: str = "") -> Symbol:
    """Recover the symbol table a(x_j, xi) = sum_eta A[eta, xi] e^{i(eta-xi)x_j}.

    Exact inverse of `quantize` for every entry whose row offset lies on the
    lattice; far off-diagonal content (beyond the offset range) wraps, which
    only matters outside the headroom block.
    """
    n = A.grid_size
    xg = grid_points(n)
    s = n * np.fft.ifft(A.entries, axis=0)  # sum_eta A[eta, xi] e^{i eta x_j}
    phase = np.exp(-1j * np.outer(xg, wavenumbers(n).astype(float)))
    return symbol_from_table(s * phase, order=order, label=label, time_tag=A.time_tag)


def _active_offsets(coeffs: np.ndarray, n: int, rel_floor: float = 1e-15):
    """Indices of x-offsets carrying mass, skipping the unmatched -n/2 mode."""
    mags = np.max(np.abs(coeffs), axis=1)
    floor = rel_floor * max(float(np.max(mags)), 1e-300)
    idx = [k for k in range(n) if mags[k] > floor and k != n // 2]
    return idx


def compose_exact(a: Symbol, b: Symbol, n: int) -> Symbol:
    """Symbol of Op(a) Op(b) by the finite composition sum.

    quantize(compose_exact(a, b)) equals quantize(a) @ quantize(b) to
    round-off whenever both symbols are x-band-limited with total bandwidth
    below N/2 and the xi headroom is respected.
    """
    k_of = wavenumbers(n)

    def ev(t, x, xi):
        xg = grid_points(n)
        xi_arr = np.asarray(xi, dtype=float)
        xi_flat = np.atleast_1d(xi_arr).ravel()
        bvals = b(t, xg[:, None], xi_flat[None, :])
        bhat = np.fft.fft(bvals, axis=0) / n
        bhat[n // 2, :] = 0.0
        x_arr = np.asarray(x, dtype=float)
        out = None
        for k_idx in _active_offsets(bhat, n):
            eta = float(k_of[k_idx])
            a_shift = a(t, x_arr, xi_arr + eta)
            term = a_shift * bhat[k_idx][_match_xi_shape(xi_arr)] * np.exp(1j * eta * x_arr)
            out = term if out is None else out + term
        if out is None:
            out = np.zeros(np.broadcast_shapes(np.shape(x_arr), np.shape(xi_arr)),
                           dtype=np.complex128)
        return out

    return Symbol(ev, order=a.order + b.order, label=f"({a.label}o{b.label})")


def _match_xi_shape(xi_arr):
    """Index that reshapes a flat per-xi vector back to the xi request shape."""
    if np.ndim(xi_arr) == 0:
        return 0
    # internal call sites use xi of shape (1, m) or (m,)
    if np.ndim(xi_arr) == 2 and np.shape(xi_arr)[0] == 1:
        return (None, slice(None))
    return slice(None)


def adjoint_symbol(a: Symbol, n: int) -> Symbol:
    """Symbol of the L^2 adjoint: conj(sum_eta ahat(t, eta, xi - eta) e^{i eta x})."""

    def ev(t, x, xi):
        xg = grid_points(n)
        xi_arr = np.asarray(xi, dtype=float)
        xi_flat = np.atleast_1d(xi_arr).ravel()
        x_arr = np.asarray(x, dtype=float)
        k_of = wavenumbers(n)
        # pass 1: find active offsets from the symbol's own x-spectrum
        probe = a(t, xg[:, None], xi_flat[None, :])
        probe_hat = np.fft.fft(probe, axis=0) / n
        probe_hat[n // 2, :] = 0.0
        out = None
        for k_idx in _active_offsets(probe_hat, n):
            eta = float(k_of[k_idx])
            vals = a(t, xg[:, None], (xi_flat - eta)[None, :])
            ahat = np.fft.fft(vals, axis=0)[k_idx, :] / n
            term = np.conj(ahat)[_match_xi_shape(xi_arr)] * np.exp(-1j * eta * x_arr)
            term = np.broadcast_to(
                term, np.broadcast_shapes(np.shape(x_arr), np.shape(xi_arr))
            )
            out = term if out is None else out + term
        if out is None:
            out = np.zeros(np.broadcast_shapes(np.shape(x_arr), np.shape(xi_arr)),
                           dtype=np.complex128)
        return out

    return Symbol(ev, order=a.order, label=f"adj({a.label})")


def compose_expansion(a: Symbol, b: Symbol, n_exp: int, n: int):
    """Truncated composition expansion and its exact remainder.

    Returns (expansion, remainder) with

        expansion = sum_{beta < n_exp} (1 / (i^beta beta!))
                        d_xi^beta a * d_x^beta b
        remainder = compose_exact(a, b) - expansion.
    """
    if n_exp < 1:
        raise ValueError("n_exp must be >= 1")
    terms = []
    a_der = a
    b_der = b
    fact = 1.0
    for beta in range(n_exp):
        if beta > 0:
            a_der = a_der.d_xi()
            b_der = b_der.d_x(n)
            fact *= beta
        coef = 1.0 / ((1j ** beta) * fact)
        terms.append(coef * (a_der * b_der))
    expansion = terms[0]
    for tsym in terms[1:]:
        expansion = expansion + tsym
    expansion.label = f"exp{n_exp}({a.label},{b.label})"
    expansion.order = a.order + b.order
    remainder = compose_exact(a, b, n) - expansion
    remainder.label = f"rem{n_exp}({a.label},{b.label})"
    remainder.order = a.order + b.order - n_exp
    return expansion, remainder


def poisson_bracket(a: Symbol, b: Symbol, n: int) -> Symbol:
    """{a, b} = d_xi a * d_x b - d_x a * d_xi b."""
    out = a.d_xi() * b.d_x(n) - a.d_x(n) * b.d_xi()
    out.label = f"{{{a.label},{b.label}}}"
    out.order = a.order + b.order - 1.0
    return out


def x_average(a: Symbol, n: int) -> Symbol:
    """x-mean of the symbol (trapezoidal rule); the result ignores x."""

    def ev(t, x, xi):
        xg = grid_points(n)
        xi_arr = np.asarray(xi, dtype=float)
        xi_flat = np.atleast_1d(xi_arr).ravel()
        vals = a(t, xg[:, None], xi_flat[None, :])
        mean = np.mean(vals, axis=0)
        term = mean[_match_xi_shape(xi_arr)]
        shape = np.broadcast_shapes(np.shape(x), np.shape(xi_arr))
        return np.broadcast_to(term, shape)

    return Symbol(ev, order=a.order, label=f"<{a.label}>_x")


def inv_x_derivative(a: Symbol, n: int) -> Symbol:
    """Antiderivative in x with zero mean, applied per xi."""

    def ev(t, x, xi):
        xg = grid_points(n)
        xi_arr = np.asarray(xi, dtype=float)
        xi_flat = np.atleast_1d(xi_arr).ravel()
        vals = a(t, xg[:, None], xi_flat[None, :])
        coeffs = np.fft.fft(vals, axis=0) / n
        k = wavenumbers(n).astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            coeffs = np.where(k[:, None] != 0.0, coeffs / (1j * k[:, None]), 0.0)
        table = np.fft.ifft(coeffs * n, axis=0)
        x_arr = np.asarray(x, dtype=float)
        if x_arr.size == n and np.allclose(x_arr.ravel(), xg):
            term = table
            shape = np.broadcast_shapes(np.shape(x_arr), np.shape(xi_arr))
            return np.broadcast_to(term.reshape(shape), shape)
        from .symbols import _trig_columns_at

        return _trig_columns_at(table, x_arr, xi_arr, n)

    return Symbol(ev, order=a.order, label=f"dx^-1({a.label})")


@dataclass(frozen=True)
class OrderFit:
    """Least-squares slope of log column norms against log <xi>."""

    slope: float
    residual: float
    n_points: int

    def __float__(self):
        return self.slope


def estimate_order(
    A: OperatorMatrix,
    lo: float = 4.0,
    hi: float | None = None,
    min_points: int = 8,
    zero_floor: float = 1e-13,
) -> OrderFit:
    """Fit ||A e_xi||_{l2} ~ <xi>^slope over the window lo <= |xi| <= hi.

    Defaults to the window [4, N/8].  Columns below the zero floor are
    dropped; if every windowed column is ~zero the sentinel slope -inf is
    returned.  Raises FitWindowError when the window holds fewer than
    `min_points` lattice points.
    """
    n = A.grid_size
    if hi is None:
        hi = n / 8.0
    xi = A.xi.astype(float)
    in_window = (np.abs(xi) >= lo) & (np.abs(xi) <= hi)
    if int(np.count_nonzero(in_window)) < min_points:
        raise FitWindowError(
            f"order-fit window [{lo}, {hi}] holds "
            f"{int(np.count_nonzero(in_window))} points (< {min_points}) at N={n}"
        )
    col_norms = np.linalg.norm(A.entries, axis=0)
    scale = max(float(np.max(col_norms)), 1e-300)
    live = in_window & (col_norms > zero_floor * max(scale, 1.0))
    if not np.any(live):
        return OrderFit(slope=float("-inf"), residual=0.0, n_points=0)
    if int(np.count_nonzero(live)) < min_points:
        # window populated but the operator is essentially zero there
        return OrderFit(slope=float("-inf"), residual=0.0,
                        n_points=int(np.count_nonzero(live)))
    logs = np.log(col_norms[live])
    logw = 0.5 * np.log1p(xi[live] ** 2)
    design = np.stack([logw, np.ones_like(logw)], axis=1)
    coef, res, *_ = np.linalg.lstsq(design, logs, rcond=None)
    fitted = design @ coef
    rms = float(np.sqrt(np.mean((logs - fitted) ** 2)))
    return OrderFit(slope=float(coef[0]), residual=rms,
                    n_points=int(np.count_nonzero(live)))


def order_fit_report(A: OperatorMatrix, path, lo: float = 4.0, hi: float | None = None) -> OrderFit:
    """CSV `xi, log_col_norm` plus the fitted slope as a trailing comment row."""
    from .reports import write_atomic

    fit = estimate_order(A, lo=lo, hi=hi)
    xi = A.xi
    order = np.argsort(xi)
    col_norms = np.linalg.norm(A.entries, axis=0)
    rows = [
        f"{xi[k]},{np.log(max(col_norms[k], 1e-300)):.17g}"
        for k in order
    ]
    rows.append(f"# fitted_slope,{fit.slope:.17g}")
    write_atomic(path, "xi,log_col_norm\n" + "\n".join(rows) + "\n")
    return fit
