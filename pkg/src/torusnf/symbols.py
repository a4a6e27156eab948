"""Time-dependent symbols a(t, x, xi) and their derivative machinery.

A symbol is a vectorized evaluator plus a declared order.  Evaluators must
accept broadcastable numpy arrays for x and xi (t is a scalar parameter) and
are expected to be 2pi-periodic in x.  Grid-backed symbols ("unquantized"
operator columns) are defined on integer xi only and clamp at the lattice
edge; closed-form symbols evaluate anywhere, which is what off-grid
characteristic composition needs.

Derivatives: d/dx is spectral (sampled on the standard grid, differentiated
in Fourier, trig-interpolated back if needed); d/dxi uses the analytic
derivative when the symbol carries one, otherwise central differences with
step 1 on the integer lattice.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .grid import grid_points, wavenumbers, spectral_x_derivative

__all__ = ["Symbol", "GridSymbolTable", "symbol_from_table"]


def _bcast(val, x, xi):
    shape = np.broadcast_shapes(np.shape(val), np.shape(x), np.shape(xi))
    return np.broadcast_to(np.asarray(val, dtype=np.complex128), shape)


class Symbol:
    """A symbol with evaluator (t, x, xi) -> complex array."""

    def __init__(
        self,
        evaluator: Callable,
        order: float,
        label: str = "",
        xi_derivative: Optional[Callable] = None,
    ):
        self.evaluator = evaluator
        self.order = float(order)
        self.label = label
        self.xi_derivative = xi_derivative

    def __call__(self, t, x, xi):
        return np.asarray(self.evaluator(t, x, xi), dtype=np.complex128)

    def __repr__(self):
        return f"Symbol({self.label or 'anonymous'}, order={self.order})"

    # -- constructors -------------------------------------------------

    @classmethod
    def constant(cls, c, label: str = "") -> "Symbol":
        c = complex(c)
        return cls(
            lambda t, x, xi: _bcast(c, x, xi),
            order=0.0,
            label=label or f"{c}",
            xi_derivative=lambda t, x, xi: _bcast(0.0, x, xi),
        )

    @classmethod
    def from_xfun(cls, f: Callable, order: float = 0.0, label: str = "") -> "Symbol":
        """Symbol depending on (t, x) only, e.g. a potential."""
        return cls(
            lambda t, x, xi: _bcast(f(t, x), x, xi),
            order=order,
            label=label,
            xi_derivative=lambda t, x, xi: _bcast(0.0, x, xi),
        )

    @classmethod
    def multiplier(
        cls,
        f: Callable,
        order: float,
        label: str = "",
        xi_derivative: Optional[Callable] = None,
    ) -> "Symbol":
        """x-independent symbol (Fourier multiplier) f(t, xi)."""
        dfdxi = None
        if xi_derivative is not None:
            dfdxi = lambda t, x, xi: _bcast(xi_derivative(t, xi), x, xi)
        return cls(
            lambda t, x, xi: _bcast(f(t, xi), x, xi),
            order=order,
            label=label,
            xi_derivative=dfdxi,
        )

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other: "Symbol") -> "Symbol":
        other = _as_symbol(other)
        dxi = None
        if self.xi_derivative is not None and other.xi_derivative is not None:
            sa, sb = self.xi_derivative, other.xi_derivative
            dxi = lambda t, x, xi: sa(t, x, xi) + sb(t, x, xi)
        return Symbol(
            lambda t, x, xi: self(t, x, xi) + other(t, x, xi),
            order=max(self.order, other.order),
            label=f"({self.label}+{other.label})",
            xi_derivative=dxi,
        )

    def __sub__(self, other: "Symbol") -> "Symbol":
        return self + (-_as_symbol(other))

    def __neg__(self) -> "Symbol":
        dxi = None
        if self.xi_derivative is not None:
            sd = self.xi_derivative
            dxi = lambda t, x, xi: -np.asarray(sd(t, x, xi))
        return Symbol(
            lambda t, x, xi: -self(t, x, xi),
            order=self.order,
            label=f"(-{self.label})",
            xi_derivative=dxi,
        )

    def __mul__(self, other) -> "Symbol":
        if np.isscalar(other):
            c = complex(other)
            dxi = None
            if self.xi_derivative is not None:
                sd = self.xi_derivative
                dxi = lambda t, x, xi: c * np.asarray(sd(t, x, xi))
            return Symbol(
                lambda t, x, xi: c * self(t, x, xi),
                order=self.order,
                label=f"({other}*{self.label})",
                xi_derivative=dxi,
            )
        other = _as_symbol(other)
        dxi = None
        if self.xi_derivative is not None and other.xi_derivative is not None:
            sa, sb = self.xi_derivative, other.xi_derivative
            dxi = lambda t, x, xi: (
                np.asarray(sa(t, x, xi)) * other(t, x, xi)
                + self(t, x, xi) * np.asarray(sb(t, x, xi))
            )
        return Symbol(
            lambda t, x, xi: self(t, x, xi) * other(t, x, xi),
            order=self.order + other.order,
            label=f"({self.label}*{other.label})",
            xi_derivative=dxi,
        )

    __rmul__ = __mul__

    # -- sampling and derivatives -------------------------------------

    def sample(self, t: float, n: int) -> np.ndarray:
        """Table a(t, x_j, xi_k), shape (n, n), xi in FFT order."""
        x = grid_points(n)
        xi = wavenumbers(n)
        return self(t, x[:, None], xi[None, :])

    def d_xi(self) -> "Symbol":
        """d/dxi: analytic when available, else centered step-1 differences."""
        if self.xi_derivative is not None:
            sd = self.xi_derivative
            return Symbol(
                lambda t, x, xi: np.asarray(sd(t, x, xi), dtype=np.complex128),
                order=self.order - 1.0,
                label=f"d_xi({self.label})",
            )
        return Symbol(
            lambda t, x, xi: 0.5 * (self(t, x, np.asarray(xi) + 1) - self(t, x, np.asarray(xi) - 1)),
            order=self.order - 1.0,
            label=f"d_xi({self.label})",
        )

    def d_x(self, n: int) -> "Symbol":
        """Spectral d/dx at grid resolution n."""
        base = self

        def ev(t, x, xi):
            x = np.asarray(x, dtype=float)
            xi_arr = np.asarray(xi)
            xg = grid_points(n)
            # sample on the standard grid for every requested xi
            xi_flat = np.atleast_1d(xi_arr.astype(np.complex128).real)
            vals = base(t, xg[:, None], xi_flat.reshape(1, -1))
            dv = spectral_x_derivative(vals, order=1, axis=0)
            if x.ndim and x.size == n and np.allclose(x.ravel(), xg):
                out = dv  # columns already on the grid
                return _reshape_grid_result(out, x, xi_arr)
            return _trig_columns_at(dv, x, xi_arr, n)

        return Symbol(ev, order=self.order, label=f"d_x({self.label})")


def _as_symbol(obj) -> Symbol:
    if isinstance(obj, Symbol):
        return obj
    if np.isscalar(obj):
        return Symbol.constant(obj)
    raise TypeError(f"cannot interpret {obj!r} as a Symbol")


def _reshape_grid_result(table, x, xi_arr):
    # table has shape (n, n_xi); broadcast back to the (x, xi) request shape
    if np.ndim(xi_arr) == 0:
        return table[:, 0].reshape(np.shape(x))
    shape = np.broadcast_shapes(np.shape(x), np.shape(xi_arr))
    return np.broadcast_to(table.reshape(shape), shape)


def _trig_columns_at(table, x, xi_arr, n):
    """Evaluate per-xi grid columns at arbitrary x by the truncated series."""
    k = wavenumbers(n).astype(float)
    coeffs = np.fft.fft(table, axis=0) / n  # (n, n_xi)
    xf = np.asarray(x, dtype=float).ravel()
    phases = np.exp(1j * np.outer(xf, k))  # (n_x, n)
    vals = phases @ coeffs  # (n_x, n_xi)
    if np.ndim(xi_arr) == 0:
        return vals[:, 0].reshape(np.shape(x))
    shape = np.broadcast_shapes(np.shape(x), np.shape(xi_arr))
    # request shapes are (n_x, 1) x (1, n_xi) in all internal call sites
    return np.broadcast_to(vals.reshape(shape), shape)


class GridSymbolTable:
    """Symbol backed by a (x-grid) x (xi-lattice) table at a fixed time.

    Integer xi only; values are clamped at the lattice edge, which is
    harmless inside the headroom block where all identities are asserted.
    Off-grid x uses trigonometric interpolation.
    """

    def __init__(self, table: np.ndarray, time_tag: float = 0.0):
        table = np.asarray(table, dtype=np.complex128)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise ValueError("table must be square (n_x, n_xi)")
        self.table = table
        self.n = table.shape[0]
        self.time_tag = float(time_tag)
        # column lookup indexed by integer wavenumber
        self._xi = wavenumbers(self.n)
        self._col_of = np.empty(self.n, dtype=np.int64)
        self._col_of[self._xi % self.n] = np.arange(self.n)

    def _columns(self, xi_flat: np.ndarray) -> np.ndarray:
        half = self.n // 2
        xi_int = np.rint(xi_flat).astype(np.int64)
        if not np.allclose(xi_flat, xi_int, atol=1e-9):
            raise ValueError("grid-backed symbols are defined on integer xi only")
        xi_cl = np.clip(xi_int, -half, half - 1)
        return self._col_of[xi_cl % self.n]

    def __call__(self, t, x, xi):
        x = np.asarray(x, dtype=float)
        xi_arr = np.asarray(xi, dtype=float)
        xi_flat = np.atleast_1d(xi_arr).ravel()
        cols = self._columns(xi_flat)
        sub = self.table[:, cols]  # (n, n_xi)
        xg = grid_points(self.n)
        if x.size == self.n and np.allclose(np.sort(x.ravel()), xg):
            if np.allclose(x.ravel(), xg):
                return _reshape_grid_result(sub, x, xi_arr)
        return _trig_columns_at(sub, x, xi_arr, self.n)


def symbol_from_table(table: np.ndarray, order: float, label: str = "", time_tag: float = 0.0) -> Symbol:
    ev = GridSymbolTable(table, time_tag=time_tag)
    sym = Symbol(ev, order=order, label=label)
    sym.time_tag = time_tag
    sym.table = ev.table
    return sym
