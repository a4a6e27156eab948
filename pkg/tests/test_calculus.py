import numpy as np
import pytest

from torusnf.calculus import (
    FitWindowError,
    adjoint_symbol,
    apply,
    compose_exact,
    compose_expansion,
    estimate_order,
    identity_matrix,
    inv_x_derivative,
    multiplier_matrix,
    poisson_bracket,
    quantize,
    symbol_from_matrix,
    x_average,
)
from torusnf.cutoffs import chi, chi0
from torusnf.grid import GridFunction, from_coefficients, grid_points, wavenumbers
from torusnf.symbols import Symbol

N = 64
T0 = 0.0


def sym_xi():
    return Symbol(
        lambda t, x, xi: (np.asarray(xi, dtype=complex)
                          + 0.0 * np.asarray(x, dtype=complex)),
        order=1.0,
        label="xi",
        xi_derivative=lambda t, x, xi: np.ones(
            np.broadcast_shapes(np.shape(x), np.shape(xi)), dtype=complex
        ),
    )


def sym_exp_ix(k=1):
    return Symbol(
        lambda t, x, xi: np.exp(1j * k * np.asarray(x, dtype=complex))
        + 0.0 * np.asarray(xi, dtype=complex),
        order=0.0,
        label=f"e^{k}ix",
        xi_derivative=lambda t, x, xi: np.zeros(
            np.broadcast_shapes(np.shape(x), np.shape(xi)), dtype=complex
        ),
    )


def sym_abs_xi_pow(p, use_chi=True):
    def ev(t, x, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape, dtype=complex)
        nz = np.abs(xi) > 1e-12
        out[nz] = np.abs(xi[nz]) ** p * (chi(xi[nz]) if use_chi else 1.0)
        return out + 0.0 * np.asarray(x, dtype=complex)

    return Symbol(ev, order=p, label=f"|xi|^{p}chi")


def random_trig_symbol(rng, n_modes=4, max_k=6, xi_order=1.0):
    """Random symbol sum_j c_j e^{i k_j x} <xi>^{m_j} with analytic pieces."""
    ks = rng.integers(-max_k, max_k + 1, size=n_modes)
    cs = rng.standard_normal(n_modes) + 1j * rng.standard_normal(n_modes)
    ms = rng.uniform(0, xi_order, size=n_modes)

    def ev(t, x, xi):
        x = np.asarray(x, dtype=complex)
        w = (1.0 + np.asarray(xi, dtype=float) ** 2) ** 0.5
        out = 0.0
        for c, k, m in zip(cs, ks, ms):
            out = out + c * np.exp(1j * k * x) * w ** m
        return out

    return Symbol(ev, order=float(np.max(ms)), label="rand")


class TestQuantize:
    def test_constant_is_identity(self):
        a = Symbol.constant(1.0)
        A = quantize(a, T0, N)
        assert np.max(np.abs(A.entries - np.eye(N))) < 1e-13

    def test_multiplier_is_diagonal(self):
        A = quantize(sym_xi(), T0, N)
        expected = np.diag(wavenumbers(N).astype(complex))
        assert np.max(np.abs(A.entries - expected)) < 1e-12

    def test_single_mode_is_shift(self):
        A = quantize(sym_exp_ix(1), T0, N)
        xi = wavenumbers(N)
        # entry (eta, xi) should be 1 exactly when eta = xi + 1
        for j, x_in in enumerate(xi):
            for i, x_out in enumerate(xi):
                expected = 1.0 if x_out == x_in + 1 else 0.0
                assert abs(A.entries[i, j] - expected) < 1e-12

    def test_apply_identity(self):
        rng = np.random.default_rng(0)
        coeffs = np.zeros(N, dtype=complex)
        coeffs[np.abs(wavenumbers(N)) <= N // 4] = 1.0
        u = from_coefficients(coeffs)
        out = apply(identity_matrix(N), u)
        assert np.max(np.abs(out.samples - u.samples)) < 1e-12

    def test_apply_multiplier(self):
        x = grid_points(N)
        u = GridFunction(np.exp(1j * x))
        out = apply(quantize(sym_xi(), T0, N), u)
        assert np.max(np.abs(out.samples - u.samples)) < 1e-12

    def test_apply_matches_pointwise_product(self):
        # multiplication operator: quantize(V(x)) u == V*u for band-limited data
        rng = np.random.default_rng(1)
        x = grid_points(N)
        v_vals = 1.0 + 0.3 * np.cos(x) + 0.1 * np.sin(2 * x)
        V = Symbol.from_xfun(lambda t, xx: 1.0 + 0.3 * np.cos(xx) + 0.1 * np.sin(2 * xx))
        coeffs = np.zeros(N, dtype=complex)
        mask = np.abs(wavenumbers(N)) <= N // 8
        coeffs[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
        u = from_coefficients(coeffs)
        out = apply(quantize(V, T0, N), u)
        assert np.max(np.abs(out.samples - v_vals * u.samples)) < 1e-12 * np.max(
            np.abs(u.samples)
        )

    def test_nonfinite_symbol_raises(self):
        from torusnf.errors import NumericalError

        def ev(t, x, xi):
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.asarray(xi, dtype=complex) ** -1.0 + 0.0 * np.asarray(
                    x, dtype=complex
                )

        bad = Symbol(ev, order=-1.0, label="1/xi")
        with pytest.raises(NumericalError):
            quantize(bad, T0, N)


class TestComposeExact:
    def test_multiplier_times_mode(self):
        # a = xi, b = e^{ix}: sigma = (xi + 1) e^{ix}
        sigma = compose_exact(sym_xi(), sym_exp_ix(1), N)
        x = grid_points(N)
        xi = wavenumbers(N)
        got = sigma(T0, x[:, None], xi[None, :])
        expected = (xi[None, :] + 1.0) * np.exp(1j * x[:, None])
        assert np.max(np.abs(got - expected)) < 1e-11

    def test_mode_times_multiplier(self):
        sigma = compose_exact(sym_exp_ix(1), sym_xi(), N)
        x = grid_points(N)
        xi = wavenumbers(N)
        got = sigma(T0, x[:, None], xi[None, :])
        expected = xi[None, :] * np.exp(1j * x[:, None])
        assert np.max(np.abs(got - expected)) < 1e-11

    def test_two_multipliers(self):
        sigma = compose_exact(sym_xi(), sym_xi(), N)
        x = grid_points(N)
        xi = wavenumbers(N)
        got = sigma(T0, x[:, None], xi[None, :])
        assert np.max(np.abs(got - xi[None, :].astype(complex) ** 2)) < 1e-10

    def test_homomorphism_bandlimited(self):
        rng = np.random.default_rng(2)
        a = random_trig_symbol(rng, max_k=N // 8)
        b = random_trig_symbol(rng, max_k=N // 8)
        lhs = quantize(compose_exact(a, b, N), T0, N)
        rhs = quantize(a, T0, N) @ quantize(b, T0, N)
        xi = wavenumbers(N)
        block = np.abs(xi) <= N // 4
        diff = np.abs(lhs.entries - rhs.entries)[np.ix_(block, block)]
        scale = np.max(np.abs(rhs.entries))
        assert np.max(diff) < 1e-10 * max(scale, 1.0)


class TestAdjoint:
    def test_multiplier_conjugate(self):
        a = Symbol.multiplier(lambda t, xi: (1.0 + 2j) * np.asarray(xi, dtype=complex),
                              order=1.0, label="c*xi")
        astar = adjoint_symbol(a, N)
        xi = wavenumbers(N).astype(float)
        got = astar(T0, grid_points(N)[:, None], xi[None, :])
        expected = np.conj((1.0 + 2j) * xi)[None, :] * np.ones((N, 1))
        block = np.abs(xi) <= N // 4
        assert np.max(np.abs(got[:, block] - expected[:, block])) < 1e-10

    def test_single_mode(self):
        astar = adjoint_symbol(sym_exp_ix(1), N)
        x = grid_points(N)
        xi = wavenumbers(N).astype(float)
        got = astar(T0, x[:, None], xi[None, :])
        block = np.abs(xi) <= N // 4
        expected = np.exp(-1j * x[:, None]) * np.ones((1, N))
        assert np.max(np.abs(got[:, block] - expected[:, block])) < 1e-10

    def test_real_potential_self_adjoint(self):
        V = Symbol.from_xfun(lambda t, x: 2.0 + np.cos(x), label="V")
        astar = adjoint_symbol(V, N)
        x = grid_points(N)
        xi = wavenumbers(N).astype(float)
        block = np.abs(xi) <= N // 4
        got = astar(T0, x[:, None], xi[None, :])
        expected = V(T0, x[:, None], xi[None, :])
        assert np.max(np.abs((got - expected)[:, block])) < 1e-10

    def test_matrix_adjoint_matches(self):
        rng = np.random.default_rng(3)
        a = random_trig_symbol(rng, max_k=N // 8)
        lhs = quantize(adjoint_symbol(a, N), T0, N)
        rhs = quantize(a, T0, N).dagger()
        xi = wavenumbers(N)
        block = np.abs(xi) <= N // 4
        diff = np.abs(lhs.entries - rhs.entries)[np.ix_(block, block)]
        assert np.max(diff) < 1e-10 * max(np.max(np.abs(rhs.entries)), 1.0)

    def test_involution(self):
        rng = np.random.default_rng(4)
        a = random_trig_symbol(rng, max_k=N // 8)
        aa = adjoint_symbol(adjoint_symbol(a, N), N)
        lhs = quantize(aa, T0, N)
        rhs = quantize(a, T0, N)
        xi = wavenumbers(N)
        block = np.abs(xi) <= N // 4
        diff = np.abs(lhs.entries - rhs.entries)[np.ix_(block, block)]
        assert np.max(diff) < 1e-10 * max(np.max(np.abs(rhs.entries)), 1.0)


class TestAverageAndInvDerivative:
    def test_zero_mean(self):
        a = sym_exp_ix(1) * sym_xi()
        m = x_average(a, N)
        xi = wavenumbers(N).astype(float)
        got = m(T0, grid_points(N)[:, None], xi[None, :])
        assert np.max(np.abs(got)) < 1e-12

    def test_constant_plus_cos(self):
        def ev(t, x, xi):
            return (2.0 + np.cos(np.asarray(x, dtype=complex))) * np.abs(
                np.asarray(xi, dtype=float)
            )

        a = Symbol(ev, order=1.0, label="(2+cosx)|xi|")
        m = x_average(a, N)
        xi = wavenumbers(N).astype(float)
        got = m(T0, grid_points(N)[:, None], xi[None, :])
        expected = 2.0 * np.abs(xi)[None, :] * np.ones((N, 1))
        assert np.max(np.abs(got - expected)) < 1e-11

    def test_average_adjoint_commute(self):
        # <a*>_x = (<a>_x)* for random symbols
        rng = np.random.default_rng(5)
        xi = wavenumbers(N).astype(float)
        block = np.abs(xi) <= N // 4
        x = grid_points(N)
        for _ in range(5):
            a = random_trig_symbol(rng, max_k=N // 8)
            lhs = x_average(adjoint_symbol(a, N), N)(T0, x[:, None], xi[None, :])
            avg = x_average(a, N)
            rhs = adjoint_symbol(avg, N)(T0, x[:, None], xi[None, :])
            assert np.max(np.abs((lhs - rhs)[:, block])) < 1e-10

    def test_inv_derivative_adjoint_commute(self):
        # dx^{-1}(a*) = (dx^{-1} a)* pointwise
        rng = np.random.default_rng(6)
        xi = wavenumbers(N).astype(float)
        block = np.abs(xi) <= N // 4
        x = grid_points(N)
        for _ in range(5):
            a = random_trig_symbol(rng, max_k=N // 8)
            lhs = inv_x_derivative(adjoint_symbol(a, N), N)(T0, x[:, None], xi[None, :])
            rhs = adjoint_symbol(inv_x_derivative(a, N), N)(T0, x[:, None], xi[None, :])
            assert np.max(np.abs((lhs - rhs)[:, block])) < 1e-10


class TestPoissonBracket:
    def test_xi_with_mode(self):
        # {xi, e^{ix}} = d_xi(xi) d_x(e^{ix}) = i e^{ix}
        br = poisson_bracket(sym_xi(), sym_exp_ix(1), N)
        x = grid_points(N)
        xi = wavenumbers(N).astype(float)
        got = br(T0, x[:, None], xi[None, :])
        expected = 1j * np.exp(1j * x[:, None]) * np.ones((1, N))
        assert np.max(np.abs(got - expected)) < 1e-10

    def test_antisymmetry_self(self):
        a = sym_exp_ix(2) * sym_xi()
        br = poisson_bracket(a, a, N)
        x = grid_points(N)
        xi = wavenumbers(N).astype(float)
        got = br(T0, x[:, None], xi[None, :])
        assert np.max(np.abs(got)) < 1e-9

    def test_commutator_defect_order(self):
        # Op(a)Op(b) - Op(b)Op(a) + i Op({a,b}) has order <= m+m'-2 (+slack)
        def mk(kind):
            if kind == "a":
                return Symbol(
                    lambda t, x, xi: np.cos(np.asarray(x, dtype=complex))
                    * np.abs(np.asarray(xi, dtype=float)) * chi(xi),
                    order=1.0, label="cosx|xi|chi",
                )
            return Symbol(
                lambda t, x, xi: np.sin(np.asarray(x, dtype=complex))
                * np.abs(np.asarray(xi, dtype=float)) * chi(xi),
                order=1.0, label="sinx|xi|chi",
            )

        n = 128
        a, b = mk("a"), mk("b")
        comm = quantize(compose_exact(a, b, n), T0, n) - quantize(
            compose_exact(b, a, n), T0, n
        )
        defect = comm + quantize(1j * poisson_bracket(a, b, n), T0, n)
        fit = estimate_order(defect)
        assert fit.slope <= 1.0 + 1.0 - 2.0 + 0.25


class TestComposeExpansion:
    def test_terminating_expansion(self):
        # a = xi, b = e^{ix}: expansion at 2 terms is exact, remainder ~ 0
        exp_sym, rem = compose_expansion(sym_xi(), sym_exp_ix(1), 2, N)
        x = grid_points(N)
        xi = wavenumbers(N).astype(float)
        got = exp_sym(T0, x[:, None], xi[None, :])
        expected = (xi[None, :] + 1.0) * np.exp(1j * x[:, None])
        assert np.max(np.abs(got - expected)) < 1e-9
        block = np.abs(xi) <= N // 4
        rem_vals = rem(T0, x[:, None], xi[None, :])
        assert np.max(np.abs(rem_vals[:, block])) < 1e-9

    def test_multipliers_exact_at_one_term(self):
        a = sym_abs_xi_pow(1.5)
        b = sym_xi()
        exp_sym, rem = compose_expansion(a, b, 1, N)
        xi = wavenumbers(N).astype(float)
        block = np.abs(xi) <= N // 4
        x = grid_points(N)
        rem_vals = rem(T0, x[:, None], xi[None, :])
        assert np.max(np.abs(rem_vals[:, block])) < 1e-9

    def test_remainder_order(self):
        # a = |xi|^2 chi, b = cos x, one-term expansion: remainder order <= 1.25
        n = 128
        a = sym_abs_xi_pow(2.0)
        b = Symbol.from_xfun(lambda t, x: np.cos(x), label="cosx")
        _, rem = compose_expansion(a, b, 1, n)
        fit = estimate_order(quantize(rem, T0, n))
        assert fit.slope <= 1.0 + 0.25


class TestEstimateOrder:
    def test_square_multiplier(self):
        n = 128
        fit = estimate_order(quantize(sym_abs_xi_pow(2.0), T0, n))
        assert abs(fit.slope - 2.0) <= 0.05

    def test_identity(self):
        fit = estimate_order(identity_matrix(128))
        assert abs(fit.slope) <= 0.05

    def test_inverse_cubic(self):
        n = 128
        fit = estimate_order(quantize(sym_abs_xi_pow(-3.0), T0, n))
        assert abs(fit.slope + 3.0) <= 0.1

    def test_zero_matrix_sentinel(self):
        z = OperatorLike = multiplier_matrix(np.zeros(128))
        fit = estimate_order(z)
        assert fit.slope == float("-inf")

    def test_small_grid_raises(self):
        with pytest.raises(FitWindowError):
            estimate_order(identity_matrix(8))


class TestHermiticityTransfer:
    def test_symbol_self_adjoint_quantizes_hermitian(self):
        # a = 2 + cos(x) (real potential) + real multiplier: a = a*
        def ev(t, x, xi):
            return (2.0 + np.cos(np.asarray(x, dtype=complex))) + np.abs(
                np.asarray(xi, dtype=float)
            ) ** 2 * chi(xi)

        a = Symbol(ev, order=2.0, label="V+|xi|^2")
        A = quantize(a, T0, N)
        assert A.is_hermitian()

    def test_real_multiplier_times_selfadjoint_defect_order(self):
        # b = phi(xi) a with a = a* (built as c + c*) and phi real:
        # order(b* - b) <= order(phi) + order(a) - 1 (+slack)
        n = 128

        def c_ev(t, x, xi):
            return np.cos(np.asarray(x, dtype=complex)) * np.abs(
                np.asarray(xi, dtype=float)
            ) ** 2 * chi(xi)

        c = Symbol(c_ev, order=2.0, label="c")
        a = c + adjoint_symbol(c, n)
        a.order = 2.0
        assert quantize(a, T0, n).is_hermitian()

        phi = sym_abs_xi_pow(1.0)
        b = phi * a
        b.order = 3.0
        defect = quantize(adjoint_symbol(b, n), T0, n) - quantize(b, T0, n)
        fit = estimate_order(defect)
        assert fit.slope <= 1.0 + 2.0 - 1.0 + 0.25


class TestSymbolFromMatrix:
    def test_roundtrip(self):
        rng = np.random.default_rng(8)
        a = random_trig_symbol(rng, max_k=N // 8)
        A = quantize(a, T0, N)
        back = symbol_from_matrix(A, order=a.order)
        xi = wavenumbers(N).astype(float)
        block = np.abs(xi) <= N // 4
        x = grid_points(N)
        got = back(T0, x[:, None], xi[None, :])
        expected = a(T0, x[:, None], xi[None, :])
        assert np.max(np.abs((got - expected)[:, block])) < 1e-10 * max(
            1.0, np.max(np.abs(expected))
        )

    def test_requantize_identity(self):
        rng = np.random.default_rng(9)
        a = random_trig_symbol(rng, max_k=N // 8)
        A = quantize(a, T0, N)
        again = quantize(symbol_from_matrix(A, order=a.order), T0, N)
        assert np.max(np.abs(again.entries - A.entries)) < 1e-11 * max(
            1.0, np.max(np.abs(A.entries))
        )


class TestCutoffs:
    def test_chi_support(self):
        assert chi(0.0) == 0.0
        assert chi(0.5) == 0.0
        assert chi(1.0) == 1.0
        assert chi(3.0) == 1.0
        assert 0.0 < chi(0.75) < 1.0

    def test_chi0_support(self):
        assert chi0(1.0) == 0.0
        assert chi0(2.0) == 1.0
        assert chi0(-5.0) == 1.0
        assert 0.0 < chi0(1.5) < 1.0

    def test_even(self):
        xs = np.linspace(0.0, 3.0, 31)
        assert np.allclose(chi(xs), chi(-xs))
        assert np.allclose(chi0(xs), chi0(-xs))
