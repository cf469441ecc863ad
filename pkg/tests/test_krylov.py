import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diescatter.errors import BreakdownError, InvalidParameterError
from diescatter.krylov import (ConvergenceRecord, KrylovConfig, _givens, arnoldi_step, fair_memory_split,
                               gmres_restarted)


def _system(n, seed=0, shift=4.0):
    rng = np.random.default_rng(seed)
    G = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2 * n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return shift * np.eye(n) + G, b


def test_solves_against_direct():
    A, b = _system(60)
    u, rec = gmres_restarted(lambda x: A @ x, b, KrylovConfig(20, 1e-12, 5000))
    assert rec.converged
    assert np.allclose(u, np.linalg.solve(A, b), rtol=1e-9)
    assert rec.final_residual <= 1e-12


def test_full_gmres_terminates_in_n_steps():
    A, b = _system(25, seed=3, shift=0.5)
    u, rec = gmres_restarted(lambda x: A @ x, b, KrylovConfig(25, 1e-10, 25))
    assert rec.converged and rec.iterations <= 25


def test_identity_happy_breakdown():
    b = np.arange(1.0, 6.0) + 0j
    u, rec = gmres_restarted(lambda x: x, b)
    assert rec.iterations == 1 and rec.converged
    assert np.allclose(u, b)


def test_zero_rhs():
    u, rec = gmres_restarted(lambda x: x, np.zeros(4))
    assert rec.converged and rec.iterations == 0 and np.all(u == 0)


def test_residual_estimates_monotone_within_cycle():
    A, b = _system(80, seed=5, shift=1.0)
    _, rec = gmres_restarted(lambda x: A @ x, b, KrylovConfig(15, 1e-9, 600))
    res = np.array(rec.residuals)
    starts = rec.cycle_starts + [rec.iterations]
    for a, c in zip(starts[:-1], starts[1:]):
        seg = res[a:c]
        assert np.all(np.diff(seg) <= 1e-12 * seg[0])


def test_true_residual_matches_final_estimate():
    A, b = _system(50, seed=2)
    u, rec = gmres_restarted(lambda x: A @ x, b, KrylovConfig(10, 1e-10, 1000))
    true = np.linalg.norm(b - A @ u) / np.linalg.norm(b)
    assert rec.true_residuals[-1][1] == pytest.approx(true, rel=1e-6)


def test_max_iters_returns_unconverged():
    A, b = _system(100, seed=1, shift=0.1)
    u, rec = gmres_restarted(lambda x: A @ x, b, KrylovConfig(5, 1e-14, 12))
    assert not rec.converged and rec.iterations == 12


def test_exact_right_preconditioner_one_step():
    A, b = _system(40, seed=4)
    Ainv = np.linalg.inv(A)
    u, rec = gmres_restarted(lambda x: A @ x, b, KrylovConfig(10, 1e-10), lambda x: Ainv @ x)
    assert rec.iterations == 1
    assert np.allclose(A @ u, b, atol=1e-10)


def test_singular_system_breaks_down():
    # b outside the range of a nilpotent shift matrix -> zero Hessenberg diagonal
    n = 4
    A = np.diag(np.ones(n - 1), -1).astype(complex)
    b = np.zeros(n, complex)
    b[-1] = 1
    with pytest.raises(BreakdownError) as info:
        gmres_restarted(lambda x: A @ x, b, KrylovConfig(4, 1e-10, 20))
    assert info.value.record is not None


def test_matches_scipy_iteration_count():
    from scipy.sparse.linalg import gmres
    A, b = _system(120, seed=8, shift=1.5)
    counts = []
    gmres(A, b, rtol=1e-8, atol=0, restart=10, maxiter=200, callback=lambda r: counts.append(r),
          callback_type="pr_norm")
    _, rec = gmres_restarted(lambda x: A @ x, b, KrylovConfig(10, 1e-8, 2000))
    assert abs(rec.iterations - len(counts)) <= 10


def test_history_csv(tmp_path):
    A, b = _system(30)
    _, rec = gmres_restarted(lambda x: A @ x, b, KrylovConfig(10, 1e-8))
    path = tmp_path / "conv.csv"
    rec.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["iteration", "relative_residual"]
    assert len(rows) == rec.iterations + 1


def test_callback_sees_every_iteration():
    A, b = _system(30)
    seen = []
    _, rec = gmres_restarted(lambda x: A @ x, b, KrylovConfig(7, 1e-8), callback=lambda i, r: seen.append(i))
    assert seen == list(range(1, rec.iterations + 1))


def test_fair_memory_split():
    assert fair_memory_split(40, 14) == (40, 26)
    with pytest.raises(InvalidParameterError):
        fair_memory_split(10, 10)
    with pytest.raises(InvalidParameterError):
        fair_memory_split(10, -1)


@pytest.mark.parametrize("kw", [{"restart": 0}, {"tol": 0.0}, {"tol": 1.0}, {"max_iters": 0}])
def test_config_validation(kw):
    with pytest.raises(InvalidParameterError):
        KrylovConfig(**kw)


def test_arnoldi_reorthogonalization():
    n = 30
    rng = np.random.default_rng(0)
    V = np.zeros((3, n), complex)
    V[0] = rng.standard_normal(n)
    V[0] /= np.linalg.norm(V[0])
    H = np.zeros((3, 2), complex)
    w = V[0] * 1.0 + 1e-9 * rng.standard_normal(n)
    hn = arnoldi_step(V, H, 0, w)
    assert abs(np.vdot(V[0], w)) <= 1e-12 * hn


@settings(max_examples=50)
@given(a=st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
       b=st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_givens_annihilates(a, b):
    c, s = _givens(a, b)
    top = c * a + s * b
    bottom = -np.conj(s) * a + c * b
    assert abs(bottom) <= 1e-10 * max(abs(a), abs(b), 1e-300)
    assert abs(top) == pytest.approx(np.hypot(abs(a), abs(b)), rel=1e-10, abs=1e-300)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), restart=st.integers(2, 30))
def test_property_residual_history_nonincreasing_at_restarts(seed, restart):
    A, b = _system(40, seed=seed, shift=3.0)
    _, rec = gmres_restarted(lambda x: A @ x, b, KrylovConfig(restart, 1e-8, 3000))
    true = [r for _, r in rec.true_residuals]
    assert all(y <= x * (1 + 1e-8) for x, y in zip(true, true[1:]))
    assert rec.converged
