import numpy as np
import pytest

from mixhess import grid as gr
from mixhess import solver as so


def const(v):
    return lambda x, y: v + 0 * x


def ms2_alpha0(x, y):
    return 0.5 - 0.36 * (x * x + y * y)


def ms2_phi(x, y):
    return x * x + y * y + 0.3 * (x ** 3 - 3 * x * y * y)


@pytest.fixture(scope="module")
def disk():
    return gr.build_grid(gr.DomainSpec.disk(1.0), 1 / 32)


@pytest.fixture(scope="module")
def ms1(disk):
    return so.Problem.from_functions(disk, [const(0.5), const(0.25)], const(1.0))


@pytest.fixture(scope="module")
def ms2(disk):
    return so.Problem.from_functions(disk, [ms2_alpha0, const(0.25)], ms2_phi)


@pytest.fixture(scope="module")
def ms2_limit(ms2):
    return so.continuation(ms2)


def test_schedule_levels():
    lv = so.EpsSchedule().levels()
    assert lv[0] == 0.1 and lv[-1] == 1e-4 and len(lv) == 11
    assert all(a > b for a, b in zip(lv, lv[1:]))
    with pytest.raises(ValueError):
        so.EpsSchedule(ratio=1.0)
    with pytest.raises(ValueError):
        so.EpsSchedule(eps0=1e-5, eps_min=1e-4)


def test_problem_validation(disk):
    with pytest.raises(so.ProblemError):
        so.Problem.from_functions(disk, [const(0.5)], const(1.0))
    with pytest.raises(so.ProblemError):
        so.Problem.from_functions(disk, [const(0.5), const(0.5), const(0.5)], const(1.0))
    with pytest.raises(so.ProblemError):
        so.Problem.from_functions(disk, [lambda x, y: x, const(0.25)], const(1.0))


def test_initial_guess(ms1):
    s = so.initial_guess(ms1)
    # A = 0.5 for these coefficients, so u = r^2/2: Hessian is the identity
    assert np.allclose(s.hessians, np.eye(2), atol=1e-9)
    assert s.admissible().all()


def test_eps_zero_rejected(ms1):
    with pytest.raises(ValueError):
        so.newton_solve(ms1, 0.0, so.initial_guess(ms1))


def test_inadmissible_start(ms1, disk):
    bad = gr.DiscreteState.from_values(disk, -(disk.x ** 2 + disk.y ** 2))
    with pytest.raises(so.SolverError):
        so.newton_solve(ms1, 0.1, bad)


def test_max_iters(ms2):
    with pytest.raises(so.MaxIters) as exc:
        so.newton_solve(ms2, 0.1, so.initial_guess(ms2, 3.0), so.NewtonSettings(max_iter=1))
    assert exc.value.eps == 0.1 and "eps=0.1" in str(exc.value)


def test_line_search_stall(ms2):
    with pytest.raises(so.LineSearchStall):
        so.newton_solve(ms2, 0.1, so.initial_guess(ms2, 3.0), so.NewtonSettings(min_damping=1.5))


def test_newton_ms1_exact(ms1, disk):
    state, stats = so.newton_solve(ms1, 0.1, so.initial_guess(ms1, 2.0))
    assert stats.residuals[-1] <= 1e-9
    # u = r^2/2 + C has u_nu = 1 at r = 1, so 1 + eps (1/2 + C) = 1 forces C = -1/2
    ustar = 0.5 * (disk.x ** 2 + disk.y ** 2) - 0.5
    assert np.abs(state.u - ustar).max() < 1e-9


def test_newton_quadratic_tail(ms2):
    _, stats = so.newton_solve(ms2, 0.1, so.initial_guess(ms2, 2.0))
    r = stats.residuals
    assert r[-1] <= 1e-9
    ratios = [b / a for a, b in zip(r[-4:-1], r[-3:])]
    assert all(q <= 0.1 for q in ratios), r
    assert max(stats.linear_residuals) <= 1e-12


def test_continuation_limit(ms2_limit, ms2):
    lim = ms2_limit
    g = ms2.grid
    assert abs(lim.v.mean()) < 1e-12
    assert lim.eps_path == so.EpsSchedule().levels()
    c_est = np.array(lim.c_path)
    assert np.all(np.isfinite(c_est))
    assert lim.c == pytest.approx(so.richardson(lim.records[-2].eps, c_est[-2],
                                                lim.records[-1].eps, c_est[-1]))
    assert lim.cauchy == pytest.approx(np.abs(np.diff(c_est)).max())
    # limit condition v_nu = c + phi holds up to the discretization error
    bres = [gr.neumann_residual(g, lim.v, n, 0.0, ms2_phi, c=lim.c) for n in g.band]
    assert np.abs(bres).max() < 5e-3
    for r in lim.records:
        assert r.newton.res_interior <= 1e-9 and r.newton.res_boundary <= 1e-9


def test_continuation_error(ms2_limit, disk):
    ustar = 0.5 * (disk.x ** 2 + disk.y ** 2) + 0.1 * (disk.x ** 3 - 3 * disk.x * disk.y ** 2)
    err = np.abs(ms2_limit.v - (ustar - ustar.mean())).max()
    assert err < 5 * disk.h ** 2
    assert abs(ms2_limit.c) < 5 * disk.h ** 2


def test_audit_callback(ms1):
    seen = []
    lim = so.continuation(ms1, so.EpsSchedule(eps0=0.1, eps_min=0.025),
                          audit=lambda rec, prob: seen.append(rec.eps) or "ok")
    assert seen == [0.1, 0.05, 0.025]
    assert all(r.audit == "ok" for r in lim.records)


def test_path_diagnostics(ms1, disk):
    s = gr.DiscreteState.from_values(disk, 0.5 * (disk.x ** 2 + disk.y ** 2))
    sup_grad, sup_hess = so.path_diagnostics(s)
    r_int = np.hypot(disk.x[disk.interior], disk.y[disk.interior]).max()
    assert sup_grad == pytest.approx(r_int, rel=1e-12)
    assert sup_hess == pytest.approx(1.0, rel=1e-10)
