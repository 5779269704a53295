import json
import math

import numpy as np
import pytest

from fracp.grid import FarField, Grid, GridFunction, ball_mask
from fracp.params import Params
from fracp.registry import make_expression
from fracp.solver import (
    comparison_diagnostic,
    discrete_energy,
    energy_gradient,
    harmonic_replacement,
    load_term,
    local_bound_diagnostic,
    make_problem,
    problem_from_dict,
    solve_dirichlet,
)


def _const_problem(m=65, p=3.0, s=0.6, value=2.0, f=None):
    g = Grid((-1.0,), (1.0,), m)
    datum = GridFunction(g, np.full(g.shape, value), FarField.constant(value))
    interior = ball_mask(g, [0.0], 0.6)
    return make_problem(Params(1, s, p), g, interior, datum, f=f)


def test_constant_datum_is_reproduced():
    # for p > 2 the residual scales like the squared value error near a
    # constant state, so the sup target needs a correspondingly tight tol
    problem = _const_problem(m=129)
    rng = np.random.default_rng(0)
    init = np.full(problem.grid.shape, 2.0)
    init[problem.interior] += rng.normal(scale=0.5, size=problem.n_interior)
    rep = solve_dirichlet(problem, tol=1e-14, initial=init)
    assert rep.converged
    assert np.max(np.abs(rep.u.values - 2.0)) <= 1e-8


def test_affine_datum_is_reproduced():
    # the operator annihilates affine data; tail admissible since
    # growth * (p - 1) = 1 < sp = 1.4
    g = Grid((-1.0,), (1.0,), 129)
    expr = make_expression("affine", intercept=0.3, gradient=[1.0])
    exact = expr(g.axis(0))
    datum = GridFunction(g, exact.copy(), FarField.closed_form(expr))
    problem = make_problem(Params(1, 0.7, 2.0), g, ball_mask(g, [0.0], 0.6), datum)
    init = exact.copy()
    init[problem.interior] = 0.0
    rep = solve_dirichlet(problem, tol=1e-10, initial=init)
    assert rep.converged
    assert np.max(np.abs(rep.u.values - exact)) <= 1e-8


def test_energy_gradient_matches_central_differences():
    problem = _const_problem(m=33, p=2.5, f=1.0)
    rng = np.random.default_rng(3)
    v = rng.normal(size=problem.n_interior)
    grad = energy_gradient(v, problem)
    eps = 1e-6
    for i in range(0, problem.n_interior, 5):
        vp, vm = v.copy(), v.copy()
        vp[i] += eps
        vm[i] -= eps
        fd = (discrete_energy(vp, problem) - discrete_energy(vm, problem)) / (2 * eps)
        assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-10)


def test_energy_gradient_grid_layout():
    problem = _const_problem(m=33)
    full = problem.full_values(np.zeros(problem.n_interior))
    grad = energy_gradient(full, problem)
    assert grad.shape == problem.grid.shape
    assert np.all(grad[~problem.interior] == 0.0)


def test_solution_unique_across_initials():
    problem = _const_problem(m=65, f=1.0)
    zeros = np.zeros(problem.n_interior)
    spiky = 10.0 * np.cos(np.arange(problem.n_interior))
    ra = solve_dirichlet(problem, tol=1e-11, initial=zeros)
    rb = solve_dirichlet(problem, tol=1e-11, initial=spiky)
    assert ra.converged and rb.converged
    assert np.max(np.abs(ra.u.values - rb.u.values)) <= 1e-6


def test_energy_trace_monotone():
    problem = _const_problem(m=65, f=1.0)
    rep = solve_dirichlet(problem, tol=1e-10)
    trace = rep.energy_trace
    assert trace.size >= 2
    scale = np.maximum(1.0, np.abs(trace[:-1]))
    assert np.all(np.diff(trace) <= 1e-12 * scale)


def test_unattainable_tolerance_reports_unconverged():
    # the gradient has a rounding floor well above 1e-16 * cell volume, so
    # the report must come back honest rather than silently successful
    problem = _const_problem(m=65, p=2.0, s=0.7, f=5.0)
    rep = solve_dirichlet(problem, tol=1e-16, max_iter=3)
    assert not rep.converged
    assert rep.residual_sup > 1e-16


def test_solve_report_serialization():
    problem = _const_problem(m=33)
    rep = solve_dirichlet(problem, tol=1e-9)
    doc = json.loads(rep.to_json())
    assert doc["converged"] is True
    assert doc["grid"]["nodes_per_axis"] == 33
    csv = rep.values_csv()
    lines = csv.strip().splitlines()
    assert lines[0] == "x0,value"
    assert len(lines) == 34


def test_harmonic_replacement_matches_outside_and_minimizes():
    problem = _const_problem(m=65, f=3.0)
    u = solve_dirichlet(problem, tol=1e-10).u
    prm = problem.params
    rep = harmonic_replacement(u, [0.0], 0.4, prm, tol=1e-11)
    assert rep.converged
    ball = ball_mask(u.grid, [0.0], 0.4)
    assert np.array_equal(rep.u.values[~ball], u.values[~ball])
    # the replacement minimizes the zero-load energy of the ball subproblem
    sub = make_problem(prm, u.grid, ball, u)
    e_rep = discrete_energy(rep.u.values, sub)
    e_u = discrete_energy(u.values, sub)
    assert e_rep <= e_u + 1e-12 * abs(e_u)


def test_comparison_diagnostic_vanishes_on_equal_fields():
    problem = _const_problem(m=65, f=1.0)
    u = solve_dirichlet(problem, tol=1e-10).u
    prm = Params(1, 0.6, 3.0, q=3.0)
    out = comparison_diagnostic(u, u, problem.f, [0.0], 0.4, prm, m=4.0)
    assert out.lhs_energy == 0.0
    assert out.lhs_mean == 0.0
    assert out.fnorm > 0.0


def test_comparison_diagnostic_argument_checks():
    problem = _const_problem(m=33)
    u = solve_dirichlet(problem, tol=1e-9).u
    with pytest.raises(ValueError, match="finite q"):
        comparison_diagnostic(u, u, problem.f, [0.0], 0.4, Params(1, 0.6, 3.0))
    with pytest.raises(ValueError, match="embedding exponent"):
        comparison_diagnostic(u, u, problem.f, [0.0], 0.4, Params(1, 0.6, 3.0, q=3.0))


def test_local_bound_diagnostic_smoke():
    problem = _const_problem(m=65, f=1.0)
    u = solve_dirichlet(problem, tol=1e-9).u
    prm = Params(1, 0.6, 3.0, q=3.0)
    rep = local_bound_diagnostic(u, problem.f, [0.0], 0.5, 0.5, prm)
    assert rep.sup_inner > 0.0
    assert rep.bracket == rep.mean_p + rep.tail_term + rep.load_term
    assert math.isfinite(rep.ratio)
    with pytest.raises(ValueError, match="sigma"):
        local_bound_diagnostic(u, problem.f, [0.0], 0.5, 1.5, prm)
    with pytest.raises(ValueError, match="q >"):
        local_bound_diagnostic(u, problem.f, [0.0], 0.5, 0.5, Params(1, 0.3, 2.0, q=1.2))


def test_load_term_amplitude_scaling():
    prm = Params(1, 0.6, 3.0, q=3.0)
    base = load_term(0.5, 1.0, prm)
    for amp in (0.1, 10.0, 250.0):
        assert load_term(0.5, amp, prm) == pytest.approx(base * amp ** 0.5, rel=1e-13)


def test_interior_needs_collar():
    g = Grid((-1.0,), (1.0,), 33)
    datum = GridFunction(g, np.zeros(33), FarField.zero())
    with pytest.raises(ValueError, match="collar"):
        make_problem(Params(1, 0.5, 2.0), g, np.ones(33, dtype=bool), datum)


def test_datum_needs_far_field():
    g = Grid((-1.0,), (1.0,), 33)
    datum = GridFunction(g, np.zeros(33))
    with pytest.raises(ValueError, match="far-field"):
        make_problem(Params(1, 0.5, 2.0), g, ball_mask(g, [0.0], 0.5), datum)


def test_load_validation():
    g = Grid((-1.0,), (1.0,), 33)
    datum = GridFunction(g, np.zeros(33), FarField.zero())
    interior = ball_mask(g, [0.0], 0.5)
    with pytest.raises(ValueError, match="load shape"):
        make_problem(Params(1, 0.5, 2.0), g, interior, datum, f=np.ones(7))
    with pytest.raises(ValueError, match="finite"):
        make_problem(Params(1, 0.5, 2.0), g, interior, datum, f=np.full(33, np.nan))


def _sample_cfg():
    return {
        "params": {"N": 1, "s": 0.6, "p": 3.0, "q": "inf"},
        "grid": {"lo": [-1.0], "hi": [1.0], "nodes_per_axis": 65},
        "interior": {"kind": "ball", "center": [0.0], "radius": 0.6},
        "g": {"far": {"kind": "constant", "value": 2.0}},
        "f": 1.0,
        "tol": 1e-9,
        "max_iter": 200,
    }


def test_problem_from_dict_roundtrip():
    problem, opts = problem_from_dict(_sample_cfg())
    assert opts == {"tol": 1e-9, "max_iter": 200}
    assert math.isinf(problem.params.q)
    assert np.all(problem.g.values == 2.0)
    assert np.all(problem.f == 1.0)
    rep = solve_dirichlet(problem, **opts)
    assert rep.converged


def test_problem_from_dict_variants():
    cfg = _sample_cfg()
    cfg["interior"] = {"kind": "box", "lo": [-0.5], "hi": [0.5]}
    cfg["g"] = {"expr": {"id": "power", "amplitude": 1.0, "exponent": 0.5}, "far": "closed_form"}
    cfg["f"] = {"id": "const", "value": 2.0}
    cfg["controls"] = {"target_tol": 1e-6}
    problem, _ = problem_from_dict(cfg)
    assert problem.controls.target_tol == 1e-6
    assert problem.g.far_field.kind == "closed_form"
    assert np.all(problem.f == 2.0)


def test_problem_from_dict_rejects_bad_specs():
    cfg = _sample_cfg()
    cfg["g"] = {"far": "bogus"}
    with pytest.raises(ValueError, match="far-field shorthand"):
        problem_from_dict(cfg)
    cfg = _sample_cfg()
    cfg["interior"] = {"kind": "annulus", "center": [0.0], "radius": 0.5}
    with pytest.raises(ValueError, match="'ball' or 'box'"):
        problem_from_dict(cfg)
    cfg = _sample_cfg()
    cfg["g"] = {}
    with pytest.raises(ValueError, match="boundary expression"):
        problem_from_dict(cfg)
