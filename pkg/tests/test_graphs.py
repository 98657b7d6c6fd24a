import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chdbc.graphs import (GraphDomainError, GraphKind, MonotoneGraph, check_assumptions,
                          default_probes, moreau_envelope, resolvent, truncate, yosida,
                          yosida_derivative)

GRAPHS = [
    MonotoneGraph.linear(1.0),
    MonotoneGraph.linear(0.25),
    MonotoneGraph.sign(),
    MonotoneGraph.positive_part(1.5),
    MonotoneGraph.polynomial(3, 1.0),
    MonotoneGraph.polynomial(5, 0.5),
    MonotoneGraph.logarithmic(1.0),
    MonotoneGraph.zero(),
]
IDS = [g.label() for g in GRAPHS]
LAMS = st.sampled_from([1.0, 0.5, 0.1, 0.01])
REALS = st.floats(-20, 20, allow_nan=False)


def bisect_resolvent(g, lam, r, lo=-50.0, hi=50.0):
    """Independent oracle: bisection on ``s + lam*section(s) - r`` over a
    bracket clipped to the domain."""
    dlo, dhi = g.domain
    lo, hi = max(lo, dlo + 1e-15), min(hi, dhi - 1e-15)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid + lam * float(g.minimal_section(mid)) < r:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def brute_envelope(g, lam, r, n=400001):
    lo, hi = g.domain
    lo, hi = max(lo, r - 10), min(hi, r + 10)
    s = np.linspace(lo, hi, n)
    if g.kind == GraphKind.LOG:
        s = s[1:-1]
    return float(np.min(g.potential(s) + (r - s) ** 2 / (2 * lam)))


# -- worked examples ---------------------------------------------------------

def test_resolvent_examples():
    assert resolvent(MonotoneGraph.linear(1.0), 0.5, 1.5) == pytest.approx(1.0, abs=1e-15)
    oracle = bisect_resolvent(MonotoneGraph.sign(), 0.5, 0.3)
    assert abs(oracle) < 1e-12
    assert resolvent(MonotoneGraph.sign(), 0.5, 0.3) == 0.0


@pytest.mark.parametrize("g", GRAPHS, ids=IDS)
@pytest.mark.parametrize("lam", [1.0, 0.1, 0.01])
def test_zero_is_fixed(g, lam):
    assert resolvent(g, lam, 0.0) == 0.0
    assert yosida(g, lam, 0.0) == 0.0
    assert moreau_envelope(g, lam, 0.0) == 0.0


def test_yosida_examples():
    assert yosida(MonotoneGraph.linear(1.0), 0.5, 1.5) == pytest.approx(1.0, abs=1e-15)
    r = np.linspace(-3, 3, 61)
    clamp = np.clip(r / 0.5, -1, 1)
    numeric = np.array([(x - bisect_resolvent(MonotoneGraph.sign(), 0.5, x)) / 0.5 for x in r])
    np.testing.assert_allclose(yosida(MonotoneGraph.sign(), 0.5, r), clamp, atol=1e-12)
    np.testing.assert_allclose(numeric, clamp, atol=1e-10)
    assert yosida(MonotoneGraph.sign(), 0.5, 2.0) == 1.0


def test_envelope_examples():
    g = MonotoneGraph.linear(1.0)
    assert moreau_envelope(g, 1.0, 1.0) == pytest.approx(0.25, abs=1e-14)
    assert brute_envelope(g, 1.0, 1.0) == pytest.approx(0.25, abs=1e-9)
    assert moreau_envelope(MonotoneGraph.zero(), 0.3, 3.0) == 0.0


@pytest.mark.parametrize("lam,r,expected", [(2.0, 0.7, 0.5), (1.0, 0.3, 0.3), (0.5, -5.0, -2.0)])
def test_truncate_examples(lam, r, expected):
    assert truncate(lam, r) == expected


# -- oracles for the iterative kinds ------------------------------------------

@pytest.mark.parametrize("g", [GRAPHS[4], GRAPHS[5], GRAPHS[6]], ids=IDS[4:7])
@pytest.mark.parametrize("lam", [1.0, 0.1, 0.01])
def test_resolvent_matches_bisection(g, lam):
    for r in np.linspace(-6, 6, 25):
        assert resolvent(g, lam, r) == pytest.approx(bisect_resolvent(g, lam, r), abs=1e-11)


@pytest.mark.parametrize("g", GRAPHS, ids=IDS)
@pytest.mark.parametrize("r", [-2.5, -0.4, 0.3, 1.7])
def test_envelope_matches_brute_force_infimum(g, r):
    lam = 0.5
    assert moreau_envelope(g, lam, r) == pytest.approx(brute_envelope(g, lam, r), abs=1e-8)


def test_log_resolvent_near_singularity():
    g = MonotoneGraph.logarithmic(1.0)
    r = np.array([-1.015, -40.0, 1.5, 200.0])
    J = resolvent(g, 0.01, r)
    assert np.all(np.abs(J) < 1.0)
    assert np.max(g.graph_distance(J, yosida(g, 0.01, r))) < 1e-10


# -- properties ---------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.sampled_from(GRAPHS), LAMS, REALS, REALS)
def test_nonexpansive(g, lam, r1, r2):
    assert abs(resolvent(g, lam, r1) - resolvent(g, lam, r2)) <= abs(r1 - r2) + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(GRAPHS), LAMS, REALS)
def test_yosida_inclusion(g, lam, r):
    assert g.graph_distance(resolvent(g, lam, r), yosida(g, lam, r)) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(GRAPHS), LAMS, REALS, REALS)
def test_yosida_lipschitz(g, lam, r1, r2):
    assert abs(yosida(g, lam, r1) - yosida(g, lam, r2)) <= abs(r1 - r2) / lam * (1 + 1e-10) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(GRAPHS), st.floats(0.01, 1.0), st.floats(0.01, 1.0), REALS)
def test_envelope_monotone_in_lambda(g, l1, l2, r):
    lo, hi = sorted((l1, l2))
    assert moreau_envelope(g, lo, r) >= moreau_envelope(g, hi, r) - 1e-12 * (1 + abs(r)) ** 2 / lo


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(GRAPHS), LAMS, st.floats(-0.98, 0.98))
def test_envelope_below_potential(g, lam, r):
    assert moreau_envelope(g, lam, r) <= g.potential(r) + 1e-12


@pytest.mark.parametrize("g", [g for g in GRAPHS if g.kind != GraphKind.ZERO], ids=IDS[:-1])
def test_yosida_converges_to_section(g):
    r = 0.6
    errs = [abs(yosida(g, 2.0**-k, r) - g.minimal_section(r)) for k in range(9)]
    assert all(b <= a + 1e-14 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < errs[0] or errs[0] == 0.0


@pytest.mark.parametrize("g", GRAPHS, ids=IDS)
def test_monotone_section(g):
    s = default_probes(g, n=101)
    assert np.all(np.diff(g.minimal_section(s)) >= 0)


@pytest.mark.parametrize("g", GRAPHS, ids=IDS)
def test_yosida_derivative_matches_difference(g):
    lam, h = 0.1, 1e-6
    r = np.array([-1.3, -0.05, 0.37, 2.2])
    fd = (yosida(g, lam, r + h) - yosida(g, lam, r - h)) / (2 * h)
    np.testing.assert_allclose(yosida_derivative(g, lam, r), fd, rtol=1e-5, atol=1e-6)


# -- errors and domains -------------------------------------------------------

def test_log_section_diverges_and_rejects_outside():
    g = MonotoneGraph.logarithmic(1.0)
    assert g.minimal_section(1.0) == math.inf and g.minimal_section(-1.0) == -math.inf
    with pytest.raises(GraphDomainError):
        g.minimal_section(1.2)


@pytest.mark.parametrize("bad", [math.nan, math.inf])
def test_nonfinite_input_rejected(bad):
    with pytest.raises(ValueError):
        resolvent(MonotoneGraph.linear(1.0), 0.1, bad)


def test_nonpositive_lambda_rejected():
    with pytest.raises(ValueError):
        yosida(MonotoneGraph.sign(), 0.0, 1.0)


@pytest.mark.parametrize("name,params", [("poly", [4, 1.0]), ("linear", [-1.0]), ("wavy", [])])
def test_from_name_rejects(name, params):
    with pytest.raises(ValueError):
        MonotoneGraph.from_name(name, params)


@pytest.mark.parametrize("g", GRAPHS, ids=IDS)
def test_from_name_round_trip(g):
    assert MonotoneGraph.from_name(g.name, g.params) == g


# -- structural assumptions ---------------------------------------------------

PROBES = [s * k / 10 for k in range(1, 21) for s in (-1, 1)]


def test_assumptions_all_pass():
    rep = check_assumptions(MonotoneGraph.linear(1), MonotoneGraph.linear(1),
                            MonotoneGraph.polynomial(3, 1), MonotoneGraph.polynomial(5, 1), PROBES)
    assert rep.coercive_alpha and rep.coercive_alpha_gamma and rep.linear_growth and rep.domination
    # re-check the certificates by direct evaluation
    s = np.array(PROBES)
    a1, a2 = rep.alpha_constants
    assert np.all(s * s >= a1 * s * s - a2)
    assert np.all(np.abs(s) ** 3 <= rep.domination_constant * (1 + np.abs(s) ** 5))


def test_sign_viscosity_not_coercive():
    rep = check_assumptions(MonotoneGraph.sign(), MonotoneGraph.linear(1),
                            MonotoneGraph.polynomial(3, 1), MonotoneGraph.polynomial(3, 1), PROBES)
    assert rep.linear_growth and not rep.coercive_alpha
    assert "alpha" in rep.notes


def test_identical_log_domination():
    g = MonotoneGraph.logarithmic(0.7)
    rep = check_assumptions(MonotoneGraph.linear(1), MonotoneGraph.linear(1), g, g,
                            default_probes(g))
    assert rep.domination and rep.domination_constant == 1.0


def test_superlinear_viscosity_fails_growth():
    rep = check_assumptions(MonotoneGraph.polynomial(3, 1), MonotoneGraph.linear(1),
                            MonotoneGraph.zero(), MonotoneGraph.zero(), PROBES)
    assert rep.coercive_alpha and not rep.linear_growth


def test_domination_fails_for_faster_bulk_potential():
    rep = check_assumptions(MonotoneGraph.linear(1), MonotoneGraph.linear(1),
                            MonotoneGraph.polynomial(5, 1), MonotoneGraph.polynomial(3, 1), PROBES)
    assert not rep.domination and math.isnan(rep.domination_constant)


def test_probe_outside_domain_names_graph():
    with pytest.raises(GraphDomainError, match="beta_g"):
        check_assumptions(MonotoneGraph.linear(1), MonotoneGraph.linear(1),
                          MonotoneGraph.zero(), MonotoneGraph.logarithmic(1), [0.0, 1.5])
