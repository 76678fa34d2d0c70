import math

import numpy as np
import pytest

from discofit.detect import JumpPoint
from discofit.errors import BudgetUnreachable, CoincidentCenters, DimensionMismatch, NonConformingKernel
from discofit.kernels import estimate_tail_bounds, make_kernel
from discofit.singular import (
    SingularNetwork,
    build_singular_network,
    certified_l2,
    certify,
    eval_singular,
    gaussian_bump_norm,
    seed_scale,
)

GAUSS = make_kernel("gaussian")
GAUSS_TAIL = estimate_tail_bounds(GAUSS)


def closed_form(h, A, d):
    return abs(h) * (math.pi / 2) ** (d / 4) * A ** (-d / 2)


def jump(loc, h, i=0):
    return JumpPoint(tuple(np.atleast_1d(loc)), h, i)


def random_jumpset(rng, d, m, min_sep=0.1):
    pts = []
    while len(pts) < m:
        p = rng.uniform(-2, 2, size=d)
        if all(np.linalg.norm(p - q) >= min_sep for q in pts):
            pts.append(p)
    heights = rng.uniform(0.05, 5, size=m) * rng.choice([-1, 1], size=m)
    return [JumpPoint(tuple(p), float(h), i) for i, (p, h) in enumerate(zip(pts, heights))]


def test_closed_form_helper():
    assert gaussian_bump_norm(-1.0, 126.0, 1) == pytest.approx(closed_form(-1, 126, 1), rel=1e-15)


def test_seed_single_jump():
    seed = seed_scale([jump(0.0, 1.0)], GAUSS_TAIL, 0.1)
    # the factor-2 corrected linear bound is a floor
    assert seed >= 2 * math.sqrt(math.pi) / 0.1
    assert 2 * math.sqrt(math.pi) / 0.1 == pytest.approx(35.449, abs=1e-3)
    # the L2 bound ((pi/2)^(1/4) |h| k / eps)^2 binds in 1-D; k majorizes
    # |phi(r)| e^{r^2} everywhere, including below the tail onset
    k = max(GAUSS_TAIL.k_upper, GAUSS_TAIL.sup_bound * math.exp(GAUSS_TAIL.tail_onset ** 2))
    assert seed == pytest.approx(((math.pi / 2) ** 0.25 * k / 0.1) ** 2, rel=1e-12)


def test_seed_two_jumps_is_max_of_per_jump_values():
    jumps = [jump(-1.0, 1.0, 0), jump(1.0, -1.0, 1)]
    seed = seed_scale(jumps, GAUSS_TAIL, 0.1)
    per_jump = [seed_scale([j], GAUSS_TAIL, 0.1 / 2) for j in jumps]
    assert seed == pytest.approx(max(per_jump), rel=1e-12)
    net = certify(build_singular_network(jumps, GAUSS, seed), 0.1)
    assert net.doublings == 0


def test_seed_interference_clause():
    jumps = [jump(0.0, 1.0, 0), jump(1e-4, 1.0, 1)]
    seed = seed_scale(jumps, GAUSS_TAIL, 0.1)
    assert math.exp(-(seed * 1e-4) ** 2) <= 0.1 / (10 * 2) * (1 + 1e-12)


def test_seed_compact_table_kernel():
    r = np.linspace(0, 6, 601)
    kernel = make_kernel("custom", (r, np.exp(-r ** 2)))
    tail = estimate_tail_bounds(kernel)
    assert tail.tail_onset > 5
    # the crude sup * e^{onset^2} constant would give an astronomically large seed
    seed = seed_scale([jump(0.0, 1.0)], tail, 0.01, kernel)
    assert seed < 100 * seed_scale([jump(0.0, 1.0)], GAUSS_TAIL, 0.01, GAUSS)
    net = certify(build_singular_network([jump(0.0, 1.0)], kernel, seed), 0.01)
    assert net.certified_residual < 0.01


def test_unresolvable_scale():
    net = build_singular_network([jump(1e3, 1.0)], GAUSS, 1e30)
    with pytest.raises(BudgetUnreachable):
        certified_l2(net)


def test_seed_rejects_non_conforming():
    tail = estimate_tail_bounds(make_kernel("mexican_hat"))
    with pytest.raises(NonConformingKernel):
        seed_scale([jump(0.0, 1.0)], tail, 0.1)


def test_seed_rejects_coincident():
    with pytest.raises(CoincidentCenters):
        seed_scale([jump(0.0, 1.0, 0), jump(0.0, 2.0, 1)], GAUSS_TAIL, 0.1)
    with pytest.raises(CoincidentCenters):
        build_singular_network([jump(0.0, 1.0, 0), jump(0.0, 2.0, 1)], GAUSS, 1.0)


@pytest.mark.parametrize("A", [0.5, 10.0, 1e4])
def test_exact_at_center(A):
    net = build_singular_network([jump(math.pi, -1.0)], GAUSS, A)
    assert eval_singular(net, np.array([[math.pi]]))[0] == -1.0


def test_negligible_far_away():
    net = build_singular_network([jump(0.0, 2.0, 0), jump(1.0, -3.0, 1)], GAUSS, 50.0)
    x = np.array([[1.0 + 11 / 50], [-0.3]])
    assert np.all(np.abs(net.predict(x)) < 1e-40 * 5.0)


def test_antisymmetric_midpoint():
    net = build_singular_network([jump((-0.3, 0.2), 1.7, 0), jump((0.3, -0.2), -1.7, 1)], GAUSS, 3.0)
    assert net.predict(np.zeros((1, 2)))[0] == pytest.approx(0.0, abs=1e-16)


def test_dimension_mismatch():
    net = build_singular_network([jump((0.0, 0.0), 1.0)], GAUSS, 1.0)
    with pytest.raises(DimensionMismatch):
        eval_singular(net, np.zeros((2, 3)))


def test_network_invariants():
    with pytest.raises(ValueError):
        SingularNetwork(GAUSS, 0.0, (jump(0.0, 1.0),))
    with pytest.raises(ValueError):
        SingularNetwork(GAUSS, 1.0, ())
    with pytest.raises(ValueError):
        SingularNetwork(GAUSS, 1.0, (jump(0.0, 1.0),), certified_residual=0.2, budget=0.1)


def test_certify_accepts_at_126():
    net = certify(build_singular_network([jump(0.0, -1.0)], GAUSS, 126.0), 0.1)
    assert net.doublings == 0 and net.scale == 126.0
    assert net.certified_residual == pytest.approx(0.0997, abs=5e-5)
    np.testing.assert_allclose(net.certified_residual, closed_form(-1, 126, 1), rtol=1e-6)


def test_certify_doubles_from_100():
    assert closed_form(-1, 100, 1) == pytest.approx(0.11195, abs=1e-5)
    net = certify(build_singular_network([jump(0.0, -1.0)], GAUSS, 100.0), 0.1)
    assert net.doublings == 1 and net.scale == 200.0
    assert net.certified_residual < 0.1 <= closed_form(-1, 100, 1)


@pytest.mark.parametrize("d, A", [(1, 7.0), (2, 5.0), (3, 3.0)])
def test_closed_form_agreement(d, A):
    net = build_singular_network([jump(np.full(d, 0.25), -1.3)], GAUSS, A)
    cert = certified_l2(net)
    np.testing.assert_allclose(cert.residual, closed_form(-1.3, A, d), rtol=1e-6)
    assert cert.residual >= closed_form(-1.3, A, d) * (1 - 1e-12)


def test_far_apart_bumps_add_in_quadrature():
    jumps = [jump(0.0, 1.0, 0), jump(3.0, -2.0, 1), jump(7.0, 0.5, 2)]
    A = 20.0
    cert = certified_l2(build_singular_network(jumps, GAUSS, A))
    expected = math.sqrt(sum(closed_form(j.height, A, 1) ** 2 for j in jumps))
    np.testing.assert_allclose(cert.residual, expected, rtol=1e-6)


def test_residual_strictly_decreases_with_scale():
    jumps = [jump((0.0, 0.0), 1.0, 0), jump((0.5, 0.1), -0.7, 1)]
    res = [certified_l2(build_singular_network(jumps, GAUSS, A)).residual for A in (1, 2, 4, 8, 16, 32)]
    assert np.all(np.diff(res) < 0)


def test_near_exactness_at_centers():
    rng = np.random.default_rng(11)
    for d in (1, 2):
        jumps = random_jumpset(rng, d, 6)
        eps = 0.01
        net = certify(build_singular_network(jumps, GAUSS, seed_scale(jumps, GAUSS_TAIL, eps)), eps)
        C, h = net.centers, net.heights
        err = np.abs(net.predict(C) - h)
        for i in range(len(h)):
            others = np.delete(np.arange(len(h)), i)
            bound = np.sum(np.abs(h[others]) * GAUSS.profile(net.scale * np.linalg.norm(C[others] - C[i], axis=1)))
            assert err[i] <= bound + 1e-15
        assert np.all(err < eps / (10 * len(h)) * np.abs(h).sum() / np.abs(h).max())


@pytest.mark.parametrize("eps", [0.1, 0.01])
def test_random_jumpsets_certify(eps):
    rng = np.random.default_rng(int(eps * 1000))
    for trial in range(50):
        d = 1 + trial % 2
        jumps = random_jumpset(rng, d, int(rng.integers(1, 11)))
        net = certify(build_singular_network(jumps, GAUSS, seed_scale(jumps, GAUSS_TAIL, eps)), eps)
        assert net.certified_residual < eps
        assert net.budget == eps


@pytest.mark.parametrize("kind", ["mexican_hat", "morlet"])
def test_non_conforming_certify_from_one(kind):
    net = certify(build_singular_network([jump((0.0, 0.0), 1.0)], make_kernel(kind), 1.0), 0.01)
    assert net.certified_residual < 0.01
    assert net.scale == 2.0 ** net.doublings


def test_budget_unreachable():
    net = build_singular_network([jump(0.0, 1.0)], GAUSS, 1.0)
    with pytest.raises(BudgetUnreachable):
        certify(net, 1e-3, max_doublings=3)


def test_certify_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        certify(build_singular_network([jump(0.0, 1.0)], GAUSS, 1.0), 0.0)
