import numpy as np
import pytest

from fracplast.energy import (
    EnergyBreakdown,
    State,
    elastic_energy,
    hardening_energy,
    plastic_dissipation_increment,
    surface_energy,
    total_energy,
    virgin_state,
    viscoelastic_increment,
    viscoplastic_increment,
)
from fracplast.exceptions import InvalidParameterError, ShapeError
from fracplast.material import MaterialParams
from fracplast.mesh import build_interval_mesh, build_rect_mesh


@pytest.fixture(scope="module")
def bar():
    return build_interval_mesh(10.0, 0.015)


@pytest.fixture(scope="module")
def params():
    return MaterialParams(K=4.0, tau=1.5, epsilon=0.094, eta=1e-6)


def bar_state(mesh, slope=0.0, v=1.0, p=0.0, t=1.0):
    return State(
        u=slope * mesh.nodes,
        v=np.full(mesh.n_nodes, v),
        p=np.full((mesh.n_elements, 1), p),
        t=t,
    )


class TestElasticEnergy:
    def test_zero_strain(self, bar, params):
        assert elastic_energy(bar_state(bar), params, bar) == 0.0

    def test_uniform_traction(self, bar, params):
        # 0.5 (1 + eta) K t^2 L with t = 1
        s = bar_state(bar, slope=1.0)
        assert elastic_energy(s, params, bar) == pytest.approx(20.00002, abs=1e-9)

    def test_uniform_plastic_offset(self, bar, params):
        s = bar_state(bar, slope=1.0, p=0.5)
        assert elastic_energy(s, params, bar) == pytest.approx(5.000005, abs=1e-9)

    def test_shape_error(self, bar, params):
        s = bar_state(bar)
        bad = State(s.u, s.v, np.zeros((3, 1)), 0.0)
        with pytest.raises(ShapeError):
            elastic_energy(bad, params, bar)


class TestPlasticIncrement:
    def test_no_flow(self, bar):
        p = np.full((bar.n_elements, 1), 0.37)
        assert plastic_dissipation_increment(p, p, 1.5, bar) == 0.0

    def test_uniform_flow(self, bar):
        p = np.full((bar.n_elements, 1), 0.1)
        p0 = np.zeros_like(p)
        assert plastic_dissipation_increment(p, p0, 1.5, bar) == pytest.approx(
            1.5, rel=1e-12
        )

    def test_2d_frobenius(self):
        sq = build_rect_mesh(1.0, 1.0, 0.1)
        dp = np.zeros((sq.n_elements, 3))
        dp[:, 0] = dp[:, 1] = 0.1
        val = plastic_dissipation_increment(dp, np.zeros_like(dp), 1.0, sq)
        assert val == pytest.approx(np.sqrt(0.02), rel=1e-12)

    def test_one_homogeneous(self, bar):
        p = np.full((bar.n_elements, 1), 0.2)
        p0 = np.zeros_like(p)
        one = plastic_dissipation_increment(p, p0, 1.5, bar)
        three = plastic_dissipation_increment(3 * p, p0, 1.5, bar)
        assert three == pytest.approx(3 * one, rel=1e-12)


class TestHardeningEnergy:
    def test_zero(self, bar):
        assert hardening_energy(np.zeros((bar.n_elements, 1)), 0.5, bar) == 0.0

    def test_uniform(self, bar):
        p = np.full((bar.n_elements, 1), 0.2)
        assert hardening_energy(p, 0.5, bar) == pytest.approx(0.1, rel=1e-12)

    def test_quadratic_homogeneity(self, bar):
        rng = np.random.default_rng(3)
        p = rng.normal(size=(bar.n_elements, 1))
        assert hardening_energy(2 * p, 0.7, bar) == pytest.approx(
            4 * hardening_energy(p, 0.7, bar), rel=1e-12
        )


class TestViscousIncrements:
    def test_viscoelastic_zero(self, bar):
        u = 0.3 * bar.nodes
        assert viscoelastic_increment(u, u, 0.01, 0.025, bar) == 0.0

    def test_viscoelastic_value(self, bar):
        u = 0.025 * bar.nodes
        val = viscoelastic_increment(u, np.zeros_like(u), 0.01, 0.025, bar)
        assert val == pytest.approx(0.00125, rel=1e-12)

    def test_viscoelastic_h_scaling(self, bar):
        u = 0.4 * bar.nodes
        v1 = viscoelastic_increment(u, np.zeros_like(u), 0.01, 0.025, bar)
        v2 = viscoelastic_increment(u, np.zeros_like(u), 0.01, 0.05, bar)
        assert v2 == pytest.approx(v1 / 2, rel=1e-12)

    def test_viscoelastic_h_positive(self, bar):
        with pytest.raises(InvalidParameterError):
            viscoelastic_increment(bar.nodes, bar.nodes, 0.01, 0.0, bar)

    def test_viscoplastic_value(self, bar):
        p = np.full((bar.n_elements, 1), 0.01)
        val = viscoplastic_increment(p, np.zeros_like(p), 0.1, 0.025, bar)
        assert val == pytest.approx(0.002, rel=1e-12)

    def test_viscoplastic_symmetry(self, bar):
        rng = np.random.default_rng(11)
        p1 = rng.normal(size=(bar.n_elements, 1))
        p2 = rng.normal(size=(bar.n_elements, 1))
        a = viscoplastic_increment(p1, p2, 0.3, 0.1, bar)
        b = viscoplastic_increment(p2, p1, 0.3, 0.1, bar)
        assert a == pytest.approx(b, rel=1e-14)


class TestSurfaceEnergy:
    def test_crack_free(self, bar):
        assert surface_energy(np.ones(bar.n_nodes), 0.094, bar) == 0.0

    def test_fully_cracked_constant(self, bar):
        val = surface_energy(np.zeros(bar.n_nodes), 0.094, bar)
        assert val == pytest.approx(10.0 / (4 * 0.094), rel=1e-12)

    def test_optimal_profile_near_unity(self):
        # v = 1 - exp(-|x - x0| / (2 eps)) carries unit surface energy in the
        # sharp-interface limit; at dx = eps/6 the quadrature error is < 5%
        eps = 0.094
        mesh = build_interval_mesh(10.0, eps / 6)
        v = 1.0 - np.exp(-np.abs(mesh.nodes - 5.0) / (2 * eps))
        assert surface_energy(v, eps, mesh) == pytest.approx(1.0, abs=0.05)

    def test_epsilon_positive(self, bar):
        with pytest.raises(InvalidParameterError):
            surface_energy(np.ones(bar.n_nodes), 0.0, bar)


class TestTotalEnergy:
    def test_virgin_zero(self, bar, params):
        s = virgin_state(bar)
        b = total_energy(s, s, params, 0.025, bar)
        assert b.total == 0.0
        assert b.elastic == b.plastic_increment == b.surface == 0.0

    def test_perfect_model_sum(self, bar, params):
        rng = np.random.default_rng(5)
        s = State(
            u=rng.normal(size=bar.n_nodes),
            v=rng.uniform(0, 1, bar.n_nodes),
            p=rng.normal(size=(bar.n_elements, 1)),
            t=1.0,
        )
        prev = virgin_state(bar)
        b = total_energy(s, prev, params, 0.025, bar)
        assert b.total == pytest.approx(
            b.elastic + b.plastic_increment + b.surface, rel=1e-12
        )
        assert b.viscoelastic_increment == 0.0

    def test_hardening_model_elastic_only_case(self, bar):
        params3 = MaterialParams(
            K=4.0, tau=1.5, epsilon=0.094, eta=1e-6, k_hard=0.5, model="hardening"
        )
        s = bar_state(bar, slope=1.0)
        prev = virgin_state(bar)
        b = total_energy(s, prev, params3, 0.025, bar)
        assert b.total == pytest.approx(20.00002, abs=1e-9)
        assert b.hardening == 0.0

    def test_all_components_nonnegative_fuzzed(self, bar):
        rng = np.random.default_rng(17)
        for model, extra in (
            ("perfect", {}),
            ("viscoelastic", dict(beta1=0.02)),
            ("viscoplastic", dict(beta2=0.3)),
            ("hardening", dict(k_hard=1.2)),
        ):
            params = MaterialParams(
                K=3.0, tau=0.8, epsilon=0.2, eta=1e-5, model=model, **extra
            )
            for _ in range(20):
                s = State(
                    u=rng.normal(size=bar.n_nodes),
                    v=rng.uniform(0, 1, bar.n_nodes),
                    p=rng.normal(size=(bar.n_elements, 1)),
                    t=1.0,
                )
                prev = State(
                    u=rng.normal(size=bar.n_nodes),
                    v=np.ones(bar.n_nodes),
                    p=rng.normal(size=(bar.n_elements, 1)),
                    t=0.9,
                )
                b = total_energy(s, prev, params, 0.1, bar)
                for name in (
                    "elastic",
                    "plastic_increment",
                    "hardening",
                    "viscoelastic_increment",
                    "viscoplastic_increment",
                    "surface",
                ):
                    assert getattr(b, name) >= 0.0
                active = sum(
                    getattr(b, t_) for t_ in EnergyBreakdown.active_terms(params.model)
                )
                assert b.total == pytest.approx(active, rel=1e-12)


class TestBlockwiseConvexity:
    """Midpoint convexity of the total in each variable block separately."""

    @pytest.mark.parametrize(
        "model,extra",
        [
            ("perfect", {}),
            ("viscoelastic", dict(beta1=0.05)),
            ("viscoplastic", dict(beta2=0.4)),
            ("hardening", dict(k_hard=0.9)),
        ],
    )
    def test_midpoint_convexity(self, model, extra):
        mesh = build_interval_mesh(2.0, 0.1)
        params = MaterialParams(
            K=4.0, tau=1.0, epsilon=0.15, eta=1e-6, model=model, **extra
        )
        rng = np.random.default_rng(23)
        prev = virgin_state(mesh)
        h = 0.05

        def E(u, v, p):
            return total_energy(State(u, v, p, 1.0), prev, params, h, mesh).total

        for _ in range(25):
            u1, u2 = rng.normal(size=(2, mesh.n_nodes))
            v1, v2 = rng.uniform(0, 1, size=(2, mesh.n_nodes))
            p1, p2 = rng.normal(size=(2, mesh.n_elements, 1))
            scale = 1.0 + abs(E(u1, v1, p1)) + abs(E(u2, v1, p1))
            # in u
            mid = E(0.5 * (u1 + u2), v1, p1)
            assert mid <= 0.5 * (E(u1, v1, p1) + E(u2, v1, p1)) + 1e-10 * scale
            # in p
            mid = E(u1, v1, 0.5 * (p1 + p2))
            assert mid <= 0.5 * (E(u1, v1, p1) + E(u1, v1, p2)) + 1e-10 * scale
            # in v
            mid = E(u1, 0.5 * (v1 + v2), p1)
            assert mid <= 0.5 * (E(u1, v1, p1) + E(u1, v2, p1)) + 1e-10 * scale


class TestRefinementConvergence:
    def test_energy_error_is_second_order(self):
        # smooth analytic fields: quadrature error should drop ~4x per halving
        K, eps, eta = 4.0, 0.2, 1e-6
        params = MaterialParams(K=K, tau=1.0, epsilon=eps, eta=eta)

        def exact_energies():
            from scipy.integrate import quad

            # u(x) = sin(x), v(x) = 1 - 0.5 sin(pi x / 5)^2 on (0, 5), p = 0
            el = quad(
                lambda x: 0.5
                * ((1 - 0.5 * np.sin(np.pi * x / 5) ** 2) ** 2 + eta)
                * K
                * np.cos(x) ** 2,
                0,
                5,
                limit=200,
            )[0]
            sf = quad(
                lambda x: eps * (-np.pi / 5 * np.sin(np.pi * x / 5) * np.cos(np.pi * x / 5)) ** 2
                + (0.5 * np.sin(np.pi * x / 5) ** 2) ** 2 / (4 * eps),
                0,
                5,
                limit=200,
            )[0]
            return el, sf

        el_exact, sf_exact = exact_energies()
        errs = []
        for dx in (0.1, 0.05):
            mesh = build_interval_mesh(5.0, dx)
            s = State(
                u=np.sin(mesh.nodes),
                v=1 - 0.5 * np.sin(np.pi * mesh.nodes / 5) ** 2,
                p=np.zeros((mesh.n_elements, 1)),
                t=0.0,
            )
            el = elastic_energy(s, params, mesh)
            sf = surface_energy(s.v, eps, mesh)
            errs.append(abs(el - el_exact) + abs(sf - sf_exact))
        assert errs[1] <= errs[0] / 2.5
