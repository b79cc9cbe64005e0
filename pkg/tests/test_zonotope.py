import numpy as np
import pytest

from pnpest.errors import RankDeficientError
from pnpest.zonotope import (Zonotope, contains_point, contains_zonotope, from_box,
                             generator_membership, linear_image, minkowski_concat,
                             normalized_facets, pseudo_inverse, support)


class TestFromBox:
    def test_paper_error_bounds(self):
        z = from_box([1.0, 1.5])
        assert np.allclose(z.generators, np.diag([1.0, 1.5]))
        assert z.n_facets == 4

    def test_interval(self):
        z = from_box([1.0])
        assert z.dim == 1
        assert contains_point(z, [1.0]) and not contains_point(z, [1.01])

    def test_disturbance_box(self):
        z = from_box([0.015])
        assert support(z.generators, [1.0]) == pytest.approx(0.015)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            from_box([1.0, 0.0])
        with pytest.raises(ValueError):
            from_box([-1.0])

    def test_consistency_exact(self):
        z = from_box([0.3, 2.0, 7.5])
        sup = np.abs(z.facet_normals @ z.generators).sum(axis=1)
        assert np.all(sup == 1.0)


class TestInvariants:
    def test_rank_deficient_facets_rejected(self):
        with pytest.raises(ValueError, match="rank"):
            Zonotope(generators=np.eye(2), facet_normals=np.array([[1.0, 0.0]]))

    def test_loose_facet_rejected(self):
        bad = np.vstack([np.eye(2) * 0.9, -np.eye(2)])
        with pytest.raises(ValueError, match="tight"):
            Zonotope(generators=np.eye(2), facet_normals=bad)

    def test_normalized_facets_rescales(self):
        z = normalized_facets(np.eye(2), np.vstack([np.eye(2) * 3.0, -np.eye(2) * 0.5]))
        sup = np.abs(z.facet_normals @ z.generators).sum(axis=1)
        assert np.allclose(sup, 1.0)

    def test_normalized_facets_rejects_orthogonal_row(self):
        gens = np.array([[1.0], [0.0]])
        facets = np.array([[0.0, 1.0], [1.0, 0.0], [-1.0, 0.0]])
        with pytest.raises(ValueError, match="orthogonal"):
            normalized_facets(gens, facets)

    def test_contains_point_dimension_mismatch(self):
        with pytest.raises(ValueError):
            contains_point(from_box([1.0, 1.0]), [0.0, 0.0, 0.0])


class TestLinearImage:
    def test_identity(self):
        z = from_box([1.0, 1.5])
        assert np.array_equal(linear_image(np.eye(2), z), z.generators)

    def test_zero_map(self):
        z = from_box([1.0, 1.5])
        assert np.all(linear_image(np.zeros((2, 2)), z) == 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            linear_image(np.eye(3), from_box([1.0, 1.0]))


class TestMinkowski:
    def test_identity_with_origin(self):
        a = np.array([[1.0, 0.5]])
        out = minkowski_concat(a, np.zeros((1, 0)))
        assert np.array_equal(out, a)

    def test_unit_square(self):
        out = minkowski_concat(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))
        assert np.array_equal(out, np.eye(2))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            minkowski_concat(np.eye(2), np.eye(3))


class TestSupport:
    def test_unit_square(self):
        assert support(np.eye(2), [1.0, 0.0]) == pytest.approx(1.0)

    def test_hand_value(self):
        assert support(np.diag([1.0, 1.5]), [1.0, 1.0]) == pytest.approx(2.5)

    def test_zero_direction(self):
        assert support(np.diag([1.0, 1.5]), [0.0, 0.0]) == 0.0


class TestContainsZonotope:
    def test_scaled_inner(self):
        z = from_box([1.0, 1.5])
        res = contains_zonotope(0.5 * z.generators, z)
        assert res.contained and res.margin == pytest.approx(0.5)

    def test_boundary(self):
        z = from_box([1.0, 1.5])
        res = contains_zonotope(z.generators, z)
        assert res.contained and res.margin == pytest.approx(0.0, abs=1e-14)

    def test_too_big(self):
        z = from_box([1.0, 1.5])
        res = contains_zonotope(1.1 * z.generators, z)
        assert not res.contained and res.margin == pytest.approx(-0.1)


class TestContainsPoint:
    def test_origin_always_inside(self):
        for widths in ([1.0], [0.3, 0.7], [1.0, 1.5, 2.0]):
            assert contains_point(from_box(widths), np.zeros(len(widths)))

    def test_vertex(self):
        assert contains_point(from_box([1.0, 1.5]), [1.0, 1.5])

    def test_outside(self):
        assert not contains_point(from_box([1.0, 1.5]), [1.01, 0.0])

    def test_off_span(self):
        G = np.array([[1.0], [0.0]])
        member, coeff = generator_membership(G, np.array([0.0, 0.5]))
        assert not member and coeff == np.inf


class TestPseudoInverse:
    def test_identity(self):
        assert np.allclose(pseudo_inverse(np.eye(3)), np.eye(3))

    def test_box_facets_left_inverse(self):
        H = from_box([1.0, 1.5]).facet_normals
        assert np.abs(pseudo_inverse(H) @ H - np.eye(2)).max() < 1e-10

    def test_random_left_inverse(self):
        rng = np.random.default_rng(7)
        M = rng.standard_normal((6, 2))
        err = np.linalg.norm(pseudo_inverse(M) @ M - np.eye(2), "fro")
        assert err < 1e-9

    def test_rank_deficient(self):
        M = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        with pytest.raises(RankDeficientError):
            pseudo_inverse(M)


class TestProperties:
    def test_support_additivity_and_image_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = rng.integers(1, 5)
            A = rng.standard_normal((n, rng.integers(1, 6)))
            B = rng.standard_normal((n, rng.integers(1, 6)))
            h = rng.standard_normal(n)
            lhs = support(minkowski_concat(A, B), h)
            rhs = support(A, h) + support(B, h)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)
            M = rng.standard_normal((rng.integers(1, 5), n))
            assert support(linear_image(M, A), rng.standard_normal(M.shape[0])) >= 0.0
            d = rng.standard_normal(M.shape[0])
            assert support(M @ A, d) == pytest.approx(support(A, M.T @ d),
                                                      rel=1e-12, abs=1e-14)

    def test_membership_agrees_with_support_on_boxes(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = rng.integers(1, 4)
            z = from_box(rng.uniform(0.2, 2.0, n))
            for _ in range(20):
                p = rng.uniform(-2.5, 2.5, n) * np.diag(z.generators)
                by_facets = bool(np.all(z.facet_normals @ p <= 1.0 + 1e-12))
                assert contains_point(z, p) == by_facets
