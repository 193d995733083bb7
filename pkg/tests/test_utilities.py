import math

import numpy as np
import pytest

from errors import ConfigError, DomainError
from utilities import CARA, CRRA, HARA, LinearUtility, utility_from_dict


class TestCARA:
    def test_normalized_at_zero(self):
        assert CARA(2.0).u(0.0) == pytest.approx(0.0)

    def test_marginal_inverse(self):
        u = CARA(2.0)
        assert u.marginal_inverse(u.marginal(0.7)) == pytest.approx(0.7)

    def test_inverse(self):
        u = CARA(0.5)
        assert u.inverse(u.u(3.0)) == pytest.approx(3.0)

    def test_inverse_out_of_range(self):
        with pytest.raises(DomainError):
            CARA(1.0).inverse(1.0)

    def test_prudent_and_hara(self):
        u = CARA(1.0)
        assert u.is_prudent
        assert u.is_hara
        assert u.third(0.0) > 0

    def test_rejects_nonpositive_gamma(self):
        with pytest.raises(DomainError):
            CARA(0.0)


class TestHARA:
    def test_log_case(self):
        """a = 1 gives log utility of (x + m)."""
        u = HARA(a=1.0, m=1.0)
        assert u.u(math.e - 1) == pytest.approx(1.0)
        assert u.marginal(1.0) == pytest.approx(0.5)

    def test_a_zero_matches_cara(self):
        assert HARA(a=0.0, m=0.5).marginal(1.0) == pytest.approx(CARA(2.0).marginal(1.0))

    def test_marginal_inverse(self):
        u = HARA(a=0.5, m=2.0)
        assert u.marginal_inverse(u.marginal(1.5)) == pytest.approx(1.5)

    def test_domain(self):
        with pytest.raises(DomainError):
            HARA(a=1.0, m=1.0).marginal(-2.0)


class TestCRRA:
    def test_log_utility(self):
        u = CRRA(1.0)
        assert u.u(math.e) == pytest.approx(1.0)
        assert u.inverse(1.0) == pytest.approx(math.e)

    def test_domain(self):
        with pytest.raises(DomainError):
            CRRA(2.0).u(0.0)

    def test_array_input(self):
        out = CRRA(2.0).marginal(np.array([1.0, 2.0]))
        assert np.allclose(out, [1.0, 0.25])


class TestLinearUtility:
    def test_not_strictly_concave(self):
        u = LinearUtility()
        assert not u.strictly_concave
        assert u.marginal(5.0) == 1.0

    def test_marginal_inverse_undefined(self):
        with pytest.raises(DomainError):
            LinearUtility().marginal_inverse(1.0)


class TestFromDict:
    def test_kinds(self):
        assert utility_from_dict({"kind": "cara", "gamma": 2}) == CARA(2.0)
        assert utility_from_dict({"kind": "linear"}) == LinearUtility()

    def test_missing_parameter(self):
        with pytest.raises(ConfigError, match="gamma"):
            utility_from_dict({"kind": "cara"})

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            utility_from_dict({"kind": "quadratic"})
