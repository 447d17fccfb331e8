from __future__ import annotations

import numpy as np
import pytest

from ijvar.core import DomainError, RandomnessPolicy
from ijvar.laws import DiscreteDistribution, NormalLaw, UniformLaw, law_from_dict


def test_discrete():
    law = DiscreteDistribution([0.0, 1.0, 3.0], [0.3, 0.5, 0.2])
    assert law.mean == pytest.approx(1.1)
    assert law.variance == pytest.approx(0.3 * 1.21 + 0.5 * 0.01 + 0.2 * 3.61)
    np.testing.assert_array_equal(law.from_uniforms(np.array([0.0, 0.29, 0.3, 0.79, 0.8, 0.999])), [0, 0, 1, 1, 3, 3])
    draws = law.sample(20000, RandomnessPolicy(1).generator("d"))
    assert np.mean(draws == 1.0) == pytest.approx(0.5, abs=0.02)
    assert law_from_dict(law.describe()) == law


@pytest.mark.parametrize(
    "support,probs", [([0, 1], [0.5]), ([0, 0], [0.5, 0.5]), ([0, 1], [0.7, 0.7]), ([0, 1], [-0.1, 1.1])]
)
def test_discrete_rejects(support, probs):
    with pytest.raises(DomainError):
        DiscreteDistribution(support, probs)


def test_normal_and_uniform():
    g = RandomnessPolicy(2).generator("n")
    x = NormalLaw(1.0, 4.0).sample(50000, g)
    assert x.mean() == pytest.approx(1.0, abs=0.05)
    assert x.var() == pytest.approx(4.0, rel=0.05)
    assert np.all(np.isfinite(NormalLaw(0.0, 1.0).from_uniforms(np.array([0.0, 1 - 2**-53]))))
    u = UniformLaw(2.0, 5.0)
    assert u.mean == 3.5 and u.variance == pytest.approx(0.75)
    assert np.all((u.sample(100, g) >= 2.0) & (u.sample(100, g) < 5.0))
    with pytest.raises(DomainError):
        NormalLaw(0.0, 0.0)
    with pytest.raises(DomainError):
        UniformLaw(1.0, 1.0)


def test_law_from_dict_errors():
    for bad in [{}, {"law": "cauchy"}, {"law": "normal", "scale": 1}, {"law": "discrete", "support": [1]}]:
        with pytest.raises(DomainError):
            law_from_dict(bad)
