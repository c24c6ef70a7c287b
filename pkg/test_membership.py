import math

import numpy as np
import pytest

from nestgraph.core.exceptions import ValidationError
from nestgraph.model import (MembershipState, boundary_nodes, concentration, gumbel_softmax_sample, hard_assignment,
                             membership_distribution, relaxed_assignment, sample_dirichlet)
from nestgraph.numerics import Tensor, softmax


def test_zero_groups_give_uniform_membership():
    pi = membership_distribution(np.zeros((4, 3)), Tensor(np.random.default_rng(0).normal(size=(5, 3))))
    assert np.allclose(pi.value, 0.25)


@pytest.mark.parametrize("squared_norm, expected", [
    (math.log(3), [0.9, 0.1]),
    (math.log(3) / 2, [0.75, 0.25]),
])
def test_opposite_group_vectors(squared_norm, expected):
    h = np.array([math.sqrt(squared_norm), 0.0])
    phi = np.stack([h, -h])
    assert membership_distribution(phi, Tensor(h)).value == pytest.approx(expected)


def test_membership_rows_lie_on_simplex():
    rng = np.random.default_rng(1)
    pi = membership_distribution(rng.normal(size=(6, 4)), Tensor(rng.normal(size=(10, 4)) * 5))
    assert np.all(pi.value >= 0)
    assert np.allclose(pi.value.sum(axis=1), 1.0)


def test_low_temperature_is_nearly_one_hot():
    pi = np.tile([0.9, 0.05, 0.05], (10_000, 1))
    z = gumbel_softmax_sample(pi, tau=0.001, seed=4).value
    assert np.mean(z.max(axis=1) > 0.99) >= 0.99
    assert np.allclose(z.sum(axis=1), 1.0)


def test_log_space_low_temperature_is_nearly_one_hot():
    pi = np.tile([0.9, 0.05, 0.05], (100_000, 1))
    z = gumbel_softmax_sample(pi, tau=0.01, seed=4, noise_space="log").value
    assert np.mean(z.max(axis=1) > 0.99) >= 0.99


@pytest.mark.parametrize("noise_space", ["probability", "log"])
def test_mean_peak_grows_as_temperature_falls(noise_space):
    pi = np.tile([0.6, 0.3, 0.1], (10_000, 1))
    peaks = [gumbel_softmax_sample(pi, tau, seed=5, noise_space=noise_space).value.max(axis=1).mean()
             for tau in (1.0, 0.5, 0.1, 0.01)]
    assert all(later >= earlier for earlier, later in zip(peaks, peaks[1:]))
    assert peaks[-1] > 0.9


# argmax(log pi + g) is Categorical(pi); argmax(pi + g) is Categorical(softmax(pi))
@pytest.mark.parametrize("noise_space, oracle", [
    ("log", lambda pi: pi),
    ("probability", lambda pi: np.exp(pi) / np.exp(pi).sum()),
])
def test_hard_assignments_follow_the_gumbel_argmax_law(noise_space, oracle):
    pi = np.array([0.6, 0.3, 0.1])
    draws = 100_000
    z = gumbel_softmax_sample(np.tile(pi, (draws, 1)), tau=0.5, seed=6, noise_space=noise_space).value
    observed = np.bincount(hard_assignment(z), minlength=3)
    expected = draws * oracle(pi)
    chi_square = float(((observed - expected) ** 2 / expected).sum())
    assert chi_square < 13.816  # 0.999 quantile, 2 degrees of freedom


def test_zero_noise_is_plain_softmax():
    pi = np.array([0.6, 0.3, 0.1])
    z = gumbel_softmax_sample(pi, tau=1.0, noise=np.zeros(3))
    assert np.allclose(z.value, softmax(pi).value)
    assert np.allclose(relaxed_assignment(pi, 1.0).value, softmax(pi).value)


def test_log_noise_space_recovers_pi():
    pi = np.array([0.6, 0.3, 0.1])
    z = gumbel_softmax_sample(pi, tau=1.0, noise=np.zeros(3), noise_space="log")
    assert z.value == pytest.approx(pi)


def test_uniform_membership_samples_every_group_equally():
    pi = np.full((100_000, 4), 0.25)
    winners = np.argmax(gumbel_softmax_sample(pi, tau=0.1, seed=8).value, axis=1)
    frequencies = np.bincount(winners, minlength=4) / winners.size
    assert np.all(np.abs(frequencies - 0.25) <= 0.01)


def test_gumbel_draws_are_seeded():
    pi = np.full((3, 2), 0.5)
    assert np.array_equal(gumbel_softmax_sample(pi, 0.5, seed=1).value, gumbel_softmax_sample(pi, 0.5, seed=1).value)
    assert not np.array_equal(gumbel_softmax_sample(pi, 0.5, seed=1).value,
                              gumbel_softmax_sample(pi, 0.5, seed=2).value)


def test_sampling_rejects_bad_arguments():
    with pytest.raises(ValidationError):
        gumbel_softmax_sample(np.array([0.5, 0.5]), tau=0.0)
    with pytest.raises(ValidationError):
        gumbel_softmax_sample(np.array([0.5, 0.5]), tau=1.0, noise=np.zeros(3))
    with pytest.raises(ValidationError):
        gumbel_softmax_sample(np.array([0.5, 0.5]), tau=1.0, noise_space="logit")


def test_hard_assignment():
    assert hard_assignment([0.2, 0.7, 0.1]) == 1
    assert hard_assignment([0.5, 0.5]) == 0
    assert hard_assignment(np.array([[0.1, 0.9], [0.5, 0.5]])).tolist() == [1, 0]


def test_concentration():
    assert concentration(np.full(6, 1 / 6)) == pytest.approx(0.0)
    assert concentration(np.eye(5)[2]) == pytest.approx(0.16)
    assert concentration(np.array([[0.5, 0.5], [1.0, 0.0]])).tolist() == pytest.approx([0.0, 0.25])


def test_state_validation():
    pi = Tensor(np.array([[0.7, 0.3]]))
    assert MembershipState(layer=1, pi=pi, z=pi, tau=0.5).validate()
    assert MembershipState(layer=1, pi=pi, z=pi, tau=0.5).hard().tolist() == [0]
    with pytest.raises(ValidationError):
        MembershipState(layer=1, pi=Tensor(np.array([[0.7, 0.7]])), z=pi, tau=0.5).validate()
    with pytest.raises(ValidationError):
        MembershipState(layer=1, pi=pi, z=pi, tau=0.0).validate()


def test_dirichlet_draws_lie_on_simplex():
    pi = np.array([[0.7, 0.2, 0.1], [0.1, 0.1, 0.8]])
    draws = sample_dirichlet(pi, seed=3, scale=10.0)
    assert draws.shape == pi.shape
    assert np.allclose(draws.sum(axis=1), 1.0)
    assert np.array_equal(draws, sample_dirichlet(pi, seed=3, scale=10.0))


def test_boundary_nodes_are_the_flattest():
    per_layer = np.array([[0.2, 0.0, 0.1, 0.05], [0.2, 0.01, 0.1, 0.0]])
    assert boundary_nodes(per_layer, fraction=0.5).tolist() == [1, 3]
    assert boundary_nodes(np.array([0.3, 0.1]), fraction=0.1).tolist() == [1]
    with pytest.raises(ValidationError):
        boundary_nodes(per_layer, fraction=0.0)
