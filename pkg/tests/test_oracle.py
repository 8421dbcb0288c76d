"""Exact discrete oracle, cross-checked against brute-force joint tables."""

import itertools

import numpy as np
import pytest

from eddi.errors import CapabilityError, ConfigError, EvidenceError, ShapeError
from eddi.oracle import (
    TabularModel,
    bald_decomposition,
    exact_posterior,
    random_model,
    reward_observed,
    reward_latent,
    target_predictive,
)


class JointTable:
    """Brute-force reference: materialize p(z, x_1..x_D) cell by cell.

    Deliberately uses plain scalar loops, no log space and no shared code
    with the package, so agreement is meaningful.
    """

    def __init__(self, model):
        self.model = model
        shape = (model.latent_cardinality,) + tuple(
            model.cardinality(d) for d in range(model.n_variables)
        )
        self.joint = np.zeros(shape)
        for idx in itertools.product(*(range(s) for s in shape)):
            z, xs = idx[0], idx[1:]
            p = model.prior[z]
            for d, v in enumerate(xs):
                p = p * model.tables[d][z, v]
            self.joint[idx] = p

    def _restrict(self, obs):
        table = self.joint
        for d in reversed(range(self.model.n_variables)):
            axis = 1 + d
            if d in obs:
                table = np.take(table, obs[d], axis=axis)
            else:
                table = table.sum(axis=axis)
        return table  # (Z,) unnormalized

    def posterior(self, obs):
        t = self._restrict(obs)
        return t / t.sum()

    def predictive(self, obs, phi):
        probs = []
        for a in itertools.product(*(range(self.model.cardinality(t)) for t in phi)):
            extended = dict(obs)
            extended.update(zip(phi, a))
            probs.append(self._restrict(extended).sum())
        probs = np.array(probs)
        return probs / probs.sum()

    def reward(self, obs, i, phi):
        p0 = self.predictive(obs, phi)
        marg = self.predictive(obs, [i])
        total = 0.0
        for v in range(self.model.cardinality(i)):
            if marg[v] == 0:
                continue
            p1 = self.predictive({**obs, i: v}, phi)
            for a in range(len(p0)):
                if p1[a] > 0:
                    total += marg[v] * p1[a] * np.log(p1[a] / p0[a])
        return total


@pytest.fixture
def model():
    return random_model(np.random.default_rng(7), n_variables=3, latent_cardinality=3)


def all_partial_observations(model):
    indices = range(model.n_variables)
    for r in range(model.n_variables + 1):
        for subset in itertools.combinations(indices, r):
            for values in itertools.product(*(range(model.cardinality(d)) for d in subset)):
                yield dict(zip(subset, values))


def test_posterior_matches_joint_enumeration(model):
    ref = JointTable(model)
    for obs in all_partial_observations(model):
        np.testing.assert_allclose(
            exact_posterior(model, obs), ref.posterior(obs), atol=1e-12
        )


def test_empty_observation_recovers_prior(model):
    np.testing.assert_allclose(exact_posterior(model, {}), model.prior, atol=1e-14)


def test_posterior_normalized(model):
    for obs in all_partial_observations(model):
        assert abs(exact_posterior(model, obs).sum() - 1.0) < 1e-12


def test_deterministic_channel_collapses_posterior():
    # x_0 copies z exactly, so observing it pins the posterior to a vertex.
    copy = np.eye(3)
    noisy = np.full((3, 2), 0.5)
    m = TabularModel(np.array([0.2, 0.3, 0.5]), (copy, noisy))
    np.testing.assert_allclose(exact_posterior(m, {0: 1}), [0.0, 1.0, 0.0], atol=1e-15)


def test_zero_probability_evidence_rejected():
    prior = np.array([1.0, 0.0])
    table = np.array([[1.0, 0.0], [0.0, 1.0]])
    m = TabularModel(prior, (table,))
    with pytest.raises(EvidenceError):
        exact_posterior(m, {0: 1})


def test_observation_validation(model):
    with pytest.raises(ShapeError):
        exact_posterior(model, {99: 0})
    with pytest.raises(ShapeError):
        exact_posterior(model, {0: model.cardinality(0)})


def test_capability_caps():
    rng = np.random.default_rng(0)
    with pytest.raises(CapabilityError):
        random_model(rng, n_variables=9, latent_cardinality=2)
    with pytest.raises(CapabilityError):
        random_model(rng, n_variables=2, latent_cardinality=9)
    with pytest.raises(CapabilityError):
        random_model(rng, n_variables=1, latent_cardinality=2, cardinalities=[9])


def test_unnormalized_tables_rejected():
    with pytest.raises(ConfigError):
        TabularModel(np.array([0.6, 0.6]), (np.full((2, 2), 0.5),))
    with pytest.raises(ConfigError):
        TabularModel(np.array([0.5, 0.5]), (np.array([[0.9, 0.2], [0.5, 0.5]]),))


def test_predictive_matches_joint(model):
    ref = JointTable(model)
    _, probs = target_predictive(model, {0: 1}, [1, 2])
    np.testing.assert_allclose(probs, ref.predictive({0: 1}, [1, 2]), atol=1e-12)


def test_reward_matches_joint_enumeration():
    rng = np.random.default_rng(21)
    for _ in range(10):
        m = random_model(rng, n_variables=4, latent_cardinality=3)
        ref = JointTable(m)
        obs = {0: int(rng.integers(m.cardinality(0)))}
        r = reward_observed(m, obs, 1, [2, 3])
        assert abs(r - ref.reward(obs, 1, [2, 3])) < 1e-12


def test_copy_channels_give_log2_reward():
    # z uniform binary, x_0 and x_1 both copy z: observing x_0 reveals x_1
    # completely, so the reward is the full entropy log 2.
    copy = np.eye(2)
    m = TabularModel(np.array([0.5, 0.5]), (copy, copy))
    assert abs(reward_observed(m, {}, 0, [1]) - np.log(2.0)) < 1e-12


def test_independent_candidate_has_zero_reward():
    # Rows of x_0's table are identical, so x_0 carries nothing about z.
    flat = np.array([[0.3, 0.7], [0.3, 0.7], [0.3, 0.7]])
    informative = np.array([[0.9, 0.1], [0.1, 0.9], [0.5, 0.5]])
    m = TabularModel(np.array([0.2, 0.5, 0.3]), (flat, informative))
    assert abs(reward_observed(m, {}, 0, [1])) < 1e-12
    assert abs(reward_latent(m, {}, 0, [1])) < 1e-12


def test_reward_invariant_under_value_relabeling():
    rng = np.random.default_rng(3)
    m = random_model(rng, n_variables=3, latent_cardinality=3, cardinalities=[3, 3, 3])
    base = reward_observed(m, {2: 1}, 0, [1])
    perm = [2, 0, 1]
    relabeled = TabularModel(
        m.prior, (m.tables[0][:, perm], m.tables[1], m.tables[2])
    )
    assert abs(reward_observed(relabeled, {2: 1}, 0, [1]) - base) < 1e-12


def test_observed_latent_identity_random_models():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(30):
        d = int(rng.integers(3, 5))
        m = random_model(rng, n_variables=d, latent_cardinality=int(rng.integers(2, 5)))
        variables = list(range(d))
        obs = {variables.pop(int(rng.integers(len(variables)))): 0}
        i = variables.pop(int(rng.integers(len(variables))))
        phi = variables
        diff = abs(reward_observed(m, obs, i, phi) - reward_latent(m, obs, i, phi))
        worst = max(worst, diff)
    assert worst < 1e-10


def test_reward_equals_entropy_difference():
    # Independent identity: R = H(x_phi | x_O) - E_{x_i}[H(x_phi | x_i, x_O)]
    # computed from predictive distributions only.
    def entropy(probs):
        mask = probs > 0
        return float(-(probs[mask] * np.log(probs[mask])).sum())

    rng = np.random.default_rng(17)
    for _ in range(10):
        m = random_model(rng, n_variables=4, latent_cardinality=3)
        obs = {3: int(rng.integers(m.cardinality(3)))}
        _, p0 = target_predictive(m, obs, [1, 2])
        _, marg = target_predictive(m, obs, [0])
        expected_after = 0.0
        for v in range(m.cardinality(0)):
            _, pv = target_predictive(m, {**obs, 0: v}, [1, 2])
            expected_after += marg[v] * entropy(pv)
        identity = entropy(p0) - expected_after
        assert abs(reward_observed(m, obs, 0, [1, 2]) - identity) < 1e-12


def test_reward_nonnegative():
    rng = np.random.default_rng(29)
    for _ in range(20):
        m = random_model(rng, n_variables=3, latent_cardinality=3)
        assert reward_observed(m, {}, 0, [1, 2]) >= -1e-12


def test_degenerate_posterior_zeroes_latent_terms():
    # Observing a copy channel pins z, after which no further evidence
    # moves the posterior: both KL terms of the latent-space form vanish.
    copy = np.eye(2)
    noisy = np.array([[0.8, 0.2], [0.3, 0.7]])
    m = TabularModel(np.array([0.5, 0.5]), (copy, noisy, noisy))
    assert abs(reward_latent(m, {0: 0}, 1, [2])) < 1e-12
    assert abs(reward_observed(m, {0: 0}, 1, [2])) < 1e-12


def test_query_validation(model):
    with pytest.raises(ConfigError):
        reward_observed(model, {0: 0}, 0, [1])  # candidate already observed
    with pytest.raises(ConfigError):
        reward_observed(model, {}, 0, [0])  # candidate inside target set
    with pytest.raises(ConfigError):
        reward_observed(model, {}, 0, [])  # empty target set
    with pytest.raises(ConfigError):
        reward_observed(model, {}, 0, [1, 1])  # duplicate target
    with pytest.raises(ShapeError):
        reward_observed(model, {}, 0, [17])


def test_bald_terms_reproduce_reward():
    rng = np.random.default_rng(41)
    for _ in range(20):
        m = random_model(rng, n_variables=4, latent_cardinality=3)
        obs = {3: int(rng.integers(m.cardinality(3)))}
        before, after = bald_decomposition(m, obs, 0, [1, 2])
        assert before >= -1e-12 and after >= -1e-12
        assert abs((before - after) - reward_observed(m, obs, 0, [1, 2])) < 1e-10


def test_bald_independent_targets_zero_terms():
    # Targets carry no information about z, so both MI terms vanish.
    flat = np.array([[0.4, 0.6], [0.4, 0.6]])
    informative = np.array([[0.9, 0.1], [0.2, 0.8]])
    m = TabularModel(np.array([0.5, 0.5]), (informative, flat))
    before, after = bald_decomposition(m, {}, 0, [1])
    assert abs(before) < 1e-12 and abs(after) < 1e-12


def test_json_round_trip(model, tmp_path):
    path = tmp_path / "model.json"
    model.save(path)
    loaded = TabularModel.load(path)
    np.testing.assert_array_equal(loaded.prior, model.prior)
    for a, b in zip(loaded.tables, model.tables):
        np.testing.assert_array_equal(a, b)
