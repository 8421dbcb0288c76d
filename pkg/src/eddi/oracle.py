"""Exact ground truth on small discrete models.

A TabularModel is the discrete analogue of the generative model: a latent
z with Z states, a prior table p(z), and per-variable channels p(x_d | z),
so p(x | z) factorises exactly like the neural decoder.  Everything here
is computed by full enumeration, no approximation anywhere, which is what
makes it usable as an oracle for the acquisition identities:

* the observed-space reward
      R(i) = E_{x_i | x_O} KL( p(x_phi | x_i, x_O) || p(x_phi | x_O) )
* its latent-space rewrite
      R(i) = E_{x_i}[KL(p(z|x_i,x_O) || p(z|x_O))]
             - E_{x_i,x_phi}[KL(p(z|x_phi,x_i,x_O) || p(z|x_phi,x_O))]
* the mutual-information decomposition
      R(i) = I(z; x_phi | x_O) - E_{x_i | x_O}[ I(z; x_phi | x_i, x_O) ]
  (observing x_i can only shrink the remaining information z carries
  about the targets; the shrinkage is exactly the reward).

Sizes are capped (D <= 8 variables, all cardinalities <= 8) so that the
enumerations stay exact and fast; anything larger is rejected rather than
silently approximated.  Posterior accumulation runs in log space because
products of many small probabilities underflow in linear space.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import CapabilityError, ConfigError, EvidenceError, NumericError, ShapeError

MAX_VARIABLES = 8
MAX_CARDINALITY = 8
NORM_TOL = 1e-12
IDENTITY_TOL = 1e-10


@dataclass
class TabularModel:
    prior: np.ndarray  # (Z,)
    tables: tuple[np.ndarray, ...]  # one (Z, card_d) channel per variable

    def __post_init__(self):
        self.prior = np.asarray(self.prior, dtype=np.float64)
        self.tables = tuple(np.asarray(t, dtype=np.float64) for t in self.tables)
        z = self.prior.shape[0]
        if len(self.tables) > MAX_VARIABLES:
            raise CapabilityError(
                f"at most {MAX_VARIABLES} variables are enumerable, got {len(self.tables)}"
            )
        if z > MAX_CARDINALITY:
            raise CapabilityError(f"latent cardinality {z} exceeds cap {MAX_CARDINALITY}")
        if abs(self.prior.sum() - 1.0) > NORM_TOL or np.any(self.prior < 0):
            raise ConfigError("prior is not a normalized distribution")
        for d, t in enumerate(self.tables):
            if t.ndim != 2 or t.shape[0] != z:
                raise ShapeError(f"table {d} must be (Z, card), got {t.shape}")
            if t.shape[1] > MAX_CARDINALITY:
                raise CapabilityError(
                    f"variable {d} cardinality {t.shape[1]} exceeds cap {MAX_CARDINALITY}"
                )
            if np.any(t < 0) or np.max(np.abs(t.sum(axis=1) - 1.0)) > NORM_TOL:
                raise ConfigError(f"table {d} rows are not normalized distributions")

    @property
    def n_variables(self) -> int:
        return len(self.tables)

    @property
    def latent_cardinality(self) -> int:
        return self.prior.shape[0]

    def cardinality(self, d: int) -> int:
        return self.tables[d].shape[1]

    def to_json_dict(self) -> dict:
        return {
            "prior": self.prior.tolist(),
            "tables": [t.tolist() for t in self.tables],
        }

    @staticmethod
    def from_json_dict(data: Mapping) -> "TabularModel":
        return TabularModel(np.array(data["prior"]), tuple(np.array(t) for t in data["tables"]))

    @staticmethod
    def load(path: str | Path) -> "TabularModel":
        return TabularModel.from_json_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1))


def random_model(
    rng: np.random.Generator,
    n_variables: int,
    latent_cardinality: int,
    cardinalities: Sequence[int] | None = None,
) -> TabularModel:
    """Dirichlet-distributed tables; every distribution has full support."""
    if cardinalities is None:
        cardinalities = [int(rng.integers(2, 5)) for _ in range(n_variables)]
    prior = rng.dirichlet(np.ones(latent_cardinality))
    tables = tuple(
        np.stack([rng.dirichlet(np.ones(c)) for _ in range(latent_cardinality)])
        for c in cardinalities
    )
    return TabularModel(prior, tables)


def _validate_obs(model: TabularModel, obs: Mapping[int, int]) -> None:
    for d, v in obs.items():
        if not 0 <= d < model.n_variables:
            raise ShapeError(f"observed variable {d} out of range")
        if not 0 <= v < model.cardinality(d):
            raise ShapeError(
                f"value {v} outside cardinality {model.cardinality(d)} of variable {d}"
            )


def _logsumexp(logp: np.ndarray) -> float:
    """Stable log-sum-exp for the short vectors used here.

    Hand-rolled because the scipy version spends two orders of magnitude
    more time in array-api dispatch than in arithmetic at this size, and
    posterior enumeration sits on the hot path of the identity sweeps.
    """
    m = logp.max()
    if m == -np.inf:
        return -np.inf
    return float(m + np.log(np.exp(logp - m).sum()))


def exact_posterior(model: TabularModel, obs: Mapping[int, int]) -> np.ndarray:
    """p(z | x_O) by enumeration over z, accumulated in log space."""
    _validate_obs(model, obs)
    with np.errstate(divide="ignore"):
        logp = np.log(model.prior)
        for d, v in sorted(obs.items()):
            logp = logp + np.log(model.tables[d][:, v])
    total = _logsumexp(logp)
    if total == -np.inf:
        raise EvidenceError(f"observation {dict(obs)} has probability zero")
    return np.exp(logp - total)


def target_predictive(
    model: TabularModel, obs: Mapping[int, int], phi: Sequence[int]
) -> tuple[list[tuple[int, ...]], np.ndarray]:
    """All joint assignments of the target set and their p(x_phi | x_O)."""
    post = exact_posterior(model, obs)
    assignments = list(itertools.product(*(range(model.cardinality(t)) for t in phi)))
    probs = np.empty(len(assignments))
    for j, a in enumerate(assignments):
        lik = post.copy()
        for t, v in zip(phi, a):
            lik *= model.tables[t][:, v]
        probs[j] = lik.sum()
    return assignments, probs


def _check_query(model: TabularModel, obs: Mapping[int, int], i: int, phi: Sequence[int]) -> None:
    phi = list(phi)
    if not phi:
        raise ConfigError("target set must be non-empty")
    members = {i, *phi}
    if len(phi) != len(set(phi)) or i in phi:
        raise ConfigError("candidate and target variables must be distinct")
    if members & set(obs):
        raise ConfigError("candidate/target variables overlap the observed set")
    for d in members:
        if not 0 <= d < model.n_variables:
            raise ShapeError(f"variable {d} out of range")


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    """Discrete KL; support of p must lie inside support of q."""
    mask = p > 0
    with np.errstate(divide="ignore"):
        terms = p[mask] * (np.log(p[mask]) - np.log(q[mask]))
    return float(terms.sum())


def _candidate_marginal(model: TabularModel, obs: Mapping[int, int], i: int) -> np.ndarray:
    post = exact_posterior(model, obs)
    return model.tables[i].T @ post


def reward_observed(model: TabularModel, obs: Mapping[int, int], i: int, phi: Sequence[int]) -> float:
    """Observed-space reward: expected KL between target predictives."""
    _check_query(model, obs, i, phi)
    _, p0 = target_predictive(model, obs, phi)
    p_i = _candidate_marginal(model, obs, i)
    total = 0.0
    for v in range(model.cardinality(i)):
        if p_i[v] <= 0.0:
            continue
        _, p1 = target_predictive(model, {**obs, i: v}, phi)
        total += p_i[v] * _kl(p1, p0)
    return total


def reward_latent(model: TabularModel, obs: Mapping[int, int], i: int, phi: Sequence[int]) -> float:
    """Latent-space rewrite of the reward via the KL chain rule."""
    _check_query(model, obs, i, phi)
    post0 = exact_posterior(model, obs)
    p_i = _candidate_marginal(model, obs, i)
    first = 0.0
    second = 0.0
    for v in range(model.cardinality(i)):
        if p_i[v] <= 0.0:
            continue
        obs_v = {**obs, i: v}
        post_v = exact_posterior(model, obs_v)
        first += p_i[v] * _kl(post_v, post0)
        assignments, joint = target_predictive(model, obs_v, phi)
        for a, pa in zip(assignments, joint):
            if pa <= 0.0:
                continue
            obs_a = dict(obs_v)
            obs_va = dict(obs_v)
            for t, val in zip(phi, a):
                obs_a[t] = val
                obs_va[t] = val
            del obs_a[i]
            post_va = exact_posterior(model, obs_va)
            post_a = exact_posterior(model, obs_a)
            second += p_i[v] * pa * _kl(post_va, post_a)
    return first - second


def _conditional_mi(model: TabularModel, obs: Mapping[int, int], phi: Sequence[int]) -> float:
    """I(z; x_phi | x_O) = E_{x_phi|x_O} KL( p(z|x_phi,x_O) || p(z|x_O) )."""
    post = exact_posterior(model, obs)
    assignments, probs = target_predictive(model, obs, phi)
    total = 0.0
    for a, pa in zip(assignments, probs):
        if pa <= 0.0:
            continue
        extended = dict(obs)
        for t, v in zip(phi, a):
            extended[t] = v
        total += pa * _kl(exact_posterior(model, extended), post)
    return total


def bald_decomposition(
    model: TabularModel, obs: Mapping[int, int], i: int, phi: Sequence[int]
) -> tuple[float, float]:
    """Reward as shrinkage of latent-target mutual information.

    Returns (before, after) = (I(z; x_phi | x_O),
    E_{x_i|x_O}[I(z; x_phi | x_i, x_O)]); their difference equals the
    reward, which this op verifies against reward_observed before returning.
    """
    _check_query(model, obs, i, phi)
    before = _conditional_mi(model, obs, phi)
    p_i = _candidate_marginal(model, obs, i)
    after = 0.0
    for v in range(model.cardinality(i)):
        if p_i[v] <= 0.0:
            continue
        after += p_i[v] * _conditional_mi(model, {**obs, i: v}, phi)
    reward = reward_observed(model, obs, i, phi)
    if abs((before - after) - reward) > IDENTITY_TOL:
        raise NumericError(
            f"mutual-information decomposition off by {abs(before - after - reward):.3e}"
        )
    return before, after
