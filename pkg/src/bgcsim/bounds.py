"""Closed-form bounds, the DRACO baseline, and executable converse checks.

All binomials are evaluated exactly on big integers; the only floating-point
step is the final logarithm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .adversary import TableAdversary, flip_world, symmetrization_attack
from .core import SchemeParams, full_gradient, random_gradients
from .protocol import Metrics, Transcript, run_scheme


def local_comp_lower(params: SchemeParams) -> int:
    """Minimum local computations forced on any scheme with replication s+u."""
    return params.s // params.u


def comm_lower(params: SchemeParams) -> float:
    """Lower bound on protocol overhead, in alphabet symbols.

    log base q of C(p/m, floor(s/u)); zero when u > s (the bound is vacuous).
    """
    n_dev = params.s // params.u
    if n_dev == 0:
        return 0.0
    block = params.block_size
    if block < n_dev:
        raise ValueError(
            f"invalid configuration: p/m={block} < floor(s/u)={n_dev}"
        )
    return math.log2(math.comb(block, n_dev)) / math.log2(params.q)


def scheme_upper_bounds(params: SchemeParams):
    """(c_upper, T_upper, kappa_upper) guaranteed by the tournament scheme.

    At most s+1-u matches happen, each spanning at most ceil(log2(p/m))
    rounds at two symbols per round, and the commit bits across all matches
    telescope to (s+1-u)(s+3u)/2 bits.  For u > s+1 no interaction is ever
    needed, so the match count clamps at zero.
    """
    matches = max(0, params.s + 1 - params.u)
    height = math.ceil(math.log2(params.block_size))
    kappa = matches * (2 * height + (params.s + 3 * params.u) / (2 * math.log2(params.q)))
    return params.s // params.u, matches * height, kappa


def ratio_limit(params: SchemeParams) -> float:
    """Large-p limit of kappa_upper / kappa_lower: 2 log2(q) (s-u+1) / floor(s/u)."""
    n_dev = params.s // params.u
    if n_dev == 0:
        raise ValueError("ratio limit undefined when floor(s/u) = 0")
    return 2 * math.log2(params.q) * (params.s - params.u + 1) / n_dev


def draco_baseline(params: SchemeParams) -> Metrics:
    """Zero-interaction baseline: replication 2s+1, majority vote per group."""
    return Metrics(
        T=0,
        c=0,
        r=Fraction(2 * params.s + 1),
        kappa=0.0,
        total_comm=float(params.m * (2 * params.s + 1) * params.d),
    )


@dataclass(frozen=True)
class BoundsReport:
    """All closed-form bound values for one configuration."""

    c_lower: int
    kappa_lower: float  # None when p/m < floor(s/u)
    c_upper: int
    T_upper: int
    kappa_upper: float
    ratio_limit: float  # None when floor(s/u) = 0
    draco_total_comm: float

    @classmethod
    def from_params(cls, params: SchemeParams) -> "BoundsReport":
        c_upper, t_upper, kappa_upper = scheme_upper_bounds(params)
        n_dev = params.s // params.u
        try:
            kappa_lower = comm_lower(params)
        except ValueError:
            kappa_lower = None
        return cls(
            c_lower=local_comp_lower(params),
            kappa_lower=kappa_lower,
            c_upper=c_upper,
            T_upper=t_upper,
            kappa_upper=kappa_upper,
            ratio_limit=ratio_limit(params) if n_dev > 0 else None,
            draco_total_comm=draco_baseline(params).total_comm,
        )

    def to_json(self) -> str:
        return json.dumps(self.__dict__, separators=(",", ":"))


def check_compliance(params: SchemeParams, metrics: Metrics, transcript: Transcript = None):
    """Violations of the per-run guarantees; empty list means compliant."""
    c_upper, t_upper, kappa_upper = scheme_upper_bounds(params)
    problems = []
    if metrics.c > c_upper:
        problems.append(f"c={metrics.c} exceeds bound {c_upper}")
    if metrics.T > t_upper:
        problems.append(f"T={metrics.T} exceeds bound {t_upper}")
    if metrics.kappa > kappa_upper + 1e-9:
        problems.append(f"kappa={metrics.kappa} exceeds bound {kappa_upper}")
    if transcript is not None and transcript.kappa() != metrics.kappa:
        problems.append("kappa recomputed from the message log disagrees with the metric")
    return problems


def disagreement_coverage_check(transcript: Transcript, disagreement, table=None) -> bool:
    """True when every actually-disputed planted index was settled.

    An index is disputed when two workers of the attacked group claim
    different values for it (derived from the table when given, otherwise
    every planted index is assumed disputed).  Settling means the index was
    computed locally or its backers were wiped out by an undersized commit.
    """
    indices = set(disagreement.indices)
    if table is not None:
        disputed = set()
        params = table.params
        for index in indices:
            seen = {
                table.value(j, index).tobytes()
                for j in params.workers_of_group(disagreement.group)
            }
            if len(seen) > 1:
                disputed.add(index)
    else:
        disputed = indices
    settled = set(transcript.computed_indices())
    settled.update(
        event.index
        for event in transcript.eliminations
        if event.reason == "undersupported_commit"
    )
    return disputed <= settled


@dataclass(frozen=True)
class Witness:
    """Constructive converse witness: one decoder input, two ground truths."""

    flip_index: int
    decoder_input_1: bytes
    decoder_input_2: bytes
    full_gradient_1: np.ndarray
    full_gradient_2: np.ndarray

    @property
    def indistinguishable(self) -> bool:
        return self.decoder_input_1 == self.decoder_input_2

    @property
    def gradients_differ(self) -> bool:
        return not np.array_equal(self.full_gradient_1, self.full_gradient_2)


def decoder_input(table, transcript: Transcript) -> bytes:
    """Everything the decoder sees: claimed values, messages, computed gradients."""
    payload = {
        "messages": [list(m) for m in transcript.messages],
        "computed": transcript.computed_indices(),
        "values": [v.tolist() for v in transcript.oracle_values],
    }
    return table.claims.tobytes() + json.dumps(payload, separators=(",", ":")).encode()


def indistinguishability_check(params: SchemeParams, budget: int, seed=0) -> Witness:
    """Run the scheme truncated at ``budget`` local computations in two worlds.

    The worlds share one symmetrization table.  Whatever indices the
    truncated run computes, at least one planted index is left over (the
    budget is below floor(s/u)); flipping the truth there changes the full
    gradient without changing anything the decoder can see.
    """
    n_dev = params.s // params.u
    if budget >= n_dev:
        raise ValueError(f"no witness guaranteed at budget {budget} >= floor(s/u)={n_dev}")
    rng = np.random.default_rng(seed)
    truth1 = random_gradients(params, rng)
    malicious1 = list(range(1, params.s + 1))
    table, disagreement = symmetrization_attack(params, truth1, malicious1, rng)

    _, _, transcript1 = run_scheme(
        params, truth1, TableAdversary(table, frozenset(malicious1)), oracle_budget=budget
    )
    computed = set(transcript1.computed_indices())
    flip = min(i for i in disagreement.indices if i not in computed)

    world2 = flip_world(params, truth1, table, flip)
    _, _, transcript2 = run_scheme(
        params, world2.truth, TableAdversary(table, world2.malicious), oracle_budget=budget
    )

    witness = Witness(
        flip_index=flip,
        decoder_input_1=decoder_input(table, transcript1),
        decoder_input_2=decoder_input(table, transcript2),
        full_gradient_1=full_gradient(truth1, params.q),
        full_gradient_2=full_gradient(world2.truth, params.q),
    )
    if not witness.indistinguishable or not witness.gradients_differ:
        raise AssertionError("witness construction failed; the two runs diverged")
    return witness
