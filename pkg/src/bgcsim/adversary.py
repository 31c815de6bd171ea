"""Adversary strategies.

Two families are modelled.  Consistent adversaries fix a claimed-gradient
table up front and answer every query by evaluating it, so their responses
never contradict each other across rounds; the symmetrization attack is the
canonical instance, engineered so that different ground truths produce
identical tables.  Message-level adversaries answer each query however they
like, including inconsistently ("flip-flop").

A strategy object is an immutable value; ``instantiate`` binds it to one
run's parameters, truth and RNG substream and returns a responder holding
any per-run state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .core import SchemeParams, full_gradient


class InitialQuery(NamedTuple):
    group: int


class LabelQuery(NamedTuple):
    group: int
    lo: int  # local to the group block, 1-based, half-open
    hi: int
    coord: int


class CommitQuery(NamedTuple):
    group: int
    index: int  # global gradient index
    coord: int
    value: int  # the representative's claimed residue at (index, coord)


@dataclass(frozen=True)
class DisagreementSet:
    """Gradient indices the attack plants competing values on (global, sorted)."""

    group: int
    indices: tuple


@dataclass
class ClaimedGradientTable:
    """Per-worker claimed values for every gradient the worker is assigned.

    ``claims[j-1]`` is worker j's (block_size, d) view of its own group's
    block; values outside a worker's block are simply not representable,
    matching the assignment structure.
    """

    params: SchemeParams
    claims: np.ndarray  # (n, block_size, d) int64

    def _local(self, worker: int, index: int) -> int:
        g = self.params.group_of_worker(worker)
        block = self.params.block_of_group(g)
        if index not in block:
            raise ValueError(f"gradient {index} is not assigned to worker {worker}")
        return index - block.start

    def value(self, worker: int, index: int) -> np.ndarray:
        return self.claims[worker - 1, self._local(worker, index)]

    def z0(self, worker: int) -> np.ndarray:
        return self.claims[worker - 1].sum(axis=0) % self.params.q

    def label(self, worker: int, lo: int, hi: int, coord: int) -> int:
        block = self.claims[worker - 1]
        return int(block[lo - 1 : hi - 1, coord - 1].sum() % self.params.q)

    def identical_to(self, other: "ClaimedGradientTable") -> bool:
        return self.claims.tobytes() == other.claims.tobytes()

    def copy(self) -> "ClaimedGradientTable":
        return ClaimedGradientTable(self.params, self.claims.copy())


def honest_table(params: SchemeParams, truth: np.ndarray) -> ClaimedGradientTable:
    """Table in which every worker claims the true values of its block."""
    truth = np.asarray(truth, dtype=np.int64)
    claims = np.empty((params.n, params.block_size, params.d), dtype=np.int64)
    for j in range(1, params.n + 1):
        block = params.block_of_group(params.group_of_worker(j))
        claims[j - 1] = truth[block.start - 1 : block.stop - 1]
    return ClaimedGradientTable(params, claims)


def _deviated(vec: np.ndarray, q: int, rng: np.random.Generator, all_coords: bool) -> np.ndarray:
    """Copy of ``vec`` altered to a uniform value != the original.

    Default behaviour alters one uniformly chosen coordinate; the protocol
    compares single coordinates, so one is enough to plant a dispute.
    """
    out = vec.copy()
    if all_coords:
        for k in range(out.shape[0]):
            out[k] = (out[k] + 1 + rng.integers(q - 1)) % q
    else:
        k = int(rng.integers(out.shape[0]))
        out[k] = (out[k] + 1 + rng.integers(q - 1)) % q
    return out


def symmetrization_attack(
    params: SchemeParams,
    truth: np.ndarray,
    malicious,
    rng: np.random.Generator,
    mode: str = "per-index",
    leftover_mimic: bool = False,
    deviate_all_coords: bool = False,
):
    """Consistent claimed-gradient table for the symmetrization attack.

    Draws floor(s/u) disputed indices uniformly from the attacked group's
    block.  In per-index mode, disjoint malicious subsets of size u each
    plant one shared wrong value on their own index; the s mod u leftover
    workers claim the truth (or mimic a uniformly chosen subset when
    ``leftover_mimic`` is set).  In collusive mode every malicious worker
    plants the same wrong value on a single index drawn from the set.
    ``mode="coinflip"`` picks collusive with probability 1/2.

    Returns (table, disagreement_set).
    """
    malicious = sorted(int(j) for j in malicious)
    if len(set(malicious)) != len(malicious):
        raise ValueError("malicious worker ids must be distinct")
    if len(malicious) != params.s:
        raise ValueError(
            f"symmetrization controls exactly s workers: got {len(malicious)}, s={params.s}"
        )
    if malicious:
        groups = {params.group_of_worker(j) for j in malicious}
        if len(groups) > 1:
            raise ValueError("malicious set spans multiple groups")
        if groups != {1}:
            raise ValueError("symmetrization attacks the first group only")

    if mode == "coinflip":
        mode = "collusive" if int(rng.integers(2)) == 1 else "per-index"
    if mode not in ("per-index", "collusive"):
        raise ValueError(f"unknown attack mode: {mode!r}")

    truth = np.asarray(truth, dtype=np.int64)
    table = honest_table(params, truth)
    n_dev = params.s // params.u
    if n_dev == 0:
        return table, DisagreementSet(group=1, indices=())
    block = params.block_size
    if n_dev > block:
        raise ValueError(
            f"disagreement set of size {n_dev} does not fit in a block of {block}"
        )

    picks = rng.choice(block, size=n_dev, replace=False)
    indices = tuple(sorted(int(x) + 1 for x in picks))  # group 1: local == global

    if mode == "per-index":
        for chunk, index in enumerate(indices):
            wrong = _deviated(truth[index - 1], params.q, rng, deviate_all_coords)
            for j in malicious[chunk * params.u : (chunk + 1) * params.u]:
                table.claims[j - 1, index - 1] = wrong
        leftovers = malicious[n_dev * params.u :]
        if leftovers and leftover_mimic:
            pick = int(rng.integers(n_dev + 1))
            if pick < n_dev:  # mimic subset `pick`; the last option is mimicking honesty
                model = malicious[pick * params.u]
                for j in leftovers:
                    table.claims[j - 1] = table.claims[model - 1]
    else:
        index = int(rng.choice(np.asarray(indices)))
        wrong = _deviated(truth[index - 1], params.q, rng, deviate_all_coords)
        for j in malicious:
            table.claims[j - 1, index - 1] = wrong

    return table, DisagreementSet(group=1, indices=indices)


@dataclass(frozen=True)
class World:
    """One complete ground truth plus the claimed table the main node observes."""

    truth: np.ndarray
    table: ClaimedGradientTable
    malicious: frozenset

    def full_gradient(self) -> np.ndarray:
        return full_gradient(self.truth, self.table.params.q)


def flip_world(params: SchemeParams, truth: np.ndarray, table: ClaimedGradientTable, index: int) -> World:
    """Alternative world where the truth at ``index`` is the planted wrong value.

    The workers claiming the wrong value at ``index`` become the honest ones;
    everyone else in the attacked group becomes malicious.  The claimed table
    is unchanged, which is the whole point.
    """
    truth = np.asarray(truth, dtype=np.int64)
    g = 1
    deviators = [
        j
        for j in params.workers_of_group(g)
        if not np.array_equal(table.value(j, index), truth[index - 1])
    ]
    if not deviators:
        raise ValueError(f"no competing value planted at index {index}")
    flipped = truth.copy()
    flipped[index - 1] = table.value(deviators[0], index)
    malicious = frozenset(
        j
        for j in params.workers_of_group(g)
        if not np.array_equal(
            table.claims[j - 1],
            flipped[params.block_of_group(g).start - 1 : params.block_of_group(g).stop - 1],
        )
    )
    return World(truth=flipped, table=table, malicious=malicious)


def two_case_worlds(params: SchemeParams, rng, flip_index: int = None):
    """Two worlds with byte-identical claimed tables but different full gradients.

    World 1 takes the synthesized truth at face value; all planted values are
    lies by the first s workers.  World 2 flips the truth at one disputed
    index to the planted value, which swaps the honest/malicious roles there.
    Requires s >= u so that at least one index is disputed.
    """
    if params.s < params.u:
        raise ValueError(f"requires floor(s/u) >= 1: s={params.s}, u={params.u}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    from .core import random_gradients

    truth = random_gradients(params, rng)
    malicious = list(range(1, params.s + 1))
    table, disagreement = symmetrization_attack(params, truth, malicious, rng)
    if flip_index is None:
        flip_index = int(rng.choice(np.asarray(disagreement.indices)))
    elif flip_index not in disagreement.indices:
        raise ValueError(f"index {flip_index} is not in the disagreement set")
    world1 = World(truth=truth, table=table, malicious=frozenset(malicious))
    world2 = flip_world(params, truth, table, flip_index)
    if len(world2.malicious) > params.s:
        raise AssertionError("flipped world exceeds the malicious budget")
    return world1, world2


# ---------------------------------------------------------------------------
# responders (per-run adversary state)


class _NullResponder:
    malicious = frozenset()

    def respond(self, worker, query):
        raise ValueError(f"worker {worker} is not controlled by this adversary")


class TableResponder:
    """Answers every query by evaluating a fixed claimed-gradient table."""

    def __init__(self, malicious, table: ClaimedGradientTable, disagreement=None):
        self.malicious = frozenset(malicious)
        self.table = table
        self.disagreement = disagreement

    def respond(self, worker, query):
        if worker not in self.malicious:
            raise ValueError(f"worker {worker} is not controlled by this adversary")
        if isinstance(query, InitialQuery):
            return self.table.z0(worker)
        if isinstance(query, LabelQuery):
            return self.table.label(worker, query.lo, query.hi, query.coord)
        if isinstance(query, CommitQuery):
            value = self.table.value(worker, query.index)[query.coord - 1]
            return int(value) == query.value
        raise TypeError(f"unknown query type: {type(query).__name__}")


class FlipFlopResponder:
    """Answers every query with fresh uniform noise; nothing is consistent.

    One RNG substream per group keeps responses independent of the order in
    which group tournaments are executed.
    """

    def __init__(self, malicious, params: SchemeParams, rng: np.random.Generator):
        self.malicious = frozenset(malicious)
        self.params = params
        self._group_rng = dict(zip(range(1, params.m + 1), rng.spawn(params.m)))

    def respond(self, worker, query):
        if worker not in self.malicious:
            raise ValueError(f"worker {worker} is not controlled by this adversary")
        rng = self._group_rng[query.group]
        if isinstance(query, InitialQuery):
            return rng.integers(0, self.params.q, size=self.params.d, dtype=np.int64)
        if isinstance(query, LabelQuery):
            return int(rng.integers(self.params.q))
        if isinstance(query, CommitQuery):
            return bool(rng.integers(2))
        raise TypeError(f"unknown query type: {type(query).__name__}")


class CallbackResponder:
    """Arbitrary message-level behaviour supplied as a callback (tests use this)."""

    def __init__(self, malicious, fn: Callable, rng: np.random.Generator = None):
        self.malicious = frozenset(malicious)
        self._fn = fn
        self._rng = rng

    def respond(self, worker, query):
        if worker not in self.malicious:
            raise ValueError(f"worker {worker} is not controlled by this adversary")
        return self._fn(worker, query, self._rng)


# ---------------------------------------------------------------------------
# strategies (immutable, reusable across runs)


@dataclass(frozen=True)
class NoAdversary:
    def instantiate(self, params, truth, rng):
        return _NullResponder()


@dataclass(frozen=True)
class TableAdversary:
    """Fixed claimed table plus the set of workers bound to it."""

    table: ClaimedGradientTable
    malicious: frozenset

    def instantiate(self, params, truth, rng):
        if self.table.params != params:
            raise ValueError("table was built for different parameters")
        truth = np.asarray(truth, dtype=np.int64)
        for j in range(1, params.n + 1):
            if j in self.malicious:
                continue
            block = params.block_of_group(params.group_of_worker(j))
            if not np.array_equal(self.table.claims[j - 1], truth[block.start - 1 : block.stop - 1]):
                raise ValueError(f"honest worker {j} has claims differing from the truth")
        return TableResponder(self.malicious, self.table)


@dataclass(frozen=True)
class SymmetrizationAdversary:
    """Draws a fresh symmetrization table per run; controls workers 1..s."""

    mode: str = "per-index"
    leftover_mimic: bool = False
    deviate_all_coords: bool = False

    def instantiate(self, params, truth, rng):
        malicious = frozenset(range(1, params.s + 1))
        table, disagreement = symmetrization_attack(
            params,
            truth,
            sorted(malicious),
            rng,
            mode=self.mode,
            leftover_mimic=self.leftover_mimic,
            deviate_all_coords=self.deviate_all_coords,
        )
        return TableResponder(malicious, table, disagreement=disagreement)


@dataclass(frozen=True)
class FlipFlopAdversary:
    """Uniformly random responder on a seeded set of workers (s by default)."""

    count: int = None  # type: ignore[assignment]

    def instantiate(self, params, truth, rng):
        count = params.s if self.count is None else self.count
        if count > params.s:
            raise ValueError(f"cannot control {count} workers with budget s={params.s}")
        picks = rng.choice(params.n, size=count, replace=False)
        malicious = frozenset(int(j) + 1 for j in picks)
        return FlipFlopResponder(malicious, params, rng)


@dataclass(frozen=True)
class CallbackAdversary:
    """Message-level strategy with caller-supplied behaviour."""

    malicious: frozenset
    fn: Callable

    def instantiate(self, params, truth, rng):
        return CallbackResponder(self.malicious, self.fn, rng)


def answer_query(responder, worker, query):
    """Route one query to a malicious worker's responder (errors for honest ids)."""
    return responder.respond(worker, query)
