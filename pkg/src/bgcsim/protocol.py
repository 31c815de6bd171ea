"""Execution engine with exact per-message accounting.

One run proceeds as: initial coded round (every worker sends its block sum,
d symbols at t=0), grouping of each fractional-repetition group into
consistent subsets by exact equality of the initial responses, an
elimination tournament per unresolved group, and final decoding by summing
the surviving group values.

A tournament iteration draws two subsets, runs a match between their
representatives (binary search down the sum-tree, one differing coordinate,
two symbols per round), collects one commit bit from every member of both
subsets, and settles the disputed leaf with a local computation when both
claims have at least u backers.  Rounds count match levels only; commit bits
are charged to the communication overhead but not to the round count.
Groups advance independently, so the round total is the maximum over groups.

For u = 1 the commit exchange is skipped: a single backer suffices and the
representative vouches for its own claim by having sent it, so every match
is settled directly by a local computation (the pairwise flow).  Skipping
also keeps the commit traffic inside its budget when malicious workers are
spread over several groups, each of which would otherwise restart the
shrinking vote count at full group size.

Accounting rules:
  - kappa sums worker-to-main symbols for rounds t >= 1 (labels are one
    symbol, commit bits convert at 1/log2(q) symbols); the initial t=0
    responses are excluded and reported separately via total_comm = n*d + kappa.
  - c counts distinct gradient indices fetched from the local oracle.  A
    leaf that was already settled is decided from the cached value without
    touching the oracle again.
  - a response of the wrong shape or outside the alphabet incriminates its
    sender, who is eliminated on the spot.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .adversary import CommitQuery, InitialQuery, LabelQuery
from .core import SchemeParams
from .matchtree import children, root_range


class Message(NamedTuple):
    t: int
    group: int
    worker: int
    direction: str  # worker-to-main traffic only; kept explicit for the export format
    kind: str  # "initial" | "label" | "commit"
    symbols: int
    bits: int


class OracleCall(NamedTuple):
    t: int
    group: int
    index: int  # global gradient index
    coord: int


class EliminationEvent(NamedTuple):
    t: int
    group: int
    workers: tuple
    reason: str
    index: int  # disputed gradient index, or 0 when not tied to one


class ProtocolError(RuntimeError):
    """Internal invariant violated; indicates a bug, not adversary behaviour."""


class _BudgetExhausted(Exception):
    pass


@dataclass
class Transcript:
    """Everything a run transmitted, computed and decided, in order."""

    params: SchemeParams
    messages: list = field(default_factory=list)
    oracle_calls: list = field(default_factory=list)
    oracle_values: list = field(default_factory=list)  # full vectors, aligned with oracle_calls
    eliminations: list = field(default_factory=list)
    group_rounds: dict = field(default_factory=dict)
    truncated: bool = False

    def computed_indices(self) -> list:
        return [call.index for call in self.oracle_calls]

    def kappa(self) -> float:
        """Protocol overhead in alphabet symbols, recomputed from the raw log."""
        symbols = sum(m.symbols for m in self.messages if m.t >= 1)
        bits = sum(m.bits for m in self.messages if m.t >= 1)
        kappa = float(symbols)
        if bits:
            kappa += bits / math.log2(self.params.q)
        return kappa

    def eliminated_workers(self) -> set:
        out = set()
        for event in self.eliminations:
            out.update(event.workers)
        return out

    def to_jsonl(self) -> str:
        lines = []
        for m in self.messages:
            lines.append(
                json.dumps(
                    {
                        "t": m.t,
                        "group": m.group,
                        "worker": m.worker,
                        "direction": m.direction,
                        "kind": m.kind,
                        "symbols": m.symbols,
                        "bits": m.bits,
                    },
                    separators=(",", ":"),
                )
            )
        for call in self.oracle_calls:
            lines.append(
                json.dumps(
                    {"t": call.t, "index": call.index, "coord": call.coord},
                    separators=(",", ":"),
                )
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Metrics:
    T: int
    c: int
    r: Fraction
    kappa: float
    total_comm: float


def metrics_from_transcript(params: SchemeParams, transcript: Transcript) -> Metrics:
    kappa = transcript.kappa()
    return Metrics(
        T=max(transcript.group_rounds.values(), default=0),
        c=len(transcript.oracle_calls),
        r=Fraction(params.s + params.u),
        kappa=kappa,
        total_comm=params.n * params.d + kappa,
    )


@dataclass
class ConsistentSubset:
    """Workers of one group that returned identical initial responses."""

    group: int
    workers: list  # sorted worker ids; shrinks as members are eliminated
    value: np.ndarray  # the shared initial response, shape (d,)

    @property
    def representative(self) -> int:
        return self.workers[0]


class ProtocolRun:
    """One protocol execution against a fixed truth and adversary responder."""

    def __init__(
        self,
        params: SchemeParams,
        truth: np.ndarray,
        responder,
        rng: np.random.Generator = None,
        oracle_budget: int = None,
        random_draws: bool = False,
    ):
        truth = np.asarray(truth, dtype=np.int64)
        if truth.shape != (params.p, params.d):
            raise ValueError(f"truth must have shape (p, d)={(params.p, params.d)}, got {truth.shape}")
        if len(responder.malicious) > params.s:
            raise ValueError(
                f"adversary controls {len(responder.malicious)} workers; budget is s={params.s}"
            )
        if random_draws and rng is None:
            raise ValueError("random draw order needs an RNG")
        self.params = params
        self.truth = truth
        self.responder = responder
        self.rng = rng
        self.oracle_budget = oracle_budget
        self.random_draws = random_draws
        self.transcript = Transcript(
            params=params, group_rounds={g: 0 for g in range(1, params.m + 1)}
        )
        self._gvalues = {}  # settled gradient index -> full truth vector
        self._resolved = {}  # group -> surviving value, shape (d,)
        self._honest_z0 = {}
        for g in range(1, params.m + 1):
            block = params.block_of_group(g)
            self._honest_z0[g] = truth[block.start - 1 : block.stop - 1].sum(axis=0) % params.q

    # -- plumbing ----------------------------------------------------------

    def _log(self, t, group, worker, kind, symbols=0, bits=0):
        self.transcript.messages.append(
            Message(t, group, worker, "to_main", kind, symbols, bits)
        )

    def _eliminate(self, t, group, workers, reason, index=0):
        if workers:
            self.transcript.eliminations.append(
                EliminationEvent(t, group, tuple(sorted(workers)), reason, index)
            )

    def _respond(self, worker, query):
        if worker in self.responder.malicious:
            return self.responder.respond(worker, query)
        return self._honest_answer(worker, query)

    def _honest_answer(self, worker, query):
        g = self.params.group_of_worker(worker)
        if isinstance(query, InitialQuery):
            return self._honest_z0[g]
        if isinstance(query, LabelQuery):
            base = self.params.block_of_group(g).start - 1
            sl = self.truth[base + query.lo - 1 : base + query.hi - 1, query.coord - 1]
            return int(sl.sum() % self.params.q)
        if isinstance(query, CommitQuery):
            return int(self.truth[query.index - 1, query.coord - 1]) == query.value
        raise TypeError(f"unknown query type: {type(query).__name__}")

    def _as_vector(self, resp):
        try:
            arr = np.asarray(resp)
        except Exception:
            return None
        if arr.shape != (self.params.d,) or not np.issubdtype(arr.dtype, np.integer):
            return None
        if not ((arr >= 0) & (arr < self.params.q)).all():
            return None
        return arr.astype(np.int64)

    def _as_symbol(self, resp):
        if isinstance(resp, bool) or not isinstance(resp, (int, np.integer)):
            return None
        value = int(resp)
        if not 0 <= value < self.params.q:
            return None
        return value

    # -- protocol stages ----------------------------------------------------

    def initial_round(self) -> dict:
        """t=0: every worker sends its claimed block sum (d symbols, not in kappa)."""
        z0 = {}
        for j in range(1, self.params.n + 1):
            g = self.params.group_of_worker(j)
            resp = self._respond(j, InitialQuery(group=g))
            self._log(0, g, j, "initial", symbols=self.params.d)
            vec = self._as_vector(resp)
            if vec is None:
                self._eliminate(0, g, (j,), "malformed_initial")
            else:
                z0[j] = vec
        return z0

    def build_subsets(self, z0: dict):
        """Group workers by identical responses; apply the size-u and size-s cuts.

        A subset larger than s can only be honest, so its group resolves
        immediately.  Subsets smaller than u cannot contain the honest
        workers and their members are marked malicious outright.
        """
        pending = {}
        for g in range(1, self.params.m + 1):
            buckets = {}
            for j in self.params.workers_of_group(g):
                if j not in z0:
                    continue
                buckets.setdefault(z0[j].tobytes(), []).append(j)
            subsets = sorted(buckets.values(), key=lambda ws: ws[0])
            big = [ws for ws in subsets if len(ws) > self.params.s]
            if big:
                if len(big) > 1:
                    raise ProtocolError("two supermajorities cannot coexist within budget")
                winner = big[0]
                self._resolved[g] = z0[winner[0]]
                losers = [j for ws in subsets for j in ws if ws is not winner]
                self._eliminate(0, g, losers, "outvoted_supermajority")
                continue
            keep = [ws for ws in subsets if len(ws) >= self.params.u]
            dropped = [j for ws in subsets for j in ws if len(ws) < self.params.u]
            self._eliminate(0, g, dropped, "undersized_subset")
            if not keep:
                raise ProtocolError(f"group {g} has no subset of size >= u")
            if len(keep) == 1:
                self._resolved[g] = z0[keep[0][0]]
            else:
                pending[g] = [
                    ConsistentSubset(group=g, workers=ws, value=z0[ws[0]]) for ws in keep
                ]
        return pending

    def match(self, group: int, sub1: ConsistentSubset, sub2: ConsistentSubset):
        """Binary search to a leaf where the two representatives' claims differ.

        Each round both representatives send the left child's label at the
        chosen coordinate.  Equal answers move the dispute to the inferred
        right child; unequal answers move it left.  Either way the claimed
        values for the current node differ, so a leaf with differing (sent
        or inferred) claims is always reached, whatever the answers are.

        Returns (global_index, coord, claim1, claim2), or None if a rep sent
        garbage and was eliminated mid-match.
        """
        rep1, rep2 = sub1.representative, sub2.representative
        differing = np.nonzero(sub1.value != sub2.value)[0]
        if differing.size == 0:
            raise ProtocolError("match requires representatives with differing responses")
        coord = int(differing[0]) + 1
        q = self.params.q
        claim1 = int(sub1.value[coord - 1])
        claim2 = int(sub2.value[coord - 1])
        node = root_range(self.params.block_size)
        while not node.is_leaf:
            left, right = children(node)
            self.transcript.group_rounds[group] += 1
            t = self.transcript.group_rounds[group]
            query = LabelQuery(group=group, lo=left.lo, hi=left.hi, coord=coord)
            raw1 = self._respond(rep1, query)
            self._log(t, group, rep1, "label", symbols=1)
            raw2 = self._respond(rep2, query)
            self._log(t, group, rep2, "label", symbols=1)
            a1, a2 = self._as_symbol(raw1), self._as_symbol(raw2)
            if a1 is None or a2 is None:
                for rep, answer, sub in ((rep1, a1, sub1), (rep2, a2, sub2)):
                    if answer is None:
                        self._eliminate(t, group, (rep,), "malformed_label")
                        sub.workers.remove(rep)
                return None
            if a1 == a2:
                claim1 = (claim1 - a1) % q
                claim2 = (claim2 - a2) % q
                node = right
            else:
                claim1, claim2 = a1, a2
                node = left
        index = self.params.block_of_group(group).start + node.leaf_index - 1
        return index, coord, claim1, claim2

    def commit_round(self, group: int, subset: ConsistentSubset, index: int, coord: int, value: int) -> set:
        """One bit per member endorsing the representative's leaf claim.

        The representative is always counted as committed: the claim is its
        own, sent during the match.  Its bit is still transmitted (and
        charged) like everyone else's.
        """
        t = self.transcript.group_rounds[group]
        committed = {subset.representative}
        query = CommitQuery(group=group, index=index, coord=coord, value=value)
        for j in subset.workers:
            bit = self._respond(j, query)
            self._log(t, group, j, "commit", bits=1)
            if bit:
                committed.add(j)
        return committed

    def local_compute(self, group: int, index: int, coord: int) -> int:
        """Fetch the true gradient at ``index`` from the oracle (one unit of c).

        The full vector is computed and cached; calling again for an index
        already in the computed list is a protocol bug.
        """
        if index in self._gvalues:
            raise ValueError(f"gradient {index} was already computed locally")
        if self.oracle_budget is not None and len(self.transcript.oracle_calls) >= self.oracle_budget:
            self.transcript.truncated = True
            raise _BudgetExhausted
        t = self.transcript.group_rounds[group]
        vec = self.truth[index - 1].copy()
        self._gvalues[index] = vec
        self.transcript.oracle_calls.append(OracleCall(t, group, index, coord))
        self.transcript.oracle_values.append(vec)
        return int(vec[coord - 1])

    def _settle(self, group: int, index: int, coord: int) -> int:
        if index in self._gvalues:
            return int(self._gvalues[index][coord - 1])
        return self.local_compute(group, index, coord)

    def elimination_tournament(self, group: int, subsets: list) -> ConsistentSubset:
        """Run matches until one consistent subset is left; return it.

        A commit set smaller than u incriminates exactly its members; when
        both claims have at least u backers the leaf is settled locally and
        every backer of a wrong value is removed.  Subsets falling below u
        members drop out.
        """
        u = self.params.u
        while len(subsets) > 1:
            subsets.sort(key=lambda sub: sub.workers[0])
            if self.random_draws:
                i1, i2 = sorted(self.rng.choice(len(subsets), size=2, replace=False))
                sub1, sub2 = subsets[int(i1)], subsets[int(i2)]
            else:
                sub1, sub2 = subsets[0], subsets[1]
            outcome = self.match(group, sub1, sub2)
            if outcome is not None:
                index, coord, claim1, claim2 = outcome
                if u == 1:  # a lone backer settles it; no vote needed
                    votes1 = {sub1.representative}
                    votes2 = {sub2.representative}
                else:
                    votes1 = self.commit_round(group, sub1, index, coord, claim1)
                    votes2 = self.commit_round(group, sub2, index, coord, claim2)
                t = self.transcript.group_rounds[group]
                small1, small2 = len(votes1) < u, len(votes2) < u
                if small1:
                    self._eliminate(t, group, votes1, "undersupported_commit", index)
                    sub1.workers = [j for j in sub1.workers if j not in votes1]
                if small2:
                    self._eliminate(t, group, votes2, "undersupported_commit", index)
                    sub2.workers = [j for j in sub2.workers if j not in votes2]
                if not small1 and not small2:
                    true_value = self._settle(group, index, coord)
                    if claim1 != true_value:
                        self._eliminate(t, group, votes1, "wrong_value", index)
                        sub1.workers = [j for j in sub1.workers if j not in votes1]
                    if claim2 != true_value:
                        self._eliminate(t, group, votes2, "wrong_value", index)
                        sub2.workers = [j for j in sub2.workers if j not in votes2]
            subsets = [sub for sub in subsets if len(sub.workers) >= u]
        if not subsets:
            raise ProtocolError(f"group {group} lost every consistent subset")
        return subsets[0]

    def decode(self) -> np.ndarray:
        """Sum of the surviving value of every group, modulo q."""
        if len(self._resolved) != self.params.m:
            missing = [g for g in range(1, self.params.m + 1) if g not in self._resolved]
            raise ProtocolError(f"groups left unresolved: {missing}")
        total = np.zeros(self.params.d, dtype=np.int64)
        for g in range(1, self.params.m + 1):
            total = (total + self._resolved[g]) % self.params.q
        return total

    def execute(self):
        z0 = self.initial_round()
        pending = self.build_subsets(z0)
        try:
            for g in sorted(pending):
                survivor = self.elimination_tournament(g, pending[g])
                self._resolved[g] = survivor.value
        except _BudgetExhausted:
            return None, metrics_from_transcript(self.params, self.transcript), self.transcript
        ghat = self.decode()
        return ghat, metrics_from_transcript(self.params, self.transcript), self.transcript


def run_scheme(
    params: SchemeParams,
    truth: np.ndarray,
    adversary,
    rng=None,
    *,
    oracle_budget: int = None,
    random_draws: bool = False,
):
    """Instantiate the adversary and execute one full run.

    Returns (g_hat, metrics, transcript); g_hat is None when an oracle
    budget truncated the run before decoding.
    """
    if rng is not None and not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    responder = adversary.instantiate(params, truth, rng)
    run = ProtocolRun(
        params,
        truth,
        responder,
        rng=rng,
        oracle_budget=oracle_budget,
        random_draws=random_draws,
    )
    return run.execute()
