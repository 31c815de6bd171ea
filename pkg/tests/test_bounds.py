import math

import numpy as np
import pytest

from bgcsim.adversary import TableAdversary, symmetrization_attack
from bgcsim.bounds import (
    BoundsReport,
    comm_lower,
    disagreement_coverage_check,
    draco_baseline,
    indistinguishability_check,
    local_comp_lower,
    ratio_limit,
    scheme_upper_bounds,
)
from bgcsim.core import SchemeParams, random_gradients
from bgcsim.protocol import run_scheme

Q16 = 2**16


def _params(s, u, p=None, m=1, q=Q16, d=1):
    if p is None:
        p = m * max(2, s // u + 1)
    return SchemeParams(s=s, u=u, m=m, p=p, d=d, q=q)


def test_local_comp_lower_tick_sequence():
    values = [local_comp_lower(_params(10, u, p=16)) for u in range(1, 12)]
    assert values == [10, 5, 3, 2, 2, 1, 1, 1, 1, 1, 0]


def test_local_comp_lower_edge_cases():
    assert local_comp_lower(_params(0, 1, p=4)) == 0
    assert local_comp_lower(_params(7, 3, p=4)) == 2


def test_comm_lower_exact_small_case():
    # exact binomial: C(8, 2) = 28
    params = _params(2, 1, p=8)
    expected = math.log2(math.comb(8, 2)) / math.log2(Q16)
    assert comm_lower(params) == expected
    assert abs(comm_lower(params) - 0.30045968262860026) < 1e-15


def test_comm_lower_vacuous_when_no_dispute():
    assert comm_lower(_params(1, 2, p=4)) == 0.0
    assert comm_lower(_params(0, 1, p=4)) == 0.0


def test_comm_lower_big_integer_binomial():
    params = _params(10, 1, p=10**4)
    exact = math.comb(10**4, 10)
    assert exact.bit_length() > 100  # far beyond any fixed-width integer
    assert comm_lower(params) == math.log2(exact) / 16


def test_comm_lower_rejects_undersized_block():
    with pytest.raises(ValueError, match="invalid configuration"):
        comm_lower(SchemeParams(s=5, u=1, m=1, p=4, d=1, q=Q16))


def test_scheme_upper_bounds_pinned_case():
    # independent evaluation: s=2, u=1, p=8 -> (2, 2*3, 2*(2*3 + 5/32))
    c_up, t_up, kappa_up = scheme_upper_bounds(_params(2, 1, p=8))
    assert (c_up, t_up) == (2, 6)
    assert kappa_up == 2 * (2 * math.ceil(math.log2(8)) + (2 + 3) / (2 * 16))
    assert abs(kappa_up - 12.3125) < 1e-12


def test_scheme_upper_bounds_degenerate_and_large():
    assert scheme_upper_bounds(_params(3, 4, p=4)) == (0, 0, 0.0)
    c_up, t_up, kappa_up = scheme_upper_bounds(_params(10, 1, p=10**4))
    assert (c_up, t_up) == (10, 140)  # ceil(log2(1e4)) = 14
    assert abs(kappa_up - 284.0625) < 1e-12  # 10 * (28 + 13/32)


def test_ratio_limit_values():
    # s=u collapses the numerator and denominator: limit is 2 log2(q)
    assert ratio_limit(_params(3, 3)) == 2 * math.log2(Q16)
    assert ratio_limit(_params(3, 3, q=2)) == 2.0
    # 2 * 16 * (9-2+1) / floor(9/2) = 2*16*8/4
    assert ratio_limit(_params(9, 2, p=8)) == 64.0
    # 2 * 16 * 10 / 10
    assert ratio_limit(_params(10, 1, p=16)) == 32.0


def test_ratio_limit_undefined_without_dispute():
    with pytest.raises(ValueError):
        ratio_limit(_params(1, 2))


def test_draco_baseline():
    metrics = draco_baseline(SchemeParams(s=10, u=11, m=1, p=16, d=10**6, q=Q16))
    assert metrics.total_comm == 21 * 10**6
    assert metrics.T == metrics.c == 0 and metrics.kappa == 0.0
    assert draco_baseline(_params(0, 1)).r == 1
    # at u=1 the scheme needs s+1 workers against the baseline's 2s+1
    s = 10
    assert (s + 1) / (2 * s + 1) == pytest.approx(11 / 21)


def test_bounds_report_upper_dominates_lower():
    checked = 0
    for s in range(1, 13):
        for u in range(1, s + 2):
            for block in (2, 8, 64, 2**10, 2**20):
                if block < max(2, s // u):
                    continue
                params = SchemeParams(s=s, u=u, m=1, p=block, d=1, q=Q16)
                report = BoundsReport.from_params(params)
                assert report.kappa_upper >= report.kappa_lower
                assert report.c_upper == report.c_lower
                checked += 1
    assert checked > 200


def test_bounds_report_serializes():
    report = BoundsReport.from_params(_params(2, 1, p=8))
    assert '"c_lower":2' in report.to_json()


def test_coverage_per_index_attack():
    params = SchemeParams(s=3, u=1, m=1, p=8, d=1, q=Q16)
    for seed in range(25):
        truth = random_gradients(params, np.random.default_rng([seed, 0]))
        rng = np.random.default_rng([seed, 1])
        table, disagreement = symmetrization_attack(params, truth, [1, 2, 3], rng)
        _, metrics, transcript = run_scheme(
            params, truth, TableAdversary(table, frozenset({1, 2, 3}))
        )
        assert metrics.c == 3
        assert set(transcript.computed_indices()) == set(disagreement.indices)
        assert disagreement_coverage_check(transcript, disagreement, table)


def test_coverage_trivial_when_honest():
    params = SchemeParams(s=0, u=2, m=1, p=4, d=1, q=Q16)
    truth = random_gradients(params, 0)
    table, disagreement = symmetrization_attack(params, truth, [], np.random.default_rng(0))
    _, _, transcript = run_scheme(params, truth, TableAdversary(table, frozenset()))
    assert disagreement_coverage_check(transcript, disagreement, table)


def test_coverage_collusive_single_call():
    params = SchemeParams(s=4, u=2, m=1, p=8, d=1, q=Q16)
    for seed in range(25):
        truth = random_gradients(params, np.random.default_rng([seed, 0]))
        rng = np.random.default_rng([seed, 1])
        table, disagreement = symmetrization_attack(
            params, truth, [1, 2, 3, 4], rng, mode="collusive"
        )
        _, metrics, transcript = run_scheme(
            params, truth, TableAdversary(table, frozenset({1, 2, 3, 4}))
        )
        assert metrics.c <= 1
        assert set(transcript.computed_indices()) <= set(disagreement.indices)
        assert disagreement_coverage_check(transcript, disagreement, table)


def test_witness_smallest_instance():
    params = SchemeParams(s=1, u=1, m=1, p=2, d=1, q=Q16)
    witness = indistinguishability_check(params, budget=0, seed=3)
    assert witness.indistinguishable
    assert witness.gradients_differ


def test_witness_leaves_an_uncomputed_index():
    params = SchemeParams(s=3, u=1, m=1, p=8, d=1, q=Q16)
    witness = indistinguishability_check(params, budget=2, seed=5)
    assert witness.indistinguishable and witness.gradients_differ


def test_witness_rejects_sufficient_budget():
    params = SchemeParams(s=2, u=1, m=1, p=4, d=1, q=Q16)
    with pytest.raises(ValueError, match="no witness"):
        indistinguishability_check(params, budget=2, seed=0)
