import numpy as np
import pytest

from bgcsim.bounds import check_compliance
from bgcsim.core import full_gradient
from bgcsim.protocol import ProtocolRun


def _run_and_check(params, truth, adversary, adv_rng=None, **kwargs):
    """Execute one run and assert the full per-run contract.

    Checks exact recovery, honest safety, bound compliance (T, c, kappa,
    with kappa recomputed from the raw log), and that every oracle call
    wipes out at least u workers.
    """
    responder = adversary.instantiate(params, truth, adv_rng)
    run = ProtocolRun(params, truth, responder, **kwargs)
    ghat, metrics, transcript = run.execute()
    assert np.array_equal(ghat, full_gradient(truth, params.q)), "decode mismatch"
    assert transcript.eliminated_workers() <= set(responder.malicious), (
        "an honest worker was eliminated"
    )
    problems = check_compliance(params, metrics, transcript)
    assert not problems, problems
    for call in transcript.oracle_calls:
        wiped = sum(
            len(event.workers)
            for event in transcript.eliminations
            if (event.t, event.group, event.index, event.reason)
            == (call.t, call.group, call.index, "wrong_value")
        )
        assert wiped >= params.u, "an oracle call eliminated fewer than u workers"
    return ghat, metrics, transcript, responder


@pytest.fixture
def run_and_check():
    return _run_and_check
