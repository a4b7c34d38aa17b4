"""Credit ledger: apply arithmetic, flooring, supply accounting, hash chain."""

import math
from dataclasses import replace
from random import Random

import pytest

from catcon import (
    CreditLedger,
    LedgerError,
    StageOutcome,
    ledger_apply,
    ledger_verify_chain,
)
from catcon.core import (
    GENESIS_HASH,
    canonical_float,
    canonical_outcomes_json,
    stage_hash,
)


def outcome(delta_action=0.0, delta_rating=0.0, coeff_action=0.0,
            coeff_rating=0.0):
    return StageOutcome(
        delta_action=delta_action,
        delta_rating=delta_rating,
        delta_total=delta_action + delta_rating,
        coeff_action=coeff_action,
        coeff_rating=coeff_rating,
    )


def random_ledger(n_agents=5, n_stages=100, seed=7):
    rng = Random(seed)
    ledger = CreditLedger({i: 10.0 * (i + 1) for i in range(n_agents)})
    for stage in range(n_stages):
        outcomes = {
            i: outcome(rng.uniform(-1, 1), rng.uniform(-1, 1))
            for i in range(n_agents) if rng.random() < 0.8
        }
        ledger.apply(stage, outcomes)
    return ledger


class TestApply:
    def test_zero_sum_pair(self):
        ledger = CreditLedger({0: 10.0, 1: 10.0})
        ledger_apply(ledger, {0: outcome(0.25), 1: outcome(-0.25)})
        assert ledger.balances == {0: 10.25, 1: 9.75}
        assert ledger.total_supply == 20.0

    def test_empty_stage_appends_record(self):
        ledger = CreditLedger({0: 5.0})
        record = ledger_apply(ledger, {})
        assert ledger.balances == {0: 5.0}
        assert len(ledger.stage_log) == 1
        assert record.prev_hash == GENESIS_HASH

    def test_floor_at_zero_logged(self):
        # hand-applied floor rule: 0.1 - 0.5 -> clipped to 0, deficit 0.4
        ledger = CreditLedger({0: 0.1})
        ledger_apply(ledger, {0: outcome(-0.5)})
        assert ledger.balances[0] == 0.0
        assert ledger.total_supply == 0.0
        assert len(ledger.floor_events) == 1
        event = ledger.floor_events[0]
        assert event.agent == 0 and event.stage == 0
        assert event.deficit == pytest.approx(0.4)

    def test_stage_index_mismatch_rejected(self):
        ledger = CreditLedger({0: 1.0})
        with pytest.raises(LedgerError, match="expected 0, got 3"):
            ledger.apply(3, {})
        ledger.apply(0, {})
        with pytest.raises(LedgerError, match="expected 1, got 0"):
            ledger.apply(0, {})

    def test_unknown_agent_rejected(self):
        ledger = CreditLedger({0: 1.0})
        with pytest.raises(LedgerError, match="unknown agent 9"):
            ledger_apply(ledger, {9: outcome(0.1)})

    def test_fees_burned_and_recorded(self):
        ledger = CreditLedger({0: 100.0, 1: 50.0})
        record = ledger_apply(ledger, {0: outcome(0.5)}, fees={0: 2.0, 1: 1.0})
        assert ledger.balances == {0: 98.5, 1: 49.0}
        assert ledger.total_supply == 147.5
        assert record.fees == {0: 2.0, 1: 1.0}

    def test_supply_is_exact_sum(self):
        ledger = random_ledger()
        assert ledger.total_supply == math.fsum(ledger.balances.values())
        assert all(b >= 0.0 for b in ledger.balances.values())

    def test_negative_initial_balance_rejected(self):
        with pytest.raises(ValueError):
            CreditLedger({0: -1.0})


class TestChain:
    def test_fresh_ledger_verifies(self):
        check = ledger_verify_chain(random_ledger(n_stages=100))
        assert check.valid and check.first_bad_stage is None

    def test_empty_ledger_verifies(self):
        assert ledger_verify_chain(CreditLedger({0: 1.0})).valid

    def test_one_ulp_perturbation_detected(self):
        ledger = random_ledger(n_stages=20)
        record = ledger.stage_log[7]
        agent = next(iter(record.outcomes))
        old = record.outcomes[agent]
        record.outcomes[agent] = replace(
            old, delta_action=math.nextafter(old.delta_action, math.inf))
        check = ledger_verify_chain(ledger)
        assert not check.valid
        assert check.first_bad_stage == 7

    def test_broken_linkage_detected(self):
        ledger = random_ledger(n_stages=10)
        bad = replace(ledger.stage_log[4], prev_hash=bytes(32))
        ledger.stage_log[4] = bad
        check = ledger_verify_chain(ledger)
        assert not check.valid
        assert check.first_bad_stage == 4

    def test_chain_links_previous_hash(self):
        ledger = random_ledger(n_stages=3)
        log = ledger.stage_log
        assert log[0].prev_hash == GENESIS_HASH
        assert log[1].prev_hash == log[0].hash
        assert log[2].prev_hash == log[1].hash


class TestCanonicalSerialization:
    """Byte-exact golden values for the documented hashing format."""

    GOLDEN_JSON = (
        b'{"1":{"coeff_action":0.012500000000000001,"coeff_rating":0,'
        b'"delta_action":0.25,"delta_rating":0,"delta_total":0.25},'
        b'"10":{"coeff_action":0,"coeff_rating":0.066666666666666666,'
        b'"delta_action":0,"delta_rating":-1,"delta_total":-1}}'
    )
    GOLDEN_DIGEST = "378d0d449404443052a4d9e8ed8ed02a99aa4c632c12492ed58063caaadce5e4"

    def outcomes(self):
        return {
            1: StageOutcome(delta_action=0.25, delta_rating=0.0,
                            delta_total=0.25, coeff_action=1 / 80,
                            coeff_rating=0.0),
            10: StageOutcome(delta_action=0.0, delta_rating=-1.0,
                             delta_total=-1.0, coeff_action=0.0,
                             coeff_rating=1 / 15),
        }

    def test_canonical_json_bytes(self):
        assert canonical_outcomes_json(self.outcomes()) == self.GOLDEN_JSON

    def test_stage_hash_digest(self):
        digest = stage_hash(GENESIS_HASH, self.outcomes())
        assert digest.hex() == self.GOLDEN_DIGEST

    def test_negative_zero_normalized(self):
        assert canonical_float(-0.0) == "0"
        assert canonical_float(0.0) == "0"

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            canonical_float(float("nan"))
        with pytest.raises(ValueError):
            canonical_float(float("inf"))

    def test_17_digit_roundtrip(self):
        values = [1 / 3, 0.1, 123456.789, 1e-300, 2 ** 52 + 1.0]
        for v in values:
            assert float(canonical_float(v)) == v
