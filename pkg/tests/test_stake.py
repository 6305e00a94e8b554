"""Validating power, delegation rules, validator sets and epoch sealing."""

import pytest
from hypothesis import given, strategies as st

from lachesis_sim import (Account, EpochState, ValidatorSet,
                          build_validator_set, seal_epoch,
                          validate_delegation, validating_power)
from lachesis_sim.stake import (BELOW_MINIMUM, CAP_EXCEEDED, FLOORED,
                                INSUFFICIENT_BALANCE, LINEAR,
                                LOCK_OUT_OF_RANGE, OK, EmptyValidatorSet,
                                EpochNotComplete)

U = 1_000_000


def acct(i, balance, **kw):
    return Account(id=i, balance=balance, **kw)


# -- Validating power --------------------------------------------------------

def test_linear_power_equals_tokens_held():
    assert validating_power(acct(0, 5), LINEAR, U) == 5


def test_floored_power_rounds_down_to_threshold_multiples():
    assert validating_power(acct(0, 2_500_000), FLOORED, U) == 2_000_000


def test_sub_threshold_holders_weigh_one_and_empty_weigh_zero():
    assert validating_power(acct(0, U - 1), FLOORED, U) == 1
    assert validating_power(acct(0, 0), FLOORED, U) == 0
    assert validating_power(acct(0, 0), LINEAR, U) == 0


def test_delegations_add_before_flooring():
    w = validating_power(acct(0, 600_000), FLOORED, U, delegated_in=500_000)
    assert w == 1_000_000


@given(st.integers(0, 10**8), st.integers(0, 10**8))
def test_power_is_monotone_in_balance(t1, t2):
    lo, hi = sorted((t1, t2))
    for model in (LINEAR, FLOORED):
        assert validating_power(acct(0, lo), model, U) <= \
            validating_power(acct(0, hi), model, U)


@given(st.integers(1, 50), st.integers(0, U - 1))
def test_floored_power_constant_between_multiples(m, offset):
    assert validating_power(acct(0, m * U + offset), FLOORED, U) == m * U


# -- Delegation rules --------------------------------------------------------

def test_minimal_delegation_accepted():
    d, v = acct(0, 100), acct(1, 10, self_stake=10)
    assert validate_delegation(d, v, 1, 1, 0) == OK


def test_cap_is_fifteen_times_validator_stake():
    d, v = acct(0, 1_000), acct(1, 10, self_stake=10)
    assert validate_delegation(d, v, 1, 30, 150) == CAP_EXCEEDED
    assert validate_delegation(d, v, 1, 30, 149) == OK


def test_lock_period_bounds():
    d, v = acct(0, 100), acct(1, 10, self_stake=10)
    assert validate_delegation(d, v, 1, 366, 0) == LOCK_OUT_OF_RANGE
    assert validate_delegation(d, v, 1, 0, 0) == LOCK_OUT_OF_RANGE
    assert validate_delegation(d, v, 1, 365, 0) == OK


def test_below_minimum_and_insufficient_balance():
    d, v = acct(0, 5, self_stake=5), acct(1, 10, self_stake=10)
    assert validate_delegation(d, v, 0, 10, 0) == BELOW_MINIMUM
    assert validate_delegation(d, v, 1, 10, 0) == INSUFFICIENT_BALANCE


def test_account_cannot_stake_more_than_balance():
    with pytest.raises(ValueError):
        Account(id=0, balance=10, self_stake=6, delegations={1: 5})


# -- Validator sets ----------------------------------------------------------

def test_four_unit_stakes():
    vs = build_validator_set([acct(i, 1) for i in range(4)])
    assert (vs.total, vs.quorum) == (4, 3)


def test_mixed_stakes():
    vs = build_validator_set([acct(0, 3), acct(1, 2), acct(2, 1)])
    assert (vs.total, vs.quorum) == (6, 5)
    assert vs.sorted_ids == (0, 1, 2)


def test_three_unit_stakes_need_unanimity():
    vs = build_validator_set([acct(i, 1) for i in range(3)])
    assert vs.quorum == 3


def test_empty_validator_set_raises():
    with pytest.raises(EmptyValidatorSet):
        build_validator_set([acct(0, 0)])


def test_sorted_ids_break_stake_ties_by_id():
    vs = ValidatorSet.from_powers({3: 2, 1: 2, 2: 5})
    assert vs.sorted_ids == (2, 1, 3)


def test_validators_only_excludes_users_under_floored_model():
    accounts = [acct(0, 2 * U), acct(1, 5)]
    vs = build_validator_set(accounts, FLOORED, U, validators_only=True)
    assert set(vs.powers) == {0}


def test_delegation_credits_the_delegatee():
    accounts = [acct(0, 100, delegations={1: 40}), acct(1, 10)]
    vs = build_validator_set(accounts, LINEAR, U)
    assert vs.powers == {0: 100, 1: 50}


@given(st.dictionaries(st.integers(0, 20), st.integers(1, 10**9),
                       min_size=1, max_size=12))
def test_quorum_strictly_exceeds_two_thirds(powers):
    vs = ValidatorSet.from_powers(powers)
    assert 3 * vs.quorum > 2 * vs.total
    assert 3 * (vs.quorum - 1) <= 2 * vs.total  # smallest such integer
    assert vs.quorum <= vs.total


# -- Epoch sealing -----------------------------------------------------------

def _epoch_state(frames=100):
    vs = ValidatorSet.from_powers({0: 1, 1: 1})
    return EpochState(validators=vs, frames_finalized=frames,
                      last_block_digest=b"\x42" * 32)


def test_seal_requires_enough_frames():
    st_ = _epoch_state(frames=99)
    with pytest.raises(EpochNotComplete):
        seal_epoch(st_, 100)


def test_seal_increments_epoch_and_is_reproducible():
    a, b = _epoch_state(), _epoch_state()
    ra, rb = seal_epoch(a, 100), seal_epoch(b, 100)
    assert ra == rb
    assert ra.number == 2
    assert a.frames_finalized == 0
    # different sealed state, different digest
    c = _epoch_state()
    c.last_block_digest = b"\x43" * 32
    assert seal_epoch(c, 100).prev_epoch_hash != ra.prev_epoch_hash


def test_seal_applies_queued_deposits_and_delayed_exits():
    st_ = _epoch_state()
    st_.exit_delay_epochs = 2
    st_.queue_deposit(7, 5)
    st_.queue_exit(1)
    seal_epoch(st_, 100)  # into epoch 2: deposit lands, exit still queued
    assert st_.validators.powers == {0: 1, 1: 1, 7: 5}
    st_.frames_finalized = 100
    seal_epoch(st_, 100)  # into epoch 3: exit effective
    assert st_.validators.powers == {0: 1, 7: 5}


def test_default_exit_delay_takes_one_seal():
    st_ = _epoch_state()
    st_.queue_exit(1)
    seal_epoch(st_, 100)
    assert st_.validators.powers == {0: 1}
