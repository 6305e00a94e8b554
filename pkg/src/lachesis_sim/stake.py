"""Accounts, validating power and per-epoch validator sets.

Power is derived from token balances. Two models are supported: the
linear one (power equals tokens held plus tokens delegated in) and the
floored one, where validators above the threshold get their balance
rounded down to a whole multiple of the threshold and smaller holders
act as weight-1 users. Validator sets are immutable within an epoch;
deposits and exits queue up and apply when the epoch seals.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

LINEAR = "linear"
FLOORED = "floored"

# Token threshold separating users from validators (community-configurable).
DEFAULT_VALIDATOR_THRESHOLD = 1_000_000

# Delegation rule constants.
MIN_DELEGATION_TOKENS = 1
MIN_LOCK_DAYS = 1
MAX_LOCK_DAYS = 365
DELEGATION_CAP_FACTOR = 15

OK = "ok"
BELOW_MINIMUM = "BelowMinimum"
LOCK_OUT_OF_RANGE = "LockOutOfRange"
CAP_EXCEEDED = "CapExceeded"
INSUFFICIENT_BALANCE = "InsufficientBalance"


class EmptyValidatorSet(ValueError):
    """No account carries positive validating power."""


class EpochNotComplete(RuntimeError):
    """Seal requested before the epoch finalized enough frames."""


@dataclass
class Account:
    """Token holder: balance, own validation stake and outgoing delegations."""

    id: int
    balance: int
    self_stake: int = 0
    delegations: dict[int, int] = field(default_factory=dict)
    tx_staked: int = 0  # carried for completeness; consensus never reads it

    def __post_init__(self):
        if self.balance < 0:
            raise ValueError("negative balance")
        if self.self_stake + sum(self.delegations.values()) > self.balance:
            raise ValueError("staked plus delegated tokens exceed balance")

    @property
    def unallocated(self) -> int:
        return self.balance - self.self_stake - sum(self.delegations.values())


def validating_power(account: Account, model: str = LINEAR,
                     threshold: int = DEFAULT_VALIDATOR_THRESHOLD,
                     delegated_in: int = 0) -> int:
    """Weight an account contributes to quorums.

    Linear: tokens held plus tokens delegated to it. Floored: the combined
    amount rounded down to a multiple of ``threshold`` for validators,
    1 for sub-threshold users, 0 for empty accounts. Delegations are added
    before flooring.
    """
    if threshold < 1:
        raise ValueError("threshold must be at least 1")
    t = account.balance + delegated_in
    if model == LINEAR:
        return t
    if model == FLOORED:
        if t >= threshold:
            return threshold * (t // threshold)
        return 1 if t >= 1 else 0
    raise ValueError(f"unknown power model: {model}")


def validate_delegation(delegator: Account, validator: Account, amount: int,
                        lock_days: int, existing_total_delegated: int) -> str:
    """Check one prospective delegation against the staking rules.

    Returns ``"ok"`` or the name of the first violated rule: minimum one
    token, lock between 1 day and 1 year, delegator must actually hold the
    tokens, and a validator may carry at most 15 times its own stake in
    delegations.
    """
    if amount < MIN_DELEGATION_TOKENS:
        return BELOW_MINIMUM
    if not MIN_LOCK_DAYS <= lock_days <= MAX_LOCK_DAYS:
        return LOCK_OUT_OF_RANGE
    if amount > delegator.unallocated:
        return INSUFFICIENT_BALANCE
    if existing_total_delegated + amount > DELEGATION_CAP_FACTOR * validator.self_stake:
        return CAP_EXCEEDED
    return OK


@dataclass(frozen=True)
class ValidatorSet:
    """Immutable per-epoch stake map with total weight and quorum."""

    powers: dict[int, int]
    total: int
    quorum: int
    sorted_ids: tuple[int, ...]  # stake descending, id ascending

    @classmethod
    def from_powers(cls, powers: dict[int, int]) -> "ValidatorSet":
        powers = {v: int(w) for v, w in powers.items() if w > 0}
        if not powers:
            raise EmptyValidatorSet("no positive validating power")
        total = sum(powers.values())
        quorum = (2 * total) // 3 + 1
        order = tuple(sorted(powers, key=lambda v: (-powers[v], v)))
        return cls(powers, total, quorum, order)

    def power(self, validator: int) -> int:
        return self.powers.get(validator, 0)

    def encode(self) -> bytes:
        out = [struct.pack(">I", len(self.powers))]
        for v in sorted(self.powers):
            out.append(struct.pack(">QQ", v, self.powers[v]))
        return b"".join(out)


def build_validator_set(accounts, model: str = LINEAR,
                        threshold: int = DEFAULT_VALIDATOR_THRESHOLD,
                        validators_only: bool = False) -> ValidatorSet:
    """Derive the epoch's validator set from account balances.

    Incoming delegations are credited to the delegatee. Under the floored
    model ``validators_only`` drops sub-threshold users from the set.
    """
    delegated_in: dict[int, int] = {}
    for a in accounts:
        for target, amount in a.delegations.items():
            delegated_in[target] = delegated_in.get(target, 0) + amount
    powers = {}
    for a in accounts:
        extra = delegated_in.get(a.id, 0)
        if validators_only and model == FLOORED and a.balance + extra < threshold:
            continue
        w = validating_power(a, model, threshold, extra)
        if w > 0:
            powers[a.id] = w
    return ValidatorSet.from_powers(powers)


# ----------------------------------------------------------------------
# Epochs
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class EpochRecord:
    """Seal receipt: the new epoch number and the digest chaining it."""

    number: int
    prev_epoch_hash: bytes


@dataclass
class EpochState:
    """Mutable epoch bookkeeping for one node.

    Stake deposits and exits requested mid-epoch queue here and apply at
    the seal; exits take effect ``exit_delay_epochs`` seals after they were
    requested (the scaled-down stand-in for the real withdrawal delay).
    """

    validators: ValidatorSet
    epoch: int = 1
    frames_finalized: int = 0
    last_block_digest: bytes = b"\x00" * 32
    pending_deposits: list[tuple[int, int]] = field(default_factory=list)
    pending_exits: list[tuple[int, int]] = field(default_factory=list)
    exit_delay_epochs: int = 1

    def queue_deposit(self, validator: int, amount: int) -> None:
        self.pending_deposits.append((validator, amount))

    def queue_exit(self, validator: int) -> None:
        self.pending_exits.append((validator, self.epoch + self.exit_delay_epochs))


def seal_epoch(state: EpochState, epoch_len_frames: int) -> EpochRecord:
    """Close the current epoch once enough frames finalized.

    Increments the epoch counter, digests (sealed epoch number, last block
    id, validator-set encoding) into ``prev_epoch_hash``, applies queued
    validator-set changes and resets the per-epoch counters. The caller
    resets its election state alongside.
    """
    if state.frames_finalized < epoch_len_frames:
        raise EpochNotComplete(
            f"epoch {state.epoch}: {state.frames_finalized}/{epoch_len_frames} frames")
    h = hashlib.sha256()
    h.update(struct.pack(">Q", state.epoch))
    h.update(state.last_block_digest)
    h.update(state.validators.encode())
    record = EpochRecord(state.epoch + 1, h.digest())

    powers = dict(state.validators.powers)
    for v, amount in state.pending_deposits:
        powers[v] = powers.get(v, 0) + amount
    remaining = []
    for v, effective in state.pending_exits:
        if record.number >= effective:
            powers.pop(v, None)
        else:
            remaining.append((v, effective))
    state.validators = ValidatorSet.from_powers(powers)
    state.pending_deposits = []
    state.pending_exits = remaining
    state.epoch = record.number
    state.frames_finalized = 0
    return record
