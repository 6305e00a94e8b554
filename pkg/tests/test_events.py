"""Event identity: canonical encoding and digest behaviour."""

import dataclasses

from lachesis_sim import Event
from lachesis_sim.events import event_from_json, event_to_json, tx_digest

from helpers import make_event


def test_equal_fields_equal_ids():
    a = Event(epoch=1, seq=1, creator=3, parents=(), lamport=1, creation_time=5)
    b = Event(epoch=1, seq=1, creator=3, parents=(), lamport=1, creation_time=5)
    assert a.id == b.id
    assert len(a.id) == 32


def test_any_field_change_changes_id():
    base = dict(epoch=1, seq=2, creator=1, parents=(b"\x01" * 32,),
                lamport=7, creation_time=100)
    a = Event(**base)
    for field, value in [("epoch", 2), ("seq", 3), ("creator", 2),
                         ("lamport", 8), ("creation_time", 101),
                         ("parents", (b"\x02" * 32,))]:
        changed = Event(**{**base, field: value})
        assert changed.id != a.id, field


def test_frame_not_part_of_identity():
    a = make_event(0)
    b = dataclasses.replace(a, frame=9)
    assert a.id == b.id


def test_transactions_feed_identity_via_tx_hash():
    a = make_event(0, txs=(b"pay alice",))
    b = make_event(0, txs=(b"pay bob",))
    assert a.tx_hash == tx_digest((b"pay alice",))
    assert a.id != b.id


def test_signature_stub_binds_creator_and_digest():
    e = make_event(4)
    assert e.sig.endswith(e.id)
    assert e.sig != make_event(5).sig


def test_json_round_trip():
    leaf = make_event(2, t=77)
    child = make_event(2, [leaf], txs=(b"\x00\x01", b"\xff"))
    back = event_from_json(event_to_json(child, root=True))
    assert back.id == child.id
    assert back.transactions == child.transactions
