import pytest
from hypothesis import given
from hypothesis import strategies as st

from layerguard.model import (
    INSPECTION_LAYERS,
    EvidenceEntry,
    EvidenceKind,
    LayerId,
    LayerVerdict,
    Outcome,
    SequencingError,
    VmIdentity,
    append_evidence,
    new_session,
    new_trace,
    record_verdict,
)

VM = VmIdentity("vm-1", "tenant-a")


def test_session_ids_do_not_collide():
    ids = {new_session(VmIdentity(f"vm-{i % 10}", "t"), "c", b"", i).session_id for i in range(1000)}
    assert len(ids) == 1000


def test_session_id_is_stable():
    assert new_session(VM, "c", b"x", 5).session_id == new_session(VM, "other", b"y", 5).session_id


@pytest.mark.parametrize("nonce", [-1, 2**64])
def test_nonce_out_of_range(nonce):
    with pytest.raises(ValueError):
        new_session(VM, "c", b"", nonce)


def test_vm_identity_validation():
    with pytest.raises(ValueError):
        VmIdentity("", "t")
    with pytest.raises(ValueError):
        VmIdentity("v", "t", 0)


def test_append_evidence_matches_list_oracle():
    packet = new_session(VM, "c", b"", 1)
    oracle = []
    kinds = list(EvidenceKind)
    for i in range(50):
        entry = EvidenceEntry(INSPECTION_LAYERS[i % 5], kinds[i % 3], f"e{i}")
        before = packet
        packet = append_evidence(packet, entry)
        oracle.append(entry)
        assert list(packet.evidence) == oracle
        assert len(before.evidence) == i  # the old value is untouched
    with pytest.raises(AttributeError):
        packet.evidence = ()


def test_verdict_flag_must_be_int_bit():
    with pytest.raises(ValueError):
        LayerVerdict(LayerId.FW, 2)
    with pytest.raises(ValueError):
        LayerVerdict(LayerId.FW, True)


def test_record_verdict_authorizes_after_last_layer():
    trace = new_trace("s")
    for i, layer in enumerate(INSPECTION_LAYERS):
        assert trace.outcome is Outcome.PENDING
        trace = record_verdict(trace, LayerVerdict(layer, 1), at=i)
    assert trace.outcome is Outcome.AUTHORIZED
    assert trace.latency == 4


def test_record_verdict_stops_at_first_deny():
    trace = record_verdict(new_trace("s"), LayerVerdict(LayerId.FW, 1))
    trace = record_verdict(trace, LayerVerdict(LayerId.META, 0, "bad"))
    assert trace.outcome is Outcome.DENIED and trace.denial_layer is LayerId.META
    with pytest.raises(SequencingError):
        record_verdict(trace, LayerVerdict(LayerId.VAULT, 1))


def test_record_verdict_rejects_out_of_order_and_backwards_time():
    with pytest.raises(SequencingError):
        record_verdict(new_trace("s"), LayerVerdict(LayerId.META, 1))
    trace = record_verdict(new_trace("s"), LayerVerdict(LayerId.FW, 1), at=10)
    with pytest.raises(SequencingError):
        record_verdict(trace, LayerVerdict(LayerId.META, 1), at=9)


def test_partial_plan():
    trace = new_trace("s", (LayerId.FW, LayerId.VAULT))
    trace = record_verdict(trace, LayerVerdict(LayerId.FW, 1))
    trace = record_verdict(trace, LayerVerdict(LayerId.VAULT, 1))
    assert trace.outcome is Outcome.AUTHORIZED
    with pytest.raises(ValueError):
        new_trace("s", (LayerId.META, LayerId.FW))
    with pytest.raises(ValueError):
        new_trace("s", (LayerId.APP,))


@given(st.lists(st.integers(0, 1), min_size=1, max_size=5))
def test_trace_outcome_follows_flags(flags):
    trace = new_trace("s")
    for layer, flag in zip(INSPECTION_LAYERS, flags):
        trace = record_verdict(trace, LayerVerdict(layer, flag))
        if not flag:
            break
    if 0 in flags:
        first = flags.index(0)
        assert trace.denial_layer is INSPECTION_LAYERS[first]
        assert len(trace.verdicts) == first + 1
    elif len(flags) == 5:
        assert trace.outcome is Outcome.AUTHORIZED
    else:
        assert trace.outcome is Outcome.PENDING
