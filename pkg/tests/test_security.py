"""Instruction-set security gate: authenticity, integrity, policy."""

import dataclasses
import json
import random

import pytest

from lumenops.errors import CommandError
from lumenops.field import make_command, service_to_payload
from lumenops.security import (InstructionSet, SecurityPolicy,
                               instruction_set_from_payload,
                               instruction_set_to_payload,
                               make_instruction_set, security_gate,
                               verdict_to_payload)
from lumenops.topology import default_topology, make_service


@pytest.fixture
def policy():
    return SecurityPolicy.for_topology(default_topology(),
                                       protected_service_ids=("pb-1",))


def _good_set():
    svc = make_service("add-1", ("2", "1"), 193.75, 800)
    return make_instruction_set([
        make_command("AddService", service_to_payload(svc)),
        make_command("DropService", {"service_id": "pa-1"}),
        make_command("AdjustPower", {"service_id": "pa-2",
                                     "launch_power_dbm": 1.0}),
    ])


def test_gate_approves_compliant_set(policy):
    verdict = security_gate(_good_set(), policy)
    assert verdict.approved
    assert verdict.authenticity.passed
    assert verdict.integrity.passed
    assert all(c.passed for c in verdict.policy)


def test_gate_rejects_unknown_issuer(policy):
    svc = make_service("a", ("2", "1"), 193.75, 800)
    cmd = make_command("AddService", service_to_payload(svc),
                       issuer="Mallory")
    instr = make_instruction_set([cmd], issuer="Mallory")
    verdict = security_gate(instr, policy)
    assert not verdict.approved
    assert not verdict.authenticity.passed
    assert verdict.integrity.passed  # consistent, just untrusted


def test_gate_rejects_out_of_band_channel(policy):
    svc = make_service("a", ("2", "1"), 197.2, 800)  # above the top edge
    instr = make_instruction_set([
        make_command("AddService", service_to_payload(svc))])
    verdict = security_gate(instr, policy)
    assert not verdict.approved
    assert any(c.rule == "band" and not c.passed for c in verdict.policy)


def test_gate_rejects_protected_drop_and_hot_launch(policy):
    instr = make_instruction_set([
        make_command("DropService", {"service_id": "pb-1"}),
        make_command("AdjustPower", {"service_id": "x",
                                     "launch_power_dbm": 4.5}),
    ])
    verdict = security_gate(instr, policy)
    assert not verdict.approved
    failed = {c.rule for c in verdict.policy if not c.passed}
    assert failed == {"protected", "launch_power"}


def test_gate_rejects_unknown_command_kind(policy):
    cmd = make_command("DropService", {"service_id": "x"})
    weird = dataclasses.replace(cmd, kind="Reboot")
    instr = InstructionSet(commands=(weird,), issuer="ConfigurationDeployer",
                           digest="0" * 64)
    verdict = security_gate(instr, policy)
    assert not verdict.approved


def test_gate_catches_any_single_byte_flip(policy):
    rng = random.Random(42)
    base = instruction_set_to_payload(_good_set())
    blob = json.dumps(base, sort_keys=True).encode()
    for _ in range(50):
        pos = rng.randrange(len(blob))
        mutated = bytearray(blob)
        mutated[pos] ^= 1 << rng.randrange(8)
        try:
            doc = json.loads(bytes(mutated).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            continue
        if doc == base:
            continue
        try:
            instr = instruction_set_from_payload(doc)
        except CommandError:
            continue
        verdict = security_gate(instr, policy)
        assert not verdict.approved


def test_payload_round_trip(policy):
    instr = _good_set()
    again = instruction_set_from_payload(instruction_set_to_payload(instr))
    assert again == instr
    verdict = security_gate(again, policy)
    doc = verdict_to_payload(verdict)
    assert doc["approved"] is True
    assert doc["instruction_digest"] == instr.digest


def test_from_payload_rejects_malformed():
    with pytest.raises(CommandError):
        instruction_set_from_payload({"issuer": "x"})
    with pytest.raises(CommandError):
        instruction_set_from_payload({"issuer": "x", "digest": "y",
                                      "commands": [{"kind": "DropService"}]})


def test_make_instruction_set_requires_commands():
    with pytest.raises(CommandError):
        make_instruction_set([])


def test_policy_for_topology_reads_grid():
    policy = SecurityPolicy.for_topology(default_topology())
    assert policy.band_min_thz == 191.0
    assert policy.band_max_thz == 197.0
    assert policy.allowed_rates_gbps == (100, 400, 800)
