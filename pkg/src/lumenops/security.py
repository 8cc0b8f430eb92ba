"""Security gate for NMS instruction sets.

The gate is total: any input, however mangled, yields a verdict rather
than an exception. Authenticity pins the issuer, integrity pins every
byte through sha256 digests, and the policy rules bound what a command
may do to the network regardless of who signed it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

from .errors import CommandError
from .field import NmsCommand, command_digest
from .qot import REQUIRED_GSNR_DB
from .topology import NetworkTopology

KNOWN_ISSUERS = ("ConfigurationDeployer",)

LAUNCH_MIN_DBM = -5.0
LAUNCH_MAX_DBM = 3.0


@dataclass(frozen=True)
class InstructionSet:
    commands: tuple[NmsCommand, ...]
    issuer: str
    digest: str
    policy_tags: tuple[str, ...] = ()


def instruction_set_digest(commands: Sequence[NmsCommand], issuer: str,
                           policy_tags: Sequence[str] = ()) -> str:
    # tags are advisory but still signed, so they cannot be altered or
    # stripped in transit without tripping the integrity check
    doc = {
        "issuer": issuer,
        "policy_tags": list(policy_tags),
        "commands": [{"kind": c.kind, "payload": c.payload}
                     for c in commands],
    }
    blob = json.dumps(doc, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def make_instruction_set(commands: Sequence[NmsCommand],
                         issuer: str = "ConfigurationDeployer",
                         policy_tags: Sequence[str] = ()) -> InstructionSet:
    commands = tuple(commands)
    if not commands:
        raise CommandError("instruction set has no commands")
    return InstructionSet(
        commands=commands,
        issuer=issuer,
        digest=instruction_set_digest(commands, issuer, policy_tags),
        policy_tags=tuple(policy_tags),
    )


def instruction_set_to_payload(instr: InstructionSet) -> dict:
    return {
        "issuer": instr.issuer,
        "digest": instr.digest,
        "policy_tags": list(instr.policy_tags),
        "commands": [
            {"kind": c.kind, "payload": c.payload, "issuer": c.issuer,
             "digest": c.digest}
            for c in instr.commands
        ],
    }


def instruction_set_from_payload(payload: dict) -> InstructionSet:
    try:
        commands = tuple(
            NmsCommand(kind=str(c["kind"]), payload=c["payload"],
                       issuer=str(c["issuer"]), digest=str(c["digest"]))
            for c in payload["commands"])
        return InstructionSet(
            commands=commands,
            issuer=str(payload["issuer"]),
            digest=str(payload["digest"]),
            policy_tags=tuple(payload.get("policy_tags", ())),
        )
    except (KeyError, TypeError) as exc:
        raise CommandError(f"malformed instruction set payload: {exc}") from exc


@dataclass(frozen=True)
class SecurityPolicy:
    band_min_thz: float
    band_max_thz: float
    launch_min_dbm: float = LAUNCH_MIN_DBM
    launch_max_dbm: float = LAUNCH_MAX_DBM
    allowed_rates_gbps: tuple[int, ...] = tuple(sorted(REQUIRED_GSNR_DB))
    protected_service_ids: frozenset = field(default_factory=frozenset)
    slice_width_ghz: float = 12.5

    @classmethod
    def for_topology(cls, topology: NetworkTopology,
                     protected_service_ids: Sequence[str] = ()
                     ) -> "SecurityPolicy":
        grid = topology.grid
        return cls(
            band_min_thz=grid.base_frequency_thz,
            band_max_thz=grid.top_frequency_thz,
            protected_service_ids=frozenset(protected_service_ids),
            slice_width_ghz=grid.slice_width_ghz,
        )


@dataclass(frozen=True)
class PolicyCheck:
    rule: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class SecurityVerdict:
    approved: bool
    authenticity: PolicyCheck
    integrity: PolicyCheck
    policy: tuple[PolicyCheck, ...]
    instruction_digest: str


def verdict_to_payload(verdict: SecurityVerdict) -> dict:
    def check(c: PolicyCheck) -> dict:
        return {"rule": c.rule, "passed": c.passed, "detail": c.detail}

    return {
        "approved": verdict.approved,
        "authenticity": check(verdict.authenticity),
        "integrity": check(verdict.integrity),
        "policy": [check(c) for c in verdict.policy],
        "instruction_digest": verdict.instruction_digest,
    }


def _check_integrity(instr: InstructionSet) -> PolicyCheck:
    try:
        expected = instruction_set_digest(instr.commands, instr.issuer,
                                          instr.policy_tags)
    except (TypeError, ValueError) as exc:
        return PolicyCheck("integrity", False,
                           f"payload not canonicalizable: {exc}")
    if instr.digest != expected:
        return PolicyCheck("integrity", False,
                           "instruction set digest does not match content")
    for idx, cmd in enumerate(instr.commands):
        try:
            if cmd.digest != command_digest(cmd.kind, cmd.payload):
                return PolicyCheck(
                    "integrity", False,
                    f"command {idx} digest does not match payload")
        except (TypeError, ValueError) as exc:
            return PolicyCheck("integrity", False,
                               f"command {idx} not canonicalizable: {exc}")
        if cmd.issuer != instr.issuer:
            return PolicyCheck(
                "integrity", False,
                f"command {idx} issuer {cmd.issuer!r} differs from "
                f"set issuer")
    return PolicyCheck("integrity", True, "all digests match")


def _policy_checks(instr: InstructionSet,
                   policy: SecurityPolicy) -> list[PolicyCheck]:
    checks = []
    half_slice_thz = policy.slice_width_ghz / 2000.0
    for idx, cmd in enumerate(instr.commands):
        label = f"command {idx} ({cmd.kind})"
        payload = cmd.payload if isinstance(cmd.payload, dict) else {}
        if cmd.kind == "AddService":
            center = payload.get("center_frequency_thz")
            width = payload.get("width_slices", 8)
            if not isinstance(center, (int, float)):
                checks.append(PolicyCheck(
                    "band", False, f"{label}: no frequency"))
            else:
                lo = center - width * half_slice_thz
                hi = center + width * half_slice_thz
                ok = (policy.band_min_thz <= lo
                      and hi <= policy.band_max_thz)
                checks.append(PolicyCheck(
                    "band", ok,
                    f"{label}: channel [{lo:.4f}, {hi:.4f}] THz "
                    + ("within band" if ok else "out of band")))
            rate = payload.get("rate_gbps")
            ok = rate in policy.allowed_rates_gbps
            checks.append(PolicyCheck(
                "rate", ok,
                f"{label}: rate {rate}G "
                + ("allowed" if ok else "not in rate table")))
            checks.append(_launch_check(label, payload, policy))
        elif cmd.kind == "DropService":
            sid = payload.get("service_id")
            ok = sid not in policy.protected_service_ids
            checks.append(PolicyCheck(
                "protected", ok,
                f"{label}: {sid!r} "
                + ("not protected" if ok else "is protected")))
        elif cmd.kind == "AdjustPower":
            checks.append(_launch_check(label, payload, policy))
        else:
            checks.append(PolicyCheck(
                "kind", False, f"{label}: unknown command kind"))
    if not instr.commands:
        checks.append(PolicyCheck("nonempty", False, "no commands"))
    return checks


def _launch_check(label: str, payload: dict,
                  policy: SecurityPolicy) -> PolicyCheck:
    launch = payload.get("launch_power_dbm")
    if not isinstance(launch, (int, float)):
        return PolicyCheck("launch_power", False, f"{label}: no launch power")
    ok = policy.launch_min_dbm <= launch <= policy.launch_max_dbm
    return PolicyCheck(
        "launch_power", ok,
        f"{label}: {launch} dBm "
        + ("within limits" if ok
           else f"outside [{policy.launch_min_dbm}, "
                f"{policy.launch_max_dbm}]"))


def security_gate(instr: InstructionSet, policy: SecurityPolicy,
                  known_issuers: Sequence[str] = KNOWN_ISSUERS
                  ) -> SecurityVerdict:
    """Authenticity, integrity, and policy compliance in one verdict."""
    authenticity = PolicyCheck(
        "authenticity", instr.issuer in known_issuers,
        f"issuer {instr.issuer!r} "
        + ("known" if instr.issuer in known_issuers else "not recognized"))
    integrity = _check_integrity(instr)
    policy_checks = tuple(_policy_checks(instr, policy))
    approved = (authenticity.passed and integrity.passed
                and all(c.passed for c in policy_checks))
    return SecurityVerdict(
        approved=approved,
        authenticity=authenticity,
        integrity=integrity,
        policy=policy_checks,
        instruction_digest=instr.digest,
    )
