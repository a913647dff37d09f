"""Scenario files: declarative multi-node runs with expectations.

A scenario names its members (and extra actors such as consumers), a
time-ordered list of actions, and the expectations checked when the run
finishes. Bundled scenarios live in the package's scenarios/ directory and
can be referenced by bare name.
"""

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional

from .errors import ScenarioError
from .service import MemberRole, NodeType

KNOWN_ACTIONS = {
    "create_record", "ship_record", "validate_record", "accept_record",
    "purchase_record", "onboard_member", "remove_member", "set_consensus_level",
    "upgrade_contract", "halt_node", "resume_node", "clone_tag", "tamper_tag",
    "tamper_record",
}

KNOWN_EXPECTATIONS = {
    "chain_height_min", "record_status", "write_count", "counters_in_sync",
    "validator_count", "registry_size", "attack_logged", "no_attacks",
    "last_validation", "step_error", "sold_count",
}


@dataclass
class Step:
    at: int
    actor: str
    action: str
    params: Dict[str, object] = field(default_factory=dict)
    expect_error: Optional[str] = None  # substring the step error must carry

    def to_dict(self) -> Dict[str, object]:
        out = {"at": self.at, "actor": self.actor, "action": self.action,
               "params": self.params}
        if self.expect_error is not None:
            out["expect_error"] = self.expect_error
        return out


@dataclass
class MemberSpec:
    member_id: str
    role: MemberRole
    node_type: NodeType


@dataclass
class Scenario:
    name: str
    seed: int
    members: List[MemberSpec]
    steps: List[Step]
    expectations: List[Dict[str, object]]
    extras: List[str] = field(default_factory=list)  # consumers / attackers
    chain_id: int = 77
    period: int = 1
    gas_limit: int = 8_000_000
    bootstrap_count: int = 5
    end_time: Optional[int] = None
    session_timeout: Optional[int] = None

    def validate(self) -> None:
        if not self.members:
            raise ScenarioError("scenario declares no members")
        admin_count = sum(1 for m in self.members if m.role is MemberRole.ADMINISTRATOR)
        if admin_count != 1:
            raise ScenarioError("scenario needs exactly one administrator")
        actors = {m.member_id for m in self.members} | set(self.extras)
        last_at = None
        for index, step in enumerate(self.steps):
            if last_at is not None and step.at < last_at:
                raise ScenarioError(f"step {index} is out of time order")
            last_at = step.at
            if step.action not in KNOWN_ACTIONS:
                raise ScenarioError(f"step {index}: unknown action {step.action!r}")
            if step.actor not in actors:
                # onboarded members become actors once their step declares them
                onboarded = {s.params.get("member_id") for s in self.steps
                             if s.action == "onboard_member"}
                if step.actor not in onboarded:
                    raise ScenarioError(f"step {index}: unknown actor {step.actor!r}")
        for index, expectation in enumerate(self.expectations):
            if expectation.get("kind") not in KNOWN_EXPECTATIONS:
                raise ScenarioError(
                    f"expectation {index}: unknown kind {expectation.get('kind')!r}")

    @property
    def horizon(self) -> int:
        if self.end_time is not None:
            return self.end_time
        last = max((s.at for s in self.steps), default=0)
        return last + 8 * self.period

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name, "seed": self.seed,
            "chain_id": self.chain_id, "period": self.period,
            "gas_limit": self.gas_limit, "bootstrap_count": self.bootstrap_count,
            "end_time": self.end_time, "session_timeout": self.session_timeout,
            "members": [{"member_id": m.member_id, "role": m.role.value,
                         "node_type": m.node_type.value} for m in self.members],
            "extras": list(self.extras),
            "steps": [s.to_dict() for s in self.steps],
            "expectations": self.expectations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def scenario_from_dict(raw: Dict[str, object], name_hint: str = "scenario") -> Scenario:
    try:
        members = [MemberSpec(member_id=m["member_id"], role=MemberRole(m["role"]),
                              node_type=NodeType(m["node_type"]))
                   for m in raw["members"]]
        steps = [Step(at=s["at"], actor=s["actor"], action=s["action"],
                      params=dict(s.get("params", {})),
                      expect_error=s.get("expect_error"))
                 for s in raw.get("steps", [])]
        scenario = Scenario(
            name=raw.get("name", name_hint),
            seed=raw.get("seed", 0),
            members=members,
            steps=steps,
            expectations=list(raw.get("expectations", [])),
            extras=list(raw.get("extras", [])),
            chain_id=raw.get("chain_id", 77),
            period=raw.get("period", 1),
            gas_limit=raw.get("gas_limit", 8_000_000),
            bootstrap_count=raw.get("bootstrap_count", 5),
            end_time=raw.get("end_time"),
            session_timeout=raw.get("session_timeout"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc
    scenario.validate()
    return scenario


def bundled_scenario_names() -> List[str]:
    names = []
    for item in resources.files("dnas").joinpath("scenarios").iterdir():
        if item.name.endswith(".json"):
            names.append(item.name[:-5])
    return sorted(names)


def load_scenario(ref: str) -> Scenario:
    """Load a scenario from a file path or a bundled scenario name."""
    path = Path(ref)
    if path.exists():
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"cannot parse {ref}: {exc}") from exc
        return scenario_from_dict(raw, name_hint=path.stem)
    candidate = resources.files("dnas").joinpath("scenarios").joinpath(f"{ref}.json")
    if candidate.is_file():
        raw = json.loads(candidate.read_text())
        return scenario_from_dict(raw, name_hint=ref)
    raise ScenarioError(f"no scenario file or bundled scenario named {ref!r}")
