"""Deterministic multi-node simulation: clock, message bus, scenario runner.

Cross-component deliveries (mined receipts, contract events) are deferred by
one tick through the bus, whose delivery order is a pure function of
(enqueue time, sequence number). Everything random flows from the scenario
seed, so a (seed, scenario) pair always produces the same transcript.
"""

import heapq
import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .encoding import canonical_json, canonical_json_bytes
from .errors import DnasError, ScenarioError
from .records import WineStatus
from .scenario import Scenario, Step
from .service import Consortium, MemberRole, NodeType
from .tags import NfcTag, counterfeit_copy


class MessageBus:
    """Time-ordered deliverable queue with a deterministic tie-break."""

    def __init__(self):
        self._queue: List[Tuple[int, int, Callable, tuple]] = []
        self._seq = 0

    def schedule(self, at: int, fn: Callable, *args) -> None:
        heapq.heappush(self._queue, (at, self._seq, fn, args))
        self._seq += 1

    def deliver_due(self, now: int) -> int:
        delivered = 0
        while self._queue and self._queue[0][0] <= now:
            _, _, fn, args = heapq.heappop(self._queue)
            fn(*args)
            delivered += 1
        return delivered

    def pending(self) -> int:
        return len(self._queue)


@dataclass
class StepResult:
    at: int
    actor: str
    action: str
    ok: bool
    error: Optional[str] = None


@dataclass
class Report:
    scenario: str
    seed: int
    passed: bool
    chain_height: int
    state_root: str
    validators: List[str]
    registry: List[Dict[str, object]]
    records: Dict[str, Dict[str, object]]
    attack_log: List[Dict[str, object]]
    steps: List[Dict[str, object]]
    expectations: List[Dict[str, object]]
    notifications: List[Dict[str, object]]

    def to_dict(self) -> Dict[str, object]:
        return {
            "scenario": self.scenario, "seed": self.seed, "passed": self.passed,
            "chain_height": self.chain_height, "state_root": self.state_root,
            "validators": self.validators, "registry": self.registry,
            "records": self.records, "attack_log": self.attack_log,
            "steps": self.steps, "expectations": self.expectations,
            "notifications": self.notifications,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def canonical_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_dict())

    def notifications_ndjson(self) -> str:
        """Notification log as line-delimited JSON, one event per line."""
        return "\n".join(canonical_json(n) for n in self.notifications)

    def render_text(self) -> str:
        lines = [
            f"scenario  : {self.scenario} (seed {self.seed})",
            f"result    : {'PASS' if self.passed else 'FAIL'}",
            f"chain     : height {self.chain_height}, root {self.state_root[:18]}…",
            f"validators: {len(self.validators)}",
            f"registry  : {len(self.registry)} member(s)",
            "records:",
        ]
        for wine_id in sorted(self.records):
            info = self.records[wine_id]
            lines.append(f"  {wine_id:<12} status={info['status']:<9} "
                         f"writes={info['write_counter']} reads={info['read_counter']} "
                         f"flags={info['flags']}")
        if self.attack_log:
            lines.append("attacks:")
            for entry in self.attack_log:
                lines.append(f"  {entry['wine_id']}: {entry['attack_class']} "
                             f"at {entry['layer']} ({entry['details']})")
        lines.append("expectations:")
        for expectation in self.expectations:
            mark = "ok " if expectation["passed"] else "FAIL"
            lines.append(f"  [{mark}] {expectation['description']}")
        failed_steps = [s for s in self.steps if not s["ok"]]
        if failed_steps:
            lines.append("failed steps:")
            for s in failed_steps:
                lines.append(f"  t={s['at']} {s['actor']} {s['action']}: {s['error']}")
        return "\n".join(lines)


class ScenarioRunner:
    """Executes one scenario on a fresh consortium."""

    def __init__(self, scenario: Scenario, seed: Optional[int] = None):
        scenario.validate()
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.bus = MessageBus()
        self.consortium: Optional[Consortium] = None
        self.tags: Dict[str, NfcTag] = {}
        self.cloned: Dict[str, NfcTag] = {}
        self.sessions: Dict[Tuple[str, str], str] = {}
        self.last_validation: Dict[str, List[Dict[str, object]]] = {}
        self.step_results: List[StepResult] = []

    # -- setup -------------------------------------------------------------------------

    def _build_consortium(self) -> Consortium:
        members = [(m.member_id, m.role, m.node_type) for m in self.scenario.members]
        consortium = Consortium(
            chain_id=self.scenario.chain_id, period=self.scenario.period,
            gas_limit=self.scenario.gas_limit,
            bootstrap_count=self.scenario.bootstrap_count,
            seed=self.seed, initial_members=members,
            session_timeout=self.scenario.session_timeout)
        # scenario-time deliveries go through the bus with a one-tick delay
        consortium.dispatcher = lambda fn, *args: self.bus.schedule(
            consortium.now + 1, fn, *args)
        for extra in self.scenario.extras:
            consortium.add_consumer(extra)
        return consortium

    # -- run loop -----------------------------------------------------------------------

    def run(self) -> Report:
        self.consortium = self._build_consortium()
        consortium = self.consortium
        base = consortium.now
        pending = sorted(self.scenario.steps, key=lambda s: s.at)
        horizon = base + self.scenario.horizon
        t = base
        index = 0
        while t <= horizon or self.bus.pending() or consortium.chain.pool:
            consortium.now = t
            self.bus.deliver_due(t)
            while index < len(pending) and base + pending[index].at <= t:
                self._run_step(pending[index])
                index += 1
            consortium.seal_due(t)
            t += 1
            if t > horizon + 64:  # hard stop: drain window after the horizon
                break
        return self._build_report()

    def _run_step(self, step: Step) -> None:
        try:
            self._dispatch_action(step)
        except DnasError as exc:
            message = str(exc)
            expected = step.expect_error is not None and step.expect_error in message
            self.step_results.append(StepResult(
                at=step.at, actor=step.actor, action=step.action,
                ok=expected, error=message))
            return
        if step.expect_error is not None:
            self.step_results.append(StepResult(
                at=step.at, actor=step.actor, action=step.action, ok=False,
                error=f"expected an error containing {step.expect_error!r}"))
            return
        self.step_results.append(StepResult(
            at=step.at, actor=step.actor, action=step.action, ok=True))

    def _service_for(self, actor: str):
        consortium = self.consortium
        if actor in consortium.services:
            return consortium.services[actor]
        if actor in consortium.consumers:
            return consortium.shared_service
        raise ScenarioError(f"actor {actor!r} has no service instance")

    def _tag_for(self, params: Dict[str, object]) -> NfcTag:
        wine_id = params["wine_id"]
        if params.get("tag") == "cloned":
            tag = self.cloned.get(wine_id)
        else:
            tag = self.tags.get(wine_id)
        if tag is None:
            raise ScenarioError(f"no tag for {wine_id!r} ({params.get('tag', 'genuine')})")
        return tag

    def _dispatch_action(self, step: Step) -> None:
        consortium = self.consortium
        action = step.action
        params = step.params
        if action == "create_record":
            wine_id = params["wine_id"]
            tag = NfcTag(uid=consortium.randbytes(7))
            self.tags[wine_id] = tag
            service = self._service_for(step.actor)
            service.create_record_flow(
                {"wine_id": wine_id, "pedigree_data": params.get("pedigree", {})},
                tag, params.get("device_id", f"device-{step.actor}"))
        elif action == "ship_record":
            consortium.db.update("winemaker", params["wine_id"],
                                 {"wine_status": WineStatus.IN_TRANSIT})
        elif action == "validate_record":
            service = self._service_for(step.actor)
            tag = self._tag_for(params)
            outcomes, _, session = service.validate_record_flow(tag)
            self.last_validation[params["wine_id"]] = [o.to_dict() for o in outcomes]
            if session is not None:
                self.sessions[(step.actor, params["wine_id"])] = session
        elif action in ("accept_record", "purchase_record"):
            wine_id = params["wine_id"]
            service = self._service_for(step.actor)
            session = self.sessions.pop((step.actor, wine_id), None)
            custodian = (consortium.consumers.get(step.actor)
                         if action == "purchase_record" else None)
            service.accept_record_flow(self.tags[wine_id], session or "missing-session",
                                       custodian_key=custodian,
                                       purchase=action == "purchase_record")
        elif action == "onboard_member":
            consortium.onboard_member(params["member_id"],
                                      MemberRole(params.get("role", "participant")),
                                      NodeType(params.get("node_type", "validator")))
        elif action == "remove_member":
            consortium.propose_member_removal(step.actor, params["member_id"])
        elif action == "set_consensus_level":
            self._service_for(step.actor).set_consensus_level(params["level"])
        elif action == "upgrade_contract":
            self._service_for(step.actor).upgrade_contract(params["version"])
        elif action == "halt_node":
            consortium.halted.add(params["member"])
        elif action == "resume_node":
            consortium.halted.discard(params["member"])
        elif action == "clone_tag":
            wine_id = params["wine_id"]
            self.cloned[wine_id] = counterfeit_copy(self.tags[wine_id],
                                                    randbytes=consortium.randbytes)
        elif action == "tamper_tag":
            tag = self._tag_for(params)
            fieldname, value = params["field"], params["value"]
            if fieldname == "read_counter":
                tag.read_counter = int(value)
            else:
                fields = json.loads(tag.memory)
                fields[fieldname] = value
                tag.memory = canonical_json_bytes(fields)
        elif action == "tamper_record":
            record = consortium.db.get(params["wine_id"])
            record.pedigree_data[params["field"]] = params["value"]
        else:
            raise ScenarioError(f"unknown action {action!r}")

    # -- expectations ------------------------------------------------------------------------

    def _evaluate_expectation(self, spec: Dict[str, object]) -> Tuple[bool, str]:
        consortium = self.consortium
        kind = spec["kind"]
        if kind == "chain_height_min":
            height = consortium.chain.height
            return height >= spec["value"], f"chain height {height} >= {spec['value']}"
        if kind == "record_status":
            status = consortium.db.get(spec["wine_id"]).wine_status.value
            return status == spec["equals"], (
                f"record {spec['wine_id']} status {status} == {spec['equals']}")
        if kind == "write_count":
            on_chain = consortium.chain.call_view("get_record", {"wine_id": spec["wine_id"]})
            return on_chain["write_count"] == spec["equals"], (
                f"on-chain write count {on_chain['write_count']} == {spec['equals']}")
        if kind == "counters_in_sync":
            tag = self.tags[spec["wine_id"]]
            ok = consortium.counters_in_sync(spec["wine_id"], tag)
            return ok, f"counters of {spec['wine_id']} match on tag, database, chain"
        if kind == "validator_count":
            count = len(consortium.chain.validators)
            return count == spec["equals"], f"validator count {count} == {spec['equals']}"
        if kind == "registry_size":
            size = len(consortium.chain.call_view("get_peers", {}))
            return size == spec["equals"], f"registry size {size} == {spec['equals']}"
        if kind == "attack_logged":
            entries = [n for n in consortium.notifications if n["type"] == "record_flagged"]
            if "wine_id" in spec:
                entries = [n for n in entries if n["wine_id"] == spec["wine_id"]]
            if "attack_class" in spec:
                entries = [n for n in entries if n["attack_class"] == spec["attack_class"]]
            if "layer" in spec:
                entries = [n for n in entries if n["layer"] == spec["layer"]]
            return bool(entries), (
                f"attack {spec.get('attack_class', 'any')} logged at "
                f"{spec.get('layer', 'any layer')} for {spec.get('wine_id', 'any record')}")
        if kind == "no_attacks":
            entries = [n for n in consortium.notifications if n["type"] == "record_flagged"]
            return not entries, f"no attack entries (found {len(entries)})"
        if kind == "last_validation":
            outcomes = self.last_validation.get(spec["wine_id"], [])
            if spec.get("result", "pass") == "pass":
                ok = bool(outcomes) and all(o["result"] == "pass" for o in outcomes)
            else:
                ok = bool(outcomes) and outcomes[-1]["result"] == spec["result"]
            return ok, (f"last validation of {spec['wine_id']} is "
                        f"{spec.get('result', 'pass')}")
        if kind == "step_error":
            result = self.step_results[spec["index"]]
            ok = result.error is not None
            if ok and "contains" in spec:
                ok = spec["contains"] in result.error
            return ok, f"step {spec['index']} failed with {spec.get('contains', 'an error')!r}"
        if kind == "sold_count":
            sold = sum(1 for w in consortium.db.wine_ids()
                       if consortium.db.get(w).wine_status is WineStatus.SOLD)
            return sold == spec["equals"], f"sold records {sold} == {spec['equals']}"
        raise ScenarioError(f"unknown expectation kind {kind!r}")

    def _build_report(self) -> Report:
        consortium = self.consortium
        expectations = []
        all_passed = True
        for spec in self.scenario.expectations:
            passed, description = self._evaluate_expectation(spec)
            expectations.append({"kind": spec["kind"], "description": description,
                                 "passed": passed})
            all_passed = all_passed and passed
        steps_ok = all(s.ok for s in self.step_results)
        records = {}
        for wine_id in consortium.db.wine_ids():
            record = consortium.db.get(wine_id)
            records[wine_id] = {
                "status": record.wine_status.value,
                "write_counter": record.write_counter,
                "read_counter": record.read_counter,
                "custodian": record.custodian_address,
                "transactions": len(record.transaction_data),
                "flags": len(record.unsuccessful_validation_data),
            }
        return Report(
            scenario=self.scenario.name, seed=self.seed,
            passed=all_passed and steps_ok,
            chain_height=consortium.chain.height,
            state_root=consortium.chain.head.state_root,
            validators=list(consortium.chain.validators),
            registry=consortium.chain.call_view("get_peers", {}),
            records=records,
            attack_log=[n for n in consortium.notifications
                        if n["type"] == "record_flagged"],
            steps=[{"at": s.at, "actor": s.actor, "action": s.action, "ok": s.ok,
                    "error": s.error} for s in self.step_results],
            expectations=expectations,
            notifications=list(consortium.notifications),
        )


def run_scenario(scenario: Scenario, seed: Optional[int] = None) -> Report:
    return ScenarioRunner(scenario, seed=seed).run()


def replay_determinism_check(scenario: Scenario, runs: int = 3,
                             seed: Optional[int] = None) -> Dict[str, object]:
    """Re-run the scenario and compare the full transcripts byte for byte."""
    if runs < 2:
        raise ScenarioError("determinism check needs at least 2 runs")
    reports = [run_scenario(scenario, seed=seed) for _ in range(runs)]
    baseline = reports[0].canonical_bytes()
    identical = all(r.canonical_bytes() == baseline for r in reports[1:])
    return {
        "identical": identical,
        "runs": runs,
        "state_roots": [r.state_root for r in reports],
        "passed": identical and all(r.passed for r in reports),
    }
