"""Deterministic scenario simulator.

A scenario file describes recipients (wear sessions + GPS trajectory),
markers, a scripted sender, and a consent policy. ``run`` boots an in-process
delivery service, replays everything in global timestamp order through the
wire-frame dispatcher, and returns the complete frame log. Two runs of the
same scenario produce byte-identical logs: ids derive from the scenario seed
and time never comes from the wall clock.
"""

from __future__ import annotations

import heapq
import json
from bisect import bisect_right
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Iterator, Mapping

from . import protocol
from .engine import ContextSample, haversine_distance, sample_to_dict
from .errors import ParseError, WandRelayError
from .ids import IdFactory
from .model import (
    MessageState,
    TimeWindow,
    TriggerSchedule,
    VoiceNote,
    catalog_item,
    compose,
    message_to_dict,
    schedule_from_dict,
    validate_schedule,
    voice_note_from_dict,
)
from .service import DeliveryService
from .storage import MemoryStore
from .timeutil import format_rfc3339, parse_rfc3339

SCENARIO_VERSION = 1
MARKER_VISIBILITY_M = 5.0  # a marker is "in view" within this distance
UTTERANCE_DELAY_S = 2.0  # scripted recipients speak this long after a capture starts


@dataclass(frozen=True, slots=True)
class MarkerSpec:
    marker_id: str
    lat: float
    lon: float


@dataclass(frozen=True, slots=True)
class Waypoint:
    t: datetime
    lat: float
    lon: float


@dataclass(frozen=True, slots=True)
class RecipientSpec:
    principal: str
    wear_sessions: tuple[TimeWindow, ...]
    trajectory: tuple[Waypoint, ...]


@dataclass(frozen=True, slots=True)
class SenderAction:
    at: datetime
    label: str
    sender_id: str
    recipient_id: str
    content_id: str
    scale: float
    voice_note: VoiceNote
    schedule: TriggerSchedule | None


@dataclass(frozen=True, slots=True)
class ConsentPolicy:
    default_yes: bool = True
    by_label: Mapping[str, bool] = field(default_factory=dict)

    def answer_for(self, label: str) -> bool:
        return self.by_label.get(label, self.default_yes)


@dataclass(frozen=True, slots=True)
class Scenario:
    name: str
    seed: int
    tick: float
    end: datetime
    markers: tuple[MarkerSpec, ...]
    recipients: tuple[RecipientSpec, ...]
    sender_script: tuple[SenderAction, ...]
    consent_policy: ConsentPolicy

    @property
    def marker_ids(self) -> frozenset[str]:
        return frozenset(m.marker_id for m in self.markers)

    @property
    def sender_ids(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for action in self.sender_script:
            seen.setdefault(action.sender_id)
        return tuple(seen)


@dataclass(slots=True)
class RunResult:
    """Output of one simulation: the ordered frame log plus bookkeeping."""

    frames: list[dict[str, Any]]
    message_ids: dict[str, str]  # scenario label -> message_id
    final_states: dict[str, MessageState]  # message_id -> terminal state


# -- scenario parsing --------------------------------------------------------------


def _require(d: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in d:
        raise ParseError(f"{where}: missing field {key!r}")
    return d[key]


def _coord(obj: Mapping[str, Any], where: str) -> tuple[float, float]:
    try:
        lat, lon = float(obj["lat"]), float(obj["lon"])
    except (KeyError, TypeError, ValueError):
        raise ParseError(f"{where}: expected {{lat, lon}} numbers") from None
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
        raise ParseError(f"{where}: ({lat}, {lon}) outside valid range")
    return lat, lon


def scenario_from_dict(doc: Mapping[str, Any], *, source: str = "<scenario>") -> Scenario:
    if doc.get("v") != SCENARIO_VERSION:
        raise ParseError(f"{source}: unsupported scenario version {doc.get('v')!r}")
    name = str(doc.get("name", Path(source).stem))
    try:
        seed = int(_require(doc, "seed", source))
        tick = float(doc.get("tick", 1.0))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{source}: {exc}") from None
    if tick <= 0:
        raise ParseError(f"{source}: tick must be positive, got {tick}")
    end = parse_rfc3339(_require(doc, "end", source))

    markers: list[MarkerSpec] = []
    seen_markers: set[str] = set()
    for i, m in enumerate(doc.get("markers", [])):
        where = f"{source}: markers[{i}]"
        marker_id = str(_require(m, "marker_id", where))
        if marker_id in seen_markers:
            raise ParseError(f"{where}: duplicate marker_id {marker_id!r}")
        seen_markers.add(marker_id)
        lat, lon = _coord(_require(m, "position", where), where)
        markers.append(MarkerSpec(marker_id=marker_id, lat=lat, lon=lon))

    recipients: list[RecipientSpec] = []
    recipient_ids: set[str] = set()
    for i, r in enumerate(_require(doc, "recipients", source)):
        where = f"{source}: recipients[{i}]"
        principal = str(_require(r, "principal", where))
        if principal in recipient_ids:
            raise ParseError(f"{where}: duplicate principal {principal!r}")
        recipient_ids.add(principal)

        sessions: list[TimeWindow] = []
        for j, w in enumerate(_require(r, "wear_sessions", where)):
            try:
                window = TimeWindow(
                    start=parse_rfc3339(_require(w, "start", f"{where}.wear_sessions[{j}]")),
                    end=parse_rfc3339(_require(w, "end", f"{where}.wear_sessions[{j}]")),
                )
            except WandRelayError as exc:
                raise ParseError(f"{where}.wear_sessions[{j}]: {exc.detail}") from None
            if sessions and window.start <= sessions[-1].end:
                raise ParseError(f"{where}.wear_sessions[{j}]: sessions must be sorted and disjoint")
            sessions.append(window)

        waypoints: list[Waypoint] = []
        for j, wp in enumerate(_require(r, "trajectory", where)):
            wp_where = f"{where}.trajectory[{j}]"
            t = parse_rfc3339(_require(wp, "t", wp_where))
            lat, lon = _coord(wp, wp_where)
            if waypoints and t <= waypoints[-1].t:
                raise ParseError(f"{wp_where}: waypoint times must be strictly increasing")
            waypoints.append(Waypoint(t=t, lat=lat, lon=lon))
        if not waypoints:
            raise ParseError(f"{where}: trajectory must have at least one waypoint")
        if sessions and waypoints[0].t > sessions[0].start:
            raise ParseError(f"{where}: trajectory must start at or before the first wear session")
        if waypoints[-1].t < end:
            raise ParseError(f"{where}: trajectory must extend to the scenario end")
        recipients.append(
            RecipientSpec(principal=principal, wear_sessions=tuple(sessions), trajectory=tuple(waypoints))
        )
    if not recipients:
        raise ParseError(f"{source}: at least one recipient is required")

    actions: list[SenderAction] = []
    labels: set[str] = set()
    for i, a in enumerate(doc.get("sender_script", [])):
        where = f"{source}: sender_script[{i}]"
        label = str(a.get("label", f"msg{i}"))
        if label in labels:
            raise ParseError(f"{where}: duplicate label {label!r}")
        labels.add(label)
        at = parse_rfc3339(_require(a, "at", where))
        if at >= end:
            raise ParseError(f"{where}: submission at {format_rfc3339(at)} is not before the scenario end")
        sender_id = str(_require(a, "sender_id", where))
        recipient_id = str(_require(a, "recipient_id", where))
        if recipient_id not in recipient_ids:
            raise ParseError(f"{where}: recipient {recipient_id!r} is not declared")
        if sender_id == recipient_id:
            raise ParseError(f"{where}: sender and recipient must differ")
        content_id = str(_require(a, "content_id", where))
        try:
            catalog_item(content_id)
        except WandRelayError:
            raise ParseError(f"{where}: unknown content {content_id!r}") from None
        scale = float(a.get("scale", 1.0))
        try:
            voice_note = voice_note_from_dict(_require(a, "voice_note", where))
            schedule = None
            if a.get("schedule") is not None:
                schedule = schedule_from_dict(a["schedule"])
                validate_schedule(schedule, seen_markers)
        except WandRelayError as exc:
            raise ParseError(f"{where}: {exc.code}: {exc.detail}") from None
        actions.append(
            SenderAction(
                at=at,
                label=label,
                sender_id=sender_id,
                recipient_id=recipient_id,
                content_id=content_id,
                scale=scale,
                voice_note=voice_note,
                schedule=schedule,
            )
        )

    policy_doc = doc.get("consent_policy", {})
    default = str(policy_doc.get("default", "yes")).lower()
    if default not in ("yes", "no"):
        raise ParseError(f"{source}: consent default must be yes or no")
    by_label: dict[str, bool] = {}
    for label, answer in policy_doc.get("by_label", {}).items():
        if label not in labels:
            raise ParseError(f"{source}: consent override for unknown label {label!r}")
        answer = str(answer).lower()
        if answer not in ("yes", "no"):
            raise ParseError(f"{source}: consent answer for {label!r} must be yes or no")
        by_label[label] = answer == "yes"

    return Scenario(
        name=name,
        seed=seed,
        tick=tick,
        end=end,
        markers=tuple(markers),
        recipients=tuple(recipients),
        sender_script=tuple(actions),
        consent_policy=ConsentPolicy(default_yes=default == "yes", by_label=by_label),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: scenario must be a JSON object")
    return scenario_from_dict(doc, source=str(path))


# -- context stream -------------------------------------------------------------------


def interpolate_position(trajectory: tuple[Waypoint, ...], t: datetime) -> tuple[float, float]:
    """Piecewise-linear position along the waypoints, clamped at the ends."""
    if t <= trajectory[0].t:
        return trajectory[0].lat, trajectory[0].lon
    if t >= trajectory[-1].t:
        return trajectory[-1].lat, trajectory[-1].lon
    times = [wp.t for wp in trajectory]
    i = bisect_right(times, t) - 1
    a, b = trajectory[i], trajectory[i + 1]
    frac = (t - a.t).total_seconds() / (b.t - a.t).total_seconds()
    return a.lat + (b.lat - a.lat) * frac, a.lon + (b.lon - a.lon) * frac


def sample_stream(scenario: Scenario, recipient: RecipientSpec) -> Iterator[ContextSample]:
    """One sample per tick from the trajectory start to the scenario end."""
    start = recipient.trajectory[0].t
    k = 0
    while True:
        t = start + timedelta(seconds=k * scenario.tick)
        if t > scenario.end:
            return
        lat, lon = interpolate_position(recipient.trajectory, t)
        wearing = any(w.start <= t <= w.end for w in recipient.wear_sessions)
        visible = frozenset(
            m.marker_id
            for m in scenario.markers
            if haversine_distance(m.lat, m.lon, lat, lon) <= MARKER_VISIBILITY_M
        )
        yield ContextSample(
            recipient_id=recipient.principal,
            t=t,
            lat=lat,
            lon=lon,
            wearing=wearing,
            visible_markers=visible,
        )
        k += 1


# -- the run loop ------------------------------------------------------------------------

_PRIO_SUBMIT = 0
_PRIO_CONTEXT = 1
_PRIO_REACTION_FRAME = 2
_PRIO_CONSENT = 3


def run(
    scenario: Scenario,
    *,
    store=None,
    log_path: str | Path | None = None,
) -> RunResult:
    """Execute a scenario end to end and return the complete frame log."""
    recorder = protocol.FrameRecorder(log_path)
    service = DeliveryService(
        store if store is not None else MemoryStore(),
        declared_markers=scenario.marker_ids,
        recorder=recorder,
    )
    ids = IdFactory(scenario.seed)
    label_of: dict[str, str] = {}  # message_id -> label
    message_ids: dict[str, str] = {}  # label -> message_id

    for principal in sorted(
        set(scenario.sender_ids) | {r.principal for r in scenario.recipients}
    ):
        service.register_principal(principal)

    heap: list[tuple[datetime, int, int, str, Any]] = []
    seq = 0

    def push(t: datetime, prio: int, kind: str, data: Any) -> None:
        nonlocal seq
        heapq.heappush(heap, (t, prio, seq, kind, data))
        seq += 1

    def dispatch(frame: dict[str, Any], *, context: str) -> list[dict[str, Any]]:
        responses = service.handle_frame(frame)
        for response in responses:
            if response["kind"] == protocol.ERROR:
                payload = response["payload"]
                raise RuntimeError(
                    f"scenario {scenario.name}: {context} rejected: "
                    f"{payload['code']}: {payload['detail']}"
                )
        return responses

    def schedule_reaction(responses: list[dict[str, Any]]) -> None:
        """React to REACTION_START frames: plan the utterance and the consent."""
        for response in responses:
            if response["kind"] != protocol.REACTION_START:
                continue
            payload = response["payload"]
            message_id = payload["message_id"]
            started_at = parse_rfc3339(payload["started_at"])
            deadline = parse_rfc3339(payload["deadline"])
            recipient_id = response["to"]
            utter_at = started_at + timedelta(seconds=UTTERANCE_DELAY_S)
            if utter_at <= deadline:
                push(
                    utter_at,
                    _PRIO_REACTION_FRAME,
                    "utterance",
                    {"message_id": message_id, "recipient_id": recipient_id},
                )
            answer = scenario.consent_policy.answer_for(label_of[message_id])
            push(
                deadline,
                _PRIO_CONSENT,
                "consent",
                {"message_id": message_id, "recipient_id": recipient_id, "answer": answer},
            )

    for recipient in scenario.recipients:
        dispatch(
            protocol.make_frame(
                protocol.HELLO,
                {"role": "recipient", "principal": recipient.principal},
                sender=recipient.principal,
            ),
            context=f"HELLO {recipient.principal}",
        )

    for action in scenario.sender_script:
        push(action.at, _PRIO_SUBMIT, "submit", action)
    for recipient in scenario.recipients:
        for sample in sample_stream(scenario, recipient):
            push(sample.t, _PRIO_CONTEXT, "context", sample)

    while heap:
        t, _prio, _seq, kind, data = heapq.heappop(heap)
        if t > scenario.end:
            break
        if kind == "submit":
            action: SenderAction = data
            message = compose(
                action.sender_id,
                action.recipient_id,
                action.content_id,
                action.scale,
                action.voice_note,
                action.schedule,
                declared_markers=scenario.marker_ids,
                now=action.at,
                id_factory=ids,
            )
            dispatch(
                protocol.make_frame(
                    protocol.SUBMIT, {"message": message_to_dict(message)}, sender=action.sender_id
                ),
                context=f"submit {action.label!r}",
            )
            label_of[message.message_id] = action.label
            message_ids[action.label] = message.message_id
        elif kind == "context":
            responses = dispatch(
                protocol.make_frame(
                    protocol.CONTEXT, {"sample": sample_to_dict(data)}, sender=data.recipient_id
                ),
                context=f"context at {format_rfc3339(data.t)}",
            )
            schedule_reaction(responses)
        elif kind == "utterance":
            dispatch(
                protocol.make_frame(
                    protocol.REACTION_FRAME,
                    {
                        "message_id": data["message_id"],
                        "t": format_rfc3339(t),
                        "transcript": f"utt::{data['message_id']}",
                    },
                    sender=data["recipient_id"],
                ),
                context=f"utterance for {data['message_id']}",
            )
        elif kind == "consent":
            responses = dispatch(
                protocol.make_frame(
                    protocol.CONSENT,
                    {
                        "message_id": data["message_id"],
                        "answer": "yes" if data["answer"] else "no",
                        "t": format_rfc3339(t),
                    },
                    sender=data["recipient_id"],
                ),
                context=f"consent for {data['message_id']}",
            )
            schedule_reaction(responses)

    service.end_of_run(scenario.end)
    for sender_id in sorted(scenario.sender_ids):
        dispatch(
            protocol.make_frame(protocol.SENDER_VIEW_REQ, {"sender_id": sender_id}, sender=sender_id),
            context=f"sender view {sender_id}",
        )

    service.close()
    recorder.close()
    return RunResult(
        frames=recorder.frames,
        message_ids=message_ids,
        final_states=service.message_states(),
    )
