"""Operator command line: serve | send | simulate | report | validate.

Exit codes: 0 success, 1 input/scenario error, 2 internal error. Every
failure prints one greppable line to stderr: ``error: <Code>: <detail>``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import signal
import sys
import threading
from pathlib import Path

from . import analytics, protocol, sim
from .errors import DataDirUnwritable, ParseError, WandRelayError
from .model import (
    MarkerCondition,
    Geofence,
    Specificity,
    TimeWindow,
    TriggerSchedule,
    VoiceNote,
    compose,
    message_to_dict,
    schedule_to_dict,
)
from .server import WandRelayServer, WireClient
from .service import DeliveryService
from .storage import FileStore
from .timeutil import parse_rfc3339


def _data_dir(args: argparse.Namespace) -> Path | None:
    raw = args.data_dir or os.environ.get("WANDRELAY_DATA_DIR")
    return Path(raw) if raw else None


def _parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not port.isdigit():
        raise ParseError(f"--listen expects HOST:PORT, got {value!r}")
    return host or "127.0.0.1", int(port)


def cmd_serve(args: argparse.Namespace) -> int:
    data_dir = _data_dir(args)
    if data_dir is None:
        raise DataDirUnwritable("serve requires --data-dir or WANDRELAY_DATA_DIR")
    host, port = _parse_listen(args.listen)
    store = FileStore(data_dir)
    markers = None
    if args.markers:
        doc = json.loads(Path(args.markers).read_text())
        markers = {str(m["marker_id"]) for m in doc["markers"]}
    recorder = protocol.FrameRecorder(data_dir / "frames.ndjson", append=True)
    service = DeliveryService(store, declared_markers=markers, recorder=recorder)
    server = WandRelayServer(host, port, service)

    def shut_down(signum: int, _frame) -> None:
        # shutdown() blocks until serve_forever exits, so it must not run on
        # the serving thread itself.
        threading.Thread(target=server.shutdown, daemon=True).start()

    signal.signal(signal.SIGTERM, shut_down)
    signal.signal(signal.SIGINT, shut_down)
    if args.verbose:
        print(f"listening on {host}:{port}, data in {data_dir}", file=sys.stderr)
    print(f"ready {host}:{port}", flush=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()
        service.close()
        recorder.close()
    return 0


def _schedule_from_flags(args: argparse.Namespace) -> TriggerSchedule | None:
    geofence = window = marker = None
    if args.geofence:
        try:
            lat, lon, radius = (float(part) for part in args.geofence.split(","))
        except ValueError:
            raise ParseError(f"--geofence expects LAT,LON,RADIUS, got {args.geofence!r}") from None
        geofence = Geofence(lat=lat, lon=lon, radius=radius)
    if args.window:
        start, sep, end = args.window.partition("..")
        if not sep:
            raise ParseError(f"--window expects START..END, got {args.window!r}")
        window = TimeWindow(start=parse_rfc3339(start), end=parse_rfc3339(end))
    if args.marker:
        marker = MarkerCondition(marker_id=args.marker)
    if geofence is None and window is None and marker is None:
        return None
    return TriggerSchedule(
        geofence=geofence,
        window=window,
        marker=marker,
        specificity=Specificity(args.specificity),
    )


def cmd_send(args: argparse.Namespace) -> int:
    host, port = _parse_listen(args.connect)
    note = VoiceNote(duration=args.note_duration, transcript=args.note)
    message = compose(
        args.sender, args.recipient, args.content, args.scale, note, _schedule_from_flags(args)
    )
    with WireClient(host, port) as client:
        client.hello("sender", args.sender)
        response = client.request(
            protocol.make_frame(
                protocol.SUBMIT, {"message": message_to_dict(message)}, sender=args.sender
            )
        )
    if response["kind"] == protocol.ERROR:
        raise _wire_error(response["payload"])
    print(protocol.dumps_canonical(response["payload"]))
    return 0


def _wire_error(payload: dict) -> WandRelayError:
    err = WandRelayError(payload.get("detail", ""))
    err.code = payload.get("code", "InternalError")
    return err


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = sim.load_scenario(args.scenario)
    if args.seed_override is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed_override)
    out = Path(args.out) if args.out else Path(f"{Path(args.scenario).stem}.runlog.ndjson")
    data_dir = _data_dir(args)
    store = FileStore(data_dir) if data_dir else None
    result = sim.run(scenario, store=store, log_path=out)
    if args.verbose:
        delivered = sum(
            1 for state in result.final_states.values() if state.value != "Expired"
        )
        print(
            f"{scenario.name}: {len(result.message_ids)} submitted, "
            f"{delivered} delivered, log {out}",
            file=sys.stderr,
        )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    for path in args.logs:
        if not Path(path).exists():
            raise ParseError(f"no such log: {path}")
    report = analytics.summarize_paths(args.logs)
    rendered = analytics.render_csv(report) if args.format == "csv" else analytics.render_text(report)
    if args.out:
        Path(args.out).write_text(rendered)
    else:
        sys.stdout.write(rendered)
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    scenario = sim.load_scenario(args.scenario)
    print(
        f"ok: {scenario.name}: {len(scenario.recipients)} recipient(s), "
        f"{len(scenario.sender_script)} message(s), {len(scenario.markers)} marker(s)"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wandrelay")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the delivery service")
    serve.add_argument("--listen", default="127.0.0.1:7707")
    serve.add_argument("--data-dir")
    serve.add_argument("--markers", help="JSON file declaring the known marker set")
    serve.add_argument("--verbose", action="store_true")
    serve.set_defaults(func=cmd_serve)

    send = sub.add_parser("send", help="submit one message over the wire")
    send.add_argument("--connect", default="127.0.0.1:7707")
    send.add_argument("--sender", required=True)
    send.add_argument("--recipient", required=True)
    send.add_argument("--content", required=True)
    send.add_argument("--scale", type=float, default=1.0)
    send.add_argument("--note", default="")
    send.add_argument("--note-duration", type=float, default=1.0)
    send.add_argument("--geofence", help="LAT,LON,RADIUS")
    send.add_argument("--window", help="START..END (RFC 3339)")
    send.add_argument("--marker")
    send.add_argument("--specificity", choices=[s.value for s in Specificity], default="Specific")
    send.set_defaults(func=cmd_send)

    simulate = sub.add_parser("simulate", help="run a scenario and write its log")
    simulate.add_argument("--scenario", required=True)
    simulate.add_argument("--out")
    simulate.add_argument("--data-dir")
    simulate.add_argument("--seed-override", type=int)
    simulate.add_argument("--verbose", action="store_true")
    simulate.set_defaults(func=cmd_simulate)

    report = sub.add_parser("report", help="render deliverability statistics from logs")
    report.add_argument("logs", nargs="+")
    report.add_argument("--format", choices=["text", "csv"], default="text")
    report.add_argument("--out")
    report.set_defaults(func=cmd_report)

    validate = sub.add_parser("validate", help="check a scenario file")
    validate.add_argument("--scenario", required=True)
    validate.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except WandRelayError as exc:
        print(f"error: {exc.code}: {exc.detail}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal failure
        print(f"error: InternalError: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
