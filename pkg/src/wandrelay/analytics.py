"""Deliverability statistics over run logs.

Counts come only from SUBMIT and PLAYBACK frames plus the terminal states
reported by the closing sender-view frames. Each (sender, recipient) pair gets
per-category sent/received counts and an integer-percent delivery rate;
summary rows (median / mean / sample SD) are computed over those integer
rates, excluding pairs with nothing sent in a category.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from . import protocol
from .errors import EmptyInput, IncompleteLog
from .model import ArMessage, MessageState, Specificity, message_from_dict

CATEGORIES = ("location", "time", "marker", "specific", "flexible", "direct")
CATEGORY_TITLES = {
    "location": "Location",
    "time": "Time",
    "marker": "Marker",
    "specific": "Specific",
    "flexible": "Flexible",
    "direct": "Direct",
}

_DELIVERED_STATES = {
    MessageState.DELIVERED.value,
    MessageState.REACTED.value,
    MessageState.REACTION_DECLINED.value,
}


def categorize(message: ArMessage) -> str:
    """Exactly one of the six categories per message."""
    schedule = message.schedule
    if schedule is None:
        return "direct"
    if schedule.is_compound:
        return "specific" if schedule.specificity is Specificity.SPECIFIC else "flexible"
    if schedule.geofence is not None:
        return "location"
    if schedule.window is not None:
        return "time"
    return "marker"


def round_half_up(value: float) -> int:
    """62.5% rounds to 63, matching the report's integer-percent convention."""
    return int(math.floor(value + 0.5))


@dataclass(slots=True)
class Stats:
    median: float
    mean: float
    sd: float | None  # sample standard deviation; None when n < 2


def stats(values: Sequence[float]) -> Stats:
    if not values:
        raise EmptyInput("stats over an empty list")
    return Stats(
        median=float(statistics.median(values)),
        mean=statistics.fmean(values),
        sd=statistics.stdev(values) if len(values) >= 2 else None,
    )


@dataclass(slots=True)
class CategoryTally:
    sent: int = 0
    received: int = 0

    @property
    def rate(self) -> int | None:
        """Integer delivery percent; None (N/A) when nothing was sent."""
        if self.sent == 0:
            return None
        return round_half_up(self.received / self.sent * 100.0)


@dataclass(slots=True)
class PairSummary:
    sender_id: str
    recipient_id: str
    tallies: dict[str, CategoryTally] = field(
        default_factory=lambda: {c: CategoryTally() for c in CATEGORIES}
    )

    @property
    def pair_id(self) -> str:
        return f"{self.sender_id}/{self.recipient_id}"


@dataclass(slots=True)
class Report:
    pairs: list[PairSummary]
    sent_stats: dict[str, Stats | None]
    received_stats: dict[str, Stats | None]
    rate_stats: dict[str, Stats | None]


def summarize_frames_groups(groups: Iterable[Iterable[Mapping[str, Any]]]) -> Report:
    """Aggregate one or more frame logs into a deliverability report."""
    pairs: dict[tuple[str, str], PairSummary] = {}
    category_of: dict[str, str] = {}
    pair_of: dict[str, tuple[str, str]] = {}
    playback_ids: set[str] = set()
    final_states: dict[str, str] = {}

    for frames in groups:
        for frame in frames:
            kind = frame.get("kind")
            payload = frame.get("payload", {})
            if kind == protocol.SUBMIT:
                message = message_from_dict(payload["message"])
                key = (message.sender_id, message.recipient_id)
                pairs.setdefault(key, PairSummary(*key))
                category_of[message.message_id] = categorize(message)
                pair_of[message.message_id] = key
            elif kind == protocol.PLAYBACK:
                playback_ids.add(payload["message_id"])
            elif kind == protocol.SENDER_VIEW_RESP:
                for record in payload.get("records", []):
                    # Later views supersede earlier ones.
                    final_states[record["message_id"]] = record["state"]

    for message_id, key in pair_of.items():
        state = final_states.get(message_id)
        if state is None or state == MessageState.PENDING.value:
            raise IncompleteLog(f"{message_id} has no terminal state")
        delivered = state in _DELIVERED_STATES
        if delivered != (message_id in playback_ids):
            raise IncompleteLog(f"{message_id}: playback frames disagree with state {state}")
        tally = pairs[key].tallies[category_of[message_id]]
        tally.sent += 1
        if delivered:
            tally.received += 1

    ordered = list(pairs.values())

    def column(values: list[float]) -> Stats | None:
        return stats(values) if values else None

    sent_stats = {
        c: column([float(p.tallies[c].sent) for p in ordered]) for c in CATEGORIES
    }
    received_stats = {
        c: column([float(p.tallies[c].received) for p in ordered]) for c in CATEGORIES
    }
    rate_stats = {
        c: column([float(p.tallies[c].rate) for p in ordered if p.tallies[c].rate is not None])
        for c in CATEGORIES
    }
    return Report(
        pairs=ordered,
        sent_stats=sent_stats,
        received_stats=received_stats,
        rate_stats=rate_stats,
    )


def summarize_paths(paths: Sequence[str | Path]) -> Report:
    return summarize_frames_groups(protocol.read_frames(p) for p in paths)


# -- rendering ---------------------------------------------------------------


def _fmt_count(x: float | None) -> str:
    if x is None:
        return "N/A"
    text = f"{x:.2f}".rstrip("0").rstrip(".")
    return text if text else "0"


def _fmt_rate_median(x: float | None) -> str:
    return "N/A" if x is None else f"{round_half_up(x)}%"


def _fmt_rate_mean(x: float | None) -> str:
    return "N/A" if x is None else f"{x:.1f}%"


def _fmt_rate_sd(x: float | None) -> str:
    return "N/A" if x is None else f"{x:.1f}"


def _rate_cell(rate: int | None) -> str:
    return "N/A" if rate is None else f"{rate}%"


def _table(rows: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for row in rows:
        cells = [row[0].ljust(widths[0])] + [
            cell.rjust(w) for cell, w in zip(row[1:], widths[1:])
        ]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def render_text(report: Report) -> str:
    """Aligned per-pair counts and rates with Median/Mean/SD rows appended."""
    header = ["Pair"]
    for c in CATEGORIES:
        title = CATEGORY_TITLES[c]
        header += [f"{title} Sent", f"{title} Rcvd", f"{title} Rate"]
    rows = [header]
    for pair in report.pairs:
        row = [pair.pair_id]
        for c in CATEGORIES:
            tally = pair.tallies[c]
            row += [str(tally.sent), str(tally.received), _rate_cell(tally.rate)]
        rows.append(row)

    def summary_row(name: str, pick) -> list[str]:
        row = [name]
        for c in CATEGORIES:
            sent, received, rate = report.sent_stats[c], report.received_stats[c], report.rate_stats[c]
            row += pick(sent, received, rate)
        return row

    if report.pairs:
        rows.append(
            summary_row(
                "Median",
                lambda s, r, rt: [
                    _fmt_count(s.median if s else None),
                    _fmt_count(r.median if r else None),
                    _fmt_rate_median(rt.median if rt else None),
                ],
            )
        )
        rows.append(
            summary_row(
                "Mean",
                lambda s, r, rt: [
                    _fmt_count(s.mean if s else None),
                    _fmt_count(r.mean if r else None),
                    _fmt_rate_mean(rt.mean if rt else None),
                ],
            )
        )
        rows.append(
            summary_row(
                "SD",
                lambda s, r, rt: [
                    _fmt_count(s.sd if s else None),
                    _fmt_count(r.sd if r else None),
                    _fmt_rate_sd(rt.sd if rt else None),
                ],
            )
        )
    return _table(rows) + "\n"


def render_csv(report: Report) -> str:
    """One row per pair, summary rows appended; cells match the text report."""
    header = ["pair", "sender", "recipient"]
    for c in CATEGORIES:
        header += [f"{c}_sent", f"{c}_received", f"{c}_rate"]
    lines = [",".join(header)]
    for pair in report.pairs:
        cells = [pair.pair_id, pair.sender_id, pair.recipient_id]
        for c in CATEGORIES:
            tally = pair.tallies[c]
            cells += [str(tally.sent), str(tally.received), _rate_cell(tally.rate)]
        lines.append(",".join(cells))
    if report.pairs:
        for name, pick in (
            ("Median", lambda s, r, rt: [
                _fmt_count(s.median if s else None),
                _fmt_count(r.median if r else None),
                _fmt_rate_median(rt.median if rt else None),
            ]),
            ("Mean", lambda s, r, rt: [
                _fmt_count(s.mean if s else None),
                _fmt_count(r.mean if r else None),
                _fmt_rate_mean(rt.mean if rt else None),
            ]),
            ("SD", lambda s, r, rt: [
                _fmt_count(s.sd if s else None),
                _fmt_count(r.sd if r else None),
                _fmt_rate_sd(rt.sd if rt else None),
            ]),
        ):
            cells = [name, "", ""]
            for c in CATEGORIES:
                cells += pick(report.sent_stats[c], report.received_stats[c], report.rate_stats[c])
            lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
