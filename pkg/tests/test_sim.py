from __future__ import annotations

import copy
import json
import random

import pytest

from wandrelay import protocol, sim
from wandrelay.errors import ParseError
from wandrelay.model import MessageState

from conftest import at
from genrandom import lat_off, lon_off, random_scenario_dict
from oracles import oracle_interpolate, recount_pairs


def minimal_scenario(**overrides) -> dict:
    doc = {
        "v": 1,
        "name": "mini",
        "seed": 3,
        "tick": 1.0,
        "end": "2021-06-05T09:02:00Z",
        "markers": [
            {"marker_id": "mk-desk", "position": {"lat": lat_off(0), "lon": lon_off(0)}}
        ],
        "recipients": [
            {
                "principal": "r1",
                "wear_sessions": [
                    {"start": "2021-06-05T09:00:00Z", "end": "2021-06-05T09:02:00Z"}
                ],
                "trajectory": [
                    {"t": "2021-06-05T09:00:00Z", "lat": lat_off(0), "lon": lon_off(0)},
                    {"t": "2021-06-05T09:02:00Z", "lat": lat_off(0), "lon": lon_off(0)},
                ],
            }
        ],
        "sender_script": [
            {
                "at": "2021-06-05T08:59:00Z",
                "label": "hello",
                "sender_id": "s1",
                "recipient_id": "r1",
                "content_id": "dog",
                "scale": 1.0,
                "voice_note": {"duration": 3.0, "transcript": "hi"},
                "schedule": None,
            }
        ],
        "consent_policy": {"default": "yes"},
    }
    doc.update(overrides)
    return doc


class TestLoadScenario:
    def test_minimal_scenario_parses(self, tmp_path):
        path = tmp_path / "mini.json"
        path.write_text(json.dumps(minimal_scenario()))
        scenario = sim.load_scenario(path)
        assert scenario.name == "mini"
        assert len(scenario.recipients) == 1
        assert scenario.sender_ids == ("s1",)

    def test_missing_file(self):
        with pytest.raises(ParseError):
            sim.load_scenario("does/not/exist.json")

    def test_waypoints_out_of_order(self):
        doc = minimal_scenario()
        doc["recipients"][0]["trajectory"] = [
            {"t": "2021-06-05T09:01:00Z", "lat": lat_off(0), "lon": lon_off(0)},
            {"t": "2021-06-05T09:00:00Z", "lat": lat_off(0), "lon": lon_off(0)},
            {"t": "2021-06-05T09:02:00Z", "lat": lat_off(0), "lon": lon_off(0)},
        ]
        with pytest.raises(ParseError, match="strictly increasing"):
            sim.scenario_from_dict(doc)

    def test_undeclared_marker_in_schedule(self):
        doc = minimal_scenario()
        doc["sender_script"][0]["schedule"] = {"marker": {"marker_id": "mk-ghost"}}
        with pytest.raises(ParseError, match="UnknownMarker"):
            sim.scenario_from_dict(doc)

    def test_trajectory_must_reach_end(self):
        doc = minimal_scenario()
        doc["recipients"][0]["trajectory"][-1]["t"] = "2021-06-05T09:01:00Z"
        with pytest.raises(ParseError, match="extend to the scenario end"):
            sim.scenario_from_dict(doc)

    def test_submission_after_end_rejected(self):
        doc = minimal_scenario()
        doc["sender_script"][0]["at"] = "2021-06-05T09:30:00Z"
        with pytest.raises(ParseError, match="before the scenario end"):
            sim.scenario_from_dict(doc)

    def test_duplicate_labels_rejected(self):
        doc = minimal_scenario()
        doc["sender_script"].append(copy.deepcopy(doc["sender_script"][0]))
        with pytest.raises(ParseError, match="duplicate label"):
            sim.scenario_from_dict(doc)

    def test_consent_override_for_unknown_label(self):
        doc = minimal_scenario()
        doc["consent_policy"] = {"default": "yes", "by_label": {"ghost": "no"}}
        with pytest.raises(ParseError, match="unknown label"):
            sim.scenario_from_dict(doc)

    def test_overlapping_wear_sessions_rejected(self):
        doc = minimal_scenario()
        doc["recipients"][0]["wear_sessions"] = [
            {"start": "2021-06-05T09:00:00Z", "end": "2021-06-05T09:01:30Z"},
            {"start": "2021-06-05T09:01:00Z", "end": "2021-06-05T09:02:00Z"},
        ]
        with pytest.raises(ParseError, match="disjoint"):
            sim.scenario_from_dict(doc)


class TestSampleStream:
    def build(self, trajectory, wear, tick=1.0, end="2021-06-05T09:02:00Z"):
        doc = minimal_scenario(tick=tick, end=end, sender_script=[])
        doc["recipients"][0]["trajectory"] = trajectory
        doc["recipients"][0]["wear_sessions"] = wear
        return sim.scenario_from_dict(doc)

    def test_waypoint_hit_exactly(self):
        scenario = sim.scenario_from_dict(minimal_scenario())
        samples = list(sim.sample_stream(scenario, scenario.recipients[0]))
        assert samples[0].t == at("09:00:00")
        assert samples[0].lat == pytest.approx(lat_off(0))
        assert len(samples) == 121  # 09:00:00..09:02:00 inclusive at 1 Hz

    def test_midpoint_of_20m_segment_is_10m_along(self):
        # two waypoints 20 m apart (north-south), sampled at the midpoint
        trajectory = [
            {"t": "2021-06-05T09:00:00Z", "lat": lat_off(0), "lon": lon_off(0)},
            {"t": "2021-06-05T09:01:00Z", "lat": lat_off(20), "lon": lon_off(0)},
            {"t": "2021-06-05T09:02:00Z", "lat": lat_off(20), "lon": lon_off(0)},
        ]
        scenario = self.build(trajectory, [])
        samples = {s.t: s for s in sim.sample_stream(scenario, scenario.recipients[0])}
        mid = samples[at("09:00:30")]
        want_lat, want_lon = oracle_interpolate(
            [(0.0, lat_off(0), lon_off(0)), (60.0, lat_off(20), lon_off(0))], 30.0
        )
        assert mid.lat == pytest.approx(want_lat, abs=1e-12)
        assert mid.lon == pytest.approx(want_lon, abs=1e-12)
        assert mid.lat == pytest.approx(lat_off(10), abs=1e-9)

    def test_wearing_flag_tracks_sessions(self):
        scenario = self.build(
            [
                {"t": "2021-06-05T09:00:00Z", "lat": lat_off(0), "lon": lon_off(0)},
                {"t": "2021-06-05T09:02:00Z", "lat": lat_off(0), "lon": lon_off(0)},
            ],
            [{"start": "2021-06-05T09:00:30Z", "end": "2021-06-05T09:01:00Z"}],
        )
        samples = {s.t: s for s in sim.sample_stream(scenario, scenario.recipients[0])}
        assert not samples[at("09:00:29")].wearing
        assert samples[at("09:00:30")].wearing
        assert samples[at("09:01:00")].wearing
        assert not samples[at("09:01:01")].wearing

    def test_marker_visibility_radius(self):
        # walk past the marker: visible only within 5 m
        trajectory = [
            {"t": "2021-06-05T09:00:00Z", "lat": lat_off(-20), "lon": lon_off(0)},
            {"t": "2021-06-05T09:00:40Z", "lat": lat_off(20), "lon": lon_off(0)},
            {"t": "2021-06-05T09:02:00Z", "lat": lat_off(20), "lon": lon_off(0)},
        ]
        scenario = self.build(trajectory, [])
        samples = list(sim.sample_stream(scenario, scenario.recipients[0]))
        visible_ts = [s.t for s in samples if "mk-desk" in s.visible_markers]
        # 1 m/s crossing at 09:00:20: within 5 m between 09:00:15 and 09:00:25
        assert visible_ts and visible_ts[0] == at("09:00:15") and visible_ts[-1] == at("09:00:25")

    def test_positions_stay_inside_waypoint_bounding_box(self):
        rng = random.Random(4)
        for _ in range(20):
            doc = random_scenario_dict(rng, "bbox")
            scenario = sim.scenario_from_dict(doc)
            recipient = scenario.recipients[0]
            lats = [w.lat for w in recipient.trajectory]
            lons = [w.lon for w in recipient.trajectory]
            for s in sim.sample_stream(scenario, recipient):
                assert min(lats) - 1e-12 <= s.lat <= max(lats) + 1e-12
                assert min(lons) - 1e-12 <= s.lon <= max(lons) + 1e-12


class TestRun:
    def test_direct_message_full_loop(self):
        result = sim.run(sim.scenario_from_dict(minimal_scenario()))
        kinds = [f["kind"] for f in result.frames]
        assert kinds.count("PLAYBACK") == 1
        assert kinds.count("REACTION_NOTIFY") == 1
        assert list(result.final_states.values()) == [MessageState.REACTED]

    def test_consent_no_discards(self):
        doc = minimal_scenario(consent_policy={"default": "no"})
        result = sim.run(sim.scenario_from_dict(doc))
        kinds = [f["kind"] for f in result.frames]
        assert kinds.count("PLAYBACK") == 1
        assert kinds.count("REACTION_NOTIFY") == 0
        assert list(result.final_states.values()) == [MessageState.REACTION_DECLINED]

    def test_same_scenario_runs_identically(self, tmp_path):
        doc = minimal_scenario()
        first = tmp_path / "a.ndjson"
        second = tmp_path / "b.ndjson"
        sim.run(sim.scenario_from_dict(doc), log_path=first)
        sim.run(sim.scenario_from_dict(doc), log_path=second)
        assert first.read_bytes() == second.read_bytes()

    def test_seed_changes_ids_but_not_shape(self):
        doc = minimal_scenario()
        a = sim.run(sim.scenario_from_dict(doc))
        doc["seed"] = 99
        b = sim.run(sim.scenario_from_dict(doc))
        assert [f["kind"] for f in a.frames] == [f["kind"] for f in b.frames]
        assert set(a.final_states) != set(b.final_states)

    def test_conservation_on_random_scenarios(self):
        rng = random.Random(2024)
        for i in range(15):
            doc = random_scenario_dict(rng, f"cons{i}")
            result = sim.run(sim.scenario_from_dict(doc))
            submitted = sum(1 for f in result.frames if f["kind"] == "SUBMIT")
            states = list(result.final_states.values())
            delivered = sum(
                1
                for s in states
                if s in (MessageState.DELIVERED, MessageState.REACTED, MessageState.REACTION_DECLINED)
            )
            expired = sum(1 for s in states if s is MessageState.EXPIRED)
            assert submitted == len(states) == delivered + expired

    def test_terminal_views_match_playback_recount(self):
        rng = random.Random(77)
        doc = random_scenario_dict(rng, "recount")
        result = sim.run(sim.scenario_from_dict(doc))
        recount = recount_pairs([result.frames])
        delivered_by_state = sum(
            1
            for s in result.final_states.values()
            if s in (MessageState.DELIVERED, MessageState.REACTED, MessageState.REACTION_DECLINED)
        )
        delivered_by_frames = sum(
            delivered for cats in recount.values() for (_, delivered) in cats.values()
        )
        assert delivered_by_state == delivered_by_frames
