import threading

import pytest

from oceanarium.agents import ScriptedChatBackend, ScriptRule
from oceanarium.pipeline import (
    ExhibitService,
    PipelineResult,
    RuleSnapshot,
    pace_subtitles,
    replay_transcript,
)
from oceanarium.session import MockTextToSpeech
from oceanarium.transcripts import TranscriptStore, canonical_bytes, diff_records
from oceanarium.triggers import KeywordMatcher, TriggerRule
from oceanarium.vindex import RetrievalConfig, build_index

from conftest import make_service


class TestSubtitles:
    def test_three_word_response_single_cue(self):
        cues = pace_subtitles("the sea remembers", 1.2)
        assert len(cues) == 1
        assert cues[0].duration_s == pytest.approx(1.2)
        assert cues[0].start_s == 0.0

    def test_durations_sum_to_clip_length(self):
        text = " ".join(f"word{i}" for i in range(20))
        cues = pace_subtitles(text, 8.0)
        assert len(cues) == 4
        assert sum(c.duration_s for c in cues) == pytest.approx(8.0, abs=1e-4)
        starts = [c.start_s for c in cues]
        assert starts == sorted(starts)

    def test_empty_text_no_cues(self):
        assert pace_subtitles("", 2.0) == []


class TestRunPipeline:
    def test_green_water_fixture_flow(self, service):
        result = service.run_pipeline("visitor-1", "why is the water green", issued_at=100.0)
        # frozen after a verified first run of the fixture corpus + shipped script
        assert result.visual.token == "CHLOROPHYLL"
        assert result.rewritten == "phytoplankton blooms coastal water color chlorophyll"
        assert len(result.hits) == 2
        assert len({h.para_id for h in result.hits}) == 2
        assert result.response_text.strip()
        assert result.synthesis.duration_s > 0
        assert set(result.timings) == {
            "decider",
            "rewriter",
            "retrieval",
            "responder",
            "triggers",
            "tts",
            "total",
        }

    def test_retrieved_paragraphs_reach_responder_prompt(self, service):
        result = service.run_pipeline("visitor-2", "why is the water green")
        responder_messages = service.backend.calls[-1][0]
        prompt = responder_messages[-1].content
        for hit in result.hits:
            assert prompt.count(hit.paragraph_text) == 1

    def test_visual_description_present_iff_selected(self, service, standard_catalog):
        result = service.run_pipeline("visitor-3", "why is the water green")
        assert result.visual.token == "CHLOROPHYLL"
        prompt = service.backend.calls[-1][0][-1].content
        description = next(e.description for e in standard_catalog if e.token == "CHLOROPHYLL")
        assert description in prompt

        service.run_pipeline("visitor-3", "hello there")
        prompt = service.backend.calls[-1][0][-1].content
        assert service.prompts.visual_block_label not in prompt

    def test_empty_corpus_degrades_gracefully(
        self, mock_provider, standard_catalog, standard_rules, prompts, tmp_path
    ):
        empty_index = build_index([], dimension=384)
        service = make_service(
            empty_index, mock_provider, standard_catalog, standard_rules, prompts, tmp_path
        )
        result = service.run_pipeline("visitor-4", "why is the water green")
        assert result.hits == []
        assert result.response_text.strip()
        prompt = service.backend.calls[-1][0][-1].content
        assert service.prompts.paragraph_block_label not in prompt

    def test_trigger_events_recorded_with_cooldown(self, service):
        first = service.run_pipeline("visitor-5", "how warm is the sea", issued_at=100.0)
        assert any(e.rule_id == "warming" for e in first.events)
        second = service.run_pipeline("visitor-5", "how warm is the sea", issued_at=110.0)
        assert not any(e.rule_id == "warming" for e in second.events)
        third = service.run_pipeline("visitor-5", "how warm is the sea", issued_at=200.0)
        assert any(e.rule_id == "warming" for e in third.events)

    def test_cooldowns_isolated_between_sessions(self, service):
        first = service.run_pipeline("visitor-6", "how warm is the sea", issued_at=100.0)
        other = service.run_pipeline("visitor-7", "how warm is the sea", issued_at=101.0)
        assert any(e.rule_id == "warming" for e in first.events)
        assert any(e.rule_id == "warming" for e in other.events)

    def test_tts_failure_keeps_subtitles(
        self, corpus_index, mock_provider, standard_catalog, standard_rules, prompts, tmp_path
    ):
        service = make_service(
            corpus_index,
            mock_provider,
            standard_catalog,
            standard_rules,
            prompts,
            tmp_path,
            tts=MockTextToSpeech(fail=True),
        )
        result = service.run_pipeline("visitor-8", "how warm is the sea")
        assert result.synthesis.duration_s == 0.0
        assert result.subtitles  # still emitted against a zero-length clip

    def test_empty_query_rejected(self, service):
        with pytest.raises(ValueError):
            service.run_pipeline("visitor-9", "   ")

    def test_history_carried_between_turns(self, service):
        service.run_pipeline("visitor-10", "tell me about plankton")
        service.run_pipeline("visitor-10", "and how warm is the sea")
        responder_messages = service.backend.calls[-1][0]
        contents = [m.content for m in responder_messages]
        assert any("tell me about plankton" == c for c in contents)


class TestDeterminism:
    def test_identical_runs_byte_identical(
        self, corpus_index, mock_provider, standard_catalog, standard_rules, prompts, tmp_path
    ):
        queries = [
            "why is the water green",
            "how warm is the sea",
            "tell me about plankton",
            "where does the carbon go",
            "hello ocean",
        ]
        blobs = []
        for run in range(2):
            service = make_service(
                corpus_index,
                mock_provider,
                standard_catalog,
                standard_rules,
                prompts,
                tmp_path / f"run{run}",
            )
            run_blobs = [
                service.run_pipeline("s1", q, issued_at=50.0 * i).canonical()
                for i, q in enumerate(queries)
            ]
            blobs.append(run_blobs)
        assert blobs[0] == blobs[1]

    def test_canonical_excludes_timings_only(self, service):
        result = service.run_pipeline("s2", "hello ocean", issued_at=1.0)
        record = result.to_dict()
        import json

        canonical = json.loads(canonical_bytes(record))
        assert "timings" not in canonical
        assert set(record) - set(canonical) == {"timings"}


class TestTranscripts:
    def test_append_only_one_record_per_run(self, service):
        service.run_pipeline("s3", "hello ocean")
        service.run_pipeline("s3", "how warm is the sea")
        records = service.store.read("s3")
        assert len(records) == 2
        assert records[0]["query"] == "hello ocean"

    def test_replay_reproduces_records(
        self, corpus_index, mock_provider, standard_catalog, standard_rules, prompts, tmp_path
    ):
        recorder = make_service(
            corpus_index, mock_provider, standard_catalog, standard_rules, prompts, tmp_path / "a"
        )
        for i, query in enumerate(["hello ocean", "tell me about plankton", "sea level worries me"]):
            recorder.run_pipeline("st-1", query, issued_at=10.0 * i)
        records = recorder.store.read("st-1")

        replayer = make_service(
            corpus_index, mock_provider, standard_catalog, standard_rules, prompts, tmp_path / "b"
        )
        outcomes = replay_transcript(replayer, records)
        assert all(not differences for _, _, differences in outcomes)

    def test_diff_reports_changed_fields(self):
        a = {"query": "x", "response_text": "one", "timings": {"total": 1.0}}
        b = {"query": "x", "response_text": "two", "timings": {"total": 9.0}}
        differences = diff_records(a, b)
        assert differences == ["response_text: recorded='one' replayed='two'"]


class TestRuleReload:
    def test_reload_bumps_version_and_swaps(self, service):
        old = service.rules_snapshot
        new_rules = [TriggerRule("only", ["kelp"], "layer_on", {"token": "KD"})]
        version = service.reload_rules(new_rules)
        assert version == old.version + 1
        assert [r.rule_id for r in service.rules_snapshot.rules] == ["only"]

    def test_reload_requires_rules_or_path(self, service):
        with pytest.raises(ValueError):
            service.reload_rules()

    def test_inflight_scan_uses_preswap_snapshot(
        self, corpus_index, mock_provider, standard_catalog, standard_rules, prompts, tmp_path
    ):
        service = make_service(
            corpus_index, mock_provider, standard_catalog, standard_rules, prompts, tmp_path
        )
        gate = threading.Event()
        release = threading.Event()

        class InstrumentedMatcher(KeywordMatcher):
            def scan(self, text, *, now=0.0, cooldowns=None):
                gate.set()
                release.wait(timeout=5)
                return super().scan(text, now=now, cooldowns=cooldowns)

        snapshot = service.rules_snapshot
        service._rules = RuleSnapshot(
            version=snapshot.version,
            rules=snapshot.rules,
            matcher=InstrumentedMatcher(snapshot.rules),
        )

        result_box = {}

        def run():
            result_box["result"] = service.run_pipeline("race-1", "how warm is the sea")

        worker = threading.Thread(target=run)
        worker.start()
        assert gate.wait(timeout=5)
        service.reload_rules([TriggerRule("replacement", ["warm"], "layer_off", {})])
        release.set()
        worker.join(timeout=10)
        fired = {e.rule_id for e in result_box["result"].events}
        assert "warming" in fired
        assert "replacement" not in fired


class TestSessionSnapshots:
    def test_snapshot_tracks_visual_and_layers(self, service):
        service.run_pipeline("snap-1", "why is the water green")
        snapshot = service.snapshot("snap-1")
        assert snapshot["central_visual"] == "CHLOROPHYLL"
        assert "CHLOROPHYLL" in snapshot["active_layers"]
        assert snapshot["state"] == "idle"

    def test_force_visual_validates_token(self, service):
        with pytest.raises(KeyError):
            service.force_visual("snap-2", "BOGUS")
        out = service.force_visual("snap-2", "SST")
        assert out["token"] == "SST"
        assert service.snapshot("snap-2")["central_visual"] == "SST"
        service.force_visual("snap-2", "NONE")
        assert service.snapshot("snap-2")["central_visual"] is None
