"""RTTM/UEM I/O and DER scoring against hand computations and the
brute-force oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from der_oracle import der_oracle, random_diarization
from diarkit.errors import FormatError, InputError
from diarkit.metrics import (
    RttmTurn,
    compute_der,
    diarization_to_turns,
    emit_rttm,
    parse_rttm,
    parse_uem,
    turns_to_diarization,
    vad_frame_accuracy,
)
from diarkit.segments import Diarization, Segment


def diar(recording_id, *turns):
    return Diarization(recording_id, [(Segment(a, b), s) for a, b, s in turns])


class TestRttm:
    def test_emit_template(self):
        line = emit_rttm([RttmTurn("rec1", 1.25, 3.5, "spk01")])
        assert line == "SPEAKER rec1 1 1.250 3.500 <NA> <NA> spk01 <NA> <NA>\n"

    def test_empty(self):
        assert parse_rttm("") == []
        assert emit_rttm([]) == ""

    def test_roundtrip_random(self):
        rng = np.random.default_rng(0)
        turns = [
            RttmTurn(
                f"rec{rng.integers(3)}",
                round(float(rng.uniform(0, 100)), 3),
                round(float(rng.uniform(0.01, 20)), 3),
                f"spk{rng.integers(5)}",
            )
            for _ in range(30)
        ]
        assert parse_rttm(emit_rttm(turns)) == turns

    def test_ignores_other_record_types(self):
        text = (
            "NON-LEX rec1 1 5.0 1.0 <NA> <NA> laugh <NA> <NA>\n"
            "SPEAKER rec1 1 0.000 2.000 <NA> <NA> a <NA> <NA>\n"
            ";; comment\n"
        )
        turns = parse_rttm(text)
        assert len(turns) == 1
        assert turns[0].speaker == "a"

    def test_malformed_line_reports_number(self):
        text = "SPEAKER rec1 1 0.0 1.0 <NA> <NA> a <NA> <NA>\nSPEAKER rec1 1 oops\n"
        with pytest.raises(FormatError, match="line 2"):
            parse_rttm(text)

    def test_non_numeric_time(self):
        with pytest.raises(FormatError, match="line 1"):
            parse_rttm("SPEAKER rec1 1 zero 1.0 <NA> <NA> a <NA> <NA>\n")

    def test_negative_duration_rejected(self):
        with pytest.raises(FormatError):
            parse_rttm("SPEAKER rec1 1 1.0 -2.0 <NA> <NA> a <NA> <NA>\n")

    def test_uem_parsing(self):
        regions = parse_uem("rec1 1 0.0 10.0\nrec2 1 5.0 6.0\nrec1 1 20.0 30.0\n")
        assert len(regions["rec1"]) == 2
        assert regions["rec2"] == [Segment(5.0, 6.0)]


class TestDerHandExamples:
    def test_identical_is_zero(self):
        d = diar("r", (0, 10, "a"), (12, 15, "b"))
        report = compute_der(d, d)
        assert report.der == 0.0
        assert report.miss == report.false_alarm == report.confusion == 0.0

    def test_miss_twenty_percent(self):
        ref = diar("r", (0, 10, "A"))
        hyp = diar("r", (0, 8, "A"))
        report = compute_der(ref, hyp)
        assert report.miss == pytest.approx(0.2, abs=1e-9)
        assert report.der == pytest.approx(0.2, abs=1e-9)
        assert report.total_ref_s == pytest.approx(10.0)

    def test_confusion_fifty_percent(self):
        ref = diar("r", (0, 5, "A"), (5, 10, "B"))
        hyp = diar("r", (0, 10, "X"))
        report = compute_der(ref, hyp)
        assert report.confusion == pytest.approx(0.5, abs=1e-9)
        assert report.der == pytest.approx(0.5, abs=1e-9)
        assert report.mapping["X"] in ("A", "B")

    def test_overlap_miss_fifty_percent(self):
        ref = diar("r", (0, 10, "A"), (0, 10, "B"))
        hyp = diar("r", (0, 10, "A"))
        report = compute_der(ref, hyp)
        assert report.total_ref_s == pytest.approx(20.0)
        assert report.miss == pytest.approx(0.5, abs=1e-9)
        assert report.der == pytest.approx(0.5, abs=1e-9)

    def test_recording_mismatch(self):
        with pytest.raises(InputError):
            compute_der(diar("a", (0, 1, "x")), diar("b", (0, 1, "x")))

    def test_empty_reference_rejected(self):
        with pytest.raises(InputError):
            compute_der(Diarization("r", []), diar("r", (0, 1, "x")))


class TestDerProperties:
    def test_relabel_invariance(self):
        rng = np.random.default_rng(1)
        ref_t = random_diarization(rng, 3, 30)
        hyp_t = random_diarization(rng, 3, 30)
        ref = diar("r", *ref_t)
        hyp = diar("r", *hyp_t)
        relabeled = diar("r", *[(a, b, s + "_renamed") for a, b, s in hyp_t])
        assert compute_der(ref, hyp).der == pytest.approx(
            compute_der(ref, relabeled).der, abs=1e-12
        )

    def test_self_score_zero_with_overlap(self):
        for seed in range(5):
            turns = random_diarization(np.random.default_rng(seed), 4, 40)
            d = diar("r", *turns)
            assert compute_der(d, d).der == 0.0

    def test_components_sum_to_der(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            ref = diar("r", *random_diarization(rng, 3, 25))
            hyp = diar("r", *random_diarization(rng, 3, 25))
            r = compute_der(ref, hyp)
            assert r.der == pytest.approx(r.miss + r.false_alarm + r.confusion, abs=1e-9)
            assert min(r.miss, r.false_alarm, r.confusion) >= 0.0

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_matches_brute_force_oracle(self, seed):
        rng = np.random.default_rng(seed)
        ref_turns = random_diarization(rng, int(rng.integers(1, 5)), 20)
        hyp_turns = random_diarization(rng, int(rng.integers(1, 5)), 20)
        report = compute_der(diar("r", *ref_turns), diar("r", *hyp_turns))
        der, miss, fa, conf = der_oracle(ref_turns, hyp_turns)
        assert report.der == pytest.approx(der, abs=1e-9)
        assert report.miss == pytest.approx(miss, abs=1e-9)
        assert report.false_alarm == pytest.approx(fa, abs=1e-9)
        assert report.confusion == pytest.approx(conf, abs=1e-9)


class TestUemAndCollar:
    def test_uem_restricts_scoring(self):
        ref = diar("r", (0, 10, "A"))
        hyp = diar("r", (0, 5, "A"))  # misses 5..10
        full = compute_der(ref, hyp)
        limited = compute_der(ref, hyp, uem=[Segment(0.0, 5.0)])
        assert full.miss == pytest.approx(0.5, abs=1e-9)
        assert limited.der == 0.0
        assert limited.total_ref_s == pytest.approx(5.0)

    def test_collar_forgives_boundaries(self):
        ref = diar("r", (0, 10, "A"))
        hyp = diar("r", (0.2, 10, "A"))  # 200 ms late entry
        strict = compute_der(ref, hyp)
        forgiving = compute_der(ref, hyp, collar_s=0.25)
        assert strict.miss > 0.0
        assert forgiving.der == 0.0

    def test_overlap_exclusion(self):
        ref = diar("r", (0, 10, "A"), (5, 10, "B"))
        hyp = diar("r", (0, 10, "A"))
        scored = compute_der(ref, hyp, score_overlap=False)
        # overlapped frames (5..10) excluded: remaining ref is A on 0..5
        assert scored.total_ref_s == pytest.approx(5.0)
        assert scored.der == 0.0


class TestDiarizationConversion:
    def test_round_trip(self):
        d = diar("rec", (0, 1.5, "a"), (1.0, 2.0, "b"))
        back = turns_to_diarization(diarization_to_turns(d), "rec")
        assert back.turns == d.turns

    def test_file_filter(self):
        turns = diarization_to_turns(diar("x", (0, 1, "a")))
        assert turns_to_diarization(turns, "other").turns == []


class TestVadAccuracy:
    def test_identical(self):
        mask = np.array([1.0, 0.0, 1.0])
        assert vad_frame_accuracy(mask, mask) == 1.0

    def test_complementary(self):
        a = np.array([1.0, 0.0, 1.0, 0.0])
        assert vad_frame_accuracy(a, 1.0 - a) == 0.0

    def test_half(self):
        assert vad_frame_accuracy(np.array([1.0, 1.0]), np.array([1.0, 0.0])) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            vad_frame_accuracy(np.ones(3), np.ones(4))
