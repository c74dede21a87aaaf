"""Alignment parsing, toy corpus generation, validation, and manifests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singsynth import mrsv
from singsynth.corpus import (
    AlignmentError,
    CorpusManifest,
    ManifestEntry,
    PhonemeAlignment,
    ToySpeakerSpec,
    corpus_digest,
    default_toy_speakers,
    generate_toy_corpus,
    load_alignment,
    load_manifest,
    render_toy_utterance,
    save_manifest,
    toy_inventory,
    validate_corpus,
    write_alignment,
)
from singsynth.signal import FeatureConfig

CFG = FeatureConfig()
HOP_S = CFG.hop_seconds
INVENTORY = {label: i for i, label in enumerate(toy_inventory())}


class TestPhonemeAlignment:
    def test_total_frames_and_len(self):
        a = PhonemeAlignment([0, 3, 1], [10, 0, 5])
        assert a.total_frames == 15
        assert len(a) == 3

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError, match="equal-length"):
            PhonemeAlignment([0, 1], [10])

    def test_rejects_negative_durations(self):
        with pytest.raises(ValueError, match="negative"):
            PhonemeAlignment([0, 1], [10, -1])


class TestAlignmentFiles:
    def write(self, tmp_path, text):
        path = tmp_path / "a.txt"
        path.write_text(text)
        return path

    def test_round_trip(self, tmp_path):
        labels = ["sil", "n00", "sil", "n01", "sil"]
        durations = np.array([8, 30, 4, 25, 9])
        path = tmp_path / "a.txt"
        write_alignment(path, labels, durations, HOP_S)
        parsed = load_alignment(path, HOP_S, INVENTORY)
        np.testing.assert_array_equal(
            parsed.phonemes, [INVENTORY[label] for label in labels]
        )
        np.testing.assert_array_equal(parsed.durations, durations)

    @given(
        durations=st.lists(st.integers(min_value=0, max_value=60), min_size=1, max_size=12)
    )
    @settings(max_examples=40, deadline=None)
    def test_round_trip_any_durations(self, tmp_path_factory, durations):
        labels = [("sil", "n00")[i % 2] for i in range(len(durations))]
        path = tmp_path_factory.mktemp("align") / "a.txt"
        write_alignment(path, labels, np.array(durations), HOP_S)
        parsed = load_alignment(path, HOP_S, INVENTORY)
        np.testing.assert_array_equal(parsed.durations, durations)

    def test_comments_and_blank_lines_skipped(self, tmp_path):
        path = self.write(
            tmp_path,
            "# remark\nframes 10\n\nsil 0.0 {:.9f}  # trailing\n".format(10 * HOP_S),
        )
        parsed = load_alignment(path, HOP_S, INVENTORY)
        assert parsed.total_frames == 10

    def test_boundaries_round_to_nearest_frame(self, tmp_path):
        # 0.40 frames rounds down, 2.6 frames rounds up to 3
        path = self.write(
            tmp_path,
            "frames 6\nsil 0.0 {:.9f}\nn00 {:.9f} {:.9f}\n".format(
                0.4 * HOP_S, 0.4 * HOP_S, 6.0 * HOP_S
            ),
        )
        parsed = load_alignment(path, HOP_S, INVENTORY)
        np.testing.assert_array_equal(parsed.durations, [0, 6])

    def test_drift_lands_in_final_phoneme(self, tmp_path):
        path = self.write(
            tmp_path,
            "frames 12\nsil 0.0 {:.9f}\nn00 {:.9f} {:.9f}\n".format(
                5 * HOP_S, 5 * HOP_S, 10 * HOP_S
            ),
        )
        parsed = load_alignment(path, HOP_S, INVENTORY)
        np.testing.assert_array_equal(parsed.durations, [5, 7])

    def test_missing_header(self, tmp_path):
        path = self.write(tmp_path, "sil 0.0 0.5\n")
        with pytest.raises(AlignmentError, match=r"a\.txt:1.*header"):
            load_alignment(path, HOP_S, INVENTORY)

    def test_empty_file(self, tmp_path):
        path = self.write(tmp_path, "# nothing\n")
        with pytest.raises(AlignmentError, match="header"):
            load_alignment(path, HOP_S, INVENTORY)

    def test_header_only(self, tmp_path):
        path = self.write(tmp_path, "frames 10\n")
        with pytest.raises(AlignmentError, match="empty"):
            load_alignment(path, HOP_S, INVENTORY)

    def test_wrong_field_count_names_line(self, tmp_path):
        path = self.write(tmp_path, "frames 10\nsil 0.0\n")
        with pytest.raises(AlignmentError, match=r"a\.txt:2"):
            load_alignment(path, HOP_S, INVENTORY)

    def test_bad_times_name_line(self, tmp_path):
        path = self.write(tmp_path, "frames 10\nsil zero 0.5\n")
        with pytest.raises(AlignmentError, match=r"a\.txt:2.*times"):
            load_alignment(path, HOP_S, INVENTORY)

    def test_unknown_label(self, tmp_path):
        path = self.write(tmp_path, "frames 10\nxx 0.0 {:.9f}\n".format(10 * HOP_S))
        with pytest.raises(AlignmentError, match="unknown phoneme label 'xx'"):
            load_alignment(path, HOP_S, INVENTORY)

    def test_gap_between_intervals(self, tmp_path):
        path = self.write(
            tmp_path,
            "frames 20\nsil 0.0 {:.9f}\nn00 {:.9f} {:.9f}\n".format(
                5 * HOP_S, 7 * HOP_S, 20 * HOP_S
            ),
        )
        with pytest.raises(AlignmentError, match="non-contiguous"):
            load_alignment(path, HOP_S, INVENTORY)

    def test_overlapping_intervals(self, tmp_path):
        path = self.write(
            tmp_path,
            "frames 20\nsil 0.0 {:.9f}\nn00 {:.9f} {:.9f}\n".format(
                5 * HOP_S, 3 * HOP_S, 20 * HOP_S
            ),
        )
        with pytest.raises(AlignmentError, match="overlapping"):
            load_alignment(path, HOP_S, INVENTORY)

    def test_backwards_interval(self, tmp_path):
        path = self.write(
            tmp_path,
            "frames 20\nsil 0.0 {:.9f}\nn00 {:.9f} {:.9f}\n".format(
                5 * HOP_S, 5 * HOP_S, 2 * HOP_S
            ),
        )
        with pytest.raises(AlignmentError, match="non-monotonic"):
            load_alignment(path, HOP_S, INVENTORY)

    def test_header_inconsistent_with_intervals(self, tmp_path):
        # drift beyond what the final phoneme can absorb
        path = self.write(
            tmp_path,
            "frames 2\nsil 0.0 {:.9f}\nn00 {:.9f} {:.9f}\n".format(
                5 * HOP_S, 5 * HOP_S, 30 * HOP_S
            ),
        )
        with pytest.raises(AlignmentError, match="inconsistent"):
            load_alignment(path, HOP_S, INVENTORY)


class TestToySpeakers:
    def test_registers_alternate(self):
        specs = default_toy_speakers(4, seed=1, cfg=CFG)
        assert [s.speaker_id for s in specs] == ["spk000", "spk001", "spk002", "spk003"]
        assert specs[0].base_f0 == pytest.approx(130.0)
        assert specs[1].base_f0 == pytest.approx(260.0)
        assert specs[2].base_f0 == pytest.approx(130.0 * 1.08)
        assert specs[3].base_f0 == pytest.approx(260.0 * 1.08)

    def test_envelopes_differ_between_speakers(self):
        a, b = default_toy_speakers(2, seed=1, cfg=CFG)
        assert np.abs(a.envelope - b.envelope).max() > 0.05

    def test_same_seed_same_speakers(self):
        a = default_toy_speakers(3, seed=9, cfg=CFG)
        b = default_toy_speakers(3, seed=9, cfg=CFG)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.envelope, y.envelope)
            assert x.base_f0 == y.base_f0

    def test_spec_validates_register(self):
        with pytest.raises(ValueError, match="base_f0"):
            ToySpeakerSpec("bad", 30.0, 10.0, np.ones(80), seed=0)

    def test_spec_validates_envelope(self):
        with pytest.raises(ValueError, match="envelope"):
            ToySpeakerSpec("bad", 200.0, 50.0, np.ones(17), seed=0)


class TestRenderToyUtterance:
    def render(self, note_f0s, note_frames, silence):
        spec = default_toy_speakers(1, seed=5, cfg=CFG)[0]
        return render_toy_utterance(
            spec, np.array(note_f0s), np.array(note_frames), np.array(silence), CFG
        )

    def test_f0_is_the_commanded_contour(self):
        wave, f0, labels, durations = self.render([200.0, 300.0], [20, 25], [5, 0, 8])
        assert labels == ["sil", "n00", "n01", "sil"]
        np.testing.assert_array_equal(durations, [5, 20, 25, 8])
        np.testing.assert_array_equal(f0[:5], 0.0)
        np.testing.assert_array_equal(f0[5:25], 200.0)
        np.testing.assert_array_equal(f0[25:50], 300.0)
        np.testing.assert_array_equal(f0[50:], 0.0)

    def test_waveform_length_matches_frame_grid(self):
        wave, f0, _, _ = self.render([220.0], [30], [6, 6])
        assert len(f0) == 42
        assert len(wave) == (42 - 1) * CFG.hop_size + CFG.hop_size // 2
        assert np.abs(wave).max() <= 0.75 + 1e-6

    def test_zero_length_gaps_are_omitted(self):
        _, _, labels, durations = self.render([200.0, 250.0], [10, 10], [0, 0, 0])
        assert labels == ["n00", "n01"]
        np.testing.assert_array_equal(durations, [10, 10])

    def test_silence_count_must_match(self):
        with pytest.raises(ValueError, match="silence"):
            self.render([200.0], [10], [5])

    def test_too_many_notes(self):
        with pytest.raises(ValueError, match="notes"):
            self.render([200.0] * 11, [5] * 11, [0] * 12)


class TestGenerateToyCorpus:
    def test_layout_and_manifest(self, toy_corpus):
        root = toy_corpus.root
        assert len(toy_corpus.entries) == 8
        assert toy_corpus.speakers() == ["spk000", "spk001"]
        for sub in ("wav", "mel", "f0", "align"):
            assert len(list((root / sub).iterdir())) == 8
        assert (root / "manifest.tsv").exists()
        assert (root / "phones.txt").exists()
        assert (root / "config.json").exists()

    def test_utterances_pass_their_own_invariants(self, toy_corpus):
        report = validate_corpus(toy_corpus)
        assert report.ok, [r.problems for r in report.reports if not r.ok]

    def test_deterministic_digest(self, tmp_path):
        generate_toy_corpus(tmp_path / "a", 1, 2, seed=7)
        generate_toy_corpus(tmp_path / "b", 1, 2, seed=7)
        assert corpus_digest(tmp_path / "a") == corpus_digest(tmp_path / "b")

    def test_seed_changes_digest(self, tmp_path):
        generate_toy_corpus(tmp_path / "a", 1, 2, seed=7)
        generate_toy_corpus(tmp_path / "b", 1, 2, seed=8)
        assert corpus_digest(tmp_path / "a") != corpus_digest(tmp_path / "b")

    def test_rejects_empty_plan(self, tmp_path):
        with pytest.raises(ValueError):
            generate_toy_corpus(tmp_path / "x", 0, 4, seed=1)
        with pytest.raises(ValueError):
            generate_toy_corpus(tmp_path / "x", 2, 4, seed=1, pitch_variants=0)

    def test_features_reproducible_from_wav(self, toy_corpus):
        """Stored mel must equal re-extraction from the stored wav."""
        from singsynth.signal import extract_mel, read_wav

        utt = toy_corpus.load(toy_corpus.entries[0].utt_id, with_waveform=True)
        mel = extract_mel(utt.waveform, toy_corpus.config)
        np.testing.assert_array_equal(mel, utt.mel)


@pytest.fixture(scope="module")
def augmented(tmp_path_factory):
    root = tmp_path_factory.mktemp("augmented")
    return generate_toy_corpus(
        root, 1, 2, seed=11, pitch_variants=3, variant_span_semitones=4.0
    )


class TestPitchVariants:
    def test_variant_count_and_ids(self, augmented):
        ids = sorted(e.utt_id for e in augmented.entries)
        assert ids == [
            "spk000_utt000",
            "spk000_utt000v01",
            "spk000_utt000v02",
            "spk000_utt001",
            "spk000_utt001v01",
            "spk000_utt001v02",
        ]

    def test_base_variant_identical_to_unaugmented(self, augmented, tmp_path):
        plain = generate_toy_corpus(tmp_path / "plain", 1, 2, seed=11)
        for e in plain.entries:
            a = (augmented.root / f"wav/{e.utt_id}.wav").read_bytes()
            b = (plain.root / f"wav/{e.utt_id}.wav").read_bytes()
            assert a == b

    def test_variants_keep_alignment_change_pitch(self, augmented):
        base = augmented.load("spk000_utt000")
        variant = augmented.load("spk000_utt000v01")
        np.testing.assert_array_equal(
            base.alignment.durations, variant.alignment.durations
        )
        np.testing.assert_array_equal(
            base.alignment.phonemes, variant.alignment.phonemes
        )
        np.testing.assert_array_equal(base.f0 > 0, variant.f0 > 0)
        voiced = base.f0 > 0
        ratio = variant.f0[voiced] / base.f0[voiced]
        # one global transposition factor per variant
        assert ratio.std() < 1e-6
        assert abs(float(ratio.mean()) - 1.0) > 0.01

    def test_variant_pitches_stay_in_range(self, augmented):
        cfg = augmented.config
        for e in augmented.entries:
            utt = augmented.load(e.utt_id)
            voiced = utt.f0[utt.f0 > 0]
            assert voiced.min() >= cfg.f0_floor
            assert voiced.max() <= cfg.f0_ceil

    def test_variants_pass_validation(self, augmented):
        assert validate_corpus(augmented).ok


class TestValidateCorpus:
    def test_flags_truncated_f0(self, tmp_path):
        manifest = generate_toy_corpus(tmp_path, 1, 1, seed=3)
        entry = manifest.entries[0]
        f0_path = tmp_path / entry.f0_path
        f0 = mrsv.read_tensor(f0_path)
        mrsv.write_tensor(f0_path, f0[:-5])
        report = validate_corpus(manifest)
        assert not report.ok
        assert report.n_failed == 1
        assert any("length mismatch" in p for p in report.reports[0].problems)

    def test_flags_nan_mel(self, tmp_path):
        manifest = generate_toy_corpus(tmp_path, 1, 1, seed=3)
        entry = manifest.entries[0]
        mel_path = tmp_path / entry.mel_path
        mel = mrsv.read_tensor(mel_path)
        mel[0, 0] = np.nan
        mrsv.write_tensor(mel_path, mel)
        report = validate_corpus(manifest)
        assert not report.ok
        assert any("NaN" in p for p in report.reports[0].problems)

    def test_report_len(self, toy_corpus):
        assert len(validate_corpus(toy_corpus)) == 8


class TestManifestIO:
    def test_round_trip(self, toy_corpus):
        loaded = load_manifest(toy_corpus.root)
        assert loaded.config_hash == toy_corpus.config.config_hash()
        assert loaded.phoneme_inventory == toy_corpus.phoneme_inventory
        assert [e.utt_id for e in loaded.entries] == [
            e.utt_id for e in toy_corpus.entries
        ]
        assert loaded.config.to_dict() == toy_corpus.config.to_dict()

    def test_entry_lookup(self, toy_corpus):
        e = toy_corpus.entry("spk001_utt002")
        assert e.speaker_id == "spk001"
        with pytest.raises(KeyError, match="nope"):
            toy_corpus.entry("nope")

    def test_entries_for_speaker(self, toy_corpus):
        assert len(toy_corpus.entries_for_speaker("spk000")) == 4

    def test_load_with_waveform(self, toy_corpus):
        utt = toy_corpus.load("spk000_utt000", with_waveform=True)
        assert utt.waveform is not None
        assert utt.waveform.dtype == np.float32

    def test_manifest_without_wav_column(self, tmp_path):
        cfg = FeatureConfig()
        manifest = CorpusManifest(
            tmp_path,
            [ManifestEntry("u0", "s0", "mel/u0.mrsv", "f0/u0.mrsv", "align/u0.txt")],
            ["sil"],
            cfg,
            cfg.config_hash(),
        )
        save_manifest(manifest)
        loaded = load_manifest(tmp_path)
        assert loaded.entries[0].wav_path is None

    def test_bad_row_rejected(self, tmp_path, toy_corpus):
        save_manifest(
            CorpusManifest(
                tmp_path, [], toy_corpus.phoneme_inventory, toy_corpus.config, ""
            )
        )
        with (tmp_path / "manifest.tsv").open("a") as fh:
            fh.write("only\tthree\tcolumns\n")
        with pytest.raises(ValueError, match="bad row"):
            load_manifest(tmp_path)


class TestCorpusDigest:
    def test_sensitive_to_content(self, tmp_path):
        generate_toy_corpus(tmp_path / "c", 1, 1, seed=2)
        before = corpus_digest(tmp_path / "c")
        wav = next((tmp_path / "c" / "wav").iterdir())
        data = bytearray(wav.read_bytes())
        data[-1] ^= 0x01
        wav.write_bytes(bytes(data))
        assert corpus_digest(tmp_path / "c") != before

    def test_sensitive_to_paths(self, tmp_path):
        generate_toy_corpus(tmp_path / "c", 1, 1, seed=2)
        before = corpus_digest(tmp_path / "c")
        wav = next((tmp_path / "c" / "wav").iterdir())
        wav.rename(wav.with_name("renamed.wav"))
        assert corpus_digest(tmp_path / "c") != before
