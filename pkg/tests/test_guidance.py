import dataclasses
import json

import pytest
import torch

from src.cskd.errors import ArtifactMissingError, ConfigurationError, CondensedFormatError, InsufficientDataError
from src.cskd.guidance.condense import class_mean_distance, condense_dm
from src.cskd.guidance.dataset import LabeledImageSet
from src.cskd.guidance.fewshot import sample_few_shot
from src.cskd.guidance.stats import class_feature_stats, extract_features, feature_class_stats
from src.cskd.guidance.storage import load_condensed, save_condensed
from src.cskd.utils import sha256_file

from tests.toys import TOY_CLASSES, make_toy_set


def _condensed(per_class=4):
    data = make_toy_set(per_class=per_class, source="condensed")
    return LabeledImageSet(data.images, data.labels, dataclasses.replace(data.meta, spc=per_class))


class TestStorage:
    def test_round_trip_is_bit_exact(self, tmp_path):
        data = _condensed()
        save_condensed(data, tmp_path / "set")
        loaded = load_condensed(tmp_path / "set")
        assert torch.equal(loaded.images, data.images)
        assert torch.equal(loaded.labels, data.labels)
        assert loaded.meta == data.meta

    def test_single_record(self, tmp_path):
        data = make_toy_set(per_class=1).subset(torch.tensor([2]))
        save_condensed(data, tmp_path / "one")
        assert (tmp_path / "one" / "labels.bin").stat().st_size == 8
        assert len(load_condensed(tmp_path / "one")) == 1

    def test_file_layout(self, tmp_path):
        data = _condensed(per_class=2)
        save_condensed(data, tmp_path / "set")
        meta = json.loads((tmp_path / "set" / "meta.json").read_text())
        assert meta["format_version"] == 1
        assert meta["dtype"] == "f32le" and meta["label_dtype"] == "i64le"
        assert meta["shape"] == [1, 8, 8] and meta["nc"] == TOY_CLASSES and meta["spc"] == 2
        assert (tmp_path / "set" / "images.bin").stat().st_size == len(data) * 64 * 4

    def test_rewrite_gives_identical_hashes(self, tmp_path):
        data = _condensed()
        save_condensed(data, tmp_path / "a")
        save_condensed(data, tmp_path / "b")
        save_condensed(data, tmp_path / "a")
        for name in ("images.bin", "labels.bin", "meta.json"):
            assert sha256_file(tmp_path / "a" / name) == sha256_file(tmp_path / "b" / name)

    def test_empty_set(self, tmp_path):
        empty = make_toy_set(per_class=1).subset(torch.zeros(0, dtype=torch.long))
        with pytest.raises(CondensedFormatError, match="empty set not serializable"):
            save_condensed(empty, tmp_path / "empty")
        assert not (tmp_path / "empty").exists()

    def test_truncated_labels(self, tmp_path):
        data = _condensed()
        save_condensed(data, tmp_path / "set")
        labels = tmp_path / "set" / "labels.bin"
        labels.write_bytes(labels.read_bytes()[:-8])
        with pytest.raises(CondensedFormatError, match=f"expected {8 * len(data)} bytes"):
            load_condensed(tmp_path / "set")

    def test_corrupted_images(self, tmp_path):
        save_condensed(_condensed(), tmp_path / "set")
        images = tmp_path / "set" / "images.bin"
        raw = bytearray(images.read_bytes())
        raw[0] ^= 0x01
        images.write_bytes(bytes(raw))
        with pytest.raises(CondensedFormatError, match="checksum"):
            load_condensed(tmp_path / "set")

    def test_spc_violation(self, tmp_path):
        data = make_toy_set(per_class=4, source="condensed")
        save_condensed(data.subset(torch.arange(1, len(data))), tmp_path / "set")
        meta_path = tmp_path / "set" / "meta.json"
        meta = json.loads(meta_path.read_text())
        meta["spc"] = 4
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(CondensedFormatError, match="class 0 has 3"):
            load_condensed(tmp_path / "set")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ArtifactMissingError):
            load_condensed(tmp_path / "nothing")


class TestFewShot:
    def test_stratified_and_deterministic(self):
        data = make_toy_set(per_class=10)
        first = sample_few_shot(data, 3, seed=4)
        second = sample_few_shot(data, 3, seed=4)
        assert torch.equal(first.images, second.images)
        assert first.class_counts().tolist() == [3] * TOY_CLASSES
        assert first.meta.source == "fewshot" and first.meta.spc == 3

    def test_full_class_size_returns_everything(self):
        data = make_toy_set(per_class=5)
        subset = sample_few_shot(data, 5, seed=0)
        assert torch.equal(subset.images, data.images)
        assert torch.equal(subset.labels, data.labels)

    def test_deficient_classes_are_listed(self):
        data = make_toy_set(per_class=4)
        keep = torch.cat([torch.arange(0, 2), torch.arange(4, 12)])
        with pytest.raises(InsufficientDataError) as info:
            sample_few_shot(data.subset(keep), 3, seed=0)
        assert info.value.deficient == {0: 2}

    def test_zero_spc(self):
        with pytest.raises(ConfigurationError):
            sample_few_shot(make_toy_set(), 0, seed=0)


class TestClassStats:
    def test_singleton_mean(self, toy_teacher):
        data = make_toy_set(per_class=1)
        stats = class_feature_stats(toy_teacher, data)
        features = extract_features(toy_teacher, data).double()
        assert torch.equal(stats.means, features)
        assert stats.missing == []

    def test_missing_classes_are_flagged(self, toy_teacher):
        data = make_toy_set(per_class=2).subset(torch.tensor([0, 1]))
        stats = class_feature_stats(toy_teacher, data)
        assert stats.missing == [1, 2] and stats.present == [0]

    def test_duplicated_set_has_identical_means(self, toy_teacher):
        data = make_toy_set(per_class=3)
        doubled = data.subset(torch.cat([torch.arange(len(data)), torch.arange(len(data))]))
        torch.testing.assert_close(
            class_feature_stats(toy_teacher, doubled).means,
            class_feature_stats(toy_teacher, data).means,
            atol=1e-5,
            rtol=1e-5,
        )

    def test_halves_recombine(self):
        gen = torch.Generator().manual_seed(0)
        features = torch.randn(30, 5, generator=gen)
        labels = torch.randint(0, 3, (30,), generator=gen)
        full = feature_class_stats(features, labels, 3)
        a = feature_class_stats(features[:13], labels[:13], 3)
        b = feature_class_stats(features[13:], labels[13:], 3)
        weights_a = a.counts.double().unsqueeze(1)
        weights_b = b.counts.double().unsqueeze(1)
        combined = (a.means * weights_a + b.means * weights_b) / (weights_a + weights_b)
        torch.testing.assert_close(full.means, combined, atol=1e-6, rtol=0)
        assert torch.equal(full.counts, a.counts + b.counts)

    def test_empty_set(self, toy_teacher):
        with pytest.raises(ConfigurationError):
            class_feature_stats(toy_teacher, make_toy_set(per_class=1).subset(torch.zeros(0, dtype=torch.long)))


class TestCondense:
    def test_zero_steps_returns_the_initial_subset(self, toy_teacher):
        data = make_toy_set(per_class=8)
        first = condense_dm(data, 2, toy_teacher, steps=0, seed=3)
        second = condense_dm(data, 2, toy_teacher, steps=0, seed=3)
        assert torch.equal(first.images, second.images)
        assert first.class_counts().tolist() == [2] * TOY_CLASSES
        assert first.meta.source == "condensed" and first.meta.spc == 2

    def test_ends_closer_than_its_initialisation(self, toy_teacher):
        data = make_toy_set(per_class=8)
        reference = class_feature_stats(toy_teacher, data)
        initial = condense_dm(data, 1, toy_teacher, steps=0, seed=1)
        condensed = condense_dm(data, 1, toy_teacher, steps=50, seed=1, lr_img=0.1, batch_real=8, eval_every=1)
        assert len(condensed) == TOY_CLASSES
        assert class_mean_distance(toy_teacher, condensed, reference) < class_mean_distance(
            toy_teacher, initial, reference
        )
        assert float(condensed.images.min()) >= 0.0 and float(condensed.images.max()) <= 1.0

    def test_insufficient_population(self, toy_teacher):
        with pytest.raises(InsufficientDataError):
            condense_dm(make_toy_set(per_class=2), 3, toy_teacher, steps=0, seed=0)
