"""Corpus loading, decoding, splitting, the synthetic corpus, and the
resampling kernels (vs naive reference implementations)."""

import csv

import numpy as np
import pytest
from PIL import Image

from cellmix.data import (CHANNELS, Corpus, MultiChannelImage, RANGE_SIGNED,
                          decode_image, load_corpus, load_images, save_corpus,
                          split, split_corpus, synth_corpus,
                          write_predictions_csv)
from cellmix.errors import ConfigurationError, DataFormatError
from cellmix.resample import area_resample, bicubic_resample


def make_sample(tmp_path, sample_id="abc", value=128, size=8):
    for channel in CHANNELS:
        arr = np.full((size, size), value, dtype=np.uint8)
        Image.fromarray(arr, mode="L").save(tmp_path / f"{sample_id}_{channel}.png")


def write_labels(tmp_path, rows):
    path = tmp_path / "labels.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Id", "Target"])
        writer.writerows(rows)
    return path


class TestLoadCorpus:
    def test_basic_row(self, tmp_path):
        make_sample(tmp_path)
        csv_path = write_labels(tmp_path, [["abc", "0 27"]])
        records = load_corpus(tmp_path, csv_path)
        assert len(records) == 1
        assert records[0].labels == frozenset({0, 27})

    def test_out_of_range_class(self, tmp_path):
        make_sample(tmp_path)
        csv_path = write_labels(tmp_path, [["abc", "28"]])
        with pytest.raises(DataFormatError, match="28"):
            load_corpus(tmp_path, csv_path)

    def test_malformed_token(self, tmp_path):
        make_sample(tmp_path)
        csv_path = write_labels(tmp_path, [["abc", "0 x"]])
        with pytest.raises(DataFormatError, match="malformed"):
            load_corpus(tmp_path, csv_path)

    def test_missing_channel_named_in_error(self, tmp_path):
        make_sample(tmp_path)
        (tmp_path / "abc_yellow.png").unlink()
        csv_path = write_labels(tmp_path, [["abc", "0"]])
        with pytest.raises(DataFormatError, match="yellow"):
            load_corpus(tmp_path, csv_path)

    def test_duplicate_id(self, tmp_path):
        make_sample(tmp_path)
        csv_path = write_labels(tmp_path, [["abc", "0"], ["abc", "1"]])
        with pytest.raises(DataFormatError, match="duplicate"):
            load_corpus(tmp_path, csv_path)

    def test_row_count(self, tmp_path):
        for i in range(5):
            make_sample(tmp_path, f"s{i}")
        csv_path = write_labels(tmp_path, [[f"s{i}", "1"] for i in range(5)])
        assert len(load_corpus(tmp_path, csv_path)) == 5

    def test_bad_header(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("Wrong,Header\nabc,0\n")
        with pytest.raises(DataFormatError, match="header"):
            load_corpus(tmp_path, path)


class TestDecodeImage:
    def test_constant_8bit_scaling(self, tmp_path):
        make_sample(tmp_path, value=128)
        csv_path = write_labels(tmp_path, [["abc", "0"]])
        record = load_corpus(tmp_path, csv_path)[0]
        image = decode_image(record, target_size=8)
        np.testing.assert_allclose(image.pixels, 128 / 255, rtol=1e-6)

    def test_area_downsample_preserves_constant(self, tmp_path):
        for channel in CHANNELS:
            arr = np.full((512, 512), 77, dtype=np.uint8)
            Image.fromarray(arr, mode="L").save(tmp_path / f"big_{channel}.png")
        csv_path = write_labels(tmp_path, [["big", "0"]])
        record = load_corpus(tmp_path, csv_path)[0]
        image = decode_image(record, target_size=32)
        assert image.resolution == 32
        np.testing.assert_allclose(image.pixels, 77 / 255, rtol=1e-6)

    def test_16bit_channel(self, tmp_path):
        for channel in CHANNELS:
            arr = np.full((8, 8), 32768, dtype=np.uint16)
            Image.fromarray(arr).save(tmp_path / f"hi_{channel}.png")
        csv_path = write_labels(tmp_path, [["hi", "0"]])
        record = load_corpus(tmp_path, csv_path)[0]
        image = decode_image(record, target_size=8)
        np.testing.assert_allclose(image.pixels, 32768 / 65535, rtol=1e-6)

    def test_non_grayscale_rejected(self, tmp_path):
        make_sample(tmp_path)
        rgb = np.zeros((8, 8, 3), dtype=np.uint8)
        Image.fromarray(rgb, mode="RGB").save(tmp_path / "abc_green.png")
        csv_path = write_labels(tmp_path, [["abc", "0"]])
        record = load_corpus(tmp_path, csv_path)[0]
        with pytest.raises(DataFormatError, match="grayscale"):
            decode_image(record, target_size=8)

    def test_signed_range_conversion(self, tmp_path):
        make_sample(tmp_path, value=0)
        csv_path = write_labels(tmp_path, [["abc", "0"]])
        record = load_corpus(tmp_path, csv_path)[0]
        image = decode_image(record, target_size=8, value_range=RANGE_SIGNED)
        np.testing.assert_allclose(image.pixels, -1.0)


class TestSplit:
    def test_ten_records(self):
        train, val = split(list(range(10)), 0.9, seed=3)
        assert len(train) == 9 and len(val) == 1
        assert sorted(train + val) == list(range(10))

    def test_deterministic(self):
        records = list(range(100))
        assert split(records, 0.9, seed=5) == split(records, 0.9, seed=5)
        assert split(records, 0.9, seed=5) != split(records, 0.9, seed=6)

    def test_full_corpus_cardinalities(self):
        train, val = split(list(range(31072)), 0.9, seed=0)
        assert len(train) == 27964
        assert len(val) == 3108

    def test_too_few_records(self):
        with pytest.raises(ConfigurationError):
            split(list(range(9)), 0.9, seed=0)


class TestSynthCorpus:
    def test_single_label_counts_and_exact_labels(self):
        rng = np.random.default_rng(0)
        corpus = synth_corpus(rng, per_class=2, size=32)
        assert len(corpus) == 56
        assert corpus.labels.sum() == 56
        for i in range(56):
            assert corpus.labels[i].argmax() == i // 2

    def test_same_seed_identical(self):
        a = synth_corpus(np.random.default_rng(9), per_class=1, size=32)
        b = synth_corpus(np.random.default_rng(9), per_class=1, size=32)
        assert np.array_equal(a.images, b.images)

    def test_multi_label_mode(self):
        rng = np.random.default_rng(1)
        corpus = synth_corpus(rng, per_class=4, size=32, extra_label_rate=0.5)
        per_sample = corpus.labels.sum(axis=1)
        assert per_sample.min() >= 1
        assert per_sample.max() == 2

    def test_nearest_centroid_separability(self):
        """The corpus is learnable: raw green-channel centroids classify a
        held-out slice at >= 0.9 accuracy."""
        rng = np.random.default_rng(42)
        corpus = synth_corpus(rng, per_class=12, size=32)
        train, val = split_corpus(corpus, 0.9, seed=0)
        green_tr = train.images[:, 1].reshape(len(train), -1)
        green_va = val.images[:, 1].reshape(len(val), -1)
        ytr = train.labels.argmax(axis=1)
        yva = val.labels.argmax(axis=1)
        centroids = np.stack([green_tr[ytr == k].mean(axis=0) for k in range(28)])
        dists = ((green_va[:, None, :] - centroids[None]) ** 2).sum(-1)
        accuracy = (dists.argmin(1) == yva).mean()
        assert accuracy >= 0.9

    def test_bad_params(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ConfigurationError):
            synth_corpus(rng, per_class=0, size=32)
        with pytest.raises(ConfigurationError):
            synth_corpus(rng, per_class=1, size=8)


class TestRoundTrip:
    def test_disk_round_trip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(3)
        corpus = synth_corpus(rng, per_class=1, size=32, class_count=4)
        csv_path = save_corpus(corpus, tmp_path)
        records = load_corpus(tmp_path / "images", csv_path)
        reloaded = load_images(records, target_size=32)
        by_id = {rid: i for i, rid in enumerate(reloaded.ids)}
        for i, sample_id in enumerate(corpus.ids):
            j = by_id[sample_id]
            assert np.abs(reloaded.images[j] - corpus.images[i]).max() <= 1.0 / 255.0 + 1e-7
            assert np.array_equal(reloaded.labels[j], corpus.labels[i])


class TestPredictionsCsv:
    def test_format_with_empty_rows(self, tmp_path):
        path = tmp_path / "predictions.csv"
        preds = np.array([[1, 0, 1], [0, 0, 0]])
        write_predictions_csv(path, ["a", "b"], preds)
        assert path.read_text() == "Id,Predicted\na,0 2\nb,\n"


class TestResample:
    def test_checkerboard_to_single_pixel(self):
        board = np.indices((4, 4)).sum(axis=0) % 2
        out = area_resample(board.astype(np.float64), 1, 1)
        assert out[0, 0] == 0.5

    def test_area_constant(self):
        out = area_resample(np.full((48, 48), 0.37), 13, 13)
        np.testing.assert_allclose(out, 0.37, rtol=1e-12)

    def test_area_refuses_upscale(self):
        with pytest.raises(ConfigurationError):
            area_resample(np.zeros((4, 4)), 8, 8)

    def test_area_against_block_mean(self):
        rng = np.random.default_rng(5)
        img = rng.uniform(size=(32, 32))
        out = area_resample(img, 8, 8)
        blocks = img.reshape(8, 4, 8, 4).mean(axis=(1, 3))
        np.testing.assert_allclose(out, blocks, rtol=1e-12)

    def test_bicubic_identity_at_same_size(self):
        rng = np.random.default_rng(6)
        img = rng.uniform(size=(16, 16))
        np.testing.assert_array_equal(bicubic_resample(img, 16, 16), img)

    def test_bicubic_constant(self):
        out = bicubic_resample(np.full((32, 32), 0.41), 64, 64)
        np.testing.assert_allclose(out, 0.41, rtol=1e-7)
