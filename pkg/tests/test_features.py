import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ffward.features import (
    BadMagicError, ConfigError, DimensionMismatchError, SceneDataset, SynthConfig, TruncatedFileError,
    VersionMismatchError, ViewStream, apply_desync, dumps_dataset, generate_scene, global_truth_of,
    identical_views, loads_dataset, read_dataset, write_dataset,
)

from conftest import make_dataset


def tiny(seed=0, **kw):
    base = dict(num_views=3, length=300, dim=6, num_events=4, event_duration=(10, 30), seed=seed)
    base.update(kw)
    return generate_scene(SynthConfig(**base))


synth_configs = st.builds(
    SynthConfig,
    num_views=st.integers(2, 4),
    length=st.integers(200, 400),
    dim=st.integers(1, 8),
    num_events=st.integers(0, 6),
    event_duration=st.just((5, 40)),
    overlap=st.floats(0, 1),
    noise_std=st.floats(0, 1),
    seed=st.integers(0, 2**31),
)


class TestViewStream:
    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            ViewStream(0, np.zeros((3, 2)), np.array([0, 2, 1]))

    def test_rejects_nonfinite(self):
        f = np.zeros((2, 2))
        f[1, 1] = np.nan
        with pytest.raises(ValueError):
            ViewStream(0, f, np.zeros(2))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            ViewStream(0, np.zeros((0, 2)), np.zeros(0))

    def test_frame_records(self):
        v = ViewStream(1, np.arange(6).reshape(3, 2), np.array([0, 1, 0]))
        rec = v[1]
        assert rec.label == 1
        np.testing.assert_array_equal(rec.feature, [2.0, 3.0])
        assert [r.label for r in v] == [0, 1, 0]

    def test_arrays_are_read_only(self):
        v = ViewStream(0, np.zeros((2, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            v.features[0, 0] = 1.0


class TestSceneDataset:
    def test_duplicate_ids_rejected(self):
        v = ViewStream(0, np.zeros((4, 2)), np.zeros(4))
        with pytest.raises(ValueError):
            SceneDataset((v, v), np.zeros(4))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            make_dataset([np.zeros((4, 2)), np.zeros((5, 2))], [np.zeros(4), np.zeros(5)])

    def test_global_truth_is_elementwise_or(self):
        ds = make_dataset([np.zeros((4, 1))] * 3, [[1, 0, 0, 0], [1, 1, 0, 0], [0, 0, 0, 1]])
        np.testing.assert_array_equal(ds.global_truth, [1, 1, 0, 1])


class TestGenerateScene:
    def test_same_seed_identical_bytes(self):
        assert dumps_dataset(tiny(42)) == dumps_dataset(tiny(42))

    def test_different_seed_differs(self):
        assert dumps_dataset(tiny(1)) != dumps_dataset(tiny(2))

    def test_full_overlap_gives_identical_labels(self):
        ds = tiny(5, overlap=1.0, num_events=6)
        for v in ds.views[1:]:
            np.testing.assert_array_equal(v.labels, ds.views[0].labels)

    def test_zero_noise_full_overlap_differs_by_fixed_offset(self):
        ds = tiny(7, overlap=1.0, noise_std=0.0)
        for v in ds.views[1:]:
            diff = v.features.astype(np.float64) - ds.views[0].features
            # one constant offset vector for every time step
            np.testing.assert_allclose(diff, np.broadcast_to(diff[0], diff.shape), atol=1e-5)

    def test_important_frames_exist(self):
        ds = tiny(3, num_events=5)
        assert ds.global_truth.any()
        assert ds.num_views == 3 and ds.length == 300 and ds.dim == 6

    @pytest.mark.parametrize("field,value", [
        ("num_views", 1), ("length", 199), ("overlap", 1.5), ("noise_std", -0.1), ("event_duration", (5, 2)),
    ])
    def test_invalid_config_names_field(self, field, value):
        with pytest.raises(ConfigError) as exc:
            generate_scene(SynthConfig(**{field: value}))
        assert exc.value.field == field

    @given(synth_configs)
    def test_roundtrip_identity(self, cfg):
        ds = generate_scene(cfg)
        assert loads_dataset(dumps_dataset(ds)) == ds

    @given(synth_configs)
    def test_truth_is_or_of_labels(self, cfg):
        ds = generate_scene(cfg)
        any_label = np.any([v.labels == 1 for v in ds.views], axis=0)
        np.testing.assert_array_equal(ds.global_truth == 1, any_label)


class TestFileFormat:
    def test_write_read(self, tmp_path, small_scene):
        path = tmp_path / "scene.ffwd"
        write_dataset(small_scene, path)
        assert read_dataset(path) == small_scene

    def test_layout(self):
        ds = make_dataset([[[1.0, 2.0]], [[3.0, 4.0]]], [[1], [0]])
        expected = (b"FFWD" + struct.pack("<HHII", 1, 2, 1, 2)
                    + struct.pack("<H", 0) + b"\x01" + struct.pack("<2f", 1.0, 2.0)
                    + struct.pack("<H", 1) + b"\x00" + struct.pack("<2f", 3.0, 4.0)
                    + b"\x01")
        assert dumps_dataset(ds) == expected

    def test_bad_magic(self):
        data = bytearray(dumps_dataset(tiny()))
        data[:4] = b"FFWX"
        with pytest.raises(BadMagicError):
            loads_dataset(bytes(data))

    def test_version_mismatch(self):
        data = bytearray(dumps_dataset(tiny()))
        data[4:6] = struct.pack("<H", 2)
        with pytest.raises(VersionMismatchError):
            loads_dataset(bytes(data))

    def test_truncated_mid_frame_reports_offset(self):
        ds = tiny()
        data = dumps_dataset(ds)
        header = 4 + 2 + 2 + 4 + 4
        # stop 10 bytes into view 0's feature block
        cut = header + 2 + ds.length + 10
        with pytest.raises(TruncatedFileError) as exc:
            loads_dataset(data[:cut])
        assert exc.value.offset == header + 2 + ds.length

    def test_trailing_bytes_are_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            loads_dataset(dumps_dataset(tiny()) + b"\x00\x00\x00\x00")

    def test_errors_are_distinct(self):
        kinds = {BadMagicError, VersionMismatchError, TruncatedFileError, DimensionMismatchError}
        assert len(kinds) == 4
        for a in kinds:
            for b in kinds - {a}:
                assert not issubclass(a, b)


class TestDesync:
    def test_zero_offset_unchanged(self):
        ds = tiny()
        assert apply_desync(ds, 1, 0) == ds

    def test_round_trip_on_interior(self):
        ds = tiny()
        back = apply_desync(apply_desync(ds, 1, 20), 1, -20)
        np.testing.assert_array_equal(back.views[1].features[20:-20], ds.views[1].features[20:-20])

    def test_first_tags_repeat_original_frame_zero(self):
        ds = generate_scene(SynthConfig(length=1000, dim=4, num_events=5, seed=9))
        shifted = apply_desync(ds, 0, 100)
        for t in range(101):
            np.testing.assert_array_equal(shifted.views[0].features[t], ds.views[0].features[0])
        np.testing.assert_array_equal(shifted.views[0].features[500], ds.views[0].features[400])

    def test_negative_offset_repeats_last_frame(self):
        ds = tiny()
        shifted = apply_desync(ds, 2, -30)
        np.testing.assert_array_equal(shifted.views[2].features[-1], ds.views[2].features[-1])
        np.testing.assert_array_equal(shifted.views[2].features[0], ds.views[2].features[30])

    def test_truth_unchanged_and_offset_recorded(self):
        ds = tiny()
        shifted = apply_desync(ds, 1, 20)
        np.testing.assert_array_equal(shifted.global_truth, ds.global_truth)
        assert shifted.views[1].desync_offset == 20
        assert shifted.views[0] == ds.views[0]

    def test_out_of_range(self):
        ds = tiny()
        with pytest.raises(ValueError):
            apply_desync(ds, 0, ds.length)
        with pytest.raises(KeyError):
            apply_desync(ds, 7, 5)


def test_identical_views_copies_source():
    ds = identical_views(tiny(4), source=1)
    for v in ds.views:
        np.testing.assert_array_equal(v.features, ds.views[1].features)
    np.testing.assert_array_equal(ds.global_truth, ds.views[1].labels)


def test_global_truth_of_clips_at_one():
    views = [ViewStream(i, np.zeros((3, 1)), np.array([1, 1, 0])) for i in range(3)]
    np.testing.assert_array_equal(global_truth_of(views), [1, 1, 0])
