import struct

import numpy as np
import pytest

from semfuse.core import CameraIntrinsics, LabelSet, Pose, VoxelKey
from semfuse.errors import MalformedFile, MalformedFrame, OutputError
from semfuse.io import (MAGIC, Dataset, DatasetMeta, DatasetWriter, PoseRecord, format_poses,
                        format_voxel_labels, frame_file, parse_poses, parse_voxel_labels,
                        read_tensor, write_tensor, write_voxel_labels)
from semfuse.mapping import Frame


class TestTensor:
    def test_header_layout(self, tmp_path):
        path = tmp_path / "t.ten"
        write_tensor(path, np.arange(6, dtype=float).reshape(2, 3))
        data = path.read_bytes()
        assert data[:6] == MAGIC == b"SFTEN1"
        assert struct.unpack("<BB", data[6:8]) == (1, 2)
        assert struct.unpack("<2I", data[8:16]) == (2, 3)
        assert np.frombuffer(data[16:], "<f4").tolist() == [0, 1, 2, 3, 4, 5]

    def test_round_trip_bytes(self, tmp_path):
        a = np.random.default_rng(0).random((2, 3, 4, 5))
        write_tensor(tmp_path / "a.ten", a)
        back = read_tensor(tmp_path / "a.ten")
        np.testing.assert_array_equal(back, a.astype(np.float32))
        write_tensor(tmp_path / "b.ten", back)
        assert (tmp_path / "a.ten").read_bytes() == (tmp_path / "b.ten").read_bytes()

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.ten").write_bytes(b"NOTTEN\x01\x00")
        with pytest.raises(MalformedFile):
            read_tensor(tmp_path / "x.ten")

    def test_truncated_payload(self, tmp_path):
        write_tensor(tmp_path / "a.ten", np.ones((4, 4)))
        data = (tmp_path / "a.ten").read_bytes()
        (tmp_path / "a.ten").write_bytes(data[:-4])
        with pytest.raises(MalformedFile):
            read_tensor(tmp_path / "a.ten")

    def test_unknown_dtype(self, tmp_path):
        (tmp_path / "a.ten").write_bytes(MAGIC + bytes([7, 0]))
        with pytest.raises(MalformedFile):
            read_tensor(tmp_path / "a.ten")


class TestPoses:
    def test_round_trip(self):
        q = np.array([0.1, -0.2, 0.3, 0.9])
        q /= np.linalg.norm(q)
        recs = [PoseRecord(0, 0.0, Pose((1.0, 2.0, 3.0))),
                PoseRecord(7, 0.1, Pose((0.1, 1 / 3, -2.5), tuple(q)))]
        text = format_poses(recs)
        assert text.splitlines()[0] == "0 0.0 1.0 2.0 3.0 0.0 0.0 0.0 1.0"
        back = parse_poses(text)
        assert [r.frame_id for r in back] == [0, 7]
        assert back[1].pose.translation == recs[1].pose.translation
        assert format_poses(back) == text

    @pytest.mark.parametrize("line", ["0 0.0 1 2 3", "0 x 0 0 0 0 0 0 1", "0 0 0 0 0 0 0 0 2"])
    def test_malformed(self, line):
        with pytest.raises(MalformedFile):
            parse_poses(line + "\n")


class TestVoxelLabels:
    def test_round_trip(self):
        rows = [(VoxelKey(-1, 0, 2), 3), (VoxelKey(0, 0, 0), 1)]
        text = format_voxel_labels(rows, ("a", "b", "c", "d"), "dr")
        parsed = parse_voxel_labels(text)
        assert parsed.rows == rows and parsed.classes == ("a", "b", "c", "d")
        assert parsed.strategy == "dr"
        assert format_voxel_labels(parsed.rows, parsed.classes, parsed.strategy) == text

    def test_plain_lines(self):
        parsed = parse_voxel_labels("1 2 3 0\n4 5 6 1\n")
        assert parsed.rows == [((1, 2, 3), 0), ((4, 5, 6), 1)] and parsed.classes is None

    def test_extra_columns_rejected(self):
        with pytest.raises(MalformedFile):
            parse_voxel_labels("1 2 3 0 0.9\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(MalformedFile):
            parse_voxel_labels("1 2 3 0\n1 2 3 1\n")

    def test_unwritable(self, tmp_path):
        with pytest.raises(OutputError):
            write_voxel_labels(tmp_path / "missing" / "map.txt", [])


def make_frame(fid, t, K=2, H=3, W=4):
    rng = np.random.default_rng(fid)
    intr = CameraIntrinsics(5.0, 5.0, 1.5, 1.0, W, H)
    depth = rng.uniform(1, 2, size=(H, W))
    depth[0, 0] = 0.0
    mean = np.moveaxis(rng.dirichlet(np.ones(K), size=(H, W)), -1, 0)
    return Frame(t, Pose((0.0, 0.0, float(fid))), intr, depth, mean=mean,
                 variance=np.full((K, H, W), 0.01), frame_id=fid)


class TestDataset:
    def meta(self, fmt="moments"):
        return DatasetMeta(LabelSet(("a", "b")), CameraIntrinsics(5.0, 5.0, 1.5, 1.0, 4, 3),
                           fmt, 0.1)

    def test_write_read(self, tmp_path):
        w = DatasetWriter(tmp_path / "ds", self.meta())
        for i in range(3):
            w.add(make_frame(i, 0.1 * i))
        w.write_gt([(VoxelKey(0, 0, 0), 1)])
        ds = Dataset(tmp_path / "ds")
        assert len(ds) == 3
        assert (tmp_path / "ds" / frame_file("obs", 2)).exists()
        frames = list(ds.frames())
        valid = frames[1].depth > 0
        np.testing.assert_allclose(frames[1].mean[:, valid], make_frame(1, 0.1).mean[:, valid],
                                   atol=1e-6)
        # f32 storage is re-projected onto the simplex; invalid pixels are zeroed
        np.testing.assert_allclose(frames[1].mean[:, valid].sum(axis=0), 1.0, atol=1e-12)
        assert not frames[1].mean[:, ~valid].any()
        assert ds.ground_truth().rows == [((0, 0, 0), 1)]
        assert ds.meta == self.meta()

    def test_meta_round_trip(self):
        meta = self.meta("samples")
        assert DatasetMeta.from_json(meta.to_json()) == meta

    def test_corrupt_observation_reports_frame(self, tmp_path):
        w = DatasetWriter(tmp_path / "ds", self.meta())
        w.add(make_frame(0, 0.0))
        w.add(make_frame(1, 0.1))
        write_tensor(tmp_path / "ds" / frame_file("obs", 1), np.ones((2, 3, 3, 4)))
        ds = Dataset(tmp_path / "ds")
        ds.load_frame(ds.records[0])
        with pytest.raises(MalformedFrame, match="frame 1"):
            ds.load_frame(ds.records[1])

    def test_off_simplex_rejected(self, tmp_path):
        w = DatasetWriter(tmp_path / "ds", self.meta())
        f = make_frame(0, 0.0)
        f.mean[:, 2, 2] = [0.9, 0.9]
        w.add(f)
        ds = Dataset(tmp_path / "ds")
        with pytest.raises(MalformedFrame):
            ds.load_frame(ds.records[0])

    def test_missing_dataset(self, tmp_path):
        with pytest.raises(MalformedFile):
            Dataset(tmp_path / "nope")
