"""File format round-trips and corruption handling."""

import json
import struct

import numpy as np
import pytest

from dualguide.config import PipelineConfig, config_from_dict, load_config
from dualguide.enhance import Projection
from dualguide.errors import ConfigurationError, DataFormatError
from dualguide.formats import (
    GRID_MAGIC,
    load_annotations,
    load_detections,
    load_grid,
    load_projection,
    load_proposals,
    save_annotations,
    save_detections,
    save_grid,
    save_projection,
    save_proposals,
)
from dualguide.geometry import Box3D
from dualguide.grid import BevGrid, GridSpec
from dualguide.instances import Proposal
from dualguide.metrics import Annotation, Detection


def f32_grid(rng, h=5, w=7, c=3):
    spec = GridSpec(h, w, c, (-2.0, 5.0), (0.0, 10.0))
    data = rng.normal(size=(h, w, c)).astype(np.float32).astype(np.float64)
    return BevGrid(spec, data)


class TestGridFormat:
    def test_roundtrip_bitwise(self, tmp_path):
        grid = f32_grid(np.random.default_rng(0))
        path = tmp_path / "g.bevg"
        save_grid(grid, path)
        back = load_grid(path)
        assert back.spec == grid.spec
        assert np.array_equal(back.data, grid.data)

    def test_save_is_idempotent_after_load(self, tmp_path):
        rng = np.random.default_rng(1)
        spec = GridSpec(4, 4, 2, (0.0, 4.0), (0.0, 4.0))
        grid = BevGrid(spec, rng.normal(size=(4, 4, 2)))  # not f32-representable
        p1, p2 = tmp_path / "a.bevg", tmp_path / "b.bevg"
        save_grid(grid, p1)
        save_grid(load_grid(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_sidecar_mirrors_header(self, tmp_path):
        grid = f32_grid(np.random.default_rng(2))
        path = tmp_path / "g.bevg"
        save_grid(grid, path)
        sidecar = json.loads((tmp_path / "g.bevg.json").read_text())
        assert sidecar["height_cells"] == grid.spec.height_cells
        assert sidecar["width_cells"] == grid.spec.width_cells
        assert sidecar["channels"] == grid.spec.channels
        assert tuple(sidecar["x_range"]) == grid.spec.x_range

    def test_truncated_file_rejected(self, tmp_path):
        grid = f32_grid(np.random.default_rng(3))
        path = tmp_path / "g.bevg"
        save_grid(grid, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 10])
        with pytest.raises(DataFormatError, match="bytes"):
            load_grid(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "g.bevg"
        path.write_bytes(b"NOPE" + b"\x00" * 100)
        with pytest.raises(DataFormatError, match="magic"):
            load_grid(path)

    def test_version_mismatch_rejected(self, tmp_path):
        grid = f32_grid(np.random.default_rng(4))
        path = tmp_path / "g.bevg"
        save_grid(grid, path)
        blob = bytearray(path.read_bytes())
        blob[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(DataFormatError, match="version"):
            load_grid(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        grid = f32_grid(np.random.default_rng(5))
        path = tmp_path / "g.bevg"
        save_grid(grid, path)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(DataFormatError):
            load_grid(path)

    def test_magic_constant(self):
        assert GRID_MAGIC == b"BEVG"


class TestProjectionFormat:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        proj = Projection(
            rng.normal(size=(3, 5)).astype(np.float32).astype(np.float64),
            rng.normal(size=3).astype(np.float32).astype(np.float64),
        )
        path = tmp_path / "p.proj"
        save_projection(proj, path)
        back = load_projection(path)
        assert np.array_equal(back.matrix, proj.matrix)
        assert np.array_equal(back.bias, proj.bias)

    def test_truncation_rejected(self, tmp_path):
        path = tmp_path / "p.proj"
        save_projection(Projection.identity(4), path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(DataFormatError):
            load_projection(path)


class TestJsonLines:
    def test_proposals_roundtrip(self, tmp_path):
        rng = np.random.default_rng(7)
        proposals = [
            Proposal(
                Box3D(
                    tuple(rng.uniform(-10, 10, 3)),
                    tuple(rng.uniform(0.5, 4, 3)),
                    float(rng.uniform(-3, 3)),
                    tuple(rng.uniform(-2, 2, 2)),
                ),
                float(rng.uniform(0, 1)),
                int(rng.integers(0, 10)),
                "lidar" if rng.uniform() < 0.5 else "camera",
            )
            for _ in range(10)
        ]
        path = tmp_path / "p.jsonl"
        save_proposals(proposals, path)
        assert load_proposals(path) == proposals

    def test_annotations_roundtrip(self, tmp_path):
        anns = [
            Annotation(Box3D((1, 2, 0.5), (2, 3, 1), 0.3), 4, 2, 17),
            Annotation(Box3D((-5, 0, 1.0), (1, 1, 2), -1.0), 9, 4, 0),
        ]
        path = tmp_path / "a.jsonl"
        save_annotations(anns, path)
        assert load_annotations(path) == anns

    def test_detections_roundtrip(self, tmp_path):
        dets = [Detection(Box3D((0, 1, 0.5), (1, 2, 1), 0.1), 3, 0.75)]
        path = tmp_path / "d.jsonl"
        save_detections(dets, path)
        assert load_detections(path) == dets

    def test_empty_roundtrip(self, tmp_path):
        path = tmp_path / "e.jsonl"
        save_proposals([], path)
        assert load_proposals(path) == []

    def test_invalid_json_line_reports_position(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"x": 1}\nnot json\n')
        with pytest.raises(DataFormatError, match="bad.jsonl:2"):
            load_proposals(path)

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"x": 1.0, "y": 2.0}) + "\n")
        with pytest.raises(DataFormatError):
            load_proposals(path)


class TestConfig:
    def test_defaults_match_reference_settings(self):
        config = PipelineConfig()
        assert config.gamma == 0.7
        assert config.eta == 0.7
        assert config.lambdas == (0.99, 1e-4, 1e-4, 1e-2)
        assert config.sampling_strategy == "center+boundary_mid"
        assert config.grouping_strategy == "cbgs_groups"
        assert config.camera_spec().cell_size_x == pytest.approx(0.6)

    def test_dict_roundtrip(self):
        config = PipelineConfig(gamma=0.5, camera_channels=8)
        assert config_from_dict(config.to_dict()) == config

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"gamme": 0.5})

    def test_file_plus_overrides(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"gamma": 0.4, "eta": 0.6}))
        config = load_config(path, eta=0.9)
        assert config.gamma == 0.4
        assert config.eta == 0.9

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigurationError):
            PipelineConfig(gamma=1.5)
        with pytest.raises(ConfigurationError):
            PipelineConfig(sampling_strategy="everything")
