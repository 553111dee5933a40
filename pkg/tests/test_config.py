import pytest

from endorecon.config import ConfigError, load_config, parse_threshold_scheme
from endorecon.icp import ThresholdScheme


def write_config(tmp_path, body):
    (tmp_path / "frames").mkdir(exist_ok=True)
    (tmp_path / "pred").mkdir(exist_ok=True)
    path = tmp_path / "config.yaml"
    path.write_text(body, encoding="utf-8")
    return path


MINIMAL = """
DATA_PATH: frames
OUTPUT_DIR: out
DEPTH_PATH: pred
DEPTH_SCHEME: disparity-npy
INTRINSICS:
  fx: 300.0
  cx: 160.0
  cy: 120.0
  baseline: 1.0
"""


class TestLoadConfig:
    def test_defaults_filled(self, tmp_path):
        config = load_config(write_config(tmp_path, MINIMAL))
        assert config.icp.max_iterations == 40
        assert config.icp.mode == "neighbor"
        assert config.icp.scheme.name == "mean_plus_2std"
        assert config.icp.convergence_eps == 1e-6
        assert config.select_schemes == []
        assert config.intrinsics.fy == 300.0  # defaults to fx
        assert config.scale_align is True
        assert config.mask_intensity_floor == 10.0

    def test_paths_resolved_against_config_dir(self, tmp_path):
        config = load_config(write_config(tmp_path, MINIMAL))
        assert config.data_path == tmp_path / "frames"
        assert config.output_dir == tmp_path / "out"

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.yaml")

    def test_missing_required_key(self, tmp_path):
        with pytest.raises(ConfigError, match="DEPTH_SCHEME"):
            load_config(write_config(tmp_path, "DATA_PATH: frames\nOUTPUT_DIR: out\nDEPTH_PATH: pred\nINTRINSICS: {fx: 1, cx: 0, cy: 0}\n"))

    def test_data_path_must_exist(self, tmp_path):
        body = MINIMAL.replace("DATA_PATH: frames", "DATA_PATH: elsewhere")
        with pytest.raises(ConfigError, match="DATA_PATH"):
            load_config(write_config(tmp_path, body))

    def test_unknown_threshold_scheme_rejected(self, tmp_path):
        body = MINIMAL + "ICP:\n  scheme: p95\n"
        with pytest.raises(ConfigError, match="unknown threshold scheme"):
            load_config(write_config(tmp_path, body))

    def test_nonpositive_constant_threshold_names_field(self, tmp_path):
        body = MINIMAL + "ICP:\n  scheme: {name: constant, value: -3}\n"
        with pytest.raises(ConfigError, match="ICP.scheme"):
            load_config(write_config(tmp_path, body))

    def test_scheme_mapping_with_parameters(self, tmp_path):
        body = MINIMAL + "ICP:\n  scheme: {name: linear_interp, t_initial: 8, t_final: 0.5}\n  max_iterations: 12\n"
        config = load_config(write_config(tmp_path, body))
        assert config.icp.scheme.t_initial == 8.0
        assert config.icp.scheme.t_final == 0.5
        assert config.icp.max_iterations == 12

    def test_selector_validation(self, tmp_path):
        body = MINIMAL + "SELECT_SCHEME:\n  - {scheme: rchannel, threshold: 60}\n"
        config = load_config(write_config(tmp_path, body))
        assert config.select_schemes[0].scheme == "rchannel"
        assert config.select_schemes[0].threshold == 60.0

    def test_unknown_selector_rejected(self, tmp_path):
        body = MINIMAL + "SELECT_SCHEME:\n  - {scheme: sharpness, threshold: 1}\n"
        with pytest.raises(ConfigError, match="unknown selection scheme"):
            load_config(write_config(tmp_path, body))

    def test_nonpositive_selector_threshold_names_field(self, tmp_path):
        body = MINIMAL + "SELECT_SCHEME:\n  - {scheme: rchannel, threshold: 0}\n"
        with pytest.raises(ConfigError, match=r"SELECT_SCHEME\[0\].threshold"):
            load_config(write_config(tmp_path, body))

    def test_hyperiqa_needs_scores(self, tmp_path):
        body = MINIMAL + "SELECT_SCHEME:\n  - {scheme: hyperiqa, threshold: 50}\n"
        with pytest.raises(ConfigError, match="scores"):
            load_config(write_config(tmp_path, body))

    def test_unknown_top_level_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown configuration key"):
            load_config(write_config(tmp_path, MINIMAL + "DTA_PATH: typo\n"))

    def test_unknown_depth_scheme_rejected(self, tmp_path):
        body = MINIMAL.replace("disparity-npy", "voxels")
        with pytest.raises(ConfigError, match="DEPTH_SCHEME"):
            load_config(write_config(tmp_path, body))

    def test_disparity_requires_baseline(self, tmp_path):
        body = MINIMAL.replace("  baseline: 1.0\n", "")
        with pytest.raises(ConfigError, match="baseline"):
            load_config(write_config(tmp_path, body))

    def test_depth_png_invert_default_intensity(self, tmp_path):
        body = MINIMAL.replace("disparity-npy", "depth-png")
        config = load_config(write_config(tmp_path, body))
        assert config.depth.invert == "intensity"

    def test_as_dict_roundtrips_through_json(self, tmp_path):
        import json

        config = load_config(write_config(tmp_path, MINIMAL))
        echo = config.as_dict()
        assert json.loads(json.dumps(echo)) == echo


class TestParseScheme:
    def test_bare_names(self):
        for name in (
            "constant",
            "percentile90",
            "mean_factor",
            "median_factor",
            "linear_interp",
            "max_fraction",
            "mean_plus_2std",
        ):
            assert parse_threshold_scheme(name) == ThresholdScheme(name)

    def test_unknown_parameter_rejected(self):
        with pytest.raises(ConfigError, match="unknown scheme parameter"):
            parse_threshold_scheme({"name": "constant", "sigma": 3})

    def test_non_string_non_dict_rejected(self):
        with pytest.raises(ConfigError, match="expected"):
            parse_threshold_scheme(42)
