import csv
import json
import math

import pytest

import reports
from errors import ConfigError


class TestJson:
    def test_infinity_becomes_null(self):
        data = json.loads(reports.to_json({"m": math.inf, "values": (1.0, float("nan"))}))
        assert data == {"m": None, "values": [1.0, None]}

    def test_write_json_creates_parents(self, tmp_path):
        path = reports.write_json(tmp_path / "a" / "b" / "out.json", {"premium": 1.6})
        assert json.loads(path.read_text()) == {"premium": 1.6}


class TestCsv:
    def test_header_written_for_no_rows(self, tmp_path):
        path = reports.write_csv(tmp_path / "empty.csv", [], reports.SWEEP_COLUMNS)
        assert path.read_text().strip() == ",".join(reports.SWEEP_COLUMNS)

    def test_missing_values_are_blank(self, tmp_path):
        rows = [{"regime": "zero", "premium": 0.0, "d_star": None}]
        path = reports.write_csv(tmp_path / "rows.csv", rows, reports.SWEEP_COLUMNS)
        with open(path, newline="") as f:
            row = list(csv.DictReader(f))[0]
        assert row["regime"] == "zero"
        assert row["d_star"] == ""
        assert row["premium"] == "0.0"


class TestResolveOutput:
    def test_relative_path_under_base(self, tmp_path):
        assert reports.resolve_output("curve.csv", tmp_path) == tmp_path / "curve.csv"

    def test_absolute_path_kept(self, tmp_path):
        target = tmp_path / "x.json"
        assert reports.resolve_output(target, tmp_path / "other") == target


class TestReadJson:
    def test_reads_object(self, write_config):
        data, text = reports.read_json(write_config({"loss": {"kind": "exponential"}}))
        assert data["loss"]["kind"] == "exponential"
        assert '"loss"' in text

    def test_syntax_error_has_line(self, write_config):
        path = write_config(None, raw='{\n  "loss": {\n    "kind": \n}\n')
        with pytest.raises(ConfigError) as excinfo:
            reports.read_json(path)
        assert excinfo.value.line == 4
        assert str(excinfo.value).startswith("line 4:")

    def test_top_level_must_be_object(self, write_config):
        with pytest.raises(ConfigError, match="top level"):
            reports.read_json(write_config([1, 2]))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            reports.read_json(tmp_path / "absent.json")


class TestAnchorError:
    def test_anchors_innermost_key(self):
        text = '{\n  "loss": {\n    "kind": "zero_inflated_exponential",\n    "q": 1.5\n  }\n}'
        err = reports.anchor_error(ConfigError("loss.q: must lie in (0, 1]"), text)
        assert err.line == 4

    def test_existing_line_kept(self):
        err = ConfigError("bad", 7)
        assert reports.anchor_error(err, "{}") is err

    def test_unknown_key_unanchored(self):
        err = ConfigError("something odd")
        assert reports.anchor_error(err, '{"a": 1}').line is None
