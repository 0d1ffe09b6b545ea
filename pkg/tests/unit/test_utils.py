"""
Unit tests for utility functions.
"""

import json

import pytest

from cfpp.utils import (
    header_comment,
    provenance,
    read_header,
    read_jsonl,
    stable_hash,
    write_jsonl,
)


class TestStableHash:
    """Test stable_hash function."""

    def test_key_order_does_not_matter(self):
        """Test that dictionaries with the same items hash equally."""
        assert stable_hash({"b": 1, "a": {"y": 2, "x": 3}}) == stable_hash({"a": {"x": 3, "y": 2}, "b": 1})

    def test_values_matter(self):
        """Test that a changed value changes the hash."""
        assert stable_hash({"a": 1}) != stable_hash({"a": 2})

    def test_hex_digest(self):
        """Test that the hash is a 64-character hex digest."""
        digest = stable_hash({})
        assert len(digest) == 64
        int(digest, 16)


class TestHeaderComment:
    """Test header_comment function."""

    def test_sorted_fields(self):
        """Test that fields are written sorted as key=value."""
        assert header_comment({"seed": 7, "config_hash": "abc"}) == "# config_hash=abc seed=7\n"

    def test_empty_header(self):
        """Test that no header gives no comment line."""
        assert header_comment(None) == ""
        assert header_comment({}) == ""

    def test_provenance_fields(self):
        """Test that provenance carries hash and seed."""
        assert provenance("h", 3) == {"config_hash": "h", "seed": 3}


class TestJsonLines:
    """Test write_jsonl, read_jsonl and read_header."""

    def test_roundtrip_with_header(self, tmp_path):
        """Test that records come back without the header record."""
        path = tmp_path / "out" / "records.jsonl"
        count = write_jsonl(path, [{"b": 2, "a": 1}, {"c": [1, 2]}], provenance("h", 1))
        assert count == 2
        assert read_jsonl(path) == [{"a": 1, "b": 2}, {"c": [1, 2]}]
        assert read_header(path) == {"config_hash": "h", "seed": 1}

    def test_keys_sorted_on_disk(self, tmp_path):
        """Test that keys are written sorted for byte-stable output."""
        path = tmp_path / "records.jsonl"
        write_jsonl(path, [{"b": 2, "a": 1}])
        assert path.read_text(encoding="utf-8") == '{"a": 1, "b": 2}\n'

    def test_no_header(self, tmp_path):
        """Test that read_header returns None without a header record."""
        path = tmp_path / "records.jsonl"
        write_jsonl(path, [{"a": 1}])
        assert read_header(path) is None

    def test_blank_lines_skipped(self, tmp_path):
        """Test that blank lines are ignored."""
        path = tmp_path / "records.jsonl"
        path.write_text('{"a": 1}\n\n{"a": 2}\n', encoding="utf-8")
        assert read_jsonl(path) == [{"a": 1}, {"a": 2}]

    def test_invalid_json_raises_error(self, tmp_path):
        """Test that a malformed line names its position."""
        path = tmp_path / "records.jsonl"
        path.write_text('{"a": 1}\nnot json\n', encoding="utf-8")
        with pytest.raises(ValueError, match=":2: failed to parse JSON"):
            read_jsonl(path)

    def test_non_object_raises_error(self, tmp_path):
        """Test that a JSON array line is rejected."""
        path = tmp_path / "records.jsonl"
        path.write_text(json.dumps([1, 2]) + "\n", encoding="utf-8")
        with pytest.raises(ValueError, match="expected JSON object"):
            read_jsonl(path)
