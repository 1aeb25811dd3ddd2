"""Tests for model size analysis."""

from pathlib import Path

import pytest

from cli.__main__ import main
from cli.analyze import format_table, resolve_spec, size_table
from engine import ConfigurationError
from models import count_parameters, named_spec


PUBLISHED = ["bert_base", "t6", "t3", "t3_small", "t4_tiny", "bigru"]
PUBLISHED_MILLIONS = [108, 65, 44, 17, 14, 31]
PUBLISHED_RELATIVE = [100, 60, 41, 16, 13, 29]
SPEC_DIR = Path(__file__).parents[2] / "configs" / "specs"


@pytest.mark.unit
class TestSizeTable:
    """Test the size comparison table."""

    @pytest.fixture(scope="class")
    def table(self):
        return size_table(PUBLISHED)

    def test_columns(self, table) -> None:
        """Test the table carries the size columns."""
        assert list(table.columns) == [
            "spec", "kind", "layers", "hidden", "feed_forward", "parameters", "non_embedding", "relative_size",
        ]
        assert table["spec"].tolist() == PUBLISHED

    def test_published_totals(self, table) -> None:
        """Test totals are within 3% of the published sizes."""
        for total, expected in zip(table["parameters"], PUBLISHED_MILLIONS):
            assert total / 1e6 == pytest.approx(expected, rel=0.03)

    def test_relative_sizes(self, table) -> None:
        """Test relative sizes are within 3 points of the published ones."""
        for relative, expected in zip(table["relative_size"], PUBLISHED_RELATIVE):
            assert 100 * relative == pytest.approx(expected, abs=3)

    def test_single_spec(self) -> None:
        """Test one spec is 100% of itself."""
        assert size_table(["t4_tiny"])["relative_size"].tolist() == [1.0]

    def test_format(self, table) -> None:
        """Test formatted sizes read in millions and percent."""
        text = format_table(table)
        assert "108.9M" in text
        assert "100%" in text and "13%" in text

    def test_resolve_spec_file(self) -> None:
        """Test spec JSON files resolve like named specs."""
        assert count_parameters(resolve_spec(SPEC_DIR / "bert_base.json")) == count_parameters(named_spec("bert_base"))

    def test_unknown_spec(self) -> None:
        """Test unknown names fail as configuration errors."""
        with pytest.raises(ConfigurationError):
            resolve_spec("bert_huge")


@pytest.mark.unit
class TestAnalyzeCommand:
    """Test the analyze subcommand."""

    def test_prints_table(self, capsys: pytest.CaptureFixture) -> None:
        """Test analyze prints one row per spec and exits 0."""
        assert main(["analyze", "bert_base", "t6"]) == 0
        out = capsys.readouterr().out
        assert "bert_base" in out and "t6" in out
        assert "61%" in out

    def test_bad_spec_exits_2(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        """Test a malformed spec file exits 2."""
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["analyze", str(path)]) == 2
        assert "Configuration error" in capsys.readouterr().err
