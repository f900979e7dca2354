"""Sweep figure rendering."""

from mtdem.plots import save_error_plot
from mtdem.sweep import SweepResult, SweepRow


def small_result():
    rows = [
        SweepRow(1.0, "no-prior", 0, 0, 0.8, 100, 1.0),
        SweepRow(1.0, "with-prior", 0, 0, 0.5, 100, 1.0),
        SweepRow(5.0, "no-prior", 0, 0, 0.4, 100, 1.0),
        SweepRow(5.0, "with-prior", 0, 0, 0.3, 100, 1.0),
        SweepRow(10.0, "no-prior", 0, 0, 0.2, 100, 1.0),
        SweepRow(10.0, "with-prior", 0, 0, 0.18, 100, 1.0),
    ]
    return SweepResult(rows=rows)


class TestSaveErrorPlot:
    def test_svg_written_with_labels(self, tmp_path):
        path = tmp_path / "plot.svg"
        save_error_plot(small_result(), path, title="gaussian")
        text = path.read_text()
        assert text.lstrip().startswith("<?xml")
        assert "SNR" in text and "mean relative error" in text
        assert "no-prior" in text and "with-prior" in text

    def test_svg_bytes_reproducible(self, tmp_path):
        a = tmp_path / "a.svg"
        b = tmp_path / "b.svg"
        save_error_plot(small_result(), a)
        save_error_plot(small_result(), b)
        assert a.read_bytes() == b.read_bytes()

    def test_png_supported(self, tmp_path):
        path = tmp_path / "plot.png"
        save_error_plot(small_result(), path)
        assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
