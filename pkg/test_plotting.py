import pytest

from plotting import plot_scan
from scan import ModelSpec, ScanAxis, ScanConfig, extract_seam, run_scan

SPEC = ModelSpec(kind="dimer", channel="dephasing", gamma0=1.0, j=0.25)


class TestPlotScan:
    def test_line_plot(self, tmp_path):
        r = run_scan(ScanConfig(model=SPEC, axis1=ScanAxis("c", 0.0, 1.0, 21), observables=("ep_strength",)))
        path = plot_scan(r, tmp_path / "line.svg", extracted=extract_seam(r))
        text = path.read_text()
        assert text.lstrip().startswith("<?xml")
        assert "<svg" in text

    def test_heatmap_with_overlay_and_config(self, tmp_path):
        cfg = ScanConfig(model=SPEC, axis1=ScanAxis("c", 0.0, 1.5, 7),
                         axis2=ScanAxis("j", 0.1, 0.4, 4), observables=("ep_strength",))
        r = run_scan(cfg)
        overlay = [("discriminant root", [0.8, 0.2], [0.1, 0.4])]
        path = plot_scan(r, tmp_path / "map.svg", seams=overlay, config_echo={"tag": "heatmap"})
        text = path.read_text()
        assert "<svg" in text
        assert "heatmap" in text

    def test_missing_observable(self, tmp_path):
        r = run_scan(ScanConfig(model=SPEC, axis1=ScanAxis("c", 0.0, 1.0, 3), observables=("n_marginal",)))
        with pytest.raises(KeyError):
            plot_scan(r, tmp_path / "none.svg")
