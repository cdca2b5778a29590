import math

import numpy as np
import pandas as pd
import pytest

from noisegraph import PositivityViolated
from scan import (
    CSV_COLUMNS,
    AllPointsExcluded,
    InsufficientPoints,
    ModelSpec,
    ScanAxis,
    ScanConfig,
    ScanConfigError,
    ScanResult,
    extract_seam,
    fit_scaling,
    read_scan_csv,
    run_scan,
    scan_frame,
    write_scan_csv,
)

DEPHASING = ModelSpec(kind="dimer", channel="dephasing", gamma0=1.0, j=0.25)


def dephasing_scan(steps=41, observables=("ep_strength",), jobs=1):
    cfg = ScanConfig(model=DEPHASING, axis1=ScanAxis("c", 0.0, 1.0, steps),
                     observables=observables, jobs=jobs)
    return run_scan(cfg)


class TestScanAxis:
    def test_grid(self):
        axis = ScanAxis("c", -1.0, 1.0, 5)
        np.testing.assert_allclose(axis.grid(), [-1, -0.5, 0, 0.5, 1])
        assert axis.step == pytest.approx(0.5)

    @pytest.mark.parametrize("kwargs", [
        dict(name="c", lo=0.0, hi=1.0, steps=1),
        dict(name="c", lo=1.0, hi=1.0, steps=5),
        dict(name="kappa", lo=0.0, hi=1.0, steps=5),
        dict(name="gamma0", lo=0.0, hi=1.0, steps=5),
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ScanConfigError):
            ScanAxis(**kwargs)


class TestScanConfig:
    def test_unknown_observable(self):
        with pytest.raises(ScanConfigError):
            ScanConfig(model=DEPHASING, axis1=ScanAxis("c", 0, 1, 3), observables=("purity",))

    def test_axes_must_differ(self):
        with pytest.raises(ScanConfigError):
            ScanConfig(model=DEPHASING, axis1=ScanAxis("c", 0, 1, 3), axis2=ScanAxis("c", 0, 1, 3))

    def test_jobs_positive(self):
        with pytest.raises(ScanConfigError):
            ScanConfig(model=DEPHASING, axis1=ScanAxis("c", 0, 1, 3), jobs=0)

    def test_echo_drops_jobs(self):
        echo = ScanConfig(model=DEPHASING, axis1=ScanAxis("c", 0, 1, 3), jobs=4).to_dict()
        assert "jobs" not in echo
        assert echo["axis1"] == {"name": "c", "lo": 0, "hi": 1, "steps": 3}


class TestModelSpec:
    def test_dimer_out_of_range(self):
        with pytest.raises(PositivityViolated):
            DEPHASING.with_param("c", 1.2).build()

    def test_cycle(self):
        model = ModelSpec(kind="cycle", channel="relaxation", n=3, c=0.5, j=0.2).build()
        assert model.d == 8
        assert ModelSpec(kind="cycle", n=5).n_sites() == 5

    def test_custom_needs_adjacency(self):
        with pytest.raises(ScanConfigError):
            ModelSpec(kind="custom").build()

    def test_custom(self):
        spec = ModelSpec(kind="custom", adjacency=((0.0, 1.0, 0.0), (1.0, 0.0, 1.0), (0.0, 1.0, 0.0)))
        assert spec.n_sites() == 3
        assert spec.build().correlation.graph.regular_degree is None

    def test_unknown_kind(self):
        with pytest.raises(ScanConfigError):
            ModelSpec(kind="lattice").build()


class TestRunScan:
    def test_one_dimensional_shapes(self):
        r = dephasing_scan(steps=11, observables=("ep_strength", "spectral_gap", "n_marginal", "defective_any"))
        assert not r.is_2d
        assert r.axis_names == ("c", None)
        for name in ("ep_strength", "spectral_gap", "n_marginal", "defective_any"):
            assert r.values[name].shape == (11,)
        assert not r.excluded.any()
        assert np.all(r.values["ep_strength"] >= 1.0)
        assert r.meta["config"]["model"]["j"] == 0.25

    def test_marginal_modes_at_full_correlation(self):
        r = dephasing_scan(steps=5, observables=("n_marginal",))
        assert r.values["n_marginal"][-1] == 2
        assert r.values["n_marginal"][0] == 0

    def test_excluded_points(self):
        cfg = ScanConfig(model=DEPHASING, axis1=ScanAxis("c", 0.0, 1.5, 4), observables=("ep_strength",))
        r = run_scan(cfg)
        np.testing.assert_array_equal(r.excluded, [False, False, False, True])
        assert math.isnan(r.values["ep_strength"][-1])

    def test_all_points_excluded(self):
        spec = ModelSpec(kind="cycle", channel="dephasing", n=4)
        cfg = ScanConfig(model=spec, axis1=ScanAxis("c", 0.6, 0.9, 3), observables=("ep_strength",))
        with pytest.raises(AllPointsExcluded):
            run_scan(cfg)

    def test_two_dimensional_shape(self):
        cfg = ScanConfig(model=DEPHASING, axis1=ScanAxis("c", 0.0, 1.0, 5),
                         axis2=ScanAxis("j", 0.1, 0.3, 3), observables=("ep_strength",))
        r = run_scan(cfg)
        assert r.is_2d
        assert r.values["ep_strength"].shape == (5, 3)
        assert r.axis_names == ("c", "j")

    def test_worker_count_does_not_change_csv(self, tmp_path):
        serial = write_scan_csv(dephasing_scan(steps=9), tmp_path / "serial.csv")
        pooled = write_scan_csv(dephasing_scan(steps=9, jobs=2), tmp_path / "pooled.csv")
        assert serial.read_bytes() == pooled.read_bytes()


class TestExtractSeam:
    def test_one_dimensional(self):
        seam = extract_seam(dephasing_scan())
        assert seam
        assert min(abs(p.axis1 - 0.5) for p in seam) <= 0.025 + 1e-12
        assert all(p.axis2 is None for p in seam)

    def test_two_dimensional_follows_discriminant_root(self):
        cfg = ScanConfig(model=DEPHASING, axis1=ScanAxis("c", 0.0, 1.0, 21),
                         axis2=ScanAxis("j", 0.1, 0.3, 3), observables=("ep_strength",))
        seam = extract_seam(run_scan(cfg))
        for j in (0.1, 0.2, 0.3):
            row = [p for p in seam if p.axis2 == pytest.approx(j)]
            assert row
            assert min(abs(p.axis1 - (1 - 2 * j)) for p in row) <= 0.05 + 1e-12

    def test_two_dimensional_relaxation_follows_imbalance_seam(self):
        spec = ModelSpec(kind="dimer", channel="relaxation", gamma0=1.0)
        cfg = ScanConfig(model=spec, axis1=ScanAxis("c", -1.0, 1.0, 41),
                         axis2=ScanAxis("delta", 0.13, 0.48, 8), observables=("ep_strength",))
        step = cfg.axis1.step
        seam = extract_seam(run_scan(cfg))
        assert seam
        for point in seam:
            assert abs(abs(point.axis1) - 2 * point.axis2) <= 2 * step + 1e-9, point
        for delta in cfg.axis2.grid():
            row = [p.axis1 for p in seam if p.axis2 == pytest.approx(delta)]
            for side in (-1, 1):
                assert min(abs(c - side * 2 * delta) for c in row) <= step + 1e-9, (delta, row)
        assert len({p.branch for p in seam}) == 2

    def test_seam_on_the_grid_edge(self):
        spec = ModelSpec(kind="dimer", channel="relaxation", gamma0=1.0)
        cfg = ScanConfig(model=spec, axis1=ScanAxis("c", -1.0, 1.0, 41),
                         axis2=ScanAxis("delta", 0.49, 0.5, 2), observables=("ep_strength",))
        step = cfg.axis1.step
        seam = extract_seam(run_scan(cfg))
        on_edge = sorted(p.axis1 for p in seam if p.axis2 == pytest.approx(0.5))
        assert on_edge == [pytest.approx(-1.0), pytest.approx(1.0)]
        near_edge = [p.axis1 for p in seam if p.axis2 == pytest.approx(0.49)]
        for side in (-1, 1):
            assert min(abs(c - side) for c in near_edge) <= step + 1e-9

    def test_shoulders_dropped_and_edge_maxima_kept(self):
        grid1 = np.linspace(-1.0, 1.0, 41)
        grid2 = np.array([0.2, 0.5])
        c, delta = np.meshgrid(grid1, grid2, indexing="ij")
        field = 1.0 + 1.0 / (np.abs(np.abs(c) - 2 * delta) + 0.005)
        # local maximum on the flank of the c=0.4 peak, three steps off the ridge
        field[np.argmin(np.abs(grid1 - 0.25)), 0] = 12.0
        r = ScanResult(grid1=grid1, grid2=grid2, values={"ep_strength": field},
                       excluded=np.zeros(field.shape, dtype=bool), meta={"axis1": "c", "axis2": "delta"})
        found = sorted((p.axis2, p.axis1) for p in extract_seam(r))
        expected = [(0.2, -0.4), (0.2, 0.4), (0.5, -1.0), (0.5, 1.0)]
        assert len(found) == len(expected)
        for got, want in zip(found, expected):
            assert got == pytest.approx(want)

    def test_unknown_observable(self):
        with pytest.raises(KeyError):
            extract_seam(dephasing_scan(steps=5), observable="spectral_gap")


class TestFitScaling:
    def test_square_root_divergence(self):
        fit = fit_scaling(dephasing_scan(steps=201), mu_ep=0.5, window=(0.015, 0.1))
        assert fit.exponent == pytest.approx(-0.5, abs=0.1)
        assert fit.r_squared > 0.9
        assert fit.n_points >= 8

    def test_window_too_narrow(self):
        with pytest.raises(InsufficientPoints):
            fit_scaling(dephasing_scan(steps=41), mu_ep=0.5, window=(0.03, 0.06))

    def test_rejects_two_dimensional(self):
        cfg = ScanConfig(model=DEPHASING, axis1=ScanAxis("c", 0, 1, 3),
                         axis2=ScanAxis("j", 0.1, 0.2, 2), observables=("ep_strength",))
        with pytest.raises(ValueError):
            fit_scaling(run_scan(cfg), mu_ep=0.5, window=(0.0, 1.0))


class TestScanCsv:
    def test_frame_layout(self):
        frame = scan_frame(dephasing_scan(steps=5, observables=("ep_strength", "n_marginal")))
        assert list(frame.columns) == CSV_COLUMNS
        assert str(frame["n_marginal"].dtype) == "Int64"
        assert frame["defective_any"].isna().all()
        assert frame["axis2"].isna().all()

    def test_header_and_round_trip(self, tmp_path):
        r = dephasing_scan(steps=7, observables=("ep_strength", "spectral_gap"))
        path = write_scan_csv(r, tmp_path / "scan.csv")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# epscope scan v")
        assert lines[1] == "# axis1: c"
        assert lines[2] == "# axis2: "
        assert lines[3].startswith("# config: {")
        assert lines[4] == ",".join(CSV_COLUMNS)
        assert "timestamp" not in path.read_text()
        assert b"\r\n" not in path.read_bytes()

        back = read_scan_csv(path)
        assert back.axis_names == ("c", None)
        np.testing.assert_array_equal(back.grid1, r.grid1)
        finite = r.values["ep_strength"] < 1e15
        np.testing.assert_array_equal(back.values["ep_strength"][finite], r.values["ep_strength"][finite])
        np.testing.assert_array_equal(back.values["spectral_gap"], r.values["spectral_gap"])
        assert "n_marginal" not in back.values
        assert back.meta["config"]["axis1"]["name"] == "c"

    def test_two_dimensional_round_trip(self, tmp_path):
        cfg = ScanConfig(model=DEPHASING, axis1=ScanAxis("c", 0.0, 1.5, 4),
                         axis2=ScanAxis("j", 0.1, 0.3, 3), observables=("ep_strength",))
        r = run_scan(cfg)
        back = read_scan_csv(write_scan_csv(r, tmp_path / "scan2d.csv"))
        assert back.values["ep_strength"].shape == (4, 3)
        np.testing.assert_array_equal(back.excluded, r.excluded)
        assert back.axis_names == ("c", "j")

    def test_plain_table_without_comment_lines(self, tmp_path):
        r = dephasing_scan(steps=5)
        path = write_scan_csv(r, tmp_path / "plain.csv", comment_header=False)
        assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
        frame = pd.read_csv(path)
        assert list(frame.columns) == CSV_COLUMNS
        assert len(frame) == 5
        back = read_scan_csv(path)
        np.testing.assert_array_equal(back.grid1, r.grid1)
