"""Synthetic scenario generation, pipeline artifacts, CLI surface."""

import json
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from flexsum import (
    ScenarioSpec,
    generate_scenario,
    load_scenario,
    run_pipeline,
    save_scenario,
)
from flexsum.cli import main
from flexsum.scenario import scenario_to_dict
from flexsum.storage import ev_to_dict


DESK = dict(n_households=12, ev_share=0.5, d=12, dt=2.0)


class TestGenerator:
    def test_paper_scale_counts(self):
        spec = ScenarioSpec(n_households=300, ev_share=0.3, d=96, dt=0.25, seed=1)
        sc = generate_scenario(spec)
        assert len(sc.devices) == 90
        assert sc.base_load.shape == (96,)
        assert 250 <= float(sc.base_load.max()) <= 450  # residential-area scale

    def test_no_ev_share(self):
        sc = generate_scenario(ScenarioSpec(n_households=10, ev_share=0.0, d=8,
                                            dt=3.0, seed=2))
        assert sc.devices == ()

    def test_same_seed_same_scenario(self):
        a = generate_scenario(ScenarioSpec(seed=4, **DESK))
        b = generate_scenario(ScenarioSpec(seed=4, **DESK))
        assert json.dumps(scenario_to_dict(a)) == json.dumps(scenario_to_dict(b))

    def test_different_seed_differs(self):
        a = generate_scenario(ScenarioSpec(seed=4, **DESK))
        b = generate_scenario(ScenarioSpec(seed=5, **DESK))
        assert json.dumps(scenario_to_dict(a)) != json.dumps(scenario_to_dict(b))

    def test_rejects_bad_spec(self):
        with pytest.raises(ValueError):
            ScenarioSpec(n_households=5, ev_share=1.5, d=8, dt=1.0, seed=0)
        with pytest.raises(ValueError):
            ScenarioSpec(n_households=5, ev_share=0.5, d=100, dt=1.0, seed=0)

    def test_scenario_file_roundtrip(self, tmp_path):
        sc = generate_scenario(ScenarioSpec(seed=4, **DESK))
        path = save_scenario(sc, tmp_path / "scenario.json")
        again = load_scenario(path)
        assert np.array_equal(again.base_load, sc.base_load)
        assert len(again.devices) == len(sc.devices)
        assert again.ev_specs is not None


class TestPipeline:
    @pytest.fixture(scope="class")
    def pipeline_run(self, tmp_path_factory):
        out = tmp_path_factory.mktemp("pipeline")
        sc = generate_scenario(ScenarioSpec(seed=7, **DESK))
        summary = run_pipeline(sc, g=144, seed=7, out_dir=out, quality_samples=8)
        return out, summary

    def test_csv_row_count_and_header(self, pipeline_run):
        out, _ = pipeline_run
        lines = (out / "timeseries.csv").read_text().strip().splitlines()
        assert lines[0] == "t,base_kw,uncontrolled_kw,vertex_kw,central_kw"
        assert len(lines) == 1 + DESK["d"]

    def test_summary_peaks_match_csv(self, pipeline_run):
        out, summary = pipeline_run
        rows = np.loadtxt(out / "timeseries.csv", delimiter=",", skiprows=1)
        assert abs(rows[:, 2].max() - summary["peak_uncontrolled_kw"]) <= 1e-9
        assert abs(rows[:, 3].max() - summary["peak_vertex_kw"]) <= 1e-9
        assert abs(rows[:, 4].max() - summary["peak_centralized_kw"]) <= 1e-9

    def test_summary_json_is_reread_equal(self, pipeline_run):
        out, summary = pipeline_run
        on_disk = json.loads((out / "summary.json").read_text())
        assert on_disk == json.loads(json.dumps(summary))

    def test_svg_is_well_formed_with_four_series(self, pipeline_run):
        out, _ = pipeline_run
        root = ET.parse(out / "loads.svg").getroot()
        assert root.tag.endswith("svg")
        polylines = root.findall(".//{http://www.w3.org/2000/svg}polyline")
        assert len(polylines) == 4

    def test_reproducible_bytes(self, tmp_path):
        sc = generate_scenario(ScenarioSpec(seed=9, **DESK))
        out = tmp_path / "run"
        run_pipeline(sc, g=40, seed=9, out_dir=out, quality_samples=4)
        first_csv = (out / "timeseries.csv").read_bytes()
        first_json = (out / "summary.json").read_bytes()
        run_pipeline(sc, g=40, seed=9, out_dir=out, quality_samples=4)
        assert (out / "timeseries.csv").read_bytes() == first_csv
        assert (out / "summary.json").read_bytes() == first_json

    def test_empty_fleet_degenerates_to_base(self, tmp_path):
        sc = generate_scenario(ScenarioSpec(n_households=6, ev_share=0.0, d=8,
                                            dt=3.0, seed=3))
        summary = run_pipeline(sc, g=16, seed=3, out_dir=tmp_path, quality_samples=4)
        assert summary["peak_vertex_kw"] == summary["peak_base_kw"]
        assert summary["quality"] is None


class TestCli:
    def _scenario_file(self, tmp_path) -> Path:
        sc = generate_scenario(ScenarioSpec(seed=7, **DESK))
        return Path(save_scenario(sc, tmp_path / "scenario.json"))

    def test_generate_then_report(self, tmp_path):
        rc = main(["generate", "--households", "12", "--ev-share", "0.5",
                   "--d", "12", "--dt", "2.0", "--seed", "7",
                   "--out-dir", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "scenario.json").exists()
        rc = main(["report", "--scenario", str(tmp_path / "scenario.json"),
                   "--g", "64", "--seed", "7", "--out-dir", str(tmp_path)])
        assert rc == 0
        for name in ("timeseries.csv", "summary.json", "loads.svg"):
            assert (tmp_path / name).exists()

    def test_aggregate_dispatch_disaggregate_verify(self, tmp_path):
        scenario = self._scenario_file(tmp_path)
        assert main(["aggregate", "--scenario", str(scenario), "--g", "40",
                     "--seed", "3", "--out-dir", str(tmp_path)]) == 0
        flex = tmp_path / "flexibility.bin"
        assert flex.exists() and flex.with_suffix(".bin.json").exists()

        for method in ("vertex", "central", "uncontrolled"):
            args = ["dispatch", "--method", method, "--scenario", str(scenario),
                    "--out-dir", str(tmp_path)]
            if method == "vertex":
                args += ["--flex", str(flex)]
            assert main(args) == 0
        vertex = json.loads((tmp_path / "dispatch_vertex.json").read_text())
        central = json.loads((tmp_path / "dispatch_centralized.json").read_text())
        unc = json.loads((tmp_path / "dispatch_uncontrolled.json").read_text())
        assert unc["peak_kw"] >= vertex["peak_kw"] >= central["peak_kw"] - 1e-6

        target = tmp_path / "target.json"
        target.write_text(json.dumps(vertex["aggregate_profile"]))
        assert main(["disaggregate", "--flex", str(flex), "--target", str(target),
                     "--tol", "1e-6", "--out-dir", str(tmp_path)]) == 0
        disagg = json.loads((tmp_path / "disaggregation.json").read_text())
        total = np.asarray(disagg["aggregate"])
        assert np.allclose(total, vertex["aggregate_profile"], atol=1e-5)

        assert main(["verify", "--scenario", str(scenario), "--flex", str(flex),
                     "--samples", "4", "--out-dir", str(tmp_path)]) == 0
        quality = json.loads((tmp_path / "quality.json").read_text())
        assert quality["all_contained"] is True

    def test_usage_error_exit_code_is_one(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "flexsum.cli", "dispatch", "--method", "bogus"],
            capture_output=True,
        )
        assert proc.returncode == 1

    def test_infeasible_scenario_exit_code_is_two(self, tmp_path):
        from flexsum import EvSpec

        # an EV that must end full but can never charge
        ev = EvSpec(x_max=6.6, x_min=-6.6, s_max=39.0, s_min=0.0, s_init=0.0,
                    s_final=39.0, availability=np.zeros(4, int),
                    trips=np.zeros(4), alpha=1.0, dt=0.25)
        data = {
            "format_version": 1,
            "d": 4,
            "dt": 0.25,
            "base_load": [1.0, 1.0, 1.0, 1.0],
            "devices": [{"kind": "ev", **ev_to_dict(ev)}],
        }
        path = tmp_path / "impossible.json"
        path.write_text(json.dumps(data))
        rc = main(["dispatch", "--method", "central", "--scenario", str(path),
                   "--out-dir", str(tmp_path)])
        assert rc == 2
