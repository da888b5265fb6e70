import csv
import io
import json
from dataclasses import replace
from pathlib import Path

import pytest

from pcbnet.data import format_dataset_name, parse_dataset_name
from pcbnet.errors import ConfigError
from pcbnet.harness import (
    CSV_COLUMNS,
    Comparison,
    ExperimentSpec,
    ModelSummary,
    RunEntry,
    RunReport,
    aggregate_stats,
    compare_models,
    emit_report,
    emit_timings,
    grid_expand,
    load_grid,
    render_confusion,
    report_from_dict,
    report_to_csv,
    report_to_dict,
    run_experiment,
)
from pcbnet.network import EvalResult

from reference import EXPLORATION_ROWS

SMALL = dict(
    runs=2, epochs=2, custom=True, batch_size=4, learning_rate=1e-3,
    source={"synthetic": {"per_class": 10, "seed": 1}},
    network={"filters": [2, 2, 4, 4], "hidden": 8},
)


def fake_report(accs, dataset="SBT_balanced_60_30t_10f_32x24"):
    runs = []
    for i, a in enumerate(accs):
        tp = round(a * 10)
        runs.append(RunEntry(i, 100 + i, EvalResult(tp, 10 - tp, 0, 0)))
    return RunReport(dataset, runs, 0, 100, 100)


class TestAggregate:
    def test_two_values(self):
        mean, std = aggregate_stats([0.6, 0.8])
        assert mean == pytest.approx(0.7)
        assert std == pytest.approx(0.1414213562, abs=1e-9)

    def test_single_and_empty(self):
        assert aggregate_stats([0.9]) == (0.9, 0.0)
        with pytest.raises(ValueError):
            aggregate_stats([])

    def test_failed_runs_excluded(self):
        report = fake_report([0.6, 0.8])
        report.runs.append(RunEntry(2, 102, None, error="NumericError: nan"))
        assert report.mean_accuracy == pytest.approx(0.7)
        assert len(report.failures) == 1
        assert report_to_dict(report)["aggregate"]["failed"] == 1

    def test_best_prefers_earliest(self):
        assert fake_report([0.7, 0.9, 0.9]).best.run == 1


class TestGrid:
    def test_exploration_block(self):
        desc = {
            "runs": 3,
            "blocks": [
                {"datasets": ["balanced_60"], "test": [20], "depth": [10, 30, 90]},
                {"datasets": ["balanced_60"], "test": [20, 30, 40], "depth": [10]},
                {"datasets": ["unbalanced_30s60n"], "test": [30], "depth": [10, 30, 90]},
                {"datasets": ["balanced_120"], "test": [40, 30], "depth": [10], "flip": [False, True]},
            ],
        }
        specs = grid_expand(desc)
        assert [s.dataset for s in specs] == EXPLORATION_ROWS
        assert all(s.runs == 3 for s in specs)

    def test_resolution_axis(self):
        specs = grid_expand({"datasets": ["bal_240"], "test": [30], "depth": [10, 30],
                             "resolution": ["160x120", "80x60", "40x30", "32x24"]})
        assert len(specs) == 8 and specs[0].dataset == "SBT_balanced_240_30t_10f_160x120"

    @pytest.mark.parametrize("desc", [
        {"blocks": []},
        {"datasets": []},
        {"datasets": ["balanced_60"], "depth": [11]},
        {"datasets": ["balanced_60"], "colour": [1]},
        {"test": [30]},
        {"datasets": ["balanced_60"], "resolution": ["big"]},
    ])
    def test_bad_grids(self, desc):
        with pytest.raises(ConfigError):
            grid_expand(desc)

    def test_shipped_grids(self):
        grids = Path(__file__).resolve().parents[1] / "grids"
        exploration = grid_expand(load_grid(grids / "exploration.json"))
        assert len(exploration) == 48
        expected = {format_dataset_name(replace(parse_dataset_name(n), resolution=(80, 60))) for n in EXPLORATION_ROWS}
        assert expected <= {s.dataset for s in exploration}
        repeated = grid_expand(load_grid(grids / "repeated_runs.json"))
        assert len(repeated) == 16 and all(s.runs == 30 and s.folds == 10 for s in repeated)
        assert "SBT_unbalanced_60s120n_30t_10f_80x60" in {s.dataset for s in repeated}


class TestReports:
    def test_confusion_layout(self):
        text = render_confusion(EvalResult(18, 0, 4, 32), "SBT_unbalanced_60s120n_30t_10f_80x60")
        lines = text.splitlines()
        assert lines[1] == "Accuracy: 92.59%"
        assert lines[3].split() == ["Suspicious", "18", "0", "100%"]
        assert lines[4].split() == ["Normal", "4", "32", "88.9%"]

    def test_json_round_trip(self, tmp_path):
        report = fake_report([0.6, 0.8, 0.7])
        report.runs[1].folds = [EvalResult(1, 0, 0, 1), EvalResult(0, 1, 1, 0)]
        path = emit_report(report, tmp_path / "r.json")
        back = report_from_dict(json.loads(path.read_text()))
        assert back == report
        doc = json.loads(path.read_text())
        doc["aggregate"]["mean_accuracy"] = 0.1
        with pytest.raises(ValueError):
            report_from_dict(doc)

    def test_csv(self):
        rows = list(csv.reader(io.StringIO(report_to_csv(fake_report([0.6, 0.8])))))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert [r[1] for r in rows[1:]] == ["0", "1", "mean", "std"]
        assert float(rows[-1][8]) == pytest.approx(0.1414213562, abs=1e-9)

    def test_text_and_unknown_format(self, tmp_path):
        text = emit_report(fake_report([0.5]), tmp_path / "r.txt").read_text()
        assert "Avg Accuracy: 50.00%" in text
        with pytest.raises(ConfigError):
            emit_report(fake_report([0.5]), tmp_path / "r.xml")

    def test_timings_separate(self, tmp_path):
        report = fake_report([0.6])
        report.runs[0].wall_time = 1.5
        emit_timings(report, tmp_path / "t.csv")
        assert (tmp_path / "t.csv").read_text().splitlines()[1].endswith(",1.500")
        assert "wall" not in json.dumps(report_to_dict(report))

    def test_compare(self):
        cmp = Comparison(ModelSummary(0.717, 0.06, 0.819, EvalResult(34, 2, 11, 25)),
                         ModelSummary(0.730, 0.07, 0.916, EvalResult(36, 0, 6, 30)))
        assert cmp.delta == pytest.approx(0.013, abs=1e-9)
        text = cmp.render()
        assert "+1.3%" in text and "91.6%" in text

    def test_compare_reports(self):
        cmp = compare_models(fake_report([0.6, 0.8]), fake_report([0.7, 0.9]))
        assert cmp.delta == pytest.approx(0.1)
        assert cmp.proposed.best_result == EvalResult(9, 1, 0, 0)


class TestRuns:
    def test_plain_split(self):
        spec = ExperimentSpec("SBT_balanced_20_30t_8f_16x12", **SMALL)
        report = run_experiment(spec)
        assert [r.seed for r in report.runs] == [0, 1]
        assert all(r.ok and r.result.total == 6 for r in report.runs)

    def test_folds_pool_every_entry(self):
        spec = ExperimentSpec("SBT_balanced_20_30t_8f_16x12", **{**SMALL, "runs": 1, "folds": 5})
        entry = run_experiment(spec).runs[0]
        assert len(entry.folds) == 5 and entry.result.total == 20

    def test_parallel_matches_serial(self, monkeypatch):
        spec = ExperimentSpec("SBT_balanced_20_30t_8f_16x12", **SMALL)
        serial = report_to_dict(run_experiment(spec))
        monkeypatch.setenv("PCBNET_THREADS", "2")
        assert report_to_dict(run_experiment(spec)) == serial

    def test_bad_threads(self, monkeypatch):
        monkeypatch.setenv("PCBNET_THREADS", "many")
        with pytest.raises(ConfigError):
            run_experiment(ExperimentSpec("SBT_balanced_20_30t_8f_16x12", **SMALL))

    def test_bad_spec(self):
        with pytest.raises(ConfigError):
            ExperimentSpec("SBT_balanced_60", runs=0)
        with pytest.raises(ConfigError):
            ExperimentSpec("SBT_balanced_60", folds=1)
