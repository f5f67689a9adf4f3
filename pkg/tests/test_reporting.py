import pytest

from dsvm.reporting import (
    ExperimentReport,
    ReportRow,
    figure_path_for,
    render_report_figure,
    report_to_csv,
)


def _row(method, setting, acc, **extras):
    return ReportRow(
        method=method, setting=setting, mean_accuracy=acc, std=1.0, rounds=3,
        extras=extras,
    )


def _curve_report(name, x_key):
    rows = []
    for method, base in (("svm", 80.0), ("dsvm", 84.0)):
        for i, x in enumerate((0.0, 0.1, 1.0)):
            rows.append(_row(method, "multi", base - 3.0 * i, **{x_key: x}))
    return ExperimentReport(name=name, rows=tuple(rows), provenance={"seed": 0})


def test_csv_layout_and_extras_columns():
    report = _curve_report("noise_curve", "sigma")
    text = report_to_csv(report)
    lines = text.splitlines()
    assert lines[0] == "# experiment=noise_curve"
    assert lines[1] == "# seed=0"
    assert lines[2] == "method,setting,mean_accuracy,std,mean_error,rounds,sigma"
    assert len(lines) == 3 + 6
    cells = lines[3].split(",")
    assert float(cells[2]) + float(cells[4]) == pytest.approx(100.0)
    assert report_to_csv(report) == text  # stable output


def test_row_validation():
    with pytest.raises(ValueError):
        ReportRow("svm", "binary", 50.0, std=-1.0, rounds=1)
    with pytest.raises(ValueError):
        ReportRow("svm", "binary", 50.0, std=0.0, rounds=0)


@pytest.mark.parametrize(
    "report",
    [
        _curve_report("noise_curve", "sigma"),
        _curve_report("lambda3_sweep", "lambda3"),
        ExperimentReport(
            name="arrhythmia",
            rows=(
                _row("svm", "binary", 88.0), _row("dsvm", "binary", 90.0),
                _row("svm", "multi", 55.0), _row("dsvm", "multi", 60.0),
            ),
            provenance={"seed": 1},
        ),
        ExperimentReport(
            name="mnist_class",
            rows=(_row("svm", "category", 90.1), _row("dsvm", "category", 91.0)),
            provenance={"seed": 2},
        ),
    ],
    ids=lambda r: r.name,
)
def test_figures_render_for_every_report_kind(report, tmp_path):
    csv_path = tmp_path / f"{report.name}.csv"
    figure = figure_path_for(csv_path)
    render_report_figure(report, figure)
    assert figure.exists()
    assert figure.stat().st_size > 1000
