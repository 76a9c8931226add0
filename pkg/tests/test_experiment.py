import csv
import json

import pytest

from ffci.experiment import SUMMARY_COLUMNS, ExperimentPlan, run_experiment, summarize
from ffci.graph import ContractViolation
from ffci.simulator import SimConfig

GOLDEN_HEADER = (
    "n_observed,n,backend,repetitions,completed,"
    "selection_accuracy_mean,selection_accuracy_var,dag_precision_mean,dag_precision_var,"
    "dag_recall_mean,dag_recall_var,dag_f1_mean,dag_f1_var,dag_shd_mean,dag_shd_var"
)


def small_plan(tmp_path, **kw):
    base = SimConfig.linear_gaussian(n_pilot=200, n_latent=(0, 1), n_selection=(0, 1))
    args = dict(base=base, n_observed=(4,), n_samples=(200,), repetitions=3, backend="oracle", out=str(tmp_path))
    args.update(kw)
    return ExperimentPlan(**args)


@pytest.mark.parametrize("kw", [dict(n_observed=()), dict(n_samples=()), dict(repetitions=0),
                                dict(backend="bootstrap")])
def test_plan_validation(kw):
    with pytest.raises(ContractViolation):
        ExperimentPlan(**kw)


def test_plan_defaults_and_grid():
    plan = ExperimentPlan()
    assert len(plan.cells()) == 16 and plan.repetitions == 10 and plan.backend == "data"
    assert plan.run_config(15, 3).n_observed == 15 and plan.run_config(15, 3).seed == 3


def test_plan_dict_roundtrip():
    plan = ExperimentPlan(n_observed=(5,), n_samples=(100, 200), repetitions=2)
    assert ExperimentPlan.from_dict(json.loads(json.dumps(plan.to_dict()))) == plan
    preset = ExperimentPlan.from_dict({"base": "linear_gaussian", "n_observed": [5], "n_samples": [100]})
    assert preset.base == SimConfig.linear_gaussian()
    with pytest.raises(ContractViolation):
        ExperimentPlan.from_dict({"base": "heavy_tails"})


def test_summary_header_is_golden():
    assert ",".join(SUMMARY_COLUMNS) == GOLDEN_HEADER


def test_oracle_single_cell(tmp_path):
    plan = small_plan(tmp_path, n_observed=(5,), repetitions=10)
    res = run_experiment(plan)
    traces = sorted(tmp_path.glob("cell_p5_n200/rep_*/trace.jsonl"))
    assert len(traces) == 10
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0] == GOLDEN_HEADER and len(lines) == 2
    assert res.rows[0]["completed"] == 10 and res.computed_cells == [(5, 200)]
    for name in ("plan.json", "manifest.json"):
        assert (tmp_path / name).exists()


def test_rerun_computes_nothing(tmp_path):
    plan = small_plan(tmp_path, n_samples=(100, 200))
    first = run_experiment(plan)
    before = (tmp_path / "summary.csv").read_text()
    second = run_experiment(plan)
    assert second.computed_cells == [] and (tmp_path / "summary.csv").read_text() == before
    assert second.rows == first.rows


def test_corrupt_cell_is_recomputed(tmp_path):
    plan = small_plan(tmp_path, n_samples=(100, 200))
    run_experiment(plan)
    (tmp_path / "cell_p4_n200" / "cell.json").write_text('{"runs": [')
    rec = json.loads((tmp_path / "cell_p4_n100" / "cell.json").read_text())
    rec["runs"] = rec["runs"][:1]
    (tmp_path / "cell_p4_n100" / "cell.json").write_text(json.dumps(rec))
    assert sorted(run_experiment(plan).computed_cells) == [(4, 100), (4, 200)]


def test_parallel_matches_serial(tmp_path):
    a = run_experiment(small_plan(tmp_path / "a", n_samples=(100, 200)))
    b = run_experiment(small_plan(tmp_path / "b", n_samples=(100, 200), workers=2))
    assert a.rows == b.rows


def test_data_backend_records_runs(tmp_path):
    plan = small_plan(tmp_path, backend="data", repetitions=2, n_samples=(300,))
    res = run_experiment(plan)
    row = res.rows[0]
    assert row["backend"] == "data" and 0 <= row["completed"] <= 2
    with open(res.summary_path) as fh:
        assert next(csv.DictReader(fh))["backend"] == "data"


def test_summarize_uses_population_variance_and_skips_failures():
    rec = {"n_observed": 3, "n": 10, "backend": "data", "runs": [
        {"rep": 0, "selection_accuracy": 1.0, "dag_precision": 0.5, "dag_recall": 1.0, "dag_f1": 0.5, "dag_shd": 2},
        {"rep": 1, "selection_accuracy": 0.5, "dag_precision": 0.5, "dag_recall": 1.0, "dag_f1": 0.5, "dag_shd": 4},
        {"rep": 2, "failed": "acceptance 0/100"},
    ]}
    row = summarize(rec, 3)
    assert row["completed"] == 2 and row["repetitions"] == 3
    assert row["selection_accuracy_mean"] == 0.75 and row["selection_accuracy_var"] == 0.0625
    assert row["dag_shd_mean"] == 3.0 and row["dag_shd_var"] == 1.0
