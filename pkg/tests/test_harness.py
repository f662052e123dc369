import json

import numpy as np
import pytest

from ccalign.errors import ValidationError
from ccalign.harness import (
    ExperimentSpec,
    ImprovementRow,
    format_improvement_table,
    improvement_table,
    run_comparison,
    run_experiment,
    run_fraction_sweep,
    run_imbalance_sweep,
    spec_from_json,
    spec_to_json,
)
from ccalign.report import emit_report
from ccalign.store import EmbeddingMatrix, PairedDataset, data_fingerprint
from ccalign.synth import gen_two_view, generate_preset

FAST = {"epochs": 25}  # full protocol epochs are exercised by the acceptance suite


@pytest.fixture(scope="module")
def shared8():
    return generate_preset("shared8", seed=42)


@pytest.fixture(scope="module")
def small_two_view():
    return gen_two_view(
        k_shared=4, d_x=12, d_y=8, n_classes=4, n_per_class=120,
        nuisance_scale=4.0, noise_scale=0.5, seed=3,
    )


def test_spec_validation():
    with pytest.raises(ValidationError):
        ExperimentSpec(regime="nope")
    with pytest.raises(ValidationError):
        ExperimentSpec(regime="reduce_dim", seeds=())
    with pytest.raises(ValidationError):
        ExperimentSpec(regime="reduce_dim", methods=("knn",))
    with pytest.raises(ValidationError):
        ExperimentSpec(regime="imbalance_sweep")
    with pytest.raises(ValidationError):
        ExperimentSpec(regime="imbalance_sweep", ratios=(2.0, 2.0))
    with pytest.raises(ValidationError):
        ExperimentSpec(regime="fraction_sweep", fractions=(0.0, 1.0))
    with pytest.raises(ValidationError):
        ExperimentSpec(regime="reduce_dim", probe_overrides={"optimizer": "adam"})
    # methods are normalized to canonical order
    spec = ExperimentSpec(regime="reduce_dim", methods=("cca", "baseline"))
    assert spec.methods == ("baseline", "cca")


def test_spec_json_round_trip(tmp_path):
    spec = ExperimentSpec(
        regime="imbalance_sweep", methods=("cca",), seeds=(0, 1),
        ratios=(1.0, 4.0), probe_overrides={"epochs": 5},
    )
    path = tmp_path / "spec.json"
    path.write_text(spec_to_json(spec))
    assert spec_from_json(path) == spec
    doc = json.loads(spec_to_json(spec))
    doc["mystery"] = 1
    path.write_text(json.dumps(doc))
    with pytest.raises(ValidationError):
        spec_from_json(path)


def test_cca_beats_pca_beats_chance_on_nuisance_dominated_data(shared8):
    train, val = shared8
    spec = ExperimentSpec(regime="reduce_dim", seeds=(0, 1), probe_overrides=FAST)
    report = run_comparison(spec, data=(train, val))
    baseline = report.mean_accuracy("baseline", "x")
    pca = report.mean_accuracy("pca", "x")
    cca = report.mean_accuracy("cca", "x")
    assert cca > pca > 1.0 / 10 + 0.05
    assert cca >= baseline - 0.01


def test_identical_views_cca_matches_baseline():
    # well-conditioned features and enough epochs that both probes converge;
    # the projection is then an invertible change of basis with equal information
    train, val = gen_two_view(
        k_shared=4, d_x=12, d_y=8, n_classes=4, n_per_class=120,
        nuisance_scale=1.0, noise_scale=0.5, seed=3,
    )
    twin_train = PairedDataset(
        view_x=train.view_x, view_y=EmbeddingMatrix(train.view_x.values.copy()),
        labels=train.labels, sample_ids=train.sample_ids,
    )
    twin_val = PairedDataset(
        view_x=val.view_x, view_y=EmbeddingMatrix(val.view_x.values.copy()),
        labels=val.labels, sample_ids=val.sample_ids,
    )
    spec = ExperimentSpec(
        regime="same_dim_refine", methods=("baseline", "cca"), seeds=(0, 1),
        probe_overrides={"epochs": 60},
    )
    report = run_comparison(spec, data=(twin_train, twin_val))
    delta = report.mean_accuracy("cca", "x") - report.mean_accuracy("baseline", "x")
    assert abs(delta) < 0.03


def test_symmetric_refinement_improves_both_views():
    train, val = gen_two_view(
        k_shared=8, d_x=32, d_y=32, n_classes=10, n_per_class=400,
        nuisance_scale=6.0, noise_scale=0.55, seed=5,
    )
    spec = ExperimentSpec(
        regime="same_dim_refine", methods=("baseline", "cca"), seeds=(0, 1, 2),
        score_view="both", probe_overrides={"epochs": 60},
    )
    report = run_comparison(spec, data=(train, val))
    for view in ("x", "y"):
        assert report.mean_accuracy("cca", view) > report.mean_accuracy("baseline", view)


def test_baseline_only_report_shape(small_two_view):
    train, val = small_two_view
    spec = ExperimentSpec(
        regime="reduce_dim", methods=("baseline",), seeds=(0, 1, 2), probe_overrides=FAST
    )
    report = run_comparison(spec, data=(train, val))
    assert len(report.rows) == 3
    assert report.aggregates() == [
        (None, "baseline", "x", pytest.approx(report.mean_accuracy("baseline", "x")),
         pytest.approx(np.std(report.accuracies("baseline", "x")))),
    ]


def test_dim_bookkeeping(small_two_view):
    train, val = small_two_view
    spec = ExperimentSpec(regime="reduce_dim", seeds=(0,), probe_overrides={"epochs": 2})
    report = run_comparison(spec, data=(train, val))
    assert report.dim_record("baseline", "x").proj_dim == 12
    for method in ("pca", "cca"):
        rec = report.dim_record(method, "x")
        assert rec.proj_dim == 8 == min(train.view_x.dim, train.view_y.dim)
        assert rec.dim_delta == (8 - 12) / 12


def test_hygiene_fingerprints_come_from_train_split(small_two_view):
    train, val = small_two_view
    spec = ExperimentSpec(regime="reduce_dim", seeds=(0,), probe_overrides={"epochs": 2})
    report = run_comparison(spec, data=(train, val))
    assert report.provenance["train_fingerprint_x"] == data_fingerprint(train.view_x.values)
    assert report.provenance["train_fingerprint_x"] != data_fingerprint(val.view_x.values)


def test_imbalance_ratio_one_matches_plain_comparison(small_two_view):
    train, val = small_two_view
    base = ExperimentSpec(
        regime="reduce_dim", methods=("cca",), seeds=(0, 1), probe_overrides=FAST
    )
    plain = run_comparison(base, data=(train, val))
    sweep_spec = ExperimentSpec(
        regime="imbalance_sweep", methods=("cca",), seeds=(0, 1), ratios=(1.0,),
        probe_overrides=FAST,
    )
    sweep = run_imbalance_sweep(sweep_spec, data=(train, val))
    for seed in (0, 1):
        a = [r.accuracy for r in plain.rows if r.seed == seed]
        b = [r.accuracy for r in sweep.rows if r.seed == seed]
        assert a == b  # bitwise identical protocol at R = 1


def test_imbalance_sweep_realized_ratios_and_decline(shared8):
    train, val = shared8
    spec = ExperimentSpec(
        regime="imbalance_sweep", methods=("cca",), seeds=(0,), ratios=(1.0, 4.0, 16.0),
        probe_overrides=FAST,
    )
    report = run_imbalance_sweep(spec, data=(train, val))
    realized = json.loads(report.provenance["realized_ratios"])
    assert realized["1"] == 1.0
    assert realized["4"] == 4.0
    assert realized["16"] == pytest.approx(200 / 13, abs=1e-4)
    series = [report.mean_accuracy("cca", "x", r) for r in (1.0, 4.0, 16.0)]
    assert series[0] > series[-1]


def test_imbalance_sweep_requires_balanced_base(small_two_view):
    train, val = small_two_view
    lopsided = train.take(np.arange(train.count - 1))
    spec = ExperimentSpec(
        regime="imbalance_sweep", methods=("cca",), seeds=(0,), ratios=(2.0,)
    )
    with pytest.raises(ValidationError):
        run_imbalance_sweep(spec, data=(lopsided, val))


def test_fraction_sweep_full_fraction_matches_baseline(small_two_view):
    train, val = small_two_view
    sweep_spec = ExperimentSpec(
        regime="fraction_sweep", seeds=(0,), fractions=(1.0,), probe_overrides=FAST
    )
    sweep = run_fraction_sweep(sweep_spec, data=(train, val))
    plain_spec = ExperimentSpec(
        regime="reduce_dim", methods=("baseline",), seeds=(0,), score_view="both",
        probe_overrides=FAST,
    )
    plain = run_comparison(plain_spec, data=(train, val))
    for view in ("x", "y"):
        assert sweep.mean_accuracy("baseline", view, 1.0) == plain.mean_accuracy(
            "baseline", view
        )


def test_fraction_sweep_monotone_trend(shared8):
    train, val = shared8
    spec = ExperimentSpec(
        regime="fraction_sweep", seeds=(0, 1), fractions=(0.05, 0.25, 1.0),
        probe_overrides={"epochs": 40},
    )
    report = run_fraction_sweep(spec, data=(train, val))
    series = [report.mean_accuracy("baseline", "x", f) for f in (0.05, 0.25, 1.0)]
    assert series[2] >= series[0] - 0.01
    assert series[2] > 0.8
    # baseline rows exist for both views even with score_view left at default
    assert report.accuracies("baseline", "y", 0.25)


def test_run_experiment_dispatch(small_two_view):
    train, val = small_two_view
    spec = ExperimentSpec(
        regime="fraction_sweep", seeds=(0,), fractions=(0.5,), probe_overrides={"epochs": 2}
    )
    report = run_experiment(spec, data=(train, val))
    assert report.regime == "fraction_sweep"


def test_seed_factoring_reports_are_pure_functions(small_two_view):
    train, val = small_two_view
    spec = ExperimentSpec(regime="reduce_dim", seeds=(0, 1), probe_overrides={"epochs": 5})
    a = emit_report(run_comparison(spec, data=(train, val)), "csv")
    b = emit_report(run_comparison(spec, data=(train, val)), "csv")
    assert a == b


def test_threads_do_not_change_numbers(small_two_view):
    train, val = small_two_view
    spec = ExperimentSpec(regime="reduce_dim", seeds=(0, 1), probe_overrides={"epochs": 5})
    serial = emit_report(run_comparison(spec, data=(train, val), threads=1), "csv")
    threaded = emit_report(run_comparison(spec, data=(train, val), threads=4), "csv")
    assert serial == threaded


# ---------------------------------------------------------------------------
# Improvement table
# ---------------------------------------------------------------------------


def _report_with(delta, label_x="big", label_y="small"):
    from ccalign.report import DimRecord, Report, TrialRow

    rows = [
        TrialRow("baseline", "x", 0, 0.70),
        TrialRow("cca", "x", 0, 0.70 + delta),
    ]
    dims = [DimRecord("baseline", "x", 10, 10), DimRecord("cca", "x", 10, 5)]
    return Report(regime="reduce_dim", label_x=label_x, label_y=label_y, rows=rows, dims=dims)


def test_improvement_table_param_ratio_and_sorting():
    reports = [
        _report_with(0.02, "vit-l", "vit-b"),
        _report_with(0.05, "vit-b", "vit-t"),
    ]
    params = {"vit-l": 304.3, "vit-b": 86.6, "vit-t": 5.7}
    rows = improvement_table(reports, params)
    assert rows[0].param_ratio == pytest.approx(304.3 / 86.6)
    assert rows[0].param_ratio == pytest.approx(3.5138, abs=2e-4)
    assert rows[1].param_ratio == pytest.approx(86.6 / 5.7)
    assert [r.backbone for r in rows] == ["vit-l", "vit-b"]  # ascending ratio
    assert rows[0].accuracy_delta == pytest.approx(0.02)


def test_improvement_table_zero_delta_for_identical_accuracy():
    rows = improvement_table([_report_with(0.0)], {"big": 2.0, "small": 1.0})
    assert rows[0].accuracy_delta == 0.0


def test_improvement_table_missing_param_count():
    with pytest.raises(ValidationError):
        improvement_table([_report_with(0.1)], {"big": 2.0})


def test_improvement_table_formatting():
    rows = [ImprovementRow("a", "b", 2.0, 0.0125)]
    text = format_improvement_table(rows)
    assert text.splitlines()[0] == "backbone,partner,param_ratio,cca_minus_baseline"
    assert "0.0125" in text
