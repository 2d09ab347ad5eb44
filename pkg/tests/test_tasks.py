"""Tests for task generators and CSV ingestion."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from amortprox.apo import AdaptMode, FsdKind, ProximalConfig, apo_train
from amortprox.baseopt import BaseOptKind, BaseOptSpec
from amortprox.diffnet import Activation, Head, Model, ParamSet, forward, init_params, loss_eval, rosenbrock
from amortprox.errors import ContractError, IngestionError
from amortprox.numkit import Rng
from amortprox.tasks import (
    AUTOENCODER_WIDTHS,
    ROSENBROCK_INIT,
    TaskKind,
    TaskSpec,
    bottleneck_autoencoder_task,
    build_task,
    class_means,
    export_csv,
    illcond_linear_task,
    illcond_matrix,
    regression_target,
    rosenbrock_task,
    standardize,
    synth_classification_task,
    synth_regression_task,
    uci_csv_load,
)


def test_rosenbrock_task():
    task = rosenbrock_task()
    theta = task.init_params(Rng(0))
    assert_array_equal(theta.weights[0], [ROSENBROCK_INIT])
    outputs, _ = forward(task.model, theta, task.train.inputs)
    assert loss_eval(task.model.head, outputs, task.train.targets) == 625.0
    assert rosenbrock(np.array(1.0), np.array(1.0)) == 0.0
    assert task.fsd_kind == FsdKind.SQUARED


@pytest.mark.parametrize("kappa", [1.0, 1e3, 1e10])
def test_illcond_condition_number(kappa):
    a = illcond_matrix(16, kappa, Rng(3))
    sv = np.linalg.svd(a, compute_uv=False)
    assert sv[0] / sv[-1] == pytest.approx(kappa, rel=0.01)


def test_illcond_unit_kappa_is_orthogonal():
    a = illcond_matrix(8, 1.0, Rng(3))
    assert_allclose(a.T @ a, np.eye(8), atol=1e-12)


def test_illcond_rejects_bad_arguments():
    with pytest.raises(ContractError):
        illcond_matrix(1, 10.0, Rng(0))
    with pytest.raises(ContractError):
        illcond_matrix(4, 0.5, Rng(0))


def test_illcond_task_samples_linear_targets():
    task = illcond_linear_task(4, 100.0, Rng(1), batch_size=8)
    batch = task.sample(Rng(2))
    assert batch.inputs.shape == (8, 4)
    assert_allclose(batch.targets, batch.inputs @ task.sampler.matrix.T)
    assert task.model.head == Head.REGRESSION
    assert len(task.holdout) == 256


def test_standardize():
    z = standardize(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]))
    assert_allclose(z.mean(axis=0), [0.0, 0.0], atol=1e-15)
    assert_allclose(z[:, 0].var(), 1.0)
    assert_array_equal(z[:, 1], 0.0)


def test_class_means_are_separated():
    means = class_means(4, 3, 3.0, Rng(0))
    assert_allclose(np.linalg.norm(means, axis=1), 3.0)
    assert_allclose(means @ means.T, 9.0 * np.eye(3), atol=1e-12)


def test_synth_classification_is_linearly_separable():
    task = synth_classification_task(400, 2, 2, Rng(4), separation=3.0)
    x, y = task.train.inputs, task.train.targets
    # least-squares linear classifier on ±1 targets
    design = np.hstack([x, np.ones((len(y), 1))])
    w, *_ = np.linalg.lstsq(design, 2.0 * y - 1.0, rcond=None)
    assert np.mean((design @ w > 0) == (y == 1)) > 0.95
    assert task.fsd_kind == FsdKind.KL_CATEGORICAL
    assert np.bincount(np.concatenate([y, task.holdout.targets])).tolist() == [200, 200]


def test_csv_load(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("1,2\n3,4\n", encoding="utf-8")
    data = uci_csv_load(path)
    assert_allclose(data.inputs[:, 0], [-1.0, 1.0])
    assert_allclose(data.targets[:, 0], [-1.0, 1.0])


def test_csv_header_is_skipped(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("x,y\n1,2\n3,4\n", encoding="utf-8")
    assert len(uci_csv_load(path)) == 2


def test_csv_constant_column(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("7,1\n7,2\n7,3\n", encoding="utf-8")
    assert_array_equal(uci_csv_load(path).inputs[:, 0], 0.0)


def test_csv_bad_cell_reports_location(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("1,2\n3,oops\n5,6\n", encoding="utf-8")
    with pytest.raises(IngestionError) as exc:
        uci_csv_load(path)
    assert (exc.value.row, exc.value.column) == (2, 1)


def test_csv_empty_file(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(ContractError):
        uci_csv_load(path)


def test_csv_task_from_exported_data(tmp_path):
    source = build_task(TaskSpec(kind=TaskKind.SYNTH_REGRESSION, dim=3, hidden=4, dataset_size=50, seed=1))
    path = tmp_path / "export.csv"
    export_csv(source.train, path)
    task = build_task(TaskSpec(kind=TaskKind.UCI_CSV, csv_path=str(path), hidden=4, batch_size=64))
    assert task.model.d_in == 3
    assert task.spec.batch_size == len(task.train)


@pytest.mark.parametrize(
    "spec",
    [
        TaskSpec(kind=TaskKind.SYNTH_REGRESSION, dim=3, hidden=4, dataset_size=64, seed=2),
        TaskSpec(kind=TaskKind.SYNTH_CLASSIFICATION, dim=3, hidden=4, dataset_size=60, seed=2),
        TaskSpec(kind=TaskKind.BOTTLENECK_AUTOENCODER, dataset_size=64, seed=2),
        TaskSpec(kind=TaskKind.ILLCOND_LINEAR, dim=4, kappa=100.0, dataset_size=None, seed=2),
    ],
    ids=lambda spec: spec.kind.value,
)
def test_build_task_is_deterministic(spec):
    first, second = build_task(spec), build_task(spec)
    data_first = first.train if first.train is not None else first.holdout
    data_second = second.train if second.train is not None else second.holdout
    assert_array_equal(data_first.inputs, data_second.inputs)
    assert_array_equal(data_first.targets, data_second.targets)
    assert_array_equal(first.init_params(Rng(0)).flatten(), second.init_params(Rng(0)).flatten())
    assert first.spec.seed == 2


def test_build_task_depends_on_seed():
    specs = [TaskSpec(kind=TaskKind.SYNTH_REGRESSION, dim=3, hidden=4, dataset_size=64, seed=s) for s in (0, 1)]
    a, b = (build_task(spec) for spec in specs)
    assert not np.array_equal(a.train.inputs, b.train.inputs)


def test_task_spec_validation():
    with pytest.raises(ValidationError):
        TaskSpec(kind=TaskKind.UCI_CSV)
    with pytest.raises(ValidationError):
        TaskSpec(kind=TaskKind.ILLCOND_LINEAR, dim=1)
    with pytest.raises(ValidationError):
        TaskSpec(kind=TaskKind.SYNTH_REGRESSION, batch_size=64, dataset_size=32)
    with pytest.raises(ValidationError):
        TaskSpec(kind="mnist")


def _affine_residual(x, rank):
    """Mean squared distance from the rows of x to their best affine subspace of the given rank."""
    s = np.linalg.svd(x - x.mean(axis=0), compute_uv=False)
    return float(np.sum(s[rank:] ** 2) / len(x))


def _full_loss(model, theta, data):
    outputs, _ = forward(model, theta, data.inputs)
    return loss_eval(model.head, outputs, data.targets)


def _fit(model, task, steps):
    base = BaseOptSpec(kind=BaseOptKind.adam(), lr=0.01)
    theta0 = init_params(model, Rng(3))
    log = apo_train(model, theta0, ProximalConfig(), task, steps, Rng(4), base=base, mode=AdaptMode.NONE)
    return log.theta


def test_autoencoder_zero_weights_reconstruct_nothing():
    task = bottleneck_autoencoder_task(Rng(2), n=200)
    x = task.train.inputs
    assert_array_equal(task.train.targets, x)
    assert _full_loss(task.model, task.init_params(Rng(3)), task.train) >= 0.0
    zero = _full_loss(task.model, ParamSet.zeros(task.model), task.train)
    assert zero == pytest.approx(np.sum(x**2) / len(x), rel=1e-12)


def test_autoencoder_loss_respects_pca_residual():
    task = bottleneck_autoencoder_task(Rng(2), n=200)
    # the reconstruction is affine in the last hidden layer
    bound = _affine_residual(task.train.inputs, AUTOENCODER_WIDTHS[-2])
    assert _full_loss(task.model, _fit(task.model, task, 300), task.train) >= bound - 1e-12

    # with linear units everything passes through the 2-unit bottleneck
    linear = Model.mlp(AUTOENCODER_WIDTHS, Head.REGRESSION, hidden=Activation.LINEAR)
    bound = _affine_residual(task.train.inputs, min(AUTOENCODER_WIDTHS))
    assert bound > 0.0
    assert _full_loss(linear, _fit(linear, task, 300), task.train) >= bound - 1e-12


def test_noise_free_regression_is_fit_by_generating_weights():
    model, fitted, data = regression_target(64, 3, 0.0, Rng(5), hidden=4)
    assert _full_loss(model, fitted, data) == pytest.approx(0.0, abs=1e-20)
    task = synth_regression_task(64, 3, 0.0, Rng(5), hidden=4)
    assert _full_loss(task.model, fitted, task.train) == pytest.approx(0.0, abs=1e-20)

    _, noisy_fit, noisy = regression_target(64, 3, 0.5, Rng(5), hidden=4)
    assert _full_loss(model, noisy_fit, noisy) > 1e-3
