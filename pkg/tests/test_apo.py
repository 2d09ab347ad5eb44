"""Tests for the proximal meta-objective, meta-gradients and the APO training loop."""

import math
from dataclasses import dataclass

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from amortprox.apo import (
    AdaptMode,
    BatchPolicy,
    FsdKind,
    LrPhi,
    ProximalConfig,
    ablation_variants,
    apo_train,
    fsd,
    init_meta_state,
    meta_gradient,
    meta_objective,
    meta_step,
    prepare_meta_inputs,
    proximal_objective,
    rho,
    warmup_optimizer,
    wsd,
)
from amortprox.baseopt import BaseOptKind, BaseOptSpec
from amortprox.diffnet import Activation, Batch, Head, Model, ParamSet, init_params
from amortprox.errors import ContractError, NumericalError, TrainingDivergedError
from amortprox.kronprecond import init_identity
from amortprox.numkit import Rng
from amortprox.tasks import rosenbrock_task, synth_regression_task


@dataclass
class FixedBatches:
    """Serves the same batch on every draw."""

    batch: Batch
    holdout: Batch | None = None
    batch_size: int = 1

    def sample(self, rng, size=None):
        return self.batch


def _scalar(value):
    return ParamSet((np.array([[value]]),), (None,))


def _sgd_cfg(**overrides):
    fields = {"meta_opt": BaseOptKind.sgd(), "meta_lr": 0.1, "lambda_fsd": 0.0, "lambda_wsd": 0.0}
    return ProximalConfig(**(fields | overrides))


@pytest.fixture
def regression_task():
    return synth_regression_task(64, 3, 0.1, Rng(5), hidden=4, batch_size=8)


# ---------------------------------------------------------------- discrepancies


def test_wsd():
    assert wsd(ParamSet((np.array([[3.0, 4.0]]),), (None,)), ParamSet((np.zeros((1, 2)),), (None,))) == 12.5


def test_rho_categorical_kl():
    value = rho(FsdKind.KL_CATEGORICAL, np.array([[0.0, np.log(2.0)]]), np.zeros((1, 2)))
    assert value[0] == pytest.approx(np.log(3.0 / (2.0 * np.sqrt(2.0))), rel=1e-12)


def test_rho_gaussian_conventions():
    new, old = np.array([[1.0, 1.0]]), np.zeros((1, 2))
    assert rho(FsdKind.KL_GAUSSIAN, new, old)[0] == 1.0
    assert rho(FsdKind.SQUARED, new, old)[0] == 2.0
    assert rho(FsdKind.KL_GAUSSIAN, old, old)[0] == 0.0


def test_fsd_is_zero_for_identical_parameters(rng):
    model = Model.mlp([3, 4, 3], Head.CLASSIFICATION)
    theta = init_params(model, rng)
    batch = Batch(rng.normal((6, 3)), np.zeros(6, dtype=np.int64))
    assert fsd(model, theta, theta, batch, FsdKind.KL_CATEGORICAL) == pytest.approx(0.0, abs=1e-15)


# ---------------------------------------------------------------- meta-objective


def test_proximal_objective_terms(scalar_model, half_square_batch):
    terms, grad = proximal_objective(
        scalar_model, _scalar(0.9), _scalar(1.0), half_square_batch, None, 0.0, 2.0, FsdKind.KL_GAUSSIAN
    )
    assert terms.loss == pytest.approx(0.405, rel=1e-12)
    assert terms.wsd == pytest.approx(0.005, rel=1e-12)
    assert terms.value == pytest.approx(0.415, rel=1e-12)
    # ∇ = θ' + λ_WSD (θ' - θ)
    assert grad.weights[0][0, 0] == pytest.approx(0.9 - 0.2, rel=1e-12)


def test_fsd_weight_needs_inputs(scalar_model, half_square_batch):
    with pytest.raises(ContractError):
        proximal_objective(
            scalar_model, _scalar(0.9), _scalar(1.0), half_square_batch, None, 1.0, 0.0, FsdKind.KL_GAUSSIAN
        )


def test_lr_meta_objective_is_one_step_loss(scalar_model, half_square_batch):
    cfg = _sgd_cfg()
    for lr in (0.1, 0.5, 1.0):
        q = meta_objective(
            scalar_model, _scalar(1.0), LrPhi.from_lr(lr), None, half_square_batch, half_square_batch, cfg
        )
        assert q == pytest.approx(0.5 * (1.0 - lr) ** 2, rel=1e-12, abs=1e-15)


def test_lr_meta_gradient_and_step(scalar_model, half_square_batch):
    cfg = _sgd_cfg()
    phi = LrPhi.from_lr(0.1)
    grad = meta_gradient(scalar_model, _scalar(1.0), phi, None, half_square_batch, half_square_batch, cfg)
    assert isinstance(grad, LrPhi)
    assert grad.log_lr == pytest.approx(-0.09, rel=1e-12)

    new_phi, state = meta_step(phi, init_meta_state(phi, cfg), grad, cfg)
    assert new_phi.log_lr == pytest.approx(math.log(0.1) + 0.009, rel=1e-12)
    assert new_phi.lr > phi.lr
    assert state.iteration == 1


def test_lr_meta_gradient_matches_finite_differences(rng):
    model = Model.mlp([3, 4, 2], Head.REGRESSION, hidden=Activation.SIGMOID)
    theta = init_params(model, rng)
    batch_b = Batch(rng.normal((5, 3)), rng.normal((5, 2)))
    batch_bp = Batch(rng.normal((7, 3)), rng.normal((7, 2)))
    cfg = _sgd_cfg(lambda_fsd=0.5, lambda_wsd=0.3)
    base = BaseOptKind.momentum()
    phi = LrPhi.from_lr(0.2)
    grad = meta_gradient(model, theta, phi, None, batch_b, batch_bp, cfg, base=base)

    h = 1e-6
    up = meta_objective(model, theta, LrPhi(phi.log_lr + h), None, batch_b, batch_bp, cfg, base=base)
    down = meta_objective(model, theta, LrPhi(phi.log_lr - h), None, batch_b, batch_bp, cfg, base=base)
    assert grad.log_lr == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-9)


def test_zero_gradient_gives_zero_meta_gradient(scalar_model, half_square_batch):
    cfg = _sgd_cfg(lambda_wsd=1.0)
    grad = meta_gradient(
        scalar_model, _scalar(0.0), LrPhi.from_lr(0.1), None, half_square_batch, half_square_batch, cfg
    )
    assert grad.log_lr == 0.0


def test_fresh_loss_batch_is_required(scalar_model, half_square_batch):
    cfg = ablation_variants(_sgd_cfg())
    with pytest.raises(ContractError):
        prepare_meta_inputs(
            scalar_model, _scalar(1.0), LrPhi.from_lr(0.1), None, half_square_batch, half_square_batch, cfg
        )


def test_lr_phi_rejects_bad_values():
    with pytest.raises(ContractError):
        LrPhi.from_lr(0.0)
    with pytest.raises(NumericalError):
        LrPhi(float("nan"))
    assert LrPhi.from_lr(0.3).lr == 0.3


# ---------------------------------------------------------------- config


def test_mode_defaults():
    lr_cfg = ProximalConfig.for_lr()
    assert lr_cfg.meta_lr == 0.1
    assert lr_cfg.meta_opt.name == "rmsprop"
    assert lr_cfg.meta_interval == 10
    precond_cfg = ProximalConfig.for_precond(lambda_fsd=0.3)
    assert precond_cfg.meta_lr == 1e-4
    assert precond_cfg.meta_opt.name == "adam"
    assert precond_cfg.warmup_steps == 300
    assert precond_cfg.lambda_fsd == 0.3
    assert precond_cfg.scale is None


def test_discrepancy_weights_default_to_positive():
    for cfg in (ProximalConfig(), ProximalConfig.for_lr(), ProximalConfig.for_precond()):
        assert (cfg.lambda_fsd, cfg.lambda_wsd) == (0.1, 0.1)


def test_divergence_follows_task_unless_set():
    cfg = ProximalConfig()
    assert cfg.divergence == FsdKind.KL_GAUSSIAN
    assert cfg.with_task_divergence(FsdKind.KL_CATEGORICAL).divergence == FsdKind.KL_CATEGORICAL
    pinned = ProximalConfig(fsd_kind=FsdKind.SQUARED)
    assert pinned.with_task_divergence(FsdKind.KL_CATEGORICAL).divergence == FsdKind.SQUARED


def test_ablation_variants():
    cfg = ProximalConfig()
    assert (cfg.loss_batch_policy, cfg.fsd_batch_policy) == (BatchPolicy.SAME, BatchPolicy.FRESH)
    greedy = ablation_variants(cfg)
    assert greedy.loss_batch_policy == BatchPolicy.FRESH
    assert greedy.fsd_batch_policy == BatchPolicy.FRESH
    both = ablation_variants(cfg, fsd_batch=True)
    assert both.fsd_batch_policy == BatchPolicy.SAME
    assert ablation_variants(both, fsd_batch=True) == cfg


# ---------------------------------------------------------------- training loop


def test_meta_interval_beyond_horizon_matches_plain_training(regression_task):
    model = regression_task.model
    theta0 = regression_task.init_params(Rng(3))
    base = BaseOptSpec(kind=BaseOptKind.adam(), lr=0.01)
    cfg = ProximalConfig.for_lr(meta_interval=1000)
    plain = apo_train(model, theta0, cfg, regression_task, 30, Rng(9), base=base, mode=AdaptMode.NONE)
    adapted = apo_train(model, theta0, cfg, regression_task, 30, Rng(9), base=base, mode=AdaptMode.APO_LR)
    assert_array_equal(plain.column("train_loss"), adapted.column("train_loss"))
    assert_array_equal(plain.theta.flatten(), adapted.theta.flatten())
    assert np.all(np.isnan(adapted.column("meta_objective")))


def test_meta_updates_fire_every_k_steps(regression_task):
    cfg = ProximalConfig.for_lr(meta_interval=10, meta_lr=0.01, lambda_wsd=0.1)
    base = BaseOptSpec(lr=0.01)
    log = apo_train(
        regression_task.model, regression_task.init_params(Rng(3)), cfg, regression_task, 25, Rng(9), base=base
    )
    fired = [row["step"] for row in log.rows if row["meta_objective"] is not None]
    assert fired == [10, 20]
    assert len(log.rows) == 25
    assert np.isfinite(log.column("lr")).all()


def test_training_is_deterministic(regression_task):
    cfg = ProximalConfig.for_lr(meta_interval=2, meta_lr=0.01, lambda_fsd=0.1)
    base = BaseOptSpec(lr=0.01)
    runs = [
        apo_train(
            regression_task.model, regression_task.init_params(Rng(3)), cfg, regression_task, 20, Rng(4), base=base
        )
        for _ in range(2)
    ]
    assert runs[0].rows == runs[1].rows
    assert_array_equal(runs[0].theta.flatten(), runs[1].theta.flatten())


def test_divergence_reports_step(scalar_model, half_square_batch):
    source = FixedBatches(half_square_batch)
    base = BaseOptSpec(kind=BaseOptKind.sgd(), lr=3.0)
    with pytest.raises(TrainingDivergedError) as exc:
        apo_train(scalar_model, _scalar(1.0), ProximalConfig(), source, 100, Rng(0), base=base, mode=AdaptMode.NONE)
    assert exc.value.step == 22
    assert len(exc.value.log.rows) == 21


def test_precond_warmup_uses_momentum_sgd(scalar_model, half_square_batch):
    source = FixedBatches(half_square_batch)
    base = BaseOptSpec(kind=BaseOptKind.sgd(), lr=0.01)
    cfg = ProximalConfig.for_precond(warmup_steps=1, meta_interval=1000, scale=0.5)
    log = apo_train(scalar_model, _scalar(1.0), cfg, source, 1, Rng(0), base=base, mode=AdaptMode.APO_PRECOND)
    assert log.theta.weights[0][0, 0] == pytest.approx(0.99, rel=1e-12)

    cfg = cfg.model_copy(update={"warmup_steps": 0})
    log = apo_train(scalar_model, _scalar(1.0), cfg, source, 1, Rng(0), base=base, mode=AdaptMode.APO_PRECOND)
    assert log.theta.weights[0][0, 0] == pytest.approx(0.5, rel=1e-12)
    assert log.rows[0]["phi_frobenius_norm"] == pytest.approx(math.sqrt(3.0))


def test_precond_warmup_follows_base_optimizer(scalar_model, half_square_batch):
    source = FixedBatches(half_square_batch)
    cfg = ProximalConfig.for_precond(warmup_steps=2, meta_interval=1000)
    base = BaseOptSpec(kind=BaseOptKind.momentum(0.5), lr=0.2)
    log = apo_train(scalar_model, _scalar(1.0), cfg, source, 2, Rng(0), base=base, mode=AdaptMode.APO_PRECOND)
    # u=0.8, then velocity 0.5·1 + 0.8
    assert log.theta.weights[0][0, 0] == pytest.approx(0.8 - 0.2 * 1.3, rel=1e-12)
    assert warmup_optimizer(base) == base.kind
    assert warmup_optimizer(BaseOptSpec(kind=BaseOptKind.adam())).beta == 0.9


def test_precond_scale_defaults_to_base_lr(scalar_model, half_square_batch):
    source = FixedBatches(half_square_batch)
    cfg = ProximalConfig.for_precond(warmup_steps=0, meta_interval=1000)
    base = BaseOptSpec(kind=BaseOptKind.sgd(), lr=0.05)
    log = apo_train(scalar_model, _scalar(1.0), cfg, source, 1, Rng(0), base=base, mode=AdaptMode.APO_PRECOND)
    assert log.phi.scale == 0.05
    assert log.theta.weights[0][0, 0] == pytest.approx(0.95, rel=1e-12)


def test_precond_defaults_stay_stable_on_rosenbrock():
    task = rosenbrock_task()
    cfg = ProximalConfig.for_precond().with_task_divergence(task.fsd_kind)
    base = BaseOptSpec(kind=BaseOptKind.sgd(), lr=1e-3)
    # 300 warm-up steps then 100 preconditioned ones
    theta0 = task.init_params(Rng(0))
    log = apo_train(task.model, theta0, cfg, task, 400, Rng(1), base=base, mode=AdaptMode.APO_PRECOND)
    losses = log.column("train_loss")
    assert np.all(np.isfinite(losses))
    assert losses[-1] < 0.01 * losses[0]
    assert np.max(losses[300:]) <= 1.5 * losses[299]


def test_precond_meta_updates_change_phi(regression_task):
    model = regression_task.model
    cfg = ProximalConfig.for_precond(warmup_steps=0, meta_interval=2, meta_lr=1e-3, scale=0.1, lambda_wsd=1.0)
    theta0 = regression_task.init_params(Rng(3))
    log = apo_train(model, theta0, cfg, regression_task, 6, Rng(2), mode=AdaptMode.APO_PRECOND)
    assert not np.array_equal(log.phi.flatten(), init_identity(model, 0.1).flatten())
    assert log.rows[0]["meta_objective"] is None
    assert log.rows[1]["meta_objective"] is not None


def test_mode_and_phi_must_agree(scalar_model, half_square_batch):
    source = FixedBatches(half_square_batch)
    with pytest.raises(ContractError):
        apo_train(
            scalar_model,
            _scalar(1.0),
            ProximalConfig(),
            source,
            5,
            Rng(0),
            mode=AdaptMode.APO_LR,
            phi0=init_identity(scalar_model),
        )
    with pytest.raises(ContractError):
        apo_train(scalar_model, _scalar(1.0), ProximalConfig(), source, 0, Rng(0))
