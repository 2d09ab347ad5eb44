"""
Release-gate checks: oracle equivalences and invariants, each reported as a named CheckResult.

Checks take a `CheckContext`, so components can be swapped out to confirm a check detects a
deliberately broken implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from amortprox.apo import (
    AdaptMode,
    FsdKind,
    LrPhi,
    ProximalConfig,
    apo_train,
    evaluate_meta,
    prepare_meta_inputs,
)
from amortprox.baseopt import BaseOptKind, BaseOptSpec
from amortprox.diffnet import Activation, Batch, Head, LayerSpec, Model, ParamSet, grad_params, init_params, rosenbrock
from amortprox.errors import AmortProxError, ContractError
from amortprox.kronprecond import KronBlocks, PrecondPhi, apply_precond, dense_precond
from amortprox.numkit import Rng, relative_error, sym_eig_min, vec_cm
from amortprox.oracles import (
    KfacInstance,
    approx_ppm_update,
    damped_newton_update,
    exact_ppm_solve,
    fd_meta_gradient,
    fsd_hessian_exact,
    optimal_dense_precond,
    verify_kfac_recovery,
    verify_thm1,
)
from amortprox.tasks import illcond_matrix, rosenbrock_task, synth_regression_task
from amortprox.utils.apo_logger import logger
from amortprox.utils.report import CheckResult, Report, check_result, summarize_checks

PrecondApply = Callable[[KronBlocks, np.ndarray], np.ndarray]

EQUIV_TOL = 1e-12
PSD_TOL = -1e-10
FD_TOL = 1e-4
INVERSE_TOL = 1e-8
EXACT_TOL = 1e-12
# closed-form vs exact proximal step at the largest λ_WSD
PPM_LIMIT_TOL = 0.05


@dataclass
class CheckContext:
    seed: int = 0
    precond_apply: PrecondApply = apply_precond
    block_sets: int = 100
    max_extent: int = 8
    fd_instances: int = 20
    _blocks: list[KronBlocks] = field(default_factory=list, repr=False)

    def rng(self, key: int) -> Rng:
        return Rng(self.seed).child(key)

    def random_blocks(self) -> list[KronBlocks]:
        if not self._blocks:
            rng = self.rng(0)
            for _ in range(self.block_sets):
                m_in, m_out = (int(v) + 1 for v in rng.integers(self.max_extent, 2))
                self._blocks.append(
                    KronBlocks(rng.normal((m_out, m_out)), rng.normal((m_in, m_in)), rng.normal((m_in, m_out)))
                )
        return self._blocks


def check_factored_equivalence(ctx: CheckContext) -> list[CheckResult]:
    rng = ctx.rng(1)
    worst = 0.0
    for blocks in ctx.random_blocks():
        g = rng.normal(blocks.shape)
        fast = vec_cm(ctx.precond_apply(blocks, g))
        dense = dense_precond(blocks) @ vec_cm(g)
        worst = max(worst, relative_error(fast, dense))
    return [
        check_result(
            "factored_vs_dense_precond",
            worst,
            EQUIV_TOL,
            worst <= EQUIV_TOL,
            detail=f"{len(ctx.random_blocks())} random block sets up to {ctx.max_extent}x{ctx.max_extent}",
        )
    ]


def check_precond_psd(ctx: CheckContext) -> list[CheckResult]:
    worst = np.inf
    for blocks in ctx.random_blocks():
        p = dense_precond(blocks)
        worst = min(worst, sym_eig_min(p) / max(1.0, float(np.linalg.norm(p))))
    return [check_result("precond_psd", worst, PSD_TOL, worst >= PSD_TOL, detail="min eigenvalue / max(1, |P|)")]


def check_identity_init(ctx: CheckContext) -> list[CheckResult]:
    task = synth_regression_task(64, 3, 0.1, ctx.rng(2), hidden=4, batch_size=16)
    rng = ctx.rng(3)
    theta0 = task.init_params(rng)
    cfg = ProximalConfig.for_precond(meta_interval=1000, warmup_steps=0, scale=0.9)
    precond = apo_train(task.model, theta0, cfg, task, 1, rng, mode=AdaptMode.APO_PRECOND)
    sgd = apo_train(task.model, theta0, cfg, task, 1, rng, base=BaseOptSpec(lr=0.9), mode=AdaptMode.NONE)
    assert precond.theta is not None and sgd.theta is not None
    diff = float(np.max(np.abs(precond.theta.flatten() - sgd.theta.flatten())))
    detail = "scale 0.9 vs SGD with η=0.9, warm-up forced to 0 steps"
    return [check_result("identity_init_first_step", diff, 0.0, diff == 0.0, detail=detail)]


def _fd_instance(rng: Rng, model: Model) -> tuple[ParamSet, Batch, Batch]:
    theta = init_params(model, rng)
    batch_b = Batch(rng.normal((8, model.d_in)), rng.normal((8, model.d_out)))
    batch_bp = Batch(rng.normal((8, model.d_in)), rng.normal((8, model.d_out)))
    return theta, batch_b, batch_bp


def check_meta_gradient_lr(ctx: CheckContext) -> list[CheckResult]:
    model = Model.mlp([3, 4, 2], Head.REGRESSION, hidden=Activation.SIGMOID)
    cfg = ProximalConfig.for_lr(lambda_fsd=0.5, lambda_wsd=0.1)
    rng = ctx.rng(4)
    worst = 0.0
    for _ in range(ctx.fd_instances):
        theta, batch_b, batch_bp = _fd_instance(rng, model)
        phi = LrPhi.from_lr(float(rng.uniform(0.01, 0.05, 1)[0]))
        inputs = prepare_meta_inputs(model, theta, phi, None, batch_b, batch_bp, cfg, base=BaseOptKind.momentum())
        _, grad = evaluate_meta(model, phi, inputs, cfg, with_grad=True)
        assert grad is not None
        worst = max(worst, relative_error(grad.flatten(), fd_meta_gradient(model, phi, inputs, cfg)))
    return [check_result("meta_gradient_lr_fd", worst, FD_TOL, worst <= FD_TOL)]


def random_precond_phi(rng: Rng, model: Model, scale: float = 0.9) -> PrecondPhi:
    blocks = []
    diags: list[np.ndarray | None] = []
    for layer in model.layers:
        m_in, m_out = layer.fan_in, layer.fan_out
        blocks.append(
            KronBlocks(
                np.eye(m_out) + 0.3 * rng.normal((m_out, m_out)),
                np.eye(m_in) + 0.3 * rng.normal((m_in, m_in)),
                1.0 + 0.2 * rng.normal((m_in, m_out)),
            )
        )
        diags.append(1.0 + 0.2 * rng.normal(m_out) if layer.has_bias else None)
    return PrecondPhi(tuple(blocks), tuple(diags), scale)


def check_meta_gradient_precond(ctx: CheckContext) -> list[CheckResult]:
    model = Model((LayerSpec(3, 2, Activation.SIGMOID),), Head.REGRESSION)
    cfg = ProximalConfig.for_precond(lambda_fsd=0.5, lambda_wsd=0.1)
    rng = ctx.rng(5)
    worst = 0.0
    for _ in range(ctx.fd_instances):
        theta, batch_b, batch_bp = _fd_instance(rng, model)
        phi = random_precond_phi(rng, model)
        inputs = prepare_meta_inputs(model, theta, phi, None, batch_b, batch_bp, cfg)
        _, grad = evaluate_meta(model, phi, inputs, cfg, with_grad=True)
        assert grad is not None
        worst = max(worst, relative_error(grad.flatten(), fd_meta_gradient(model, phi, inputs, cfg)))
    return [check_result("meta_gradient_precond_fd", worst, FD_TOL, worst <= FD_TOL, detail="every A, B, S, d entry")]


def _thm1_instance(rng: Rng, m: int = 4) -> tuple[np.ndarray, np.ndarray]:
    j = rng.normal((m, m))
    return j @ j.T / m, rng.normal((200, m))


def check_thm1(ctx: CheckContext) -> list[CheckResult]:
    g_fsd, samples = _thm1_instance(ctx.rng(6))
    report = verify_thm1(g_fsd, samples, 1.0, 0.1, ctx.rng(7))
    checks: list[CheckResult] = list(report["data"]["checks"])

    p_star = optimal_dense_precond(g_fsd, 1.0, 0.1)
    control = verify_thm1(g_fsd, samples, 1.0, 0.1, ctx.rng(7), candidate=p_star + 1e-2)
    control_grad = next(c for c in control["data"]["checks"] if c["name"] == "thm1_gradient_zero")
    checks.append(
        check_result(
            "thm1_negative_control",
            control_grad["measured"],
            control_grad["threshold"],
            not control_grad["passed"],
            detail="P* + 1e-2 must fail the stationarity check",
        )
    )
    return checks


def check_kfac_recovery(ctx: CheckContext) -> list[CheckResult]:
    checks: list[CheckResult] = []
    for instance in (KfacInstance.identity(), KfacInstance.diagonal(), KfacInstance.random(ctx.rng(8))):
        checks.extend(verify_kfac_recovery(instance, ctx.rng(9))["data"]["checks"])
    return checks


def check_optimal_precond_inverse(ctx: CheckContext) -> list[CheckResult]:
    g_fsd, _ = _thm1_instance(ctx.rng(10), 6)
    m = g_fsd.shape[0]
    p = optimal_dense_precond(g_fsd, 1.0, 0.5)
    err = float(np.max(np.abs(p @ (g_fsd + 0.5 * np.eye(m)) - np.eye(m))))
    gd = optimal_dense_precond(g_fsd, 0.0, 2.0)
    gd_err = float(np.max(np.abs(gd - 0.5 * np.eye(m))))
    return [
        check_result("optimal_precond_inverse", err, INVERSE_TOL, err <= INVERSE_TOL),
        check_result("gd_is_wsd_only_ppm", gd_err, EXACT_TOL, gd_err <= EXACT_TOL, detail="λ_FSD=0, λ_WSD=2 gives I/2"),
    ]


def check_fsd_hessian_psd(ctx: CheckContext) -> list[CheckResult]:
    rng = ctx.rng(11)
    model = Model.mlp([3, 3, 3], Head.CLASSIFICATION, hidden=Activation.SIGMOID)
    theta = init_params(model, rng)
    g_fsd = fsd_hessian_exact(model, theta, rng.normal((20, 3)), FsdKind.KL_CATEGORICAL)
    min_eig = sym_eig_min(g_fsd)
    return [check_result("fsd_hessian_psd", min_eig, -1e-8, min_eig >= -1e-8)]


def check_ppm_wsd_limit(ctx: CheckContext) -> list[CheckResult]:
    """The closed-form proximal step approaches the exact one as λ_WSD grows."""
    rng = ctx.rng(12)
    model = Model.mlp([2, 3, 1], Head.REGRESSION, hidden=Activation.SIGMOID)
    theta = init_params(model, rng)
    batch = Batch(rng.normal((6, 2)), rng.normal((6, 1)))
    fsd_inputs = rng.normal((10, 2))
    g = grad_params(model, theta, batch)
    g_fsd = fsd_hessian_exact(model, theta, fsd_inputs, FsdKind.KL_GAUSSIAN)
    errors = []
    for lambda_wsd in (10.0, 100.0, 1000.0):
        exact = exact_ppm_solve(model, theta, batch, 1.0, lambda_wsd, fsd_inputs, 1e-10)
        approx = approx_ppm_update(theta, g, g_fsd, 1.0, lambda_wsd)
        errors.append(relative_error((approx - theta).flatten(), (exact - theta).flatten()))
    passed = errors[0] > errors[1] > errors[2] and errors[-1] <= PPM_LIMIT_TOL
    return [
        check_result(
            "ppm_closed_form_limit",
            errors[-1],
            PPM_LIMIT_TOL,
            passed,
            detail="relative step error at λ_WSD = " + ", ".join(f"{e:.3g}" for e in errors),
        )
    ]


def check_damped_newton(ctx: CheckContext) -> list[CheckResult]:
    theta = ParamSet((np.array([[1.0]]),), (None,))
    g = ParamSet((np.array([[2.0]]),), (None,))
    damped = damped_newton_update(theta, g, np.array([[2.0]]), 2.0).flatten()[0]
    newton = damped_newton_update(theta, g, np.array([[2.0]]), 0.0).flatten()[0]
    err = max(abs(damped - 0.5), abs(newton))
    return [check_result("damped_newton_scalar", err, EXACT_TOL, err <= EXACT_TOL)]


def check_task_constants(ctx: CheckContext) -> list[CheckResult]:
    task = rosenbrock_task()
    assert task.theta0 is not None
    x0, y0 = task.theta0.weights[0][0]
    init_err = abs(float(rosenbrock(np.array(x0), np.array(y0))) - 625.0)
    min_err = abs(float(rosenbrock(np.array(1.0), np.array(1.0))))
    a = illcond_matrix(16, 1e10, ctx.rng(13))
    sv = np.linalg.svd(a, compute_uv=False)
    cond_err = abs(sv[0] / sv[-1] - 1e10) / 1e10
    return [
        check_result("rosenbrock_values", max(init_err, min_err), EXACT_TOL, max(init_err, min_err) <= EXACT_TOL),
        check_result("illcond_condition_number", cond_err, 0.01, cond_err <= 0.01),
    ]


CHECKS: dict[str, Callable[[CheckContext], list[CheckResult]]] = {
    "factored_equivalence": check_factored_equivalence,
    "precond_psd": check_precond_psd,
    "identity_init": check_identity_init,
    "meta_gradient_lr": check_meta_gradient_lr,
    "meta_gradient_precond": check_meta_gradient_precond,
    "thm1": check_thm1,
    "kfac_recovery": check_kfac_recovery,
    "optimal_precond": check_optimal_precond_inverse,
    "fsd_hessian_psd": check_fsd_hessian_psd,
    "ppm_wsd_limit": check_ppm_wsd_limit,
    "damped_newton": check_damped_newton,
    "task_constants": check_task_constants,
}


def run_checks(ctx: CheckContext | None = None, names: list[str] | None = None) -> Report:
    """Run the named check groups (default all) and fold them into one report."""
    ctx = ctx or CheckContext()
    names = names or list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ContractError(f"Unknown checks {unknown}; available: {sorted(CHECKS)}")
    results: list[CheckResult] = []
    for name in names:
        try:
            results.extend(CHECKS[name](ctx))
        except AmortProxError as e:
            logger.error(f"Check group {name} raised: {e}")
            detail = f"raised {type(e).__name__}: {e}"
            results.append(check_result(name, float("nan"), float("nan"), False, detail=detail))
    report = summarize_checks(results)
    logger.info(report["message"])
    return report
