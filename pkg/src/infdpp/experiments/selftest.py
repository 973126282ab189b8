"""Invariant suites behind ``--selftest``: thresholds evaluated on an experiment's result."""

import math
from collections.abc import Callable

from infdpp.experiments.schema import Check, ExperimentResult

Suite = Callable[[ExperimentResult], list[Check]]

SUITES: dict[str, Suite] = {}


def suite(name: str) -> Callable[[Suite], Suite]:
    def register(func: Suite) -> Suite:
        SUITES[name] = func
        return func

    return register


def at_most(name: str, value: float, bound: float) -> Check:
    value = float(value)
    passed = math.isfinite(value) and value <= bound
    return Check(name=name, value=value, bound=bound, passed=passed)


def holds(name: str, condition: bool) -> Check:
    return Check(name=name, value=float(condition), bound=1.0, passed=bool(condition))


@suite("kernel-eval")
def _kernel_eval(result: ExperimentResult) -> list[Check]:
    return [
        at_most("symmetry", result.residuals["symmetry"], 1e-13),
        holds("finite", all(math.isfinite(v) for v in result.results.values())),
    ]


@suite("kernel-recurrence")
def _kernel_recurrence(result: ExperimentResult) -> list[Check]:
    return [
        at_most("bessel_recurrence", result.residuals["bessel_max"], 1e-10),
        at_most("kernel_recurrence", result.residuals["kernel_max"], 1e-9),
    ]


@suite("det")
def _det(result: ExperimentResult) -> list[Check]:
    r = result.results
    return [
        at_most("eigenvalues_above", -r["eig_min"], 1e-8),
        at_most("eigenvalues_below", r["eig_max"] - 1.0, 1e-8),
        at_most("resolution", result.residuals["resolution"], 1e-8),
    ]


@suite("det-xi")
def _det_xi(result: ExperimentResult) -> list[Check]:
    return [
        at_most("agreement", result.residuals["agreement"], 1e-10),
        at_most("multiplicativity", result.residuals["multiplicativity"], 1e-9),
    ]


@suite("gap")
def _gap(result: ExperimentResult) -> list[Check]:
    gap = result.results["gap"]
    return [
        at_most("identity", result.residuals["identity"], 1e-10),
        at_most("basis_vs_operator", result.residuals["basis_vs_operator"], 1e-10),
        holds("probability", 0.0 <= gap <= 1.0),
    ]


@suite("transform")
def _transform(result: ExperimentResult) -> list[Check]:
    return [
        at_most("idempotency", result.residuals["idempotency"], 1e-8),
        at_most("range_angle", result.residuals["range_angle"], 1e-7),
        at_most("chain", result.residuals["chain"], 1e-9),
    ]


@suite("sample")
def _sample(result: ExperimentResult) -> list[Check]:
    return [
        holds("deterministic", result.results["deterministic"]),
        holds("cardinality", result.results["cardinality_ok"]),
    ]


@suite("mc-check")
def _mc_check(result: ExperimentResult) -> list[Check]:
    return [at_most("max_abs_z", result.results["max_abs_z"], 3.0)]


@suite("mass-ratio")
def _mass_ratio(result: ExperimentResult) -> list[Check]:
    checks = [
        at_most("cocycle", result.residuals["cocycle"], 1e-8),
        at_most("hankel", result.residuals["hankel_relative"], 1e-6),
    ]
    if "andreief_relative" in result.residuals:
        checks.append(at_most("andreief", result.residuals["andreief_relative"], 1e-6))
    return checks


@suite("op-ensemble")
def _op_ensemble(result: ExperimentResult) -> list[Check]:
    r = result.results
    return [
        at_most("span_angle", result.residuals["span_angle"], 1e-8),
        holds("rank", r["rank"] == r["dim_L"] + r["dim_V"]),
    ]


@suite("scaling-limit")
def _scaling_limit(result: ExperimentResult) -> list[Check]:
    checks = [
        holds("decreasing", result.results["decreasing"]),
        at_most("final_error", result.results["final"], 1e-2),
    ]
    if "fixture_relative" in result.residuals:
        checks.append(at_most("fixture", result.residuals["fixture_relative"], 0.2))
    return checks


@suite("perturbation-convergence")
def _perturbation_convergence(result: ExperimentResult) -> list[Check]:
    return [holds("decreasing", result.results["decreasing"])]


@suite("qr-convergence")
def _qr_convergence(result: ExperimentResult) -> list[Check]:
    return [
        holds("decreasing", result.results["decreasing"]),
        at_most("final_over_first", result.results["final_over_first"], 0.5),
        at_most("control_floor", result.results["control_max"], 1e-5),
    ]


@suite("pickrell-const")
def _pickrell_const(result: ExperimentResult) -> list[Check]:
    r = result.results
    return [
        at_most("n1_analytic", result.residuals["n1_analytic"], 1e-10),
        holds("finite", math.isfinite(r["infinite_projection_log_constant"])),
        holds("finite_deep", math.isfinite(r["log_constant_s_minus_3_5"])),
    ]


@suite("radial-mc")
def _radial_mc(result: ExperimentResult) -> list[Check]:
    return [
        # gamma dominates the sum of the coordinates, hence the largest one
        holds("gamma_dominates", all(r["mean_gamma"] >= r["mean_top1"] for r in result.rows)),
        holds("ks_range", all(0.0 <= d <= 1.0 for d in result.results["ks_distances"])),
        holds("ks_nonincreasing", result.results["ks_nonincreasing"]),
    ]


def run_selftest(result: ExperimentResult) -> ExperimentResult:
    """Attach the invariant checks for ``result.command``."""
    checks = SUITES[result.command](result)
    return result.model_copy(update={"checks": checks})
