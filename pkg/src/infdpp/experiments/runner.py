"""One experiment per CLI subcommand.

Each experiment takes a validated ``ExperimentConfig`` plus the run ``Settings`` and
returns an ``ExperimentResult`` carrying scalar results, identity residuals and
tabular rows. Experiments are deterministic in (config, seed).
"""

import logging
import math
from collections.abc import Callable

import numpy as np

from infdpp import __version__
from infdpp.config import Settings
from infdpp.experiments.schema import ExperimentConfig, ExperimentResult
from infdpp.infdet import (
    andreief_log_mass,
    hankel_log_mass_ratio,
    op_ensemble_as_infdet,
    op_ensemble_quadrature,
    perturbation_convergence,
    relative_mass,
    window_mask,
    window_projection,
)
from infdpp.kernels import cd_kernel_functions, evaluate, evaluate_diag, kernel_recurrence_residual
from infdpp.models import Interval, KernelFamily, KernelSpec, OPEnsembleSpec, SeededRng
from infdpp.operators import (
    DiscretizedOperator,
    Partition,
    ProjectionBasis,
    compress,
    det_xi,
    discretize,
    fredholm_det,
    gap_probability,
    principal_angles,
    project_span,
    projection_matrix,
    transform_bgk,
)
from infdpp.pickrell import (
    asymptotic_diagnostics,
    infinite_projection_log_constant,
    ks_slack,
    log_pushforward_constant,
    qr_convergence,
    sample_radial,
    scaling_grid,
    scaling_limit_error,
)
from infdpp.quadrature import Quadrature, build_quadrature
from infdpp.sampler import (
    mc_counting_moments,
    mc_expect_mult_functional,
    sample_configurations,
)
from infdpp.specfun import bessel_recurrence_residual

logger = logging.getLogger(__name__)

Experiment = Callable[[ExperimentConfig, Settings], ExperimentResult]

EXPERIMENTS: dict[str, Experiment] = {}
DESCRIPTIONS: dict[str, str] = {}


def experiment(name: str, description: str) -> Callable[[Experiment], Experiment]:
    def register(func: Experiment) -> Experiment:
        EXPERIMENTS[name] = func
        DESCRIPTIONS[name] = description
        return func

    return register


def _tolerance(config: ExperimentConfig, settings: Settings, name: str) -> float:
    return float(config.tolerances.get(name, getattr(settings, name)))


def _result(config: ExperimentConfig, **fields: object) -> ExperimentResult:
    inputs = config.model_dump(mode="json", exclude={"output", "format"})
    return ExperimentResult(
        library_version=__version__, command=config.command, inputs=inputs, **fields
    )


def _kernel_spec(config: ExperimentConfig) -> KernelSpec:
    match config.family:
        case KernelFamily.PICKRELL_RADIAL:
            return KernelSpec.pickrell_radial(config.n[0] if config.n else 2, config.s)
        case KernelFamily.CD_JACOBI:
            return KernelSpec.cd_jacobi(config.N, config.s)
        case family:
            return KernelSpec(family=family, s=config.s)


def _cd_fixture(
    config: ExperimentConfig,
) -> tuple[Quadrature, DiscretizedOperator, ProjectionBasis]:
    q = build_quadrature(Interval(lo=-1.0, hi=1.0), config.panels, config.nodes_per_panel)
    basis = cd_kernel_functions(config.N, config.s, Interval(lo=-1.0, hi=1.0), q)
    return q, projection_matrix(basis), basis


def _scaled(q: Quadrature, factor: np.ndarray, matrix: np.ndarray) -> DiscretizedOperator:
    """The operator (factor) K as a row scaling; not symmetric in general."""
    return DiscretizedOperator(quadrature=q, matrix=factor[:, None] * matrix, hermitian=False)


def _random_symmetric(rng: np.random.Generator, size: int, rank: int) -> np.ndarray:
    vectors = rng.standard_normal((size, rank)) / math.sqrt(size)
    signs = rng.uniform(-0.4, 0.4, rank)
    return (vectors * signs) @ vectors.T


def _random_projection(rng: np.random.Generator, size: int, rank: int) -> np.ndarray:
    vectors, _ = np.linalg.qr(rng.standard_normal((size, rank)))
    return vectors


@experiment("kernel-eval", "Evaluate a kernel at (x, y) and on the diagonal")
def run_kernel_eval(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    spec = _kernel_spec(config)
    switch = _tolerance(config, settings, "diag_switch")
    forward = float(evaluate(spec, config.x, config.y, diag_switch=switch))
    backward = float(evaluate(spec, config.y, config.x, diag_switch=switch))
    return _result(
        config,
        results={
            "value": forward,
            "diag_x": float(evaluate_diag(spec, config.x)),
            "diag_y": float(evaluate_diag(spec, config.y)),
        },
        residuals={"symmetry": abs(forward - backward)},
        rows=[{"x": config.x, "y": config.y, "value": forward}],
    )


@experiment("kernel-recurrence", "Bessel function and Bessel kernel recurrences")
def run_kernel_recurrence(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    axis = np.geomspace(0.01, 100.0, 20)
    x, y = np.meshgrid(axis, axis, indexing="ij")
    kernel_residual = float(np.max(kernel_recurrence_residual(config.s, x, y)))
    points = np.geomspace(0.01, 50.0, 200)
    rows = []
    for nu in (1.0, 1.5, 2.5):
        residual = float(np.max(bessel_recurrence_residual(nu, points)))
        rows.append({"nu": nu, "max_residual": residual})
    bessel_residual = max(row["max_residual"] for row in rows)
    return _result(
        config,
        results={"grid_points": int(x.size)},
        residuals={"kernel_max": kernel_residual, "bessel_max": bessel_residual},
        rows=rows,
    )


@experiment("det", "Nystrom spectrum and gap determinant of the Bessel kernel on [1e-4, 1]")
def run_det(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    spec = KernelSpec.bessel_j(config.s)
    interval = Interval(lo=1e-4, hi=1.0)
    q = build_quadrature(interval, config.panels, config.nodes_per_panel, "geometric_toward_lo")
    A = discretize(spec, q)
    eig = A.eigenvalues()
    gap = fredholm_det(DiscretizedOperator(quadrature=q, matrix=-A.matrix))
    fine = build_quadrature(
        interval, 2 * config.panels, config.nodes_per_panel, "geometric_toward_lo"
    )
    A_fine = discretize(spec, fine)
    gap_fine = fredholm_det(DiscretizedOperator(quadrature=fine, matrix=-A_fine.matrix))
    return _result(
        config,
        results={
            "nodes": q.size,
            "eig_min": float(eig.min()),
            "eig_max": float(eig.max()),
            "gap_det": gap,
            "trace": A.trace(),
        },
        residuals={
            "resolution": abs(gap - gap_fine) / max(abs(gap_fine), 1e-300),
            "trace": abs(A.trace() - A_fine.trace()),
        },
    )


@experiment("det-xi", "Regularized determinant against the Fredholm determinant")
def run_det_xi(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    gen = SeededRng(seed=config.seed or 0).generator()
    q = build_quadrature(Interval(lo=0.0, hi=1.0), 4, 16)
    xi = Partition.from_breakpoints(q, [0.25, 0.5, 0.75])
    agreement, multiplicative = 0.0, 0.0
    rows = []
    for case in range(10):
        A1 = _random_symmetric(gen, q.size, 5)
        A2 = _random_symmetric(gen, q.size, 5)
        op1 = DiscretizedOperator(quadrature=q, matrix=A1)
        op2 = DiscretizedOperator(quadrature=q, matrix=A2)
        plain = fredholm_det(op1)
        regular = det_xi(op1, xi)
        product = (np.eye(q.size) + A1) @ (np.eye(q.size) + A2) - np.eye(q.size)
        joint = det_xi(DiscretizedOperator(quadrature=q, matrix=product, hermitian=False), xi)
        expected = det_xi(op1, xi) * det_xi(op2, xi)
        agree = abs(regular - plain) / abs(plain)
        mult = abs(joint - expected) / abs(expected)
        agreement, multiplicative = max(agreement, agree), max(multiplicative, mult)
        rows.append({"case": case, "det": plain, "det_xi": regular, "agreement": agree})
    return _result(
        config,
        residuals={"agreement": agreement, "multiplicativity": multiplicative},
        rows=rows,
    )


@experiment("gap", "Gap probability of a Christoffel-Darboux projection")
def run_gap(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    q, Q, basis = _cd_fixture(config)
    mask = q.mask(-1.0, config.b1)
    via_basis = gap_probability(basis, mask)
    via_operator = gap_probability(Q, mask)
    negated = DiscretizedOperator(quadrature=q, matrix=-compress(Q, ~mask).matrix)
    via_fredholm = fredholm_det(negated)
    return _result(
        config,
        results={"gap": via_basis, "window": [config.b1, 1.0]},
        residuals={
            "basis_vs_operator": abs(via_basis - via_operator),
            "identity": abs(via_basis - via_fredholm),
        },
    )


@experiment("transform", "B(g, K), B~(g, K) and the determinant chain on random suites")
def run_transform(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    gen = SeededRng(seed=config.seed or 0).generator()
    q = build_quadrature(Interval(lo=0.0, hi=1.0), 4, 12)
    cond_limit = _tolerance(config, settings, "cond_limit")
    idempotency, angle, chain = 0.0, 0.0, 0.0
    rows = []
    for case in range(20):
        rank = int(gen.integers(1, 9))
        U = _random_projection(gen, q.size, rank)
        Q = DiscretizedOperator(quadrature=q, matrix=U @ U.T)
        g = gen.uniform(0.2, 1.0, q.size)
        f = gen.uniform(0.2, 1.5, q.size)
        B, Bt, norm = transform_bgk(Q, g, cond_limit=cond_limit)
        resid = float(np.max(np.abs(Bt.matrix @ Bt.matrix - Bt.matrix)))
        target = project_span(q, (np.sqrt(g)[:, None] * U) / q.sqrt_weights[:, None])
        image = project_span(q, Bt.kernel_values() @ np.diag(q.sqrt_weights) @ U)
        spread = float(principal_angles(target, image)[-1])
        fb = fredholm_det(_scaled(q, f - 1, B.matrix))
        fg = fredholm_det(_scaled(q, f * g - 1, Q.matrix))
        link = abs(fb * norm - fg) / abs(fg)
        idempotency, angle, chain = max(idempotency, resid), max(angle, spread), max(chain, link)
        rows.append({"case": case, "rank": rank, "norm_const": norm, "chain": link})
    return _result(
        config,
        residuals={"idempotency": idempotency, "range_angle": angle, "chain": chain},
        rows=rows,
    )


@experiment("sample", "Draw configurations from a Christoffel-Darboux projection")
def run_sample(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    assert config.seed is not None
    q, _, basis = _cd_fixture(config)
    rng = SeededRng(seed=config.seed)
    first = sample_configurations(basis, config.draws, rng)
    again = sample_configurations(basis, min(config.draws, 100), rng)
    deterministic = all(a == b for a, b in zip(first, again, strict=False))
    cardinality_ok = all(conf.cardinality == basis.rank for conf in first)
    rows = [
        {"draw": k, "cardinality": c.cardinality, "points": " ".join(f"{p:.12g}" for p in c.points)}
        for k, c in enumerate(first[:1000])
    ]
    return _result(
        config,
        results={
            "rank": basis.rank,
            "draws": config.draws,
            "deterministic": deterministic,
            "cardinality_ok": cardinality_ok,
        },
        rows=rows,
    )


@experiment("mc-check", "Monte Carlo against det(I + (g-1)K) and the gap probability")
def run_mc_check(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    assert config.seed is not None
    q, Q, basis = _cd_fixture(config)
    seed = config.seed

    def stream(k: int) -> SeededRng:
        return SeededRng(seed=seed, stream=k)

    upper = q.mask(0.0, 1.0)
    fixtures = {
        "half_on_upper": 1.0 - 0.5 * upper,
        "smooth": 0.6 + 0.4 * np.cos(np.pi * q.nodes) ** 2,
    }
    rows = []
    for k, (name, g) in enumerate(fixtures.items()):
        predicted = fredholm_det(_scaled(q, g - 1, Q.matrix))
        mean, error = mc_expect_mult_functional(
            basis, g, config.draws, stream(k + 1), workers=config.workers
        )
        rows.append({"fixture": name, "predicted": predicted, "estimate": mean, "std_error": error})
    gap_predicted = gap_probability(basis, ~upper)
    gap_mean, gap_error = mc_counting_moments(
        basis, [upper], [0.0], config.draws, stream(99), workers=config.workers
    )
    rows.append(
        {"fixture": "gap", "predicted": gap_predicted, "estimate": gap_mean, "std_error": gap_error}
    )
    z_scores = [
        abs(r["estimate"] - r["predicted"]) / r["std_error"] if r["std_error"] > 0 else 0.0
        for r in rows
    ]
    return _result(config, results={"max_abs_z": max(z_scores)}, rows=rows)


def _ensemble(config: ExperimentConfig) -> OPEnsembleSpec:
    return OPEnsembleSpec(N=config.N, s=config.s, b1=config.b1)


@experiment("mass-ratio", "Relative window masses, cocycle law and the Hankel oracle")
def run_mass_ratio(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    ensemble = _ensemble(config)
    cuts = list(config.chain) or [config.b1 + (1.0 - config.b1) * t for t in (0.3, 0.6, 0.8)]
    q = op_ensemble_quadrature(ensemble, cuts, panels_per_segment=config.panels)
    spec = op_ensemble_as_infdet(ensemble, q)
    ends = [config.b1, *cuts]
    windows = [window_mask(q, config.b1, c) for c in ends]
    options = {"eigen_tau": _tolerance(config, settings, "eigen_tau")}
    rows, hankel_error, andreief_error = [], 0.0, 0.0
    for i in range(len(windows) - 1):
        ratio = relative_mass(spec, windows[i], windows[i + 1], **options)
        oracle = math.exp(hankel_log_mass_ratio(ensemble, ends[i], ends[i + 1]))
        hankel_error = max(hankel_error, abs(ratio - oracle) / oracle)
        row = {"from": ends[i], "to": ends[i + 1], "relative_mass": ratio, "hankel": oracle}
        if ensemble.N <= 4:
            direct = math.exp(
                andreief_log_mass(ensemble, ends[i]) - andreief_log_mass(ensemble, ends[i + 1])
            )
            andreief_error = max(andreief_error, abs(ratio - direct) / direct)
            row["andreief"] = direct
        rows.append(row)
    total = relative_mass(spec, windows[0], windows[-1], **options)
    chained = math.prod(r["relative_mass"] for r in rows)
    residuals = {"cocycle": abs(total - chained), "hankel_relative": hankel_error}
    if ensemble.N <= 4:
        residuals["andreief_relative"] = andreief_error
    return _result(config, results={"total": total}, residuals=residuals, rows=rows)


@experiment("op-ensemble", "L + V split of an infinite orthogonal polynomial ensemble")
def run_op_ensemble(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    ensemble = _ensemble(config)
    q = op_ensemble_quadrature(ensemble, panels_per_segment=config.panels)
    spec = op_ensemble_as_infdet(ensemble, q)
    measure = window_projection(spec, np.zeros(q.size, dtype=bool))
    cd = cd_kernel_functions(ensemble.N, ensemble.s, Interval(lo=-1.0, hi=ensemble.b1), q)
    angles = principal_angles(measure.projection, cd)
    return _result(
        config,
        results={"dim_L": measure.l_rank, "dim_V": spec.n_v, "rank": measure.rank},
        residuals={"span_angle": float(angles[-1])},
    )


# max grid error of scaling_grid() at n = SCALING_FIXTURE_N, from an independent evaluation
# summing the Christoffel-Darboux series against series values of J_s and J_{s+1}
SCALING_FIXTURE_N = 400
SCALING_FIXTURE = {0.0: 8.841e-6, 1.0: 1.585e-3}


@experiment("scaling-limit", "n^2 K_n^(s)(n^2 x, n^2 y) against K^(s)")
def run_scaling_limit(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    sizes = config.n or (25, 100, 400)
    grid = scaling_grid()
    rows = [{"n": n, "max_error": scaling_limit_error(n, config.s, grid)} for n in sizes]
    errors = [r["max_error"] for r in rows]
    decreasing = all(b < a for a, b in zip(errors, errors[1:], strict=False))
    residuals: dict[str, float] = {}
    fixture = SCALING_FIXTURE.get(config.s)
    if fixture is not None and sizes[-1] == SCALING_FIXTURE_N:
        residuals["fixture_relative"] = abs(errors[-1] - fixture) / fixture
    return _result(
        config,
        results={"decreasing": decreasing, "final": errors[-1]},
        residuals=residuals,
        rows=rows,
    )


@experiment("perturbation-convergence", "Windowed H projections converging to the unperturbed one")
def run_perturbation_convergence(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    ensemble = _ensemble(config)
    cuts = list(config.chain) or [0.9, 0.99, 0.999]
    q = op_ensemble_quadrature(ensemble, cuts, panels_per_segment=config.panels)
    spec = op_ensemble_as_infdet(ensemble, q)
    lo, hi = config.region or (-1.0 / 3.0, 1.0 / 3.0)
    report = perturbation_convergence(
        spec,
        [window_mask(q, config.b1, c) for c in cuts],
        q.mask(lo, hi),
        eigen_tau=_tolerance(config, settings, "eigen_tau"),
    )
    distances = list(report.distances)
    rows = [
        {"cut": c, "distance": d, "angle": a}
        for c, d, a in zip(cuts, distances, report.angles, strict=True)
    ]
    decreasing = all(b < a for a, b in zip(distances, distances[1:], strict=False))
    return _result(
        config,
        results={"decreasing": decreasing, "angle_bound": report.angle_bound},
        rows=rows,
    )


@experiment("qr-convergence", "Q_R^(s) against K^(s+2n_s) on a region")
def run_qr_convergence(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    radii = config.radii or (10.0, 40.0, 160.0)
    lo, hi = config.region or (1.0, 2.0)
    report = qr_convergence(config.s, radii, Interval(lo=lo, hi=hi))
    d = report.distances
    rows = [
        {"R": r, "distance": dist, "control": ctrl, "angle": a}
        for r, dist, ctrl, a in zip(report.radii, d, report.control, report.angles, strict=True)
    ]
    return _result(
        config,
        results={
            "n_s": report.n_s,
            "decreasing": all(b < a for a, b in zip(d, d[1:], strict=False)),
            "final_over_first": d[-1] / d[0] if d[0] > 0 else 0.0,
            "control_max": max(report.control),
        },
        rows=rows,
    )


@experiment("pickrell-const", "Pushforward constants and the consistent-family normalization")
def run_pickrell_const(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    sizes = config.n or tuple(range(1, 11))
    rows = []
    for n in sizes:
        if n + config.s <= 0:
            continue
        rows.append({"n": n, "log_constant": log_pushforward_constant(n, config.s)})
    analytic = {
        s: abs(math.exp(log_pushforward_constant(1, s)) - math.pi / (1 + s)) / (math.pi / (1 + s))
        for s in (0.0, 0.5, 2.0)
    }
    n0 = max(1, math.floor(-config.s) + 1)
    cumulative = infinite_projection_log_constant(n0, max(n0, 50), config.s)
    deep = infinite_projection_log_constant(4, 50, -3.5)
    return _result(
        config,
        results={
            "infinite_projection_log_constant": cumulative,
            "n0": n0,
            "log_constant_s_minus_3_5": deep,
        },
        residuals={"n1_analytic": max(analytic.values())},
        rows=rows,
    )


@experiment("radial-mc", "Scaled radial samples of finite-n Pickrell measures")
def run_radial_mc(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    assert config.seed is not None
    sizes = config.n or (20, 40, 80)
    samples = {
        n: sample_radial(n, config.s, config.draws, SeededRng(seed=config.seed, stream=n))
        for n in sizes
    }
    summary = asymptotic_diagnostics(samples)
    rows = [
        {"n": n, "mean_gamma": g, "mean_top1": top[0] if top else 0.0}
        for n, g, top in zip(summary.sizes, summary.mean_gamma, summary.mean_top, strict=True)
    ]
    return _result(
        config,
        results={
            "ks_distances": list(summary.ks_distances),
            "ks_nonincreasing": summary.ks_nonincreasing(ks_slack(config.draws)),
        },
        rows=rows,
    )


DEFAULTS: dict[str, dict[str, object]] = {
    "det": {"panels": 32},
    "sample": {"draws": 1000},
    "mass-ratio": {"s": 0.5, "N": 3},
    "op-ensemble": {"s": -1.5, "N": 6, "b1": 0.5, "panels": 4},
    "perturbation-convergence": {
        "s": -1.5,
        "N": 12,
        "b1": 0.5,
        "chain": (0.9, 0.99, 0.999),
        "region": (-1.0 / 3.0, 1.0 / 3.0),
        "panels": 4,
    },
    "qr-convergence": {"s": -1.5, "radii": (10.0, 40.0, 160.0), "region": (1.0, 2.0)},
    "scaling-limit": {"n": (25, 100, 400)},
    "pickrell-const": {"s": -1.5},
    "radial-mc": {"n": (20, 40, 80), "draws": 500},
}


def build_config(command: str, settings: Settings, **options: object) -> ExperimentConfig:
    """Merge settings, per-command defaults and explicit options (``None`` means unset)."""
    if command not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {command!r}")
    merged: dict[str, object] = {
        "workers": settings.threads,
        "panels": settings.panels,
        "nodes_per_panel": settings.nodes_per_panel,
    }
    merged.update(DEFAULTS.get(command, {}))
    merged.update({k: v for k, v in options.items() if v is not None and v != ()})
    return ExperimentConfig(command=command, **merged)


def run(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    """Dispatch to the experiment named by ``config.command``."""
    try:
        func = EXPERIMENTS[config.command]
    except KeyError:
        raise ValueError(f"unknown experiment {config.command!r}") from None
    logger.info("running %s", config.command)
    return func(config, settings)
