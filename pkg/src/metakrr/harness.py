"""Experiment orchestration: seeded sweeps, exact-oracle metrics, CSV reports.

A run is a grid over (N, n, n_T, lambda, s) crossed with seeds. Each cell is
a pure function of (config, cell, seed): it regenerates the world for that
seed, pretrains on freshly sampled source tasks, fits the target task (at the
theory-default lambda_star or a configured constant), and records exact
oracle quantities plus two baselines (plain kernel ridge on the target data
alone, and regression in the true subspace). Cells may run concurrently; the
report is assembled in a fixed order so identical configs produce
byte-identical CSV output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._rng import stream_rng
from .inference import default_lambda_star, fit_target, predict_target
from .kernels import Kernel, kernel_from_dict
from .linalg import sym_eig
from .rates import RegularityParams, classify_regime, krr_optimal_lambda
from .regression import SplitTaskFit, TaskRegressor, fit_krr, predict
from .serialize import config_hash, fmt_float
from .subspace import SubspaceModel, pretrain, solve_subspace
from .synthetic import (
    InputDist,
    SyntheticWorld,
    davis_kahan_check,
    exact_chat_minus_cn,
    exact_sin_theta,
    excess_risk,
    generate_world,
    sample_task,
    true_subspace_model,
)

METRICS = (
    "sin_theta_hs",
    "chat_cn_hs",
    "dk_lhs",
    "dk_rhs",
    "dk_holds",
    "excess_risk",
    "excess_risk_se",
    "baseline_krr_risk",
    "oracle_proj_risk",
    "gamma_hat_profile",
)

REPORT_COLUMNS = (
    "config_hash",
    "seed",
    "N",
    "n",
    "n_T",
    "s",
    "lambda",
    "lambda_mode",
    "lambda_star",
) + METRICS + ("status",)

SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    """Grid definition plus the world template shared by all cells."""

    world: dict
    N_values: list
    n_values: list
    n_T_values: list
    lambda_values: list
    s_values: list
    seeds: list
    lambda_star: object = "auto"  # "auto" = theory default, or a positive float
    r_proxy: float = 0.5
    tau: float = 2.6
    mc_samples: int = 2000
    metrics: tuple = METRICS
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        for name in ("N_values", "n_values", "n_T_values", "lambda_values", "s_values", "seeds"):
            axis = list(getattr(self, name))
            if not axis:
                raise ValueError(f"axis {name} must be nonempty")
            setattr(self, name, axis)
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.lambda_star != "auto":
            self.lambda_star = float(self.lambda_star)
            if self.lambda_star <= 0:
                raise ValueError("lambda_star must be 'auto' or a positive number")
        unknown = set(self.metrics) - set(METRICS)
        if unknown:
            raise ValueError(f"unknown metrics: {sorted(unknown)}")
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported schema_version {self.schema_version}, expected {SCHEMA_VERSION}"
            )

    def kernel(self) -> Kernel:
        return kernel_from_dict(self.world["kernel"])

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "world": self.world,
            "N_values": self.N_values,
            "n_values": self.n_values,
            "n_T_values": self.n_T_values,
            "lambda_values": self.lambda_values,
            "s_values": self.s_values,
            "seeds": self.seeds,
            "lambda_star": self.lambda_star,
            "r_proxy": self.r_proxy,
            "tau": self.tau,
            "mc_samples": self.mc_samples,
            "metrics": list(self.metrics),
        }

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        data = dict(data)
        data.setdefault("schema_version", SCHEMA_VERSION)
        data.setdefault("metrics", list(METRICS))
        data["metrics"] = tuple(data["metrics"])
        return ExperimentConfig(**data)


def default_experiment_config() -> ExperimentConfig:
    """The shipped default: one gain-ordering cell, twenty seeds.

    Pretraining uses the regression-optimal per-task lambda; the target stage
    uses a fitted desk-scale constant of the theory's 1/n_T order (the
    theory's own constant over-regularizes so strongly at n_T = 50 that no
    bounded kernel can escape it; only orders transfer to desk scale).
    """
    return ExperimentConfig(
        world={
            "d": 2,
            "s_true": 2,
            "kernel": {"family": "gaussian", "params": {"bandwidth": 1.0}},
            "dist": {"kind": "uniform_box", "scale": 2.0},
            "sigma_y": 1.0,
            "normalize_tasks": True,
        },
        N_values=[60],
        n_values=[400],
        n_T_values=[50],
        lambda_values=["auto:krr"],
        s_values=[2],
        seeds=list(range(20)),
        lambda_star=0.02,
    )


def _world_for(config: ExperimentConfig, N: int, seed: int) -> SyntheticWorld:
    w = config.world
    return generate_world(
        d=int(w["d"]),
        s_true=int(w["s_true"]),
        n_tasks=int(N),
        kernel=kernel_from_dict(w["kernel"]),
        dist=InputDist(**w.get("dist", {"kind": "uniform_box", "scale": 1.0})),
        sigma_y=float(w.get("sigma_y", 0.5)),
        seed=int(seed),
        normalize_tasks=bool(w.get("normalize_tasks", True)),
    )


def _resolve_lambda(config: ExperimentConfig, lam_spec, n: int, N: int, dim: int):
    """Numeric lambda plus the mode string recorded in the report."""
    if isinstance(lam_spec, str):
        kernel = config.kernel()
        p, alpha = kernel.regularity(dim)
        params = RegularityParams(r=config.r_proxy, p=p, alpha=alpha)
        if lam_spec == "auto:regime":
            lam = classify_regime(params, n, N).lambda_pretrain
            return min(lam, 1.0), lam_spec
        if lam_spec == "auto:krr":
            return krr_optimal_lambda(params, n), lam_spec
        raise ValueError(f"unknown lambda mode {lam_spec!r}")
    lam = float(lam_spec)
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return lam, "fixed"


def _empty_record(cfg_hash: str, cell: dict) -> dict:
    record = {col: "" for col in REPORT_COLUMNS}
    record.update(cell)
    record["config_hash"] = cfg_hash
    return record


def _run_cell(config: ExperimentConfig, cfg_hash: str, N, n, n_T, lam_spec, s, seed) -> dict:
    cell = {"seed": seed, "N": N, "n": n, "n_T": n_T, "s": s}
    record = _empty_record(cfg_hash, cell)
    wanted = set(config.metrics)
    try:
        world = _world_for(config, N, seed)
        lam, mode = _resolve_lambda(config, lam_spec, n, N, world.dim)
        record["lambda"] = lam
        record["lambda_mode"] = mode
        datasets = [sample_task(world, i, 2 * n, subseed=0) for i in range(N)]
        model = pretrain(world.kernel, datasets, lam, s)
        fits = model.source_fits
        if "gamma_hat_profile" in wanted:
            record["gamma_hat_profile"] = ";".join(fmt_float(g) for g in model.spectrum)
        jq = (model.J, model.Q)
        if "sin_theta_hs" in wanted:
            record["sin_theta_hs"] = exact_sin_theta(world, model)
        if wanted & {"dk_lhs", "dk_rhs", "dk_holds"}:
            dk = davis_kahan_check(world, model, fits, lam, jq=jq)
            record["dk_lhs"] = dk.lhs
            record["dk_rhs"] = dk.rhs
            record["dk_holds"] = dk.holds
            if "chat_cn_hs" in wanted:
                record["chat_cn_hs"] = dk.perturbation_hs
        elif "chat_cn_hs" in wanted:
            record["chat_cn_hs"] = exact_chat_minus_cn(world, fits, lam, jq=jq)
        if wanted & {"excess_risk", "excess_risk_se", "baseline_krr_risk", "oracle_proj_risk"}:
            X_T, Y_T = sample_task(world, "T", n_T, subseed=1)
            if config.lambda_star == "auto":
                lam_star = default_lambda_star(
                    s, n_T, world.kernel.kappa_sq, config.tau
                ).value
            else:
                lam_star = float(config.lambda_star)
            record["lambda_star"] = lam_star
            target = fit_target(model, X_T, Y_T, lam_star)
            risk, se = excess_risk(
                world, lambda X: predict_target(target, X), config.mc_samples, subseed=2
            )
            record["excess_risk"] = risk
            record["excess_risk_se"] = se
            if "baseline_krr_risk" in wanted:
                p, alpha = world.kernel.regularity(world.dim)
                params = RegularityParams(r=config.r_proxy, p=p, alpha=alpha)
                base = fit_krr(world.kernel, X_T, Y_T, krr_optimal_lambda(params, n_T))
                record["baseline_krr_risk"] = excess_risk(
                    world, lambda X: predict(base, X), config.mc_samples, subseed=2
                )[0]
            if "oracle_proj_risk" in wanted:
                # same target-stage regularization as the meta-learned fit:
                # the comparison isolates the quality of the subspace
                oracle_model = true_subspace_model(world)
                oracle_fit = fit_target(oracle_model, X_T, Y_T, lam_star)
                record["oracle_proj_risk"] = excess_risk(
                    world,
                    lambda X: predict_target(oracle_fit, X),
                    config.mc_samples,
                    subseed=2,
                )[0]
        record["status"] = "ok"
    except Exception as exc:  # cell failures are recorded, the run continues
        record["status"] = f"error: {exc}"
    return record


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    ci_lo: float
    ci_hi: float
    n_points: int

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "ci95": [self.ci_lo, self.ci_hi],
            "n_points": self.n_points,
        }


_X_AXES = {
    "nN": lambda rec: float(rec["N"]) * float(rec["n"]),
    "n": lambda rec: float(rec["n"]),
    "n_T": lambda rec: float(rec["n_T"]),
    "N": lambda rec: float(rec["N"]),
}


def fit_slope(
    records: list, x_axis: str, y: str, n_boot: int = 1000, boot_seed: int = 1234
) -> SlopeFit:
    """Least-squares slope of log(median y) vs log(x), bootstrap CI over seeds.

    Needs at least 3 distinct x values with at least 5 seeds each. Median
    across seeds is used because small-sample cells are heavy-tailed.
    """
    if x_axis not in _X_AXES:
        raise ValueError(f"x_axis must be one of {sorted(_X_AXES)}, got {x_axis!r}")
    xs = _X_AXES[x_axis]
    groups: dict[float, dict] = {}
    for rec in records:
        if rec.get("status") != "ok" or rec.get(y) in ("", None):
            continue
        val = float(rec[y])
        groups.setdefault(xs(rec), {})[rec["seed"]] = val
    if len(groups) < 3:
        raise ValueError(f"need >= 3 distinct x values, got {len(groups)}")
    if min(len(g) for g in groups.values()) < 5:
        raise ValueError("need >= 5 seeds per x value")
    x_sorted = sorted(groups)
    seeds = sorted(set.intersection(*(set(g) for g in groups.values())))
    if len(seeds) < 5:
        raise ValueError("need >= 5 seeds present at every x value")

    def slope_for(seed_sample) -> float:
        log_medians = []
        for x in x_sorted:
            vals = [groups[x][sd] for sd in seed_sample]
            log_medians.append(math.log(max(np.median(vals), 1e-300)))
        return float(np.polyfit(np.log(x_sorted), log_medians, 1)[0])

    point = slope_for(seeds)
    rng = stream_rng(boot_seed, "slope-bootstrap")
    boots = np.empty(n_boot)
    seed_arr = np.asarray(seeds)
    for b in range(n_boot):
        resample = seed_arr[rng.integers(0, len(seed_arr), size=len(seed_arr))]
        boots[b] = slope_for(resample)
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return SlopeFit(slope=point, ci_lo=float(lo), ci_hi=float(hi), n_points=len(x_sorted))


@dataclass
class RateReport:
    config: dict
    config_hash: str
    records: list = field(default_factory=list)

    def to_csv_text(self) -> str:
        lines = [",".join(REPORT_COLUMNS)]
        for rec in self.records:
            row = []
            for col in REPORT_COLUMNS:
                val = rec.get(col, "")
                if isinstance(val, bool):
                    row.append("true" if val else "false")
                elif isinstance(val, float):
                    row.append(fmt_float(val))
                else:
                    row.append(str(val))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv_text())

    def failed_cells(self) -> list:
        return [r for r in self.records if r.get("status") != "ok"]

    def fit_slope(self, x_axis: str, y: str, **kwargs) -> SlopeFit:
        return fit_slope(self.records, x_axis, y, **kwargs)

    def summary(self, slope_specs: list | None = None) -> dict:
        out = {
            "config_hash": self.config_hash,
            "n_records": len(self.records),
            "n_failed": len(self.failed_cells()),
            "failed": [
                {"seed": r["seed"], "N": r["N"], "n": r["n"], "status": r["status"]}
                for r in self.failed_cells()
            ],
            "slopes": {},
        }
        for x_axis, y in slope_specs or []:
            key = f"{y}~{x_axis}"
            try:
                out["slopes"][key] = self.fit_slope(x_axis, y).to_dict()
            except ValueError as exc:
                out["slopes"][key] = {"error": str(exc)}
        return out


def run_experiment(config: ExperimentConfig, threads: int = 1) -> RateReport:
    """Execute the full grid; deterministic given the config, whatever `threads` is."""
    cfg_dict = config.to_dict()
    cfg_hash = config_hash(cfg_dict)
    cells = []
    for N in config.N_values:
        for n in config.n_values:
            for n_T in config.n_T_values:
                for lam_spec in config.lambda_values:
                    for s in config.s_values:
                        for seed in config.seeds:
                            cells.append((N, n, n_T, lam_spec, s, seed))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(
                pool.map(lambda c: _run_cell(config, cfg_hash, *c), cells)
            )
    else:
        records = [_run_cell(config, cfg_hash, *c) for c in cells]
    # `cells` is already in deterministic grid order; map preserves it.
    return RateReport(config=cfg_dict, config_hash=cfg_hash, records=records)


def sin_theta_lambda_sweep(
    world: SyntheticWorld,
    datasets: list,
    lambdas: list,
    s: int,
    rel_cut: float = 1e-10,
) -> np.ndarray:
    """Exact subspace error at each lambda, sharing kernel blocks across the sweep.

    Gram matrices and their eigendecompositions are computed once per task
    half; only the dual coefficients and the N x N inner-product matrices are
    recomputed per lambda, which makes a dense lambda grid affordable.
    """
    lambdas = [float(l) for l in lambdas]
    if any(l <= 0 for l in lambdas):
        raise ValueError("lambdas must be positive")
    kernel = world.kernel
    N = len(datasets)
    L = len(lambdas)

    halves = []  # per task, per half: anchors, eigh of gram, labels
    for X, Y in datasets:
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if X.shape[0] % 2 != 0:
            raise ValueError("tasks must have an even sample count")
        n = X.shape[0] // 2
        task = []
        for Xh, Yh in ((X[:n], Y[:n]), (X[n:], Y[n:])):
            K = kernel.gram(Xh)
            dec = sym_eig(K)
            # alpha(lambda) = V diag(1/(w + n*lambda)) V^T y, all lambdas at once
            vty = dec.eigenvectors.T @ Yh
            denom = dec.eigenvalues[:, None] + n * np.asarray(lambdas)[None, :]
            A = dec.eigenvectors @ (vty[:, None] / denom)  # (n, L)
            task.append({"X": Xh, "K": K, "A": A})
        halves.append(task)

    Js = np.zeros((L, N, N))
    Qs = np.zeros((L, N, N))
    for i in range(N):
        for j in range(i, N):
            for mats, hid in ((Qs, 0), (Js, 1)):
                hi, hj = halves[i][hid], halves[j][hid]
                block = hi["K"] if j == i else kernel.cross_gram(hi["X"], hj["X"])
                diag = np.einsum("al,al->l", hi["A"], block @ hj["A"])
                mats[:, i, j] = diag
                mats[:, j, i] = diag

    out = np.empty(L)
    for l, lam in enumerate(lambdas):
        fits = []
        for i in range(N):
            regs = []
            for hid in (0, 1):
                h = halves[i][hid]
                coeffs = h["A"][:, l]
                regs.append(
                    TaskRegressor(
                        kernel=kernel,
                        lam=lam,
                        anchors=h["X"],
                        dual_coeffs=coeffs,
                        rkhs_norm_sq=float(max(coeffs @ h["K"] @ coeffs, 0.0)),
                    )
                )
            fits.append(SplitTaskFit(first_half=regs[0], second_half=regs[1]))
        alpha, beta, gammas = solve_subspace(Js[l], Qs[l], s, rel_cut)
        model = SubspaceModel(
            s=s,
            kernel=kernel,
            lam=lam,
            source_fits=fits,
            beta=beta,
            alpha=alpha,
            singular_values=gammas,
            J=Js[l],
            Q=Qs[l],
            spectrum=gammas,
        )
        out[l] = exact_sin_theta(world, model)
    return out
