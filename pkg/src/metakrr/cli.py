"""Command-line interface.

Subcommands: synth, pretrain, infer, rates, experiment, report. Configuration
files are JSON with a schema_version field; all outputs are byte-deterministic
for a fixed config and seed (JSON with sorted keys, CSV with a frozen column
order and 17-significant-digit reals).
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from .harness import ExperimentConfig, RateReport, run_experiment
from .inference import default_lambda_star, fit_target, predict_target
from .kernels import kernel_from_dict
from .rates import RegularityParams, classify_regime, gain_conditions, krr_optimal_lambda
from .serialize import canonical_json, fmt_float, load_json, save_json
from .subspace import SubspaceModel, pretrain
from .synthetic import InputDist, SyntheticWorld, generate_world, sample_task

WORLD_SCHEMA_VERSION = 1
MODEL_SCHEMA_VERSION = 1


def _world_from_config(cfg: dict, seed_override=None) -> SyntheticWorld:
    if cfg.get("schema_version", 1) != WORLD_SCHEMA_VERSION:
        raise ValueError("unsupported world config schema_version")
    seed = seed_override if seed_override is not None else cfg.get("seed", 0)
    return generate_world(
        d=int(cfg["d"]),
        s_true=int(cfg["s_true"]),
        n_tasks=int(cfg["n_tasks"]),
        kernel=kernel_from_dict(cfg["kernel"]),
        dist=InputDist(**cfg.get("dist", {"kind": "uniform_box", "scale": 1.0})),
        sigma_y=float(cfg.get("sigma_y", 0.5)),
        seed=int(seed),
        normalize_tasks=bool(cfg.get("normalize_tasks", True)),
    )


def _load_world(path_or_cfg) -> SyntheticWorld:
    data = load_json(path_or_cfg) if isinstance(path_or_cfg, str) else path_or_cfg
    if "anchors" in data:  # a serialized world, not a generator config
        return SyntheticWorld.from_dict(data)
    return _world_from_config(data)


def _read_xy_csv(path):
    """CSV with feature columns x0..x{d-1} and an optional trailing y column."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, row)) for row in reader if row]
    has_y = header[-1].strip().lower() == "y"
    data = np.asarray(rows, dtype=float)
    if data.size == 0:
        raise ValueError(f"{path} contains no data rows")
    if has_y:
        return data[:, :-1], data[:, -1]
    return data, None


def _cmd_synth(args) -> int:
    cfg = load_json(args.config)
    world = _world_from_config(cfg, seed_override=args.seed)
    payload = {"schema_version": WORLD_SCHEMA_VERSION, **world.to_dict()}
    save_json(args.out, payload)
    print(f"wrote world ({world.n_tasks} tasks, s_true={world.s_true}) to {args.out}")
    return 0


def _cmd_pretrain(args) -> int:
    cfg = load_json(args.config)
    if cfg.get("schema_version", 1) != MODEL_SCHEMA_VERSION:
        raise ValueError("unsupported pretrain config schema_version")
    world_ref = cfg["world"]
    world = _load_world(world_ref)
    n = int(cfg["n"])
    lam = float(cfg["lambda"])
    s = int(cfg["s"])
    subseed = int(cfg.get("subseed", 0))
    datasets = [
        sample_task(world, i, 2 * n, subseed=subseed) for i in range(world.n_tasks)
    ]
    model = pretrain(world.kernel, datasets, lam, s, rel_cut=float(cfg.get("rel_cut", 1e-10)))
    payload = {
        "schema_version": MODEL_SCHEMA_VERSION,
        **model.to_dict(include_first_half=bool(cfg.get("include_first_half", True))),
    }
    save_json(args.out, payload)
    gap = model.spectrum[: s + 1]
    print(
        f"wrote subspace model (N={model.n_tasks}, s={s}) to {args.out}; "
        f"leading spectrum: {[float(fmt_float(g)) for g in gap]}"
    )
    return 0


def _cmd_infer(args) -> int:
    model = SubspaceModel.from_dict(load_json(args.model))
    X_T, Y_T = _read_xy_csv(args.target_data)
    if Y_T is None:
        raise ValueError("target data must include a final 'y' column to fit on")
    if args.lambda_star == "auto":
        lam_star = default_lambda_star(
            model.s, X_T.shape[0], model.kernel.kappa_sq, args.tau
        ).value
    else:
        lam_star = float(args.lambda_star)
    target = fit_target(model, X_T, Y_T, lam_star)
    if args.predict_data:
        X_new, _ = _read_xy_csv(args.predict_data)
    else:
        X_new = X_T
    preds = predict_target(target, X_new)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("y_pred\n")
        for v in preds:
            fh.write(fmt_float(v) + "\n")
    if args.save_model:
        save_json(args.save_model, target.to_dict(include_subspace=False))
    print(f"wrote {len(preds)} predictions to {args.out} (lambda_star={fmt_float(lam_star)})")
    return 0


def _cmd_rates(args) -> int:
    params = RegularityParams(r=args.r, p=args.p, alpha=args.alpha)
    result = classify_regime(params, args.n, args.N, omega=args.omega)
    table = gain_conditions(params, args.n)
    payload = {
        "params": {"r": args.r, "p": args.p, "alpha": args.alpha},
        "n": args.n,
        "N": args.N,
        "regime": result.to_dict(),
        "krr_optimal_lambda": krr_optimal_lambda(params, args.n),
        "greatest_gain": table["greatest_gain"],
        "gain_rows": [row.to_dict() for row in table["case_rows"]],
    }
    text = _json_text(payload)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_dict(load_json(args.config))
    report = run_experiment(cfg, threads=args.threads)
    report.write_csv(args.out)
    summary = report.summary(slope_specs=_slope_specs_from(cfg))
    save_json(args.out + ".summary.json", summary)
    failed = summary["n_failed"]
    print(
        f"wrote {summary['n_records']} records to {args.out} "
        f"({failed} failed); summary at {args.out}.summary.json"
    )
    return 0 if failed == 0 else 1


def _slope_specs_from(cfg: ExperimentConfig):
    specs = []
    if len(cfg.N_values) >= 3:
        specs.append(("nN", "sin_theta_hs"))
    if len(cfg.n_T_values) >= 3:
        specs.append(("n_T", "excess_risk"))
    return specs


def _cmd_report(args) -> int:
    records = _read_report_csv(args.infile)
    report = RateReport(config={}, config_hash="-", records=records)
    payload = report.summary(slope_specs=[(args.x, args.y)])
    text = _json_text(payload)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _read_report_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        records = []
        for row in reader:
            rec = dict(row)
            for key in ("seed", "N", "n", "n_T", "s"):
                if rec.get(key):
                    rec[key] = int(rec[key])
            records.append(rec)
    return records


def _json_text(payload) -> str:
    return canonical_json(payload)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metakrr",
        description="Kernel meta-learning: subspace pretraining, target inference, "
        "rate schedules, and seeded oracle experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic world file")
    p.add_argument("--config", required=True, help="world generator config (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("pretrain", help="learn a subspace model from a world")
    p.add_argument("--config", required=True, help="pretrain config (JSON)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("infer", help="fit and predict the target task in a model")
    p.add_argument("--model", required=True, help="subspace model file (JSON)")
    p.add_argument("--target-data", required=True, help="CSV with x columns and y")
    p.add_argument("--predict-data", default=None, help="CSV of x columns to predict at")
    p.add_argument("--lambda-star", default="auto")
    p.add_argument("--tau", type=float, default=2.6)
    p.add_argument("--save-model", default=None, help="also write the target model JSON")
    p.add_argument("--out", required=True, help="predictions CSV")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("rates", help="regime classification and lambda schedules")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--omega", type=float, default=2.5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_rates)

    p = sub.add_parser("experiment", help="run a seeded sweep and write a CSV report")
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="report CSV path")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("report", help="fit log-log slopes from an existing report CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--x", required=True, choices=["nN", "n", "n_T", "N"])
    p.add_argument("--y", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
