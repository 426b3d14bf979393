"""Command-line entry point: target generation, training, evaluation, ablations and plot data.

Exit codes: 0 on success, 2 on invalid input, 3 on optimization or contract errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import plotting
from .datagen import PROFILES, toy_dataset
from .errors import ContractError, OptimizationError, ValidationError
from .losses import LossConfig
from .metrics import class_centers
from .targets import DEFAULT_TAU, TargetGenConfig, certify_simplex, generate_targets
from .trainer import METHODS, TrainConfig, evaluate, load_run, run_experiment, save_run, with_loss

log = logging.getLogger("tsclearn")

EXIT_VALIDATION = 2
EXIT_OPTIMIZATION = 3
METRIC_COLUMNS = ["group", "k", "A", "U", "Uk", "R", "acc"]


def write_csv(path: Path, rows: list[dict], columns: list[str]) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in columns})
    return path


def parse_values(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"--values must be comma-separated numbers: {exc}") from exc
    if not values:
        raise ValidationError("--values is empty")
    return values


# -- gen-targets -----------------------------------------------------------


def cmd_gen_targets(args) -> int:
    cfg = TargetGenConfig(args.lr, args.iterations, args.seed, args.tau)
    ts = generate_targets(args.classes, args.dim, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ts.save(out)
    cert = certify_simplex(ts)
    print(f"energy={ts.final_energy:.6f} initial={ts.initial_energy:.6f} C={ts.num_classes} d={ts.dim}")
    if cert.applicable:
        print(f"simplex={'yes' if cert.ok else 'no'} max_deviation={cert.max_deviation:.3e}")
    print(f"wrote {out}")
    return 0


# -- train -----------------------------------------------------------------


def build_config(args) -> TrainConfig:
    loss = LossConfig(k=args.k, lam=args.lam, tau=args.tau)
    return TrainConfig(
        method=args.method, epochs=args.epochs, warmup_frac=args.warmup_frac,
        batch_size=args.batch_size, loss=loss, lr=args.lr, dim=args.dim, seed=args.seed,
    )


def build_dataset(args, seed: int):
    return toy_dataset(
        args.classes, args.rho, seed, profile=args.profile,
        n_max=args.n_max, d_in=args.d_in, noise=args.noise,
    )


def build_targets(cfg: TrainConfig, num_classes: int, args):
    if not cfg.uses_targets:
        return None
    tcfg = TargetGenConfig(iterations=args.target_iterations, seed=cfg.seed, temperature=args.target_tau)
    return generate_targets(num_classes, cfg.dim, tcfg)


def history_rows(record) -> list[dict]:
    return [vars(e) for e in record.epochs]


def cmd_train(args) -> int:
    cfg = build_config(args)
    ds = build_dataset(args, cfg.seed)
    ts = build_targets(cfg, ds.num_classes, args)
    log.info("training %s on C=%d counts=%s", cfg.method, ds.num_classes, ds.counts)
    net, rec = run_experiment(ds, cfg, ts, args.metrics_k)
    out = save_run(args.out_dir, net, rec, ds, ts)
    plotting.plot_history(history_rows(rec), out / "history.png")
    summary = rec.report.to_text() + f"accuracy={rec.accuracy!r}\n"
    (out / "summary.txt").write_text(summary)
    print(f"accuracy={rec.accuracy:.4f} U={rec.report.U:.4f} Uk={rec.report.Uk:.4f} R={rec.report.R:.4f}")
    if rec.assignment_costs:
        print(f"assignment_cost first={rec.assignment_costs[0]:.4f} last={rec.assignment_costs[-1]:.4f}")
    print(f"wrote {out}")
    return 0


# -- eval ------------------------------------------------------------------


def cmd_eval(args) -> int:
    cfg, net, ds, _, _ = load_run(args.run)
    res = evaluate(net, ds, args.metrics_k, seed=cfg.seed)
    out = Path(args.out_dir or args.run)
    out.mkdir(parents=True, exist_ok=True)
    rows = res.report.csv_rows()
    write_csv(out / "metrics.csv", rows, METRIC_COLUMNS)
    (out / "metrics.txt").write_text(res.report.to_text() + f"accuracy={res.accuracy!r}\n")
    plotting.plot_metrics(rows, out / "metrics.png")
    for row in rows:
        print(" ".join(f"{c}={row[c]:.4f}" if isinstance(row[c], float) else f"{c}={row[c]}" for c in METRIC_COLUMNS))
    print(f"wrote {out / 'metrics.csv'}")
    return 0


# -- ablate ----------------------------------------------------------------


def ablated_config(base: TrainConfig, param: str, value: float) -> TrainConfig:
    if param == "lambda":
        return with_loss(base, lam=value)
    if param == "dim":
        if value != int(value):
            raise ValidationError(f"dim must be an integer, got {value}")
        return replace(base, dim=int(value))
    return replace(base, warmup_frac=value)


def cmd_ablate(args) -> int:
    values = parse_values(args.values)
    base = build_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_seed = []
    for value in values:
        for seed in range(args.seed, args.seed + args.seeds):
            cfg = replace(ablated_config(base, args.param, value), seed=seed)
            ds = build_dataset(args, seed)
            ts = build_targets(cfg, ds.num_classes, args)
            _, rec = run_experiment(ds, cfg, ts, args.metrics_k)
            log.info("%s=%g seed=%d accuracy=%.4f", args.param, value, seed, rec.accuracy)
            for row in rec.report.csv_rows():
                per_seed.append({"param": args.param, "value": value, "seed": seed, **row})

    keys = ["A", "U", "Uk", "R", "acc"]
    agg = []
    for value in values:
        for group in ("many", "medium", "few", "all"):
            sel = [r for r in per_seed if r["value"] == value and r["group"] == group]
            row = {"param": args.param, "value": value, "group": group, "k": sel[0]["k"], "seeds": len(sel)}
            for key in keys:
                vals = np.array([r[key] for r in sel])
                row[f"{key}_mean"], row[f"{key}_std"] = float(vals.mean()), float(vals.std())
            agg.append(row)
    write_csv(out / "ablation_runs.csv", per_seed, ["param", "value", "seed", *METRIC_COLUMNS])
    stat_cols = [f"{k}_{s}" for k in keys for s in ("mean", "std")]
    write_csv(out / "ablation.csv", agg, ["param", "value", "group", "k", "seeds", *stat_cols])
    plotting.plot_ablation(agg, args.param, out / "ablation.png")
    for row in agg:
        if row["group"] == "all":
            print(
                f"{args.param}={row['value']:g} U={row['U_mean']:.4f} Uk={row['Uk_mean']:.4f} "
                f"R={row['R_mean']:.4f} acc={row['acc_mean']:.4f}"
            )
    print(f"wrote {out / 'ablation.csv'}")
    return 0


# -- plot-data -------------------------------------------------------------


def cmd_plot_data(args) -> int:
    cfg, net, ds, ts, assignment = load_run(args.run)
    if cfg.dim != 2:
        raise ValidationError(f"plot-data needs a d=2 run, this one has d={cfg.dim}")
    x, y = (ds.x_train, ds.y_train) if args.split == "train" else (ds.x_test, ds.y_test)
    feats = net.forward(x)
    out = Path(args.out_dir or args.run)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "scatter.txt", np.c_[feats, y], fmt=["%.9f", "%.9f", "%d"], header="x y label", comments="")
    C = ds.num_classes
    centers = class_centers(feats, y, C)
    ids = np.arange(C)
    np.savetxt(
        out / "class_means.txt", np.c_[ids, centers], fmt=["%d", "%.9f", "%.9f"],
        header="class center_x center_y", comments="",
    )
    assigned = None
    if ts is not None and assignment is not None:
        assigned = ts.points[list(assignment.sigma)]
        np.savetxt(
            out / "centers.txt", np.c_[ids, assigned], fmt=["%d", "%.9f", "%.9f"],
            header="class target_x target_y", comments="",
        )
    plotting.plot_scatter(feats, y, out / "scatter.png", assigned, centers, title=f"{cfg.method}, {args.split} split")
    print(f"wrote {out / 'scatter.txt'}")
    return 0


# -- parser ----------------------------------------------------------------


def add_run_options(p: argparse.ArgumentParser, method_default: str = "tsc") -> None:
    p.add_argument("--method", choices=METHODS, default=method_default)
    p.add_argument("--rho", type=float, default=100.0, help="imbalance ratio")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--profile", choices=sorted(PROFILES), default="step", help="per-class count profile")
    p.add_argument("--n-max", type=int, default=500, help="samples in the largest class")
    p.add_argument("--d-in", type=int, default=16, help="input dimension")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--dim", type=int, default=2, help="feature dimension")
    p.add_argument("--lambda", dest="lam", type=float, default=LossConfig.lam)
    p.add_argument("--k", type=int, default=LossConfig.k, help="positives per anchor")
    p.add_argument("--tau", type=float, default=LossConfig.tau, help="loss temperature")
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--warmup-frac", type=float, default=TrainConfig.warmup_frac)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.lr)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--target-iterations", type=int, default=TargetGenConfig.iterations)
    p.add_argument("--metrics-k", type=int, default=None, help="neighbours for Uk and R (default min(10, C-1))")
    p.add_argument("--out-dir", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsclearn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-targets", help="optimize uniform class targets on the hypersphere")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=TargetGenConfig.iterations)
    p.add_argument("--lr", type=float, default=TargetGenConfig.learning_rate)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_targets)

    p = sub.add_parser("train", help="train an encoder on a synthetic long-tailed dataset")
    add_run_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="linear probe and metrics for a saved run")
    p.add_argument("--run", required=True)
    p.add_argument("--metrics-k", type=int, default=None)
    p.add_argument("--out-dir", default=None, help="defaults to the run directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="one run per value (and seed), aggregated CSV and figure")
    p.add_argument("--param", choices=("lambda", "dim", "warmup"), required=True)
    p.add_argument("--values", required=True, help="comma-separated, e.g. 0.1,0.2,0.5")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds from --seed")
    add_run_options(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot-data", help="scatter and center files for a d=2 run")
    p.add_argument("--run", required=True)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--out-dir", default=None, help="defaults to the run directory")
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OptimizationError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZATION


if __name__ == "__main__":
    sys.exit(main())
