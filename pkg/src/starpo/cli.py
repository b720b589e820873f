"""``starpo`` command-line entry point.

Subcommands: analyze, calibrate, train, validate, solve24, report. Every
command accepts ``--config``, ``--seed`` and ``--out``; outputs go to the
output directory and are written atomically.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigError, IoError, SchemaError, StarpoError
from .grpo import LOG_COLUMNS, MODES, SHAPINGS, evaluate, train
from .metrics import AbnormalityCalibration, calibrate_abnormality, flag_abnormal, scores_meta, stability_scores
from .study import run_validation
from .toy.envs import DEFAULT_PUZZLES, Game24Env, prior_policy
from .toy.game24 import game24_solve, load_puzzles
from .toy.synthetic import GeneratorParams, gen_corpus
from .trajectory import atomic_write_text, load_trajectories, save_trajectories

CALIBRATION_FILE = "calibration.txt"


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


# -- analyze / calibrate --------------------------------------------------------


def cmd_analyze(cfg: RunConfig, args: argparse.Namespace) -> int:
    trajs = load_trajectories(args.input)
    out = _out_dir(cfg)
    calib = None
    if args.flags or args.calibration:
        path = Path(args.calibration) if args.calibration else out / CALIBRATION_FILE
        if not path.exists():
            raise ConfigError(f"no calibration at {path}; run `starpo calibrate` first or pass --calibration")
        calib = AbnormalityCalibration.from_text(path.read_text())
    annotated, acf, pe = [], [], []
    tails = {"acf_low": 0, "acf_high": 0, "pe_low": 0}
    for t in trajs:
        sc = stability_scores(t, cfg.eps_pe)
        flags = flag_abnormal(sc, calib) if calib is not None else None
        annotated.append(t.with_meta(**scores_meta(sc, flags)))
        acf.append(sc.r_acf)
        pe.append(sc.r_pe)
        if flags is not None:
            tails["acf_low"] += flags.acf_abnormal_low
            tails["acf_high"] += flags.acf_abnormal_high
            tails["pe_low"] += flags.pe_abnormal_low
    target = out / (args.output or "scores.jsonl")
    save_trajectories(annotated, target)
    lines = [f"rows = {len(trajs)}"]
    if trajs:
        lines += [f"mean_r_acf = {float(np.mean(acf))!r}", f"mean_r_pe = {float(np.mean(pe))!r}"]
    if calib is not None:
        lines += [f"tail_{k} = {v}" for k, v in tails.items()]
    lines.append(f"written = {target}")
    _emit("\n".join(lines))
    return 0


def cmd_calibrate(cfg: RunConfig, args: argparse.Namespace) -> int:
    trajs = load_trajectories(args.input)
    calib = calibrate_abnormality([stability_scores(t, cfg.eps_pe) for t in trajs], cfg.tail_mass)
    target = _out_dir(cfg) / CALIBRATION_FILE
    atomic_write_text(target, calib.to_text())
    _emit(calib.to_text() + f"written = {target}")
    return 0


# -- train ------------------------------------------------------------------------


def _env(cfg: RunConfig) -> Game24Env:
    puzzles = load_puzzles(cfg.puzzles) if cfg.puzzles else DEFAULT_PUZZLES
    return Game24Env(puzzles, embed_dim=cfg.embed_dim, projection_seed=cfg.projection_seed)


def policy_to_json(policy, feature_names: Sequence[str]) -> str:
    doc = {
        "feature_names": list(feature_names),
        "weights": [float(w) for w in policy.weights],
        "temperature": float(policy.temperature),
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _train_once(cfg: RunConfig, env: Game24Env, out: Path, tag: str):
    policy = prior_policy(env, cfg.init_solvable_weight, cfg.init_win_weight)
    log = train(env, policy, cfg.train_config(), cfg.iterations, cfg.seed)
    csv_path = out / f"train_{tag}.csv"
    atomic_write_text(csv_path, log.to_csv())
    atomic_write_text(out / f"policy_{tag}.json", policy_to_json(policy, env.feature_names))
    ev = evaluate(env, policy, cfg.eval_episodes, cfg.seed, cfg.eps_pe)
    summary = (
        f"mode = {cfg.mode}\nlambda_acf = {cfg.lambda_acf!r}\nlambda_pe = {cfg.lambda_pe!r}\n"
        f"iterations = {cfg.iterations}\n"
        f"eval_success_rate = {ev.success_rate!r}\neval_mean_r_acf = {ev.mean_r_acf!r}\n"
        f"eval_mean_r_pe = {ev.mean_r_pe!r}\neval_episodes = {ev.episodes}\n"
    )
    atomic_write_text(out / f"eval_{tag}.txt", summary)
    return ev, summary, csv_path


SWEEP_COLUMNS = ("lambda", "eval_success_rate", "eval_mean_r_acf", "eval_mean_r_pe")


def _parse_sweep(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--lambda-sweep expects comma-separated numbers, got {text!r}") from exc
    if not values or any(not math.isfinite(v) or v < 0 for v in values):
        raise ConfigError("--lambda-sweep values must be finite and >= 0")
    return values


def cmd_train(cfg: RunConfig, args: argparse.Namespace) -> int:
    env = _env(cfg)
    out = _out_dir(cfg)
    if not getattr(args, "lambda_sweep", None):
        _, summary, csv_path = _train_once(cfg, env, out, cfg.mode)
        _emit(summary + f"written = {csv_path}")
        return 0
    # one run per value, with both stability weights set to it
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for lam in _parse_sweep(args.lambda_sweep):
        run = replace(cfg, lambda_acf=lam, lambda_pe=lam)
        ev, _, _ = _train_once(run, env, out, f"{cfg.mode}_lam{lam!r}")
        w.writerow([repr(lam), repr(ev.success_rate), repr(ev.mean_r_acf), repr(ev.mean_r_pe)])
    target = out / f"sweep_{cfg.mode}.csv"
    atomic_write_text(target, buf.getvalue())
    _emit(_aligned(buf.getvalue()) + f"written = {target}")
    return 0


# -- validate ---------------------------------------------------------------------


def cmd_validate(cfg: RunConfig, args: argparse.Namespace) -> int:
    corpus = gen_corpus(
        cfg.n_per_class,
        K=cfg.K,
        d=cfg.d,
        noise_scale=cfg.noise_scale,
        seed=cfg.seed,
        params=GeneratorParams(step_size=cfg.step_size, leap_factor=cfg.leap_factor,
                               n_anchors=cfg.n_anchors, max_turn=cfg.max_turn),
    )
    report = run_validation(corpus, calib_window=cfg.calib_window, tail_mass=cfg.tail_mass, alpha=cfg.alpha, eps_pe=cfg.eps_pe)
    out = _out_dir(cfg)
    atomic_write_text(out / "validation.csv", report.to_csv("occurrence"))
    atomic_write_text(out / "validation_distribution.csv", report.to_csv("distribution"))
    table = report.to_table("occurrence") + "\n" + report.to_table("distribution")
    atomic_write_text(out / "validation_table.txt", table)
    atomic_write_text(out / CALIBRATION_FILE, report.calibration.to_text())
    _emit(table)
    return 0


# -- solve24 ----------------------------------------------------------------------


def cmd_solve24(cfg: RunConfig, args: argparse.Namespace) -> int:
    ok, sols = game24_solve(args.numbers)
    lines = [f"puzzle = {' '.join(str(x) for x in args.numbers)}", f"solvable = {str(ok).lower()}", f"solutions = {len(sols)}"]
    shown = sols if args.limit is None else sols[: max(args.limit, 0)]
    lines += [f"{e} = 24" for e in shown]
    _emit("\n".join(lines))
    return 0


# -- report -----------------------------------------------------------------------


def read_log(path: str | Path) -> list[dict[str, float]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != LOG_COLUMNS:
        raise SchemaError(f"{path}: header does not match the training log columns")
    rows = []
    for n, rec in enumerate(reader, 2):
        if len(rec) != len(LOG_COLUMNS):
            raise SchemaError(f"{path}:{n}: expected {len(LOG_COLUMNS)} fields")
        try:
            vals = [float(x) for x in rec]
        except ValueError as exc:
            raise SchemaError(f"{path}:{n}: non-numeric field") from exc
        if not all(math.isfinite(v) for v in vals):
            raise SchemaError(f"{path}:{n}: non-finite value")
        rows.append(dict(zip(LOG_COLUMNS, vals)))
    return rows


REPORT_COLUMNS = ("run", "iterations", "final_success_rate", "final_mean_r_acf", "final_mean_r_pe", "final_kl")


def build_report(logs: dict[str, list[dict[str, float]]], window: int) -> tuple[str, str]:
    """(comparison CSV, columnar curve CSV). Final values average the last ``window`` rows."""
    summary = io.StringIO()
    w = csv.writer(summary, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for name, rows in logs.items():
        tail = rows[-window:]
        mean = lambda c: repr(float(np.mean([r[c] for r in tail]))) if tail else ""  # noqa: E731
        w.writerow([name, len(rows), mean("success_rate"), mean("mean_r_acf"), mean("mean_r_pe"), mean("kl")])
    curves = io.StringIO()
    w = csv.writer(curves, lineterminator="\n")
    metrics = ("success_rate", "mean_r_acf", "mean_r_pe")
    w.writerow(["iteration"] + [f"{name}:{m}" for name in logs for m in metrics])
    length = max((len(r) for r in logs.values()), default=0)
    for i in range(length):
        row: list[Any] = [i]
        for rows in logs.values():
            row += [repr(rows[i][m]) if i < len(rows) else "" for m in metrics]
        w.writerow(row)
    return summary.getvalue(), curves.getvalue()


def _aligned(csv_text: str) -> str:
    rows = list(csv.reader(io.StringIO(csv_text)))
    widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in rows) + "\n"


def cmd_report(cfg: RunConfig, args: argparse.Namespace) -> int:
    logs: dict[str, list[dict[str, float]]] = {}
    for p in args.logs:
        name = Path(p).stem
        if name in logs:
            raise SchemaError(f"duplicate run name {name!r}")
        logs[name] = read_log(p)
    summary, curves = build_report(logs, args.window)
    out = _out_dir(cfg)
    atomic_write_text(out / "report.csv", summary)
    atomic_write_text(out / "report_curves.csv", curves)
    _emit(_aligned(summary))
    return 0


# -- argument parsing -------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, default: Any) -> None:
    p.add_argument("--config", default=default, help="flat key = value config file")
    p.add_argument("--seed", type=int, default=default, help="master seed")
    p.add_argument("--out", default=default, help="output directory")
    p.add_argument("--set", action="append", default=default, metavar="KEY=VALUE", help="override any config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="starpo", description="Stability-augmented group policy optimisation laboratory")
    _global_flags(parser, None)
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps subcommand-level defaults from clobbering top-level values
    _global_flags(common, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="score trajectories")
    p.add_argument("input", help="trajectory JSONL file")
    p.add_argument("--calibration", help="calibration file (default: <out>/calibration.txt with --flags)")
    p.add_argument("--flags", action="store_true", help="also flag abnormal metrics")
    p.add_argument("--output", help="output file name inside --out (default scores.jsonl)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("calibrate", parents=[common], help="fit abnormality thresholds")
    p.add_argument("input", help="trajectory JSONL file")
    p.add_argument("--tail-mass", dest="tail_mass", type=float)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", parents=[common], help="train the toy policy on Game of 24")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--iterations", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--lambda-acf", dest="lambda_acf", type=float)
    p.add_argument("--lambda-pe", dest="lambda_pe", type=float)
    p.add_argument("--reward-shaping", dest="reward_shaping", choices=SHAPINGS)
    p.add_argument("--group-size", dest="group_size", type=int)
    p.add_argument("--puzzles", help="puzzle file, four integers per line")
    p.add_argument("--lambda-sweep", dest="lambda_sweep", metavar="V1,V2,...",
                   help="train once per value with lambda_acf = lambda_pe = value")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("validate", parents=[common], help="run the synthetic association study")
    p.add_argument("--n-per-class", dest="n_per_class", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--calib-window", dest="calib_window", type=int)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve24", parents=[common], help="list every solution of a puzzle")
    p.add_argument("numbers", type=int, nargs=4)
    p.add_argument("--limit", type=int, default=None, help="print at most this many solutions")
    p.set_defaults(func=cmd_solve24)

    p = sub.add_parser("report", parents=[common], help="compare training logs")
    p.add_argument("logs", nargs="+")
    p.add_argument("--window", type=int, default=10, help="rows averaged for the final values")
    p.set_defaults(func=cmd_report)
    return parser


_CONFIG_FLAGS = (
    "seed", "out", "tail_mass", "mode", "iterations", "learning_rate", "lambda_acf", "lambda_pe",
    "reward_shaping", "group_size", "puzzles", "n_per_class", "alpha", "calib_window",
)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides: dict[str, Any] = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    # dedicated flags win over --set
    for key in _CONFIG_FLAGS:
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    return load_config(getattr(args, "config", None), overrides)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(cfg, args)
    except StarpoError as exc:
        print(f"starpo {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
