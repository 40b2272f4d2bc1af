"""Command-line runner: ``run``, ``analyze``, ``compare``, ``oracle``, ``schema``.

Exit codes: 0 success, 2 invalid config or input, 3 divergence, 4 I/O error.
Errors are printed to stderr as one JSON object ``{"error": ..., "message": ...}``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from .config import (MixingRecord, MixingSummary, OracleBlock, OracleRecord, RunReportRecord,
                     build_partition, build_run, digest, load_config,
                     schema_documents)
from .diagnostics import (ConstantSeriesError, blocked_meanfield, conjugate_posterior,
                          ensemble_eval, iac_histogram, mixing_report, target_posterior)
from .model import DivergenceError
from .sampler import run_chain

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4
SEED_ENV = "SSG_SEED_OVERRIDE"
COMPARE_COLUMNS = ["run", "variant", "M", "rho", "K", "mean_iac", "mean_ess", "ensemble_metric",
                   "evals_per_step", "wall_clock_per_step"]


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


def _fail(code, kind, message):
    raise CliError(code, kind, message)


def _write_text(path: Path, text: str):
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        _fail(EXIT_IO, "io", f"cannot write {path}: {exc}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load(path):
    try:
        return load_config(path)
    except OSError as exc:
        _fail(EXIT_IO, "io", f"cannot read {path}: {exc}")
    except ValidationError as exc:
        _fail(EXIT_CONFIG, "config", str(exc))


def _apply_seed_override(cfg):
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return cfg, None
    try:
        seed = int(raw)
    except ValueError:
        _fail(EXIT_CONFIG, "config", f"{SEED_ENV}={raw!r} is not an integer")
    return cfg.model_copy(update={"seed": seed}), {"env": SEED_ENV, "config_seed": cfg.seed, "seed": seed}


# -- run ----------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg_path = Path(args.config)
    cfg, override = _apply_seed_override(_load(cfg_path))
    try:
        run, test = build_run(cfg, base=cfg_path.parent)
    except (ValueError, np.linalg.LinAlgError) as exc:
        _fail(EXIT_CONFIG, "config", str(exc))
    except OSError as exc:
        _fail(EXIT_IO, "io", str(exc))
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _fail(EXIT_IO, "io", f"cannot create {out}: {exc}")

    echo = cfg.model_dump(mode="json")
    echo["resolved"] = {"n_params": run.model.n_params, "M": run.partition.M,
                        "partition_hash": digest(run.partition.group_of.tolist())}
    echo["seed_override"] = override
    _write_text(out / "config.echo.json", _dump(echo))

    store, report = run_chain(run)
    try:
        store.to_csv(out / "chain.csv")
    except OSError as exc:
        _fail(EXIT_IO, "io", f"cannot write chain: {exc}")

    post = store.subset(run.burn_in) if report.steps_completed > run.burn_in else None
    summary = None
    if post is not None and len(post) >= 8:
        rep = mixing_report(post.matrix(), c=cfg.diagnostics.window_c)
        summary = MixingSummary(n=rep.n, mean_iac=rep.to_dict()["mean_iac"],
                                mean_ess=rep.to_dict()["mean_ess"],
                                excluded_constant=len(rep.excluded),
                                unconverged_windows=int((~rep.converged).sum()))
    metric, metric_name = None, None
    if post is not None and test is not None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(4)[3])
        metric = ensemble_eval(post, run.model, test, cfg.diagnostics.n_models, rng)
        metric_name = "accuracy" if run.model.is_classifier else "mse"
    record = RunReportRecord(
        **report.to_dict(),
        rho=cfg.mask.rho if run.variant == "dropout" else None,
        model_hash=digest(cfg.model.model_dump(mode="json")),
        data_hash=digest(cfg.data.model_dump(mode="json")),
        mixing=summary, ensemble_metric=metric, ensemble_metric_name=metric_name,
    )
    _write_text(out / "report.json", _dump(record.model_dump(mode="json")))
    if report.diverged:
        _fail(EXIT_DIVERGED, "divergence", report.divergence_message)
    return EXIT_OK


# -- analyze ------------------------------------------------------------------

def _read_chain(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        _fail(EXIT_IO, "io", f"cannot read {path}: {exc}")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:1] != ["step"]:
        _fail(EXIT_CONFIG, "input", f"{path}: expected a header starting with 'step'")
    width = len(rows[0])
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    except ValueError as exc:
        _fail(EXIT_CONFIG, "input", f"{path}: {exc}")
    if body.size == 0 or body.ndim != 2 or body.shape[1] != width:
        _fail(EXIT_CONFIG, "input", f"{path}: rows do not all have {width} columns")
    return body[:, 0], body[:, 1:]


def cmd_analyze(args) -> int:
    chain = Path(args.chain)
    steps, x = _read_chain(chain)
    x = x[steps >= args.burn_in]
    if x.shape[0] < 8:
        _fail(EXIT_CONFIG, "input", f"need at least 8 rows at or after step {args.burn_in}, got {x.shape[0]}")
    out = Path(args.out) if args.out else chain.parent
    rep = mixing_report(x, c=args.window_c)
    record = MixingRecord(burn_in=args.burn_in, **rep.to_dict())
    _write_text(out / "mixing.json", _dump(record.model_dump(mode="json")))
    edges, counts = iac_histogram(rep.iac, bins=args.bins) if rep.iac.size else (np.empty(0), np.empty(0))
    lines = ["bin_left,bin_right,count"]
    lines += [f"{float(edges[i])!r},{float(edges[i + 1])!r},{int(counts[i])}" for i in range(len(counts))]
    _write_text(out / "iac_hist.csv", "\n".join(lines) + "\n")
    if record.warnings:
        print(json.dumps({"warnings": record.warnings,
                          "excluded_constant": record.excluded_constant}), file=sys.stderr)
    return EXIT_OK


# -- compare ------------------------------------------------------------------

def _fmt(v):
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def cmd_compare(args) -> int:
    if len(args.dirs) < 2:
        _fail(EXIT_CONFIG, "input", "compare needs at least two run directories")
    records = []
    for d in sorted(args.dirs, key=lambda p: Path(p).name):
        path = Path(d) / "report.json"
        try:
            records.append((Path(d).name, RunReportRecord.model_validate_json(path.read_text(encoding="utf-8"))))
        except OSError as exc:
            _fail(EXIT_IO, "io", f"cannot read {path}: {exc}")
        except ValidationError as exc:
            _fail(EXIT_CONFIG, "input", f"{path}: {exc}")
    keys = {(r.model_hash, r.data_hash) for _, r in records}
    if len(keys) > 1:
        _fail(EXIT_CONFIG, "incompatible", "runs use different models or datasets")
    lines = [",".join(COMPARE_COLUMNS)]
    for name, r in records:
        mix = r.mixing
        row = [name, r.variant, r.M, r.rho, r.K, mix.mean_iac if mix else None,
               mix.mean_ess if mix else None, r.ensemble_metric, r.evals_per_step,
               r.wall_clock_per_step]
        lines.append(",".join(_fmt(v) for v in row))
    out = Path(args.out)
    _write_text(out, "\n".join(lines) + "\n")
    return EXIT_OK


# -- oracle -------------------------------------------------------------------

def cmd_oracle(args) -> int:
    cfg_path = Path(args.config)
    cfg = _load(cfg_path)
    if cfg.model.kind not in ("linear-regression", "gaussian-target"):
        _fail(EXIT_CONFIG, "config", f"no analytic oracle for {cfg.model.kind!r}")
    try:
        run, _ = build_run(cfg.model_copy(update={"sampler": cfg.sampler.model_copy(update={"steps": 0, "burn_in": 0})}),
                           base=cfg_path.parent)
    except (ValueError, np.linalg.LinAlgError) as exc:
        _fail(EXIT_CONFIG, "config", str(exc))
    model = run.model
    target = target_posterior(model) if model.kind == "gaussian-target" else conjugate_posterior(model, run.data)
    spec = build_partition(cfg.partition, model)
    mf = blocked_meanfield(target, spec)
    record = OracleRecord(
        model_kind=model.kind, mu=target.mean.tolist(), sigma=target.cov.tolist(),
        precision=target.precision.tolist(), partition=json.loads(spec.to_json()),
        blocks=[OracleBlock(members=m.tolist(), mean=bm.tolist(), cov=bc.tolist())
                for m, bm, bc in zip(spec.members, mf.block_means, mf.block_covs)],
        meanfield_means=mf.means.tolist(), meanfield_variances=mf.variances.tolist(),
        marginal_variances=np.diag(target.cov).tolist(), sweeps=mf.sweeps,
        converged=mf.converged,
    )
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _fail(EXIT_IO, "io", f"cannot create {out}: {exc}")
    _write_text(out / "oracle.json", _dump(record.model_dump(mode="json")))
    return EXIT_OK


def cmd_schema(args) -> int:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _fail(EXIT_IO, "io", f"cannot create {out}: {exc}")
    for name, text in schema_documents().items():
        _write_text(out / name, text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssgmcmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one chain from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="IAC/ESS of an exported chain")
    p.add_argument("--chain", required=True)
    p.add_argument("--burn-in", type=int, default=0, help="drop rows with step < this")
    p.add_argument("--window-c", type=float, default=5.0)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", default=None, help="output directory (default: the chain's)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="tabulate several runs")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("oracle", help="analytic posterior and factorized fixed point")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("schema", help="write the JSON schemas of config and outputs")
    p.add_argument("--out", default="docs/schemas")
    p.set_defaults(func=cmd_schema)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args)
    except CliError as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc)}), file=sys.stderr)
        return exc.code
    except (DivergenceError, ConstantSeriesError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_DIVERGED if isinstance(exc, DivergenceError) else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
