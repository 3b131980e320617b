"""Command-line front end: ``spatialsl <subcommand> [options]``.

Every subcommand writes its artifacts plus ``run_metadata.txt`` into ``--out``.
Errors print one line ``<ErrorClass>: <detail>`` to stderr and exit with status 2.
"""
from __future__ import annotations

import argparse
import json
import pickle
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .core import (
    SeverityCategory,
    categorize_array,
    concat_datasets,
    load_dataset,
    read_columns,
    read_metadata,
    save_dataset,
)
from .errors import ConfigError, SchemaMismatch, SpatialSLError
from .interpret import ale, impurity_importance, permutation_importance, plot_ale
from .learners import load_learners, save_learners
from .models import (
    VARIANTS,
    FittedModel,
    ModelVariant,
    cross_validate,
    evaluate,
    fit_stage1,
    fit_variant,
    holdout,
    report_csv,
    report_table,
)
from .preprocess import parse_manifest, read_temporal, run_pipeline
from .seeding import derive_seed
from .stacking import learner_correlations
from .synth import SynthSpec, simulate_gp, write_simulation

MODEL_FORMAT = "spatialsl-model"


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# subcommands; each returns a dict of extra metadata

def cmd_preprocess(args, cfg: RunConfig, out: Path):
    ds = load_dataset(args.input)
    manifest = args.manifest or cfg.manifest
    if manifest is None:
        raise ConfigError("preprocess needs --manifest")
    steps = parse_manifest(Path(manifest).read_text(encoding="utf-8"))
    temporal = read_temporal(args.temporal) if args.temporal else None
    ds = run_pipeline(ds, steps, temporal_records=temporal, base_dir=Path(manifest).parent)
    save_dataset(ds, out / "preprocessed.csv")
    return {"steps": ";".join(s.name for s in steps), "columns": ",".join(ds.columns)}


def cmd_stack(args, cfg: RunConfig, out: Path):
    ds = load_dataset(args.input)
    st1 = fit_stage1(ds, cfg.model_config())
    save_dataset(st1.meta.to_dataset(ds.response_name, ds.distance_unit), out / "meta_features.csv")
    save_learners(st1.fitted, out / "learners.pkl")
    C = learner_correlations(st1.meta)
    names = list(st1.meta.names)
    lines = [",".join(["learner"] + names)]
    lines += [",".join([nm] + [repr(float(v)) for v in row]) for nm, row in zip(names, C)]
    _write(out / "learner_correlations.csv", "\n".join(lines) + "\n")
    return {"stage1_seed": cfg.seed, "learners": ",".join(names)}


def cmd_fit(args, cfg: RunConfig, out: Path):
    ds = load_dataset(args.input)
    variant = ModelVariant.parse(args.variant)
    model = fit_variant(variant, ds, cfg.model_config())
    with open(out / "model.pkl", "wb") as fh:
        pickle.dump({"format": MODEL_FORMAT, "version": 1, "model": model}, fh,
                    protocol=pickle.HIGHEST_PROTOCOL)
    _write(out / "fit_report.json", _json(model.report()))
    return {"variant": variant.name}


def _load_model(path) -> FittedModel:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise ConfigError(f"{path}: not a fitted model artifact")
    return payload["model"]


def cmd_predict(args, cfg: RunConfig, out: Path):
    model = _load_model(args.model)
    ds = load_dataset(args.input)
    missing = [c for c in model.covariates if c not in ds.columns]
    if missing:
        raise SchemaMismatch(f"prediction input lacks covariates {missing}")
    ds = ds.select_columns(model.covariates)
    model.pred_k = cfg.pred_k
    model.threads = cfg.threads
    mean, var = model.predict(ds.X, ds.coords)
    cats = [SeverityCategory(c).name for c in categorize_array(mean)]
    save_dataset(ds, out / "predictions.csv",
                 extra={"pred_mean": mean, "pred_var": var, "pred_category": cats})
    return {"variant": model.variant.name, "n_pred": ds.n}


def cmd_evaluate(args, cfg: RunConfig, out: Path):
    cols = read_columns(args.predictions)
    response = read_metadata(args.predictions).get("response_name", "dnbr")
    for c in (response, "pred_mean"):
        if c not in cols:
            raise SchemaMismatch(f"{args.predictions}: missing column {c!r}")
    truth = np.array([float(v) for v in cols[response]])
    pred = np.array([float(v) for v in cols["pred_mean"]])
    rep = {args.label: evaluate(pred, truth)}
    _write(out / "metrics.csv", report_csv(rep))
    _write(out / "metrics.txt", report_table(rep))
    sys.stdout.write(report_table(rep))
    return {}


def _learner(args):
    fitted = load_learners(args.learners)
    if args.learner not in fitted:
        raise ConfigError(f"no learner {args.learner!r} in {args.learners}; have {sorted(fitted)}")
    return fitted[args.learner]


def cmd_importance(args, cfg: RunConfig, out: Path):
    model = _learner(args)
    ds = load_dataset(args.input)
    methods = ("impurity", "permutation") if args.method == "both" else (args.method,)
    seed = derive_seed(cfg.seed, "permutation")
    for m in methods:
        if m == "impurity":
            rep = impurity_importance(model, ds.columns)
        else:
            rep = permutation_importance(model, ds.X, ds.y, repeats=args.repeats, seed=seed,
                                         columns=ds.columns)
        _write(out / f"importance_{m}.csv", rep.to_csv())
    return {"learner": args.learner, "permutation_seed": seed}


def cmd_ale(args, cfg: RunConfig, out: Path):
    model = _learner(args)
    ds = load_dataset(args.input)
    names = args.covariate or list(ds.columns)
    for nm in names:
        if nm not in ds.columns:
            raise SchemaMismatch(f"no covariate {nm!r}")
        curve = ale(model, ds.X, ds.columns.index(nm), n_bins=args.bins, column=nm)
        _write(out / f"ale_{nm}.csv", curve.to_csv())
        if args.plot:
            plot_ale(curve, out / f"ale_{nm}.png")
    return {"learner": args.learner, "covariates": ",".join(names)}


def cmd_simulate(args, cfg: RunConfig, out: Path):
    spec = SynthSpec(n=args.n, beta=tuple(args.beta), sigma2=args.sigma2, tau2=args.tau2,
                     phi=args.phi, mean=args.mean, p=args.p, scale=args.scale,
                     seed=derive_seed(cfg.seed, "simulate"))
    ds, truth = simulate_gp(spec, return_truth=True)
    write_simulation(ds, truth, out / "simulated.csv")
    return {"simulation_seed": spec.seed}


def cmd_report(args, cfg: RunConfig, out: Path):
    datasets = [load_dataset(p) for p in args.inputs]
    variants = [ModelVariant.parse(v) for v in args.variants] if args.variants else list(VARIANTS)
    mc = cfg.model_config()
    if args.test:
        if len(datasets) != 1:
            raise ConfigError("--test takes exactly one training input")
        res = holdout(datasets[0], load_dataset(args.test), mc, variants,
                      with_learners=args.learners_too)
        protocol = "holdout"
    else:
        ds = datasets[0] if len(datasets) == 1 else concat_datasets(datasets)
        res = cross_validate(ds, mc, variants)
        protocol = "within-fire" if len(datasets) == 1 else "combined"
    _write(out / "report.csv", report_csv(res.reports))
    _write(out / "report.txt", report_table(res.reports))
    sys.stdout.write(report_table(res.reports))
    return {"protocol": protocol}


# --------------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--folds", type=int)
    p.add_argument("--vecchia-k", dest="vecchia_k", type=int)
    p.add_argument("--pred-k", dest="pred_k", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spatialsl", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="drop sparse covariates, impute, add trends, resample")
    p.add_argument("input")
    p.add_argument("--manifest")
    p.add_argument("--temporal", help="long-format time series file")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("stack", help="out-of-fold learner predictions and full refits")
    p.add_argument("input")
    p.set_defaults(func=cmd_stack)

    p = sub.add_parser("fit", help="fit one model variant")
    p.add_argument("input")
    p.add_argument("--variant", default="SL-Spatial", choices=[v.name for v in VARIANTS])
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict at new sites with a fitted model")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="RMSE / CA / CA-High of a predictions file")
    p.add_argument("predictions")
    p.add_argument("--label", default="model")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", help="impurity and permutation importance")
    p.add_argument("input")
    p.add_argument("--learners", required=True, help="learners.pkl from `stack`")
    p.add_argument("--learner", default="extra_trees")
    p.add_argument("--method", default="both", choices=["impurity", "permutation", "both"])
    p.add_argument("--repeats", type=int, default=10)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("ale", help="accumulated local effects")
    p.add_argument("input")
    p.add_argument("--learners", required=True)
    p.add_argument("--learner", default="extra_trees")
    p.add_argument("--covariate", action="append")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--plot", action="store_true", help="also write a PNG per curve")
    p.set_defaults(func=cmd_ale)

    p = sub.add_parser("simulate", help="draw a synthetic dataset with a truth sidecar")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--tau2", type=float, default=0.25)
    p.add_argument("--phi", type=float, default=0.1)
    p.add_argument("--beta", type=float, nargs="+", default=[0.0, 1.0])
    p.add_argument("--mean", default="linear", choices=["linear", "friedman", "constant"])
    p.add_argument("--p", type=int)
    p.add_argument("--scale", type=float, default=1.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="compare the four variants (CV or holdout)")
    p.add_argument("inputs", nargs="+", help="one file: within-fire CV; several: combined")
    p.add_argument("--test", help="score on this file instead of cross-validating")
    p.add_argument("--variants", nargs="+", choices=[v.name for v in VARIANTS])
    p.add_argument("--learners-too", action="store_true", help="holdout only: score base learners")
    p.set_defaults(func=cmd_report)

    for p in sub.choices.values():
        _common(p)
    return ap


def _versions() -> dict:
    import numba
    import scipy
    return {"spatialsl": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {k: getattr(args, k) for k in
                     ("seed", "threads", "out", "folds", "vecchia_k", "pred_k")}
        cfg = load_config(args.config, overrides)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        extra = args.func(args, cfg, out) or {}
        meta = {"command": args.command, "argv": " ".join(sys.argv[1:] if argv is None else argv),
                **{f"config.{k}": v for k, v in cfg.echo().items()},
                **{f"version.{k}": v for k, v in _versions().items()},
                **{f"result.{k}": v for k, v in extra.items()},
                "elapsed_seconds": f"{time.perf_counter() - t0:.3f}"}
        _write(out / "run_metadata.txt", "".join(f"{k}={v}\n" for k, v in meta.items()))
    except SpatialSLError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"IOError: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
