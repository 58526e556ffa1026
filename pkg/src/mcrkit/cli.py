"""Command-line front end.

Settings come from built-in defaults, then an optional flat ``key=value``
file (``--config``), then explicit flags. Every JSON output embeds the
resolved settings, so identical settings give byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from functools import partial
from pathlib import Path

import numpy as np

from . import errors
from .dataset import SplitSpec, impute_residualize, load_csv, split
from .estimators import Estimator, RelianceMode, SquaredError, e_divide, e_orig, e_switch, model_reliance
from .inference import BootstrapConfig, PredictionAt, bootstrap_mcr_ci, rashomon_phi_ci
from .linear_class import LinearClass, LinearModel
from .mcr_search import ProbeCache, bound_curve
from .qp1qc import EllipsoidConstraint
from .rkhs_class import RkhsClass, RkhsSolvable, _cv_folds, select_bandwidth, select_rk
from .simlab import causal_identity_check, coverage_study, random_causal_dgp
from .theory_bounds import TheoryConstants, b_ind_linear, b_ind_rkhs, estimate_r_D, estimate_r_x, phi_ci_epsilons

COMMANDS = ("mr", "mcr-curve", "bootstrap-ci", "phi-ci", "simulate-coverage", "causal-check")

# key -> (default, parser). Parsers turn config-file strings into values.
_str = str


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise errors.ConfigError(f"not a boolean: {v!r}")


def _floats(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).replace(" ", "").split(",") if x]


def _names(v):
    if isinstance(v, (list, tuple)):
        return list(v)
    return [x.strip() for x in str(v).split(",") if x.strip()]


def _auto_float(v):
    if v is None:
        return None
    if str(v).strip().lower() == "auto":
        return "auto"
    return float(v)


SETTINGS = {
    "data": (None, _str),
    "outcome": ("y", _str),
    "x1_cols": (None, _names),
    "class": ("linear", _str),
    "ridge_m": ("identity", _str),
    "ridge_r": (None, float),
    "sigma": ("auto", _auto_float),
    "r_k": ("auto", _auto_float),
    "epsilon_rel": ("auto", _auto_float),
    "epsilon_grid": (None, _floats),
    "impute": (False, _bool),
    "estimator": ("switch", _str),
    "mode": ("ratio", _str),
    "seed": (0, int),
    "n_train": (None, int),
    "folds": (5, int),
    "output": (None, _str),
    "threads": (None, int),
    "beta": (None, _floats),
    "intercept": (0.0, float),
    "replicates": (100, int),
    "lower_pct": (2.5, float),
    "upper_pct": (97.5, float),
    "reanchor": (True, _bool),
    "x_new": (None, _floats),
    "delta": (0.05, float),
    "b_ind": ("auto", _auto_float),
    "range_mode": (False, _bool),
    "gammas": ([0.0, 0.1, 0.5], _floats),
    "n": (400, int),
    "reps": (100, int),
    "boot_reps": (100, int),
    "n_train_sim": (200, int),
    "var_x": (1.0, float),
    "cov_x": (0.25, float),
    "csv_prefix": (None, _str),
    "n_dgps": (20, int),
    "n_mc": (100_000, int),
    "tol": (1e-4, float),
}

REQUIRED = {
    "mr": ("data", "x1_cols", "beta"),
    "mcr-curve": ("data", "x1_cols"),
    "bootstrap-ci": ("data", "x1_cols"),
    "phi-ci": ("data", "x1_cols", "x_new"),
    "simulate-coverage": (),
    "causal-check": (),
}

EXIT_CODES = {errors.ConfigError: 2, errors.DataError: 3, errors.SolverError: 4}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise errors.ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise errors.ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SETTINGS:
            raise errors.ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve(command: str, file_values: dict, flag_values: dict) -> dict:
    cfg = {}
    for key, (default, parse) in SETTINGS.items():
        raw = flag_values.get(key)
        if raw is None:
            raw = file_values.get(key)
        try:
            cfg[key] = default if raw is None else parse(raw)
        except (TypeError, ValueError):
            raise errors.ConfigError(f"bad value for {key}: {raw!r}") from None
    env = os.environ.get("MCRKIT_THREADS")
    if env:
        try:
            cfg["threads"] = int(env)
        except ValueError:
            raise errors.ConfigError(f"MCRKIT_THREADS must be an integer, got {env!r}") from None
    if cfg["threads"] is None:
        cfg["threads"] = os.cpu_count() or 1
    if cfg["threads"] < 1:
        raise errors.ConfigError("threads must be at least 1")
    missing = [k for k in REQUIRED[command] if cfg[k] is None]
    if missing:
        raise errors.ConfigError(f"{command} requires: {', '.join(missing)}")
    if cfg["class"] not in ("linear", "ridge", "rkhs"):
        raise errors.ConfigError(f"unknown class {cfg['class']!r}")
    if cfg["class"] == "ridge" and cfg["ridge_r"] is None and command in ("mcr-curve", "bootstrap-ci", "phi-ci"):
        raise errors.ConfigError("ridge class needs ridge_r")
    for key, allowed in (("estimator", ("switch", "divide")), ("mode", ("ratio", "difference"))):
        if cfg[key] not in allowed:
            raise errors.ConfigError(f"{key} must be one of {allowed}")
    if cfg["mode"] == "difference" and command in ("mcr-curve", "bootstrap-ci"):
        raise errors.ConfigError("MCR searches report ratio reliance; use mode=ratio")
    cfg["command"] = command
    return cfg


# pipeline pieces -------------------------------------------------------------


def _load(cfg):
    data = load_csv(cfg["data"], cfg["outcome"], cfg["x1_cols"])
    return impute_residualize(data) if cfg["impute"] else data


def _split(cfg, data):
    n_train = cfg["n_train"] if cfg["n_train"] is not None else data.n // 2
    return split(data, SplitSpec(n_train, cfg["seed"]))


def _ridge_constraint(cfg, dim: int) -> EllipsoidConstraint:
    spec = cfg["ridge_m"]
    if spec == "identity":
        M = np.eye(dim)
    else:
        try:
            diag = np.array(Path(spec).read_text(encoding="utf-8").replace(",", " ").split(), dtype=np.float64)
        except (OSError, ValueError) as exc:
            raise errors.ConfigError(f"cannot read diagonal file {spec}: {exc}") from None
        if diag.size != dim:
            raise errors.ConfigError(f"diagonal file has {diag.size} entries, class has {dim} coefficients")
        M = np.diag(diag)
    return EllipsoidConstraint(M, cfg["ridge_r"])


class _Setup:
    """Reference model, class builder and epsilon for the split-sample pipelines."""

    def __init__(self, cfg, train, analysis):
        self.cfg = cfg
        est = Estimator(cfg["estimator"])
        kind = cfg["class"]
        self.meta = {}
        if kind in ("linear", "ridge"):
            con = _ridge_constraint(cfg, train.p1 + train.p2 + 1) if kind == "ridge" else None
            self.constraint = con
            self.build = partial(LinearClass, constraint=con, estimator=est)
            ref_cls = LinearClass(train, constraint=con)
            self.reference = ref_cls.minimize_combination(1.0, 0.0).model
            cv = None
            if cfg["epsilon_rel"] == "auto":
                cv = _linear_cv_loss(train, con, cfg["folds"], cfg["seed"])
        else:
            sigma = cfg["sigma"]
            if sigma == "auto":
                sigma = select_bandwidth(train, folds=cfg["folds"], seed=cfg["seed"])
            grid = None if cfg["r_k"] == "auto" else [cfg["r_k"]]
            r_k, cv = select_rk(train, sigma, folds=cfg["folds"], grid=grid, seed=cfg["seed"])
            kcls = RkhsClass.from_training(train, sigma, r_k)
            self.kernel_class = kcls
            self.build = partial(_rkhs_builder, kcls=kcls, estimator=est)
            self.reference = RkhsSolvable(train, kcls).minimize_combination(1.0, 0.0).model
            self.meta.update(sigma=float(sigma), r_k=float(r_k), mu=float(kcls.mu), jitter=float(kcls.jitter))
        if cfg["epsilon_rel"] == "auto":
            self.epsilon = 0.1 * float(cv)
            self.meta["cv_loss"] = float(cv)
        else:
            self.epsilon = float(cfg["epsilon_rel"])
        if self.epsilon < 0:
            raise errors.ConfigError("epsilon_rel must be nonnegative")
        self.ref_loss = e_orig(self.reference, SquaredError(), analysis)
        self.meta.update(epsilon_rel=self.epsilon, reference_loss=self.ref_loss)


def _rkhs_builder(data, kcls, estimator):
    return RkhsSolvable(data, kcls, estimator)


def _linear_cv_loss(train, con, folds: int, seed: int) -> float:
    total = 0.0
    for test in _cv_folds(train.n, folds, seed):
        fit = np.setdiff1d(np.arange(train.n), test)
        model = LinearClass(train.take(fit), constraint=con).minimize_combination(1.0, 0.0).model
        total += e_orig(model, SquaredError(), train.take(test)) * test.size
    return total / train.n


def _model_dict(model) -> dict:
    if isinstance(model, LinearModel):
        return {"beta1": model.beta1.tolist(), "beta2": model.beta2.tolist(), "intercept": float(model.intercept)}
    return {"alpha": [float(a) for a in model.alpha]}


# commands --------------------------------------------------------------------


def cmd_mr(cfg) -> dict:
    data = _load(cfg)
    beta = np.asarray(cfg["beta"])
    if beta.size != data.p1 + data.p2:
        raise errors.ConfigError(f"beta has {beta.size} entries, data has {data.p1 + data.p2} covariates")
    model = LinearModel(beta[: data.p1], beta[data.p1 :], cfg["intercept"])
    loss = SquaredError()
    est = Estimator(cfg["estimator"])
    eo = e_orig(model, loss, data)
    es = e_switch(model, loss, data) if est is Estimator.SWITCH else e_divide(model, loss, data)
    mr = model_reliance(model, loss, data, RelianceMode(cfg["mode"]), est)
    return {"e_orig": eo, "e_switch": es, "mr": mr, "n": data.n}


def cmd_mcr_curve(cfg) -> dict:
    data = _load(cfg)
    train, analysis = _split(cfg, data)
    setup = _Setup(cfg, train, analysis)
    cls = setup.build(analysis)
    rel = cfg["epsilon_grid"]
    if rel is None:
        rel = [setup.epsilon * m for m in (0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0)]
    cache = ProbeCache(cls)
    curve = bound_curve(cls, [setup.ref_loss + e for e in rel], tol=cfg["tol"], cache=cache)
    points = []
    for e, res in zip(rel, curve):
        d = res.to_dict()
        d["eps_rel"] = float(e)
        points.append(d)
    probes = sorted((p.to_dict() for p in cache.probes()), key=lambda d: (d["side"], d["gamma"]))
    return {
        "setup": setup.meta,
        "reference": _model_dict(setup.reference),
        "curve": points,
        "probes": probes,
        "solver_calls": cache.solver_calls,
    }


def cmd_bootstrap_ci(cfg) -> dict:
    data = _load(cfg)
    train, analysis = _split(cfg, data)
    setup = _Setup(cfg, train, analysis)
    bc = BootstrapConfig(
        cfg["replicates"],
        cfg["seed"],
        setup.epsilon,
        setup.reference,
        cfg["lower_pct"],
        cfg["upper_pct"],
        cfg["reanchor"],
        tol=cfg["tol"],
    )
    res = bootstrap_mcr_ci(setup.build, analysis, bc, threads=cfg["threads"])
    return {"setup": setup.meta, "interval": res.to_dict()}


def cmd_phi_ci(cfg) -> dict:
    data = _load(cfg)
    train, analysis = _split(cfg, data)
    setup = _Setup(cfg, train, analysis)
    cls = setup.build(analysis)
    x = np.asarray(cfg["x_new"])
    if x.size != data.p1 + data.p2:
        raise errors.ConfigError(f"x_new has {x.size} entries, data has {data.p1 + data.p2} covariates")
    b_ind = cfg["b_ind"]
    lo, hi = float(data.y.min()), float(data.y.max())
    if b_ind == "auto":
        if cfg["class"] == "linear":
            raise errors.ConfigError("b_ind=auto needs a bounded class (ridge or rkhs)")
        if cfg["class"] == "ridge":
            feats = np.column_stack([data.X, np.ones(data.n)])
            b_ind = b_ind_linear(setup.constraint, estimate_r_x(feats, setup.constraint.M), lo, hi)
        else:
            b_ind = b_ind_rkhs(setup.kernel_class, estimate_r_D(data.X, setup.kernel_class), lo, hi)
    tc = TheoryConstants(float(b_ind), analysis.n, cfg["delta"])
    phi = PredictionAt(x[: data.p1], x[data.p1 :])
    res = rashomon_phi_ci(cls, phi, tc, setup.reference, range_mode=cfg["range_mode"], seed=cfg["seed"])
    eps4, eps5 = phi_ci_epsilons(tc)
    return {"setup": setup.meta, "B_ind": float(b_ind), "eps4": eps4, "eps5": eps5, "interval": res.to_dict()}


def _table_csv(rows, cfg) -> str:
    buf = io.StringIO()
    for key in sorted(cfg):
        buf.write(f"# {key}={json.dumps(cfg[key], sort_keys=True)}\n")
    w = csv.DictWriter(buf, fieldnames=["gamma", "target", "n", "reps", "coverage", "mean_width"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def cmd_simulate_coverage(cfg) -> dict:
    st = coverage_study(
        cfg["gammas"],
        n=cfg["n"],
        reps=cfg["reps"],
        boot_reps=cfg["boot_reps"],
        seed=cfg["seed"],
        n_train=cfg["n_train_sim"],
        var_x=cfg["var_x"],
        cov_x=cfg["cov_x"],
        threads=cfg["threads"],
    )
    mcr_rows, std_rows = st.mcr_table(), st.standard_table()
    if cfg["csv_prefix"]:
        for name, rows in (("mcr_linear", mcr_rows), ("standard_linear", std_rows)):
            Path(f"{cfg['csv_prefix']}_{name}.csv").write_text(_table_csv(rows, cfg), encoding="utf-8")
    ratios = {}
    for g in st.gammas:
        if st.outcomes[g]:
            ratios[repr(g)] = st.width_ratio(g)
    return {
        "mr_f0": {repr(g): v for g, v in st.mr_true.items()},
        "mcr_linear": mcr_rows,
        "standard_linear": std_rows,
        "width_ratio": ratios,
        "failed_reps": {repr(g): v for g, v in st.failures.items()},
        "var_x_note": "var_x defaults to 1; a zero variance with nonzero covariance is not a valid distribution",
    }


def cmd_causal_check(cfg) -> dict:
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    for k in range(cfg["n_dgps"]):
        dgp = random_causal_dgp(rng)
        lhs, rhs, se = causal_identity_check(dgp, cfg["n_mc"], seed=int(rng.integers(0, 2**63)))
        rows.append({"index": k, "lhs": lhs, "rhs": rhs, "mc_se": se, "within_4se": abs(lhs - rhs) <= 4 * se})
    return {"checks": rows, "all_within_4se": all(r["within_4se"] for r in rows)}


HANDLERS = {
    "mr": cmd_mr,
    "mcr-curve": cmd_mcr_curve,
    "bootstrap-ci": cmd_bootstrap_ci,
    "phi-ci": cmd_phi_ci,
    "simulate-coverage": cmd_simulate_coverage,
    "causal-check": cmd_causal_check,
}


# entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcrkit", description="Model reliance and model class reliance.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat key=value settings file")
    for key in SETTINGS:
        flag = "--" + key.replace("_", "-")
        if key in ("impute", "range_mode", "reanchor"):
            parser.add_argument(flag, dest=key, nargs="?", const="true", default=None)
        elif key == "class":
            parser.add_argument(flag, dest="class_", default=None)
        else:
            parser.add_argument(flag, dest=key, default=None)
    return parser


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _clean(o):
    # JSON has no infinities; spell them out so outputs stay strict JSON
    if isinstance(o, float) and not math.isfinite(o):
        return "nan" if math.isnan(o) else ("inf" if o > 0 else "-inf")
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, default=_json_default, allow_nan=False) + "\n"


def _error_report(exc: BaseException, code: int) -> str:
    family = {2: "config", 3: "data", 4: "solver"}.get(code, "internal")
    report = {"error": type(exc).__name__, "family": family, "exit_code": code, "message": str(exc)}
    for attr in ("row", "col", "value", "residual"):
        if hasattr(exc, attr):
            report[attr] = getattr(exc, attr)
    return dumps(report)


def _exit_code(exc: BaseException) -> int:
    for family, code in EXIT_CODES.items():
        if isinstance(exc, family):
            return code
    if isinstance(exc, (errors.ZeroDenominator,)):
        return 3
    if isinstance(exc, (errors.PairExpansionTooLarge, errors.TooLargeForOracle, ValueError)):
        return 2
    return 1


def run(argv=None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "class_")}
    flags["class"] = args.class_
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve(args.command, file_values, flags)
        result = HANDLERS[args.command](cfg)
    except (errors.McrError, ValueError) as exc:
        code = _exit_code(exc)
        sys.stderr.write(_error_report(exc, code))
        return code
    except OSError as exc:
        sys.stderr.write(_error_report(errors.DataError(str(exc)), 3))
        return 3
    result = {"command": args.command, "config": cfg, "seed": cfg["seed"], "result": result}
    text = dumps(result)
    if cfg["output"]:
        Path(cfg["output"]).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
