"""Command-line front end.

Subcommands::

    ttsense build    --config run.toml          cross-approximate the model, write the surrogate
    ttsense analyze  SURROGATE                  Sobol TT + sensitivity report
    ttsense baseline --config run.toml --method brute_force|saltelli|shapley_mc
    ttsense mask     KIND --N 5 [--n 2]         dense table of an automaton tensor
    ttsense info     FILE                       header of a TT file

Exit codes: 0 success, 1 configuration or I/O error, 2 model evaluation
error, 3 cross-approximation missed its validation tolerance, 4 the model has
zero variance.

The configuration is TOML. Every key can be overridden with
``--set section.key=value`` (the value is parsed as TOML, falling back to a
string); ``--seed``, ``--workers`` and ``--epsilon`` are shortcuts. Example::

    seed = 0
    epsilon = 0.05

    [model]
    builtin = "sobol_g"          # or "decay_chain", or command = "python3 sim.py"
    N = 20

    [space]
    points = 100
    repeat = 20                  # N copies of one marginal ...
    distribution = "uniform"
    params = [0.0, 1.0]
    # variables = [{name = "k", distribution = "normal", params = [0, 1], truncation = [-3, 3]}]

    [cross]
    val_rel_tol = 1e-6

    [output]
    surrogate = "out/sobol_g.tt"
    report = "out/report.json"
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from . import tt as ttm
from .baselines import brute_force_anova, saltelli_estimate, shapley_permutation_estimate
from .cross import CrossConfig, tt_cross
from .errors import (
    DataError,
    DegenerateModelError,
    TransportError,
    TTSenseError,
)
from .masks import (
    hamming_mask_tt,
    hamming_state_tt,
    hamming_weight_tt,
    length_mask_tt,
    length_state_tt,
    reciprocal_weight_tt,
)
from .metrics import DEFAULT_EPSILON, dimdist_csv, dims_table_csv, full_report, indices_table_csv, report_to_dict
from .models import (
    DECAY_RATE_RANGE,
    SubprocessEvaluator,
    decay_chain_evaluator,
    sobol_g_evaluator,
)
from .sobol import build_sobol_tt, closed_index, query_index, save_sobol, total_index
from .space import Distribution, ModelSpace, build_axis

log = logging.getLogger("ttsense")

SCHEMA = 1
EXIT_OK, EXIT_CONFIG, EXIT_EVALUATOR, EXIT_CONVERGENCE, EXIT_DEGENERATE = 0, 1, 2, 3, 4
MASK_DUMP_MAX_N = 12


class ConfigError(Exception):
    pass


# --- configuration -----------------------------------------------------------


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(cfg: dict, assignments) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in assignments or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        node = cfg
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key}: {p} is not a section")
        node[parts[-1]] = _parse_value(value.strip())
    return cfg


def load_config(path, overrides=None) -> dict:
    cfg = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                cfg = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return apply_overrides(cfg, overrides)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _builtin_arity(model: dict) -> int | None:
    name = model.get("builtin")
    if name == "sobol_g":
        return int(model.get("N", len(model.get("a", [])) or 0)) or None
    if name == "decay_chain":
        return int(model.get("n_rates", 10))
    return None


def _default_space(model: dict) -> dict:
    name = model.get("builtin")
    if name == "sobol_g":
        return {"distribution": "uniform", "params": [0.0, 1.0]}
    if name == "decay_chain":
        return {"distribution": "uniform", "params": list(DECAY_RATE_RANGE)}
    return {}


def space_spec(cfg: dict) -> dict:
    """Resolved, explicit variable list; also what the surrogate sidecar stores."""
    model = cfg.get("model", {})
    sp = dict(_default_space(model))
    sp.update(cfg.get("space", {}))
    points = sp.get("points", 100)
    if "variables" in sp:
        variables = [dict(v) for v in sp["variables"]]
    else:
        repeat = sp.get("repeat", _builtin_arity(model))
        if repeat is None:
            raise ConfigError("space needs either 'variables' or 'repeat' with a distribution")
        if "distribution" not in sp:
            raise ConfigError("space.distribution is required with 'repeat'")
        prefix = sp.get("name_prefix", "x")
        variables = []
        for n in range(int(repeat)):
            v = {"name": f"{prefix}{n + 1}", "distribution": sp["distribution"], "params": sp.get("params", [])}
            if "truncation" in sp:
                v["truncation"] = sp["truncation"]
            variables.append(v)
    for k, v in enumerate(variables):
        v.setdefault("name", f"x{k + 1}")
        v.setdefault("points", points)
    return {"variables": variables}


def build_space(spec: dict) -> ModelSpace:
    axes, names = [], []
    try:
        for v in spec["variables"]:
            trunc = v.get("truncation")
            dist = Distribution(v["distribution"], tuple(v.get("params", ())),
                                tuple(trunc) if trunc is not None else None)
            axes.append(build_axis(dist, int(v["points"])))
            names.append(v["name"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed variable declaration: {exc}") from exc
    return ModelSpace(tuple(axes), tuple(names))


def build_model(cfg: dict, arity: int, workers: int = 1):
    model = cfg.get("model")
    if not model:
        raise ConfigError("missing [model] section")
    if "command" in model:
        try:
            return SubprocessEvaluator(
                model["command"], arity,
                batch_size=int(model.get("batch_size", 256)),
                timeout=model.get("timeout", 60.0),
                workers=workers,
            )
        except OSError as exc:
            raise TransportError(f"cannot start {model['command']!r}: {exc}") from exc
    name = model.get("builtin")
    if name == "sobol_g":
        a = model.get("a")
        if a is not None and len(a) != arity:
            raise ConfigError("sobol_g: len(a) must equal the number of variables")
        return sobol_g_evaluator(arity, a)
    if name == "decay_chain":
        return decay_chain_evaluator(int(model.get("T_days", 730)), arity)
    raise ConfigError(f"unknown model {name!r}; use builtin = 'sobol_g' | 'decay_chain' or command = '...'")


def cross_config(cfg: dict, seed: int) -> CrossConfig:
    opts = dict(cfg.get("cross", {}))
    opts["seed"] = seed
    try:
        return CrossConfig(**opts)
    except TypeError as exc:
        raise ConfigError(f"bad [cross] section: {exc}") from exc


def _resolve(args) -> dict:
    cfg = load_config(getattr(args, "config", None), getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        cfg["workers"] = args.workers
    if getattr(args, "epsilon", None) is not None:
        cfg["epsilon"] = args.epsilon
    cfg.setdefault("seed", 0)
    cfg.setdefault("workers", 1)
    cfg.setdefault("epsilon", DEFAULT_EPSILON)
    return cfg


# --- output helpers ----------------------------------------------------------


def _meta(cfg: dict) -> dict:
    return {"schema": SCHEMA, "tool_version": __version__, "config_hash": config_hash(cfg)}


def _write_json(path, payload: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


# --- commands ----------------------------------------------------------------


def cmd_build(args) -> int:
    cfg = _resolve(args)
    spec = space_spec(cfg)
    space = build_space(spec)
    out = args.output or cfg.get("output", {}).get("surrogate")
    if not out:
        raise ConfigError("no surrogate path: pass --output or set output.surrogate")
    ccfg = cross_config(cfg, int(cfg["seed"]))
    with build_model(cfg, space.ndim, int(cfg["workers"])) as f:
        surrogate, report = tt_cross(f, space, ccfg)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    ttm.save(surrogate, out)
    side = dict(_meta(cfg), kind="surrogate", space=spec, build=report.to_dict(), config=cfg)
    _write_json(_sidecar(out), side)
    print(f"evaluations: {report.eval_count}")
    print(f"ranks: {list(report.ranks)}")
    print(f"validation error: {report.val_error:.3e} (tolerance {ccfg.val_rel_tol:.1e})")
    print(f"surrogate: {out}")
    if not report.converged:
        print("cross-approximation did not reach the validation tolerance", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def _parse_index(text: str) -> list:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(tok) - 1 for tok in text.replace(" ", "").split(",") if tok]
    except ValueError as exc:
        raise ConfigError(f"--index expects comma-separated 1-based variable numbers, got {text!r}") from exc


def cmd_analyze(args) -> int:
    side_path = _sidecar(args.surrogate)
    try:
        surrogate = ttm.load(args.surrogate)
        side = json.loads(side_path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read surrogate: {exc}") from exc
    cfg = side.get("config", {})
    if args.epsilon is not None:
        cfg = dict(cfg, epsilon=args.epsilon)
    eps = float(cfg.get("epsilon", DEFAULT_EPSILON))
    space = build_space(side["space"])
    s = build_sobol_tt(surrogate, space)

    if args.index is not None:
        alpha = _parse_index(args.index)
        label = "{" + ",".join(str(k + 1) for k in alpha) + "}"
        print(f"S{label} = {query_index(s, alpha):.10g}")
        print(f"S^C{label} = {closed_index(s, alpha):.10g}")
        print(f"S^T{label} = {total_index(s, alpha):.10g}" if alpha else f"S^T{label} = undefined")

    report = full_report(s, eps)
    payload = dict(_meta(cfg), method="tt", surrogate=str(args.surrogate),
                   report=report_to_dict(report), sobol_ranks=list(s.tensor.ranks))
    out = cfg.get("output", {})
    report_path = args.report or out.get("report")
    if report_path:
        _write_json(report_path, payload)
    if args.sobol_out:
        save_sobol(s, args.sobol_out)
    prefix = args.csv_prefix or out.get("csv_prefix")
    if prefix:
        _write_text(f"{prefix}_dims.csv", dims_table_csv(report))
        _write_text(f"{prefix}_indices.csv", indices_table_csv(report))
    if args.dimdist:
        _write_text(args.dimdist, dimdist_csv(report))
    if args.index is None or args.verbose:
        sys.stdout.write(dims_table_csv(report))
        sys.stdout.write(indices_table_csv(report))
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _resolve(args)
    spec = space_spec(cfg)
    space = build_space(spec)
    seed = int(cfg["seed"])
    with build_model(cfg, space.ndim, int(cfg["workers"])) as f:
        if args.method == "brute_force":
            oracle = brute_force_anova(f, space)
            body = {"report": report_to_dict(oracle.report(float(cfg["epsilon"])))}
        elif args.method == "saltelli":
            res = saltelli_estimate(f, space, base_samples=args.budget or 2**12, seed=seed)
            body = res.to_dict()
        else:
            res = shapley_permutation_estimate(f, space, permutations=args.budget or 1000,
                                               inner_samples=args.inner, seed=seed)
            body = res.to_dict()
        evaluations = f.eval_count
    body["evaluations"] = evaluations
    payload = dict(_meta(cfg), method=args.method, names=[v["name"] for v in spec["variables"]], **body)
    path = args.report or cfg.get("output", {}).get("report")
    if path:
        _write_json(path, payload)
    print(json.dumps(payload, indent=2, default=_json_default))
    if body.get("degenerate"):
        return EXIT_DEGENERATE
    return EXIT_OK


MASKS = {
    "weight": lambda N, n: hamming_weight_tt(N),
    "hamming_mask": lambda N, n: hamming_mask_tt(N, n),
    "hamming_state": lambda N, n: hamming_state_tt(N),
    "length_mask": lambda N, n: length_mask_tt(N, n),
    "length_state": lambda N, n: length_state_tt(N),
    "reciprocal_weight": lambda N, n: reciprocal_weight_tt(N).tensor,
}


def cmd_mask(args) -> int:
    N = args.N
    if not 1 <= N <= MASK_DUMP_MAX_N:
        raise ConfigError(f"mask dump supports 1 <= N <= {MASK_DUMP_MAX_N}")
    if args.kind in ("hamming_mask", "length_mask") and args.n is None:
        raise ConfigError(f"{args.kind} needs --n")
    t = MASKS[args.kind](N, args.n)
    dense = ttm.full(t).reshape(2**N, -1)
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        cols = [f"a{k + 1}" for k in range(N)]
        w.writerow(cols + ([f"ch{k}" for k in range(dense.shape[1])] if t.trailing_rank_open else ["value"]))
        for flat in range(2**N):
            bits = [(flat >> (N - 1 - k)) & 1 for k in range(N)]
            vals = [f"{v:.12g}" for v in dense[flat]]
            w.writerow(bits + vals)
    finally:
        if args.output:
            fh.close()
    print(f"# ranks {list(t.ranks)}", file=sys.stderr)
    return EXIT_OK


def cmd_info(args) -> int:
    try:
        t = ttm.load(args.file)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.file}: {exc}") from exc
    info = {
        "ndim": t.ndim,
        "mode_sizes": list(t.mode_sizes),
        "ranks": list(t.ranks),
        "trailing_rank_open": t.trailing_rank_open,
        "parameters": t.size,
    }
    side = _sidecar(args.file)
    if side.exists():
        meta = json.loads(side.read_text())
        info["sidecar"] = {k: meta[k] for k in ("kind", "config_hash", "tool_version", "mean", "variance")
                           if k in meta}
    print(json.dumps(info, indent=2))
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def _common(p, config_required=False):
    p.add_argument("--config", required=config_required, help="TOML run configuration")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="parallel evaluator processes (subprocess models)")
    p.add_argument("--epsilon", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttsense", description="Tensor-train global sensitivity analysis")
    parser.add_argument("--version", action="version", version=f"ttsense {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="cross-approximate a model into a TT surrogate")
    _common(p)
    p.add_argument("--output", "-o", help="surrogate path (overrides output.surrogate)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("analyze", help="Sobol TT and sensitivity report of a surrogate")
    p.add_argument("surrogate")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--report", help="report JSON path")
    p.add_argument("--csv-prefix", help="write <prefix>_dims.csv and <prefix>_indices.csv")
    p.add_argument("--dimdist", help="two-column (order, mass) CSV path")
    p.add_argument("--index", help='1-based variables, e.g. "1,3,7"; prints S, S^C and S^T')
    p.add_argument("--sobol-out", help="also save the Sobol TT")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("baseline", help="reference estimators without tensor trains")
    _common(p)
    p.add_argument("--method", choices=["brute_force", "saltelli", "shapley_mc"], required=True)
    p.add_argument("--budget", type=int, help="base samples (saltelli) or permutations (shapley_mc)")
    p.add_argument("--inner", type=int, default=3, help="inner samples per cost (shapley_mc)")
    p.add_argument("--report", help="report JSON path")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("mask", help="dump an automaton tensor as a dense CSV table")
    p.add_argument("kind", choices=sorted(MASKS))
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("info", help="describe a TT file")
    p.add_argument("file")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateModelError as exc:
        print(f"degenerate model: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (TransportError, DataError) as exc:
        print(f"evaluator error: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    except (TTSenseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
