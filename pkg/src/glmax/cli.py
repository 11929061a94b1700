"""Command-line orchestration: validated flat JSON configs in, RunRecord
JSON + CSV artifacts out.

Commands:

    glmax run CONFIG.json [key=value ...]   run one experiment
    glmax list-experiments [--json]         the experiment catalog
    glmax suite CONFIG.json [...]           run several configs, summary table

Exit codes: 0 all checks passed, 1 at least one assertion-class check
failed, 2 invalid configuration, 3 I/O failure.  Seeds are mandatory in
every config; outputs are bit-reproducible for a given config.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments as ex
from .greens import GreensError
from .lattice import LatticeError
from .potential import PotentialError
from .records import RunRecord
from .sampler import SamplerError

__all__ = ["main", "run_config", "catalog", "ConfigError", "EXPERIMENTS"]


class ConfigError(ValueError):
    """Invalid configuration file or overrides."""


def _spec(key, typ, required=False, default=None, help=""):
    return dict(key=key, type=typ, required=required, default=default, help=help)


_COMMON = [
    _spec("experiment", str, required=True, help="experiment id from the catalog"),
    _spec("seed", int, required=True, help="root RNG seed (mandatory, no clock default)"),
    _spec("out_dir", str, default="runs", help="output directory for record + CSV files"),
    _spec("workers", int, default=1, help="process-pool size for replica batches"),
]

_POTENTIAL = [
    _spec("p_name", str, required=True, help="potential name: quadratic|quad_logcosh|quad_sqrt"),
    _spec("a", float, help="perturbation strength for quad_logcosh / quad_sqrt"),
]

_CHAIN = [
    _spec("method", str, default="auto", help="sampler: auto|exact|mcmc"),
    _spec("burn_in", int, help="burn-in sweeps (default: 20*(2N)^2 site-update heuristic)"),
]


def _entry(fn, kind, claim, params):
    return dict(fn=fn, kind=kind, claim=claim, params=params)


EXPERIMENTS: dict[str, dict] = {
    "bl_variance": _entry(
        ex.bl_variance_check, "mc",
        "variance of linear functionals is dominated by the Gaussian variance scaled by 1/c_minus",
        _POTENTIAL + [
            _spec("n", int, required=True),
            _spec("functionals", list, default=list(ex.FUNCTIONAL_NAMES)),
            _spec("replicas", int, default=2000),
        ] + _CHAIN,
    ),
    "bl_exponential": _entry(
        ex.bl_exponential_check, "mc",
        "centered exponential moments are dominated by the scaled Gaussian envelope",
        _POTENTIAL + [
            _spec("n", int, required=True),
            _spec("functional", str, default="delta_center"),
            _spec("t_grid", list, default=[0.5, 1.0]),
            _spec("replicas", int, default=2000),
        ] + _CHAIN,
    ),
    "max_statistics": _entry(
        ex.max_statistics, "mc",
        "distribution of the field maximum over a region (moments, quantiles, argmax heatmap)",
        _POTENTIAL + [
            _spec("n", int, required=True),
            _spec("region_kind", str, default="full"),
            _spec("eps", float, default=0.25),
            _spec("delta", float, default=0.5),
            _spec("replicas", int, default=2000),
        ] + _CHAIN,
    ),
    "lln_scan": _entry(
        ex.lln_scan, "mc",
        "the expected maximum grows linearly in log N; the slope estimates the growth constant",
        _POTENTIAL + [
            _spec("n_list", list, required=True),
            _spec("eps", float, default=0.25),
            _spec("delta", float, default=0.5),
            _spec("replicas", int, help="per-size override (default: desk-scale policy)"),
        ] + _CHAIN,
    ),
    "tail_probe": _entry(
        ex.tail_probe, "mc",
        "pointwise upper tails obey a Gaussian envelope with variance g_hat * log dist(v, boundary)",
        _POTENTIAL + [
            _spec("n", int, required=True),
            _spec("v", list, default=[0, 0]),
            _spec("u_grid", list, default=[0.0, 0.5, 1.0, 1.5, 2.0]),
            _spec("g_hat", float, required=True),
            _spec("replicas", int, default=2000),
            _spec("slack_rate", float, default=0.1),
        ] + _CHAIN,
    ),
    "thin_layer": _entry(
        ex.thin_layer_check, "mc",
        "the global maximum avoids a thin boundary layer with high probability",
        _POTENTIAL + [
            _spec("n", int, required=True),
            _spec("delta", float, default=0.5),
            _spec("g_hat", float, required=True),
            _spec("delta_prime", float),
            _spec("replicas", int, default=2000),
        ] + _CHAIN,
    ),
    "dh_recursion": _entry(
        ex.dh_recursion, "mc",
        "two-scale expected-maximum comparison: a bounded gap forces tight centered maxima",
        _POTENTIAL + [
            _spec("n_powers", list, required=True),
            _spec("eps", float, default=0.25),
            _spec("delta", float, default=0.5),
            _spec("replicas_by_power", dict),
        ] + _CHAIN,
    ),
    "harmonic_decoupling": _entry(
        ex.harmonic_decoupling, "mc",
        "conditional fields decompose into an independent zero-boundary field plus a harmonic extension",
        _POTENTIAL + [
            _spec("n", int, required=True),
            _spec("eps", float, default=0.25),
            _spec("delta", float, default=0.75),
            _spec("gamma", float, default=0.5),
            _spec("replicas", int, default=500),
        ] + _CHAIN,
    ),
    "green_table": _entry(
        ex.green_table_dump, "exact",
        "field covariance = inverse Dirichlet Laplacian; walk convention is 4x the covariance",
        [_spec("n", int, required=True), _spec("convention", str, default="covariance")],
    ),
    "potential_kernel": _entry(
        ex.potential_kernel_dump, "exact",
        "exact plane potential kernel with (2/pi) log|x| + D0 asymptotics",
        [_spec("radius", int, required=True)],
    ),
    "harmonic_split_scan": _entry(
        ex.harmonic_split_scan, "exact",
        "harmonic component variances: bounded on the side piece, power-law decay on the top lip",
        [
            _spec("n_list", list, required=True),
            _spec("eps", float, default=0.25),
            _spec("delta", float, default=0.5),
            _spec("gamma", float, default=0.25),
            _spec("spread_tol", float, default=0.30),
            _spec("slope_tol", float, default=0.15),
        ],
    ),
    "pair_increment_scan": _entry(
        ex.pair_increment_record, "exact",
        "increment variances of the outer harmonic component scale like separation / (eps N)",
        [
            _spec("n_list", list, required=True),
            _spec("eps", float, default=0.25),
            _spec("delta", float, default=0.5),
            _spec("gamma", float, default=0.25),
            _spec("stability_tol", float, default=0.25),
        ],
    ),
    "harnack_check": _entry(
        ex.harnack_check, "exact",
        "harmonic measure is Lipschitz in the source vertex with constant 1/(4N) on bulk pairs",
        [_spec("n", int, required=True), _spec("n_pairs", int, default=20), _spec("max_sep", int, default=4)],
    ),
}


def _coerce(value, typ, key: str):
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ in (int, float) and isinstance(value, bool):
        raise ConfigError(f"key {key!r}: expected {typ.__name__}, got bool")
    if not isinstance(value, typ):
        raise ConfigError(f"key {key!r}: expected {typ.__name__}, got {type(value).__name__}")
    return value


def validate_config(raw: dict) -> dict:
    """Validate and normalize a flat config dict against the catalog schema.

    Unknown keys are rejected; required keys must be present; values are
    type-checked.  Returns the fully-populated config (defaults applied).
    """
    if "experiment" not in raw:
        raise ConfigError("missing required key 'experiment'")
    exp_id = raw["experiment"]
    if exp_id not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp_id!r}; see list-experiments")
    schema = {s["key"]: s for s in _COMMON + EXPERIMENTS[exp_id]["params"]}
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"unknown config keys for {exp_id!r}: {sorted(unknown)}")
    cfg = {}
    for key, s in schema.items():
        if key in raw and raw[key] is not None:
            cfg[key] = _coerce(raw[key], s["type"], key)
        elif s["required"]:
            raise ConfigError(f"missing required key {key!r} for experiment {exp_id!r}")
        else:
            cfg[key] = s["default"]
    return cfg


def parse_overrides(pairs: list[str], exp_id: str | None = None) -> dict:
    """Parse key=value override strings; values are JSON (bare words = str)."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, _, val = pair.partition("=")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def _call_experiment(cfg: dict) -> RunRecord:
    exp_id = cfg["experiment"]
    entry = EXPERIMENTS[exp_id]
    kwargs = {k: v for k, v in cfg.items() if k not in ("experiment", "out_dir")}
    kwargs.pop("workers", None)
    if entry["kind"] == "mc":
        kwargs["workers"] = cfg["workers"]
    # tuple-ify list-valued geometry arguments; keep JSON types in the record
    for key in ("n_list", "n_powers", "t_grid", "u_grid", "functionals"):
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    if "v" in kwargs:
        kwargs["v"] = tuple(kwargs["v"])
    if "replicas_by_power" in kwargs and kwargs["replicas_by_power"] is not None:
        kwargs["replicas_by_power"] = {int(k): int(v) for k, v in kwargs["replicas_by_power"].items()}
    positional_keys = [s["key"] for s in entry["params"] if s["required"] and s["key"] in ("p_name", "n", "n_list", "n_powers", "radius")]
    args = [kwargs.pop(k) for k in positional_keys]
    return entry["fn"](*args, **kwargs)


def run_config(path: str | Path, overrides: list[str] | None = None) -> tuple[RunRecord, list[Path]]:
    """Load, validate, execute, and persist one experiment config."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object of key: value pairs")
    raw = dict(raw)
    raw.update(parse_overrides(overrides or []))
    cfg = validate_config(raw)
    try:
        record = _call_experiment(cfg)
    except (ex.ExperimentError, LatticeError, PotentialError, GreensError, SamplerError) as e:
        raise ConfigError(str(e)) from e
    paths = record.write(cfg["out_dir"])
    return record, paths


def catalog() -> list[dict]:
    """Machine-readable experiment catalog (single source for both forms)."""
    out = []
    for exp_id, entry in sorted(EXPERIMENTS.items()):
        out.append(
            dict(
                id=exp_id,
                kind=entry["kind"],
                claim=entry["claim"],
                params=[
                    dict(key=s["key"], type=s["type"].__name__, required=s["required"],
                         default=s["default"], help=s["help"])
                    for s in _COMMON + entry["params"]
                ],
            )
        )
    return out


def _cmd_run(args) -> int:
    try:
        record, paths = run_config(args.config, args.overrides)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3
    for c in record.checks:
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {record.experiment}: {c['name']}  {c['detail']}")
    print(f"wrote {len(paths)} files to {paths[0].parent}")
    return 0 if record.all_checks_passed else 1


def _cmd_list(args) -> int:
    cat = catalog()
    if args.json:
        print(json.dumps(cat, indent=2, sort_keys=True))
        return 0
    for entry in cat:
        print(f"{entry['id']:22s} [{entry['kind']:5s}] {entry['claim']}")
        for p in entry["params"]:
            req = "required" if p["required"] else f"default={p['default']!r}"
            print(f"    {p['key']:18s} {p['type']:6s} {req}")
    return 0


def _cmd_suite(args) -> int:
    rows = []
    worst = 0
    for cfg_path in args.configs:
        try:
            record, _ = run_config(cfg_path, [])
            ok = record.all_checks_passed
            n_fail = sum(1 for c in record.checks if not c["passed"])
            rows.append((cfg_path, record.experiment, ok, f"{len(record.checks) - n_fail}/{len(record.checks)} checks"))
            worst = max(worst, 0 if ok else 1)
        except ConfigError as e:
            rows.append((cfg_path, "-", False, f"config error: {e}"))
            worst = max(worst, 2)
        except OSError as e:
            rows.append((cfg_path, "-", False, f"i/o error: {e}"))
            worst = max(worst, 3)
    width = max(len(str(r[0])) for r in rows)
    for path, exp_id, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {str(path):{width}s}  {exp_id:20s}  {detail}")
    return worst


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="glmax", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config", help="path to a flat JSON config")
    p_run.add_argument("overrides", nargs="*", help="key=value overrides (values parsed as JSON)")
    p_run.set_defaults(fn=_cmd_run)

    p_list = sub.add_parser("list-experiments", help="show the experiment catalog")
    p_list.add_argument("--json", action="store_true", help="machine-readable form")
    p_list.set_defaults(fn=_cmd_list)

    p_suite = sub.add_parser("suite", help="run several configs and summarize pass/fail")
    p_suite.add_argument("configs", nargs="+", help="config paths")
    p_suite.set_defaults(fn=_cmd_suite)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
