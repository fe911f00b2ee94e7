"""Command-line entry point: ``lsicert <command> [options]``.

Exit status: 0 success (certified / all checks passed), 2 when a certificate
fails the spectral condition or a check fails, 1 on usage, I/O or parse errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .coupling import CouplingError, build_coupling, certify_lsi, certify_spectral_gap, load_coupling, mean_field_bound_check, spectrum
from .dynamics import loglog_slope, relaxation_study
from .goe import sk_certification_sweep
from .oracle import duplication_inequality_check, mixture_identity_check, ordering_chain
from .renorm import (
    PotentialTable,
    gaussian_identity_check,
    hessian_lower_bound_check,
    regularize,
    split_covariance,
    standard_psi_grid,
)
from .rng import derived_seed, substream
from .singlespin import (
    SingleSpinModel,
    single_spin_lsi_default,
    standard_field_grid,
    tilted_moments,
    variance_bound_check,
)

log = logging.getLogger("lsicert")

OUT_DIR_ENV = "LSICERT_OUT_DIR"
COMMANDS = ("certify", "renormalize", "spin-study", "simulate", "oracle", "goe-sweep")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "format": "json",
    "spin_dim": 1,
    "gamma": None,
    "c": None,
    "matrix": None,
    "model": None,
    "workers": None,
    "out": None,
}

COMMAND_DEFAULTS: dict[str, dict[str, Any]] = {
    "spin-study": {"field_norms": [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0], "directions": 3},
    "renormalize": {"table_rows": 201, "sigma_samples": 20},
    "simulate": {"family": "sk", "sizes": [32, 64, 128], "betas": [0.2], "seeds": 4, "sweeps": 20000},
    "oracle": {"restarts": 50, "functions": 1000, "fields": 20, "mixture_count": 100000},
    "goe-sweep": {"betas": [0.1, 0.2, 0.25, 0.3], "sizes": [100, 200, 400], "samples": 100},
}


class ConfigError(ValueError):
    pass


def _parse_param(text: str) -> tuple[str, Any]:
    key, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"--param expects key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _list(text: str) -> list:
    try:
        v = json.loads(text)
    except json.JSONDecodeError:
        v = [json.loads(x) for x in text.split(",") if x]
    return v if isinstance(v, list) else [v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsicert", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config document; flags override its keys")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help=f"output path (default: ${OUT_DIR_ENV}/<command>.<format> or stdout)")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--workers", type=int, help="parallel workers (default: available CPUs)")
    common.add_argument("--gamma", type=float, help="single-spin LSI (or gap) constant")
    common.add_argument("--spin-dim", dest="spin_dim", type=int, choices=(1, 2, 3))
    common.add_argument("--c", type=float, help="smoothing scale override")
    common.add_argument("--matrix", help="coupling matrix JSON file")
    common.add_argument("--model", help="coupling kind: ferromagnet-lattice, mean-field, sk-goe")
    common.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="model parameter")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("certify", parents=[common], help="LSI certificate for a coupling matrix").add_argument(
        "--spectral-gap", action="store_true", help="treat --gamma as a single-spin spectral gap"
    )
    p = sub.add_parser("renormalize", parents=[common], help="covariance split, potential and convexity checks")
    p.add_argument("--table-rows", dest="table_rows", type=int)
    p = sub.add_parser("spin-study", parents=[common], help="tilted single-spin moments and variance bound")
    p.add_argument("--field-norms", dest="field_norms", type=_list)
    p = sub.add_parser("simulate", parents=[common], help="Glauber relaxation-time study")
    p.add_argument("--family", choices=("sk", "lattice-1d", "mean-field"))
    p.add_argument("--sizes", type=_list)
    p.add_argument("--betas", type=_list)
    p.add_argument("--seeds", type=int, help="number of seeds per cell")
    p.add_argument("--sweeps", type=int)
    p = sub.add_parser("oracle", parents=[common], help="exact small-system checks")
    p.add_argument("--restarts", type=int)
    p = sub.add_parser("goe-sweep", parents=[common], help="SK certification sweep")
    p.add_argument("--betas", type=_list)
    p.add_argument("--sizes", type=_list)
    p.add_argument("--samples", type=int)
    return parser


def effective_config(args: argparse.Namespace) -> dict[str, Any]:
    cfg: dict[str, Any] = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        path = Path(args.config)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in doc.items()})
    for key, value in vars(args).items():
        if key in ("config", "command", "param", "verbose") or value is None or value is False:
            continue
        cfg[key] = value
    params = dict(cfg.get("params") or {})
    params.update(dict(_parse_param(p) for p in args.param))
    if params:
        cfg["params"] = params
    cfg["command"] = args.command
    if cfg["workers"] is None:
        cfg["workers"] = os.cpu_count() or 1
    if cfg.get("spin_dim", 1) >= 2 and cfg.get("gamma") is None and args.command in ("certify", "renormalize"):
        raise ConfigError("spin dimension >= 2 requires an explicit --gamma")
    for key in ("sizes", "betas", "field_norms"):
        if key in cfg and not cfg[key]:
            raise ConfigError(f"grid {key!r} must be nonempty")
    return cfg


def _coupling(cfg: dict):
    if cfg.get("matrix"):
        return load_coupling(cfg["matrix"])
    if cfg.get("model"):
        params = dict(cfg.get("params") or {})
        if cfg["model"] == "sk-goe" and "seed" not in params:
            params["seed"] = derived_seed(cfg["seed"], "model")
        return build_coupling(cfg["model"], **params)
    raise ConfigError("a coupling is required: --matrix FILE or --model KIND --param ...")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(_jsonable(rows))
    return buf.getvalue()


def cmd_certify(cfg: dict) -> tuple[dict, list[dict], int]:
    m = _coupling(cfg)
    n = int(cfg["spin_dim"])
    gamma = single_spin_lsi_default(n, cfg.get("gamma"))
    spec = spectrum(m)
    certify = certify_spectral_gap if cfg.get("spectral_gap") else certify_lsi
    cert = certify(m, n, gamma, spec=spec)
    mf = mean_field_bound_check(m, n)
    result = {
        "certificate": cert.to_dict(),
        "meanField": mf.to_dict(),
        "spectrum": {"lambdaMin": spec.lambda_min, "lambdaMax": spec.lambda_max, "residual": spec.residual},
        "size": m.size,
    }
    row = dict(cert.to_dict(), rowSupNorm=mf.row_sup_norm, impliesCondition=mf.implies_condition)
    return result, [row], 0 if cert.certified else 2


def cmd_renormalize(cfg: dict) -> tuple[dict, list[dict], int]:
    m = _coupling(cfg)
    n = int(cfg["spin_dim"])
    gamma = single_spin_lsi_default(n, cfg.get("gamma"))
    spin = SingleSpinModel.sphere(n, gamma)
    shifted, c, delta = regularize(m, n, cfg.get("c"))
    model = split_covariance(shifted, c, spin)
    hess = hessian_lower_bound_check(spin, c, standard_psi_grid(n))
    result: dict[str, Any] = {
        "shift": float(m.entries[0, 0] - shifted[0, 0]),
        "delta": delta,
        "model": model.to_dict(),
        "hessianCheck": hess.to_dict(),
    }
    ok = hess.pass_ and model.lambda_be > 0
    if m.size * n <= 64:
        rng = substream(cfg["seed"], "sigma")
        k = int(cfg["sigma_samples"])
        sig = rng.normal(size=(k, m.size, n))
        sig /= np.linalg.norm(sig, axis=2, keepdims=True)
        gid = gaussian_identity_check(shifted, c, list(sig))
        result["gaussianIdentityCheck"] = gid.to_dict()
        ok = ok and gid.pass_
    table = PotentialTable(spin, c, nodes=int(cfg["table_rows"]), psi_max=5.0)
    rows = [
        {"abs_psi": r, "V": v, "V2_analytic": a, "V2_finite_difference": f} for r, v, a, f in table.rows()
    ]
    result["potentialTable"] = rows
    return result, rows, 0 if ok else 2


def cmd_spin_study(cfg: dict) -> tuple[dict, list[dict], int]:
    n = int(cfg["spin_dim"])
    spin = SingleSpinModel.sphere(n, cfg.get("gamma"))
    grid = standard_field_grid(n, cfg["field_norms"], int(cfg["directions"]), seed=derived_seed(cfg["seed"], "grid") % 2**32)
    rows = []
    for h in grid:
        tm = tilted_moments(spin, h)
        rows.append(
            {
                "field_norm": float(np.linalg.norm(h)),
                "field": json.dumps(_jsonable(h)),
                "longitudinal_mean": tm.longitudinal_mean,
                "longitudinal_variance": tm.longitudinal_variance,
                "transverse_variance": tm.transverse_variance,
                "log_partition": tm.log_partition,
            }
        )
    rep = variance_bound_check(spin, grid)
    return {"moments": rows, "varianceCheck": rep.to_dict()}, rows, 0 if rep.pass_ else 2


def cmd_simulate(cfg: dict) -> tuple[dict, list[dict], int]:
    seeds = [derived_seed(cfg["seed"], "chain", i) for i in range(int(cfg["seeds"]))]
    table = relaxation_study(
        cfg["family"],
        cfg["sizes"],
        cfg["betas"],
        seeds,
        n=int(cfg["spin_dim"]),
        sweeps=int(cfg["sweeps"]),
        workers=int(cfg["workers"]),
        params=cfg.get("params"),
    )
    result: dict[str, Any] = {"table": table}
    if len(cfg["sizes"]) >= 2 and len(cfg["betas"]) == 1:
        slopes = {}
        for obs in ("magnetization", "energy"):
            try:
                s, se = loglog_slope(table, obs, seed=derived_seed(cfg["seed"], "bootstrap") % 2**32)
                slopes[obs] = {"slope": s, "bootstrapError": se}
            except ValueError as exc:
                slopes[obs] = {"error": str(exc)}
        result["logLogSlope"] = slopes
    rows = []
    for r in table:
        row = {k: r[k] for k in ("family", "N", "beta", "seed")}
        for obs in ("magnetization", "energy"):
            est = r[obs]
            row[f"tau_{obs}"] = est.get("integratedAutocorrTime")
            row[f"tau_error_{obs}"] = est.get("tauError")
            row[f"error_{obs}"] = est.get("error", "")
        rows.append(row)
    return result, rows, 0


def cmd_oracle(cfg: dict) -> tuple[dict, list[dict], int]:
    m = _coupling(cfg)
    gamma = single_spin_lsi_default(1, cfg.get("gamma"))
    order = ordering_chain(m, gamma, int(cfg["restarts"]), derived_seed(cfg["seed"], "restart") % 2**32)
    rng = substream(cfg["seed"], "duplication")
    dup = duplication_inequality_check(
        rng.normal(scale=2.0, size=int(cfg["fields"])), rng.normal(size=(int(cfg["functions"]), 2))
    )
    result: dict[str, Any] = {"orderingChain": order.to_dict(), "duplication": dup.to_dict()}
    ok = order.holds and dup.pass_
    if m.size <= 6:
        mix = mixture_identity_check(m, cfg.get("c"), int(cfg["mixture_count"]), derived_seed(cfg["seed"], "chain") % 2**32)
        result["mixture"] = mix.to_dict()
        ok = ok and mix.pass_
    row = dict(order.to_dict(), duplicationViolations=dup.violations, mixturePass=result.get("mixture", {}).get("pass"))
    return result, [row], 0 if ok else 2


def cmd_goe_sweep(cfg: dict) -> tuple[dict, list[dict], int]:
    res = sk_certification_sweep(
        cfg["betas"],
        cfg["sizes"],
        int(cfg["samples"]),
        seed=int(cfg["seed"]),
        gamma=single_spin_lsi_default(1, cfg.get("gamma")),
        workers=int(cfg["workers"]),
    )
    rows = [c.to_dict() for c in res.cells]
    return res.to_dict(), rows, 0


HANDLERS = {
    "certify": cmd_certify,
    "renormalize": cmd_renormalize,
    "spin-study": cmd_spin_study,
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "goe-sweep": cmd_goe_sweep,
}


def render(cfg: dict, result: dict, rows: list[dict]) -> str:
    if cfg["format"] == "csv":
        return _csv(rows)
    provenance = {k: v for k, v in cfg.items() if k not in ("workers", "out")}
    doc = {"command": cfg["command"], "version": __version__, "config": provenance, "result": result}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = effective_config(args)
        result, rows, status = HANDLERS[args.command](cfg)
        text = render(cfg, result, rows)
        out = cfg.get("out")
        if out is None and os.environ.get(OUT_DIR_ENV):
            out = str(Path(os.environ[OUT_DIR_ENV]) / f"{args.command}.{cfg['format']}")
        if out:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            Path(out).write_text(text)
        else:
            sys.stdout.write(text)
        return status
    except (ConfigError, CouplingError, OSError, ValueError, KeyError) as exc:
        print(f"lsicert: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
