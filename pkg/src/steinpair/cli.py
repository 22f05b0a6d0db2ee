"""Experiment runner: ``normal``, ``poisson`` and ``verify`` subcommands.

Exit codes: 0 when every theorem assertion / check holds, 1 when one fails
(an implementation bug, since the theorems are proved), 2 for bad parameters.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import bounds as B
from . import couplings as C
from . import models as M
from . import stein_normal as SN
from . import stein_poisson as SP
from .numerics import ParameterError

EXIT_OK, EXIT_VIOLATION, EXIT_PARAM = 0, 1, 2

CSV_COLUMNS = [
    "model", "n_or_N", "lambda", "c", "kappa_exact", "kappa_simple",
    "rho_exact", "rho_b1", "rho_b2", "bound", "actual", "ratio",
]

IDENTITY_TOL = 1e-6
SPLIT_TOL = 1e-8
EF_INTEGRAL_TOL = 1e-8
EF_EXCHANGEABLE_TOL = 1e-10
POISSON_RESIDUAL_TOL = 1e-12
TELESCOPE_TOL = 1e-10


@dataclass
class ExperimentConfig:
    mode: str = "verify"
    model: Optional[str] = None
    params: dict = field(default_factory=dict)
    z_list: list = field(default_factory=lambda: [-1.0, 0.0, 1.0])
    t_list: list = field(default_factory=lambda: [0.25, 0.5, 1.0])
    c: Optional[float] = None
    c_grid: Optional[list] = None
    tail_tol: float = 1e-14
    seed: int = 0
    out: Optional[str] = None
    format: str = "both"
    models: list = field(default_factory=list)  # verify: restrict to these model names
    jobs: int = 1

    def validate(self):
        if self.mode not in ("normal", "poisson", "verify"):
            raise ParameterError(f"mode must be normal, poisson or verify, got {self.mode!r}")
        if self.mode != "verify" and not self.model:
            raise ParameterError(f"mode {self.mode!r} needs a model")
        if self.model and self.model not in M.MODELS:
            raise ParameterError(f"unknown model {self.model!r}; choose from {sorted(M.MODELS)}")
        for name in self.models:
            if name not in M.MODELS:
                raise ParameterError(f"unknown model {name!r}; choose from {sorted(M.MODELS)}")
        if any(not t > 0 for t in self.t_list):
            raise ParameterError("every smoothing radius t must be positive")
        if self.c is not None and not self.c > 0:
            raise ParameterError(f"c must be positive, got {self.c!r}")
        if self.c_grid is not None and (not self.c_grid or min(self.c_grid) <= 0):
            raise ParameterError("c grid must be non-empty and positive")
        if not self.tail_tol > 0:
            raise ParameterError("tail_tol must be positive")
        if self.format not in ("json", "csv", "both"):
            raise ParameterError(f"format must be json, csv or both, got {self.format!r}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        if self.jobs < 1:
            raise ParameterError("jobs must be at least 1")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ParameterError(f"unknown config keys {sorted(unknown)}")
        return cls(**obj)


def _clean(obj):
    """Plain JSON-safe data: numpy scalars unwrapped, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(report: dict) -> str:
    # repr-based float output is shortest round-trip, i.e. lossless
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def _size_param(params: dict):
    for key in ("n", "N", "m"):
        if key in params:
            return params[key]
    return ""


def _row(**cells) -> dict:
    row = {k: "" for k in CSV_COLUMNS}
    for k, v in cells.items():
        if v is None or (isinstance(v, float) and not math.isfinite(v)):
            continue
        row[k] = v if isinstance(v, str) else repr(float(v)) if isinstance(v, float) else v
    return row


def rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


# ------------------------------------------------------------------ normal


def run_normal(config: ExperimentConfig) -> tuple:
    """Kolmogorov bound pipeline for one model. Returns (report, csv rows, exit code)."""
    coupling, meta = M.build_model(config.model, config.params)
    cs = C.standardize(coupling)
    lam = meta.structural_lambda
    d = C.regression_decompose(cs, lam)
    mom = C.conditional_V2(cs, d)
    A = meta.A_bound if meta.A_bound is not None else mom.A
    rep = B.normal_report(cs, d, mom, A=A)

    identities = []
    for z in config.z_list:
        for t in config.t_list:
            test = SN.SmoothedHalfLineTest(float(z), float(t))
            ident = SN.identity_2_11_check(cs, d, test)
            entry = asdict(ident)
            entry["J_bounds_hold"] = ident.J_bounds_hold
            entry["remainder_split"] = SN.remainder_split_term(cs, test)
            entry["ef_integral_form"] = SN.ef_zero_check(cs, test, "integral_form")
            entry["ef_product_form"] = SN.ef_zero_check(cs, test, "product_form")
            identities.append(entry)

    ok = (
        rep.holds
        and all(abs(e["residual"]) < IDENTITY_TOL for e in identities)
        and all(e["J_bounds_hold"] for e in identities)
        and all(abs(e["ef_integral_form"]) < EF_INTEGRAL_TOL for e in identities)
    )
    report = {
        "mode": "normal",
        "model": meta.name,
        "params": meta.params,
        "seed": config.seed,
        "exchangeable": C.is_exchangeable(cs),
        "marginal_discrepancy": cs.marginal_discrepancy,
        "alpha": d.alpha,
        "bounds": rep.to_dict(),
        "identities": identities,
        "passed": ok,
    }
    row = _row(
        model=meta.name, n_or_N=_size_param(meta.params), **{"lambda": d.lam},
        bound=rep.bound, actual=rep.delta_actual,
        ratio=rep.bound / rep.delta_actual if rep.delta_actual > 0 else None,
    )
    return report, [row], EXIT_OK if ok else EXIT_VIOLATION


# ----------------------------------------------------------------- poisson


def _poisson_mean(config: ExperimentConfig, meta: M.ModelMetadata) -> float:
    if "lambda" in config.params:
        return float(config.params["lambda"])
    if meta.poisson_mean is None:
        raise ParameterError(f"model {meta.name!r} has no Poisson mean; pass --param lambda=...")
    return meta.poisson_mean


def run_poisson(config: ExperimentConfig) -> tuple:
    """Total-variation bound pipeline for one integer-valued model."""
    coupling, meta = M.build_model(config.model, config.params)
    if not coupling.integer_valued or coupling.values.min() < 0:
        raise ParameterError(f"model {meta.name!r} is not supported on the non-negative integers")
    lam = _poisson_mean(config, meta)
    if config.c is not None:
        c_scale, c_source = float(config.c), "config"
    elif config.c_grid is not None:
        c_scale, c_source = B.choose_c(coupling, lam, config.c_grid), "grid"
    elif meta.structural_c is not None:
        c_scale, c_source = meta.structural_c, "model"
    else:
        c_scale, c_source = B.choose_c(coupling, lam, B.default_c_grid()), "grid"

    kernel = C.jump_probabilities(coupling)
    basis = B.PoissonBasis.for_coupling(coupling, lam, kernel)
    exact = B.poisson_total(coupling, lam, c_scale, "exact", config.tail_tol, basis)
    bounded = B.poisson_total(coupling, lam, c_scale, "bounded", config.tail_tol, basis)
    ok = exact.holds and bounded.holds and exact.ordered
    report = {
        "mode": "poisson",
        "model": meta.name,
        "params": meta.params,
        "seed": config.seed,
        "lambda": lam,
        "c": c_scale,
        "c_source": c_source,
        "exchangeable": C.is_exchangeable(coupling),
        "marginal_discrepancy": coupling.marginal_discrepancy,
        "displacements": list(kernel.displacements),
        "exact": exact.to_dict(),
        "bounded": bounded.to_dict(),
        "passed": ok,
    }
    actual = exact.dtv_upper
    row = _row(
        model=meta.name, n_or_N=_size_param(meta.params), **{"lambda": lam}, c=c_scale,
        kappa_exact=exact.kappa_exact, kappa_simple=exact.kappa_simple,
        rho_exact=exact.rho_exact, rho_b1=exact.rho_bound_joint, rho_b2=exact.rho_bound_marginal,
        bound=exact.total_bound, actual=actual,
        ratio=exact.total_bound / actual if actual > 0 else None,
    )
    return report, [row], EXIT_OK if ok else EXIT_VIOLATION


# ------------------------------------------------------------------ verify


def _check(name, subject, value, threshold, passed, kind="max_abs"):
    return {
        "check": name,
        "subject": subject,
        "value": value,
        "threshold": threshold,
        "kind": kind,
        "passed": bool(passed),
    }


def _label(name, params):
    return name + "(" + ",".join(f"{k}={v}" for k, v in sorted(params.items())) + ")"


def _normal_checks(entry, z_list, t_list):
    name, params = entry
    coupling, meta = M.build_model(name, params)
    cs = C.standardize(coupling)
    label = _label(name, params)
    exch = C.is_exchangeable(cs)
    out = [_check("exchangeability_metadata", label, float(exch), None,
                  exch == meta.exchangeable_expected, kind="flag")]
    tests = [SN.SmoothedHalfLineTest(float(z), float(t)) for z in z_list for t in t_list]
    ef_int = max(abs(SN.ef_zero_check(cs, s, "integral_form")) for s in tests)
    ef_prod = max(abs(SN.ef_zero_check(cs, s, "product_form")) for s in tests)
    out.append(_check("ef_integral_form", label, ef_int, EF_INTEGRAL_TOL, ef_int < EF_INTEGRAL_TOL))
    if exch:
        out.append(_check("ef_product_form_exchangeable", label, ef_prod, EF_EXCHANGEABLE_TOL,
                          ef_prod < EF_EXCHANGEABLE_TOL))
    else:
        out.append(_check("ef_product_form_reported", label, ef_prod, None, True, kind="report"))
    try:
        d = C.regression_decompose(cs, meta.structural_lambda)
    except C.CouplingError:
        return out
    idents = [SN.identity_2_11_check(cs, d, s) for s in tests]
    resid = max(abs(r.residual) for r in idents)
    out.append(_check("pair_identity_residual", label, resid, IDENTITY_TOL, resid < IDENTITY_TOL))
    jb = all(r.J_bounds_hold for r in idents)
    out.append(_check("J_bounds", label, float(jb), None, jb, kind="flag"))
    split = max(abs(SN.remainder_split_term(cs, s)) for s in tests)
    if exch:
        out.append(_check("remainder_split_exchangeable", label, split, SPLIT_TOL, split < SPLIT_TOL))
    else:
        out.append(_check("remainder_split_reported", label, split, None, True, kind="report"))
    mom = C.conditional_V2(cs, d)
    A = meta.A_bound if meta.A_bound is not None else mom.A
    rep = B.normal_report(cs, d, mom, A=A)
    out.append(_check("kolmogorov_dominance", label, rep.delta_actual, rep.bound, rep.holds, kind="le"))
    return out


def _certificate_checks(z_list, t_list):
    out = []
    for z in z_list:
        for t in t_list:
            cert = SN.certify_solution(SN.SmoothedHalfLineTest(float(z), float(t)))
            label = f"z={z},t={t}"
            out.append(_check("normal_stein_residual", label, cert.residual, 1e-8, cert.residual <= 1e-8))
            out.append(_check("norm_f", label, cert.f_norm, SN.F_NORM, cert.f_norm <= SN.F_NORM, "le"))
            out.append(_check("norm_fprime", label, cert.fprime_norm, SN.FPRIME_NORM,
                              cert.fprime_norm <= SN.FPRIME_NORM, "le"))
            lim = SN.FSECOND_COEF / t
            out.append(_check("norm_fsecond", label, cert.fsecond_norm, lim, cert.fsecond_norm <= lim, "le"))
    return out


def _poisson_solution_checks(seed, lams=(0.5, 1.0, 2.0), N=40, n_sets=200):
    rng = np.random.default_rng(seed)
    out = []
    for lam in lams:
        F = SP.singleton_matrix(lam, N)
        resid = norm = d1 = add = 0.0
        for _ in range(n_sets):
            A = np.flatnonzero(rng.random(N + 1) < 0.5)
            sol = SP.solve_poisson_stein(lam, A, N)
            resid = max(resid, sol.residual())
            norm = max(norm, sol.norm)
            d1 = max(d1, sol.delta1_norm)
            add = max(add, float(np.max(np.abs(F[A].sum(axis=0) - sol.f))) if len(A) else 0.0)
        label = f"lambda={lam},N={N}"
        out.append(_check("poisson_stein_residual", label, resid, POISSON_RESIDUAL_TOL, resid < POISSON_RESIDUAL_TOL))
        out.append(_check("norm_f_A", label, norm, lam**-0.5, norm <= lam**-0.5 + 1e-12, "le"))
        lim = (1 - math.exp(-lam)) / lam
        out.append(_check("norm_delta1_f_A", label, d1, lim, d1 <= lim + 1e-12, "le"))
        out.append(_check("singleton_additivity", label, add, 1e-12, add < 1e-12))
        G = SP.DiscreteAntiderivative(SP.solve_poisson_stein(lam, A, N).f)
        tel = max(abs(G.G(w) - G.G(w - 1) - G.f(w)) for w in range(0, N + 1))
        out.append(_check("discrete_G_increment", label, tel, 1e-14, tel <= 1e-14))
    return out


def _poisson_checks(entry, tail_tol):
    name, params = entry
    coupling, meta = M.build_model(name, params)
    label = _label(name, params)
    lam = meta.poisson_mean
    exch = C.is_exchangeable(coupling)
    kernel = C.jump_probabilities(coupling)
    basis = B.PoissonBasis.for_coupling(coupling, lam, kernel)
    out = []
    tel = max(abs(SP.telescope_check(coupling, basis.F[j], kernel)) for j in range(basis.F.shape[0]))
    out.append(_check("telescoping_sum", label, tel, TELESCOPE_TOL, tel < TELESCOPE_TOL))
    ef = max(abs(SP.ef_zero_poisson_check(coupling, basis.F[j], kernel)) for j in range(basis.F.shape[0]))
    if exch:
        out.append(_check("poisson_antisymmetric_exchangeable", label, ef, EF_EXCHANGEABLE_TOL, ef < EF_EXCHANGEABLE_TOL))
    else:
        out.append(_check("poisson_antisymmetric_reported", label, ef, None, True, kind="report"))
    gap = 0.0
    for i in range(2, int(coupling.values.max()) + 1):
        for j in range(basis.F.shape[0]):
            lhs = B.rho_jump_expectation(coupling, basis.F[j], i)
            G = np.concatenate([[0.0], np.cumsum(basis.F[j, 1:])])
            d = B.asymmetry(coupling, i)
            k = np.arange(len(d))
            gap = max(gap, abs(lhs - float(d @ (G[k + i] - G[k]))))
    out.append(_check("jump_asymmetry_identity", label, gap, 1e-14, gap <= 1e-14))
    c_scale = meta.structural_c or B.choose_c(coupling, lam, B.default_c_grid())
    for mode in ("exact", "bounded"):
        rep = B.poisson_total(coupling, lam, c_scale, mode, tail_tol, basis)
        out.append(_check(f"tv_dominance_{mode}", label, rep.dtv_upper, rep.total_bound,
                          rep.holds, kind="le"))
    out.append(_check("rho_ordering", label, rep.rho_bound_marginal, None, rep.ordered, kind="flag"))
    return out


def run_verify(config: ExperimentConfig) -> tuple:
    """Run every certification suite over the model and test matrix."""
    keep = set(config.models)
    normal_zoo = [e for e in M.NORMAL_ZOO if not keep or e[0] in keep]
    poisson_zoo = [e for e in M.POISSON_ZOO if not keep or e[0] in keep]
    z_list = [float(z) for z in config.z_list]
    t_list = [float(t) for t in config.t_list]

    tasks = [lambda: _certificate_checks(z_list, sorted(set(t_list) | {0.1})),
             lambda: _poisson_solution_checks(config.seed)]
    tasks += [lambda e=e: _normal_checks(e, z_list, t_list) for e in normal_zoo]
    tasks += [lambda e=e: _poisson_checks(e, config.tail_tol) for e in poisson_zoo]
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            groups = list(pool.map(lambda task: task(), tasks))
    else:
        groups = [task() for task in tasks]
    checks = [c for group in groups for c in group]

    failed = [c for c in checks if not c["passed"]]
    report = {
        "mode": "verify",
        "seed": config.seed,
        "models": sorted(keep),
        "z_list": z_list,
        "t_list": t_list,
        "checks": checks,
        "n_checks": len(checks),
        "n_failed": len(failed),
        "passed": not failed,
    }
    return report, [], EXIT_OK if not failed else EXIT_VIOLATION


RUNNERS = {"normal": run_normal, "poisson": run_poisson, "verify": run_verify}


def summary_table(report: dict) -> str:
    lines = []
    for c in report["checks"]:
        mark = "PASS" if c["passed"] else "FAIL"
        thr = "" if c["threshold"] is None else f" (limit {c['threshold']:.3g})"
        lines.append(f"{mark}  {c['check']:<32} {c['subject']:<48} {c['value']:.3e}{thr}")
    lines.append(f"{report['n_checks'] - report['n_failed']}/{report['n_checks']} checks passed")
    return "\n".join(lines)


def _parse_params(items) -> dict:
    params = {}
    for item in items or []:
        if "=" not in item:
            raise ParameterError(f"--param expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        params[key.strip()] = value.strip()
    return params


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steinpair", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in ("normal", "poisson", "verify"):
        p = sub.add_parser(mode)
        p.add_argument("--model", action="append", default=None,
                       help="model name (verify: may repeat to restrict the matrix)")
        p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--config", type=Path, help="JSON file mirroring ExperimentConfig")
        p.add_argument("--out", type=Path, help="directory for report.json / rows.csv")
        p.add_argument("--format", choices=("json", "csv", "both"), default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--c", type=float, default=None, help="Poisson scale c")
        p.add_argument("--jobs", type=int, default=None)
    return parser


def config_from_args(args) -> ExperimentConfig:
    base = {}
    if args.config is not None:
        try:
            base = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read config {args.config}: {exc}") from None
    base["mode"] = args.mode
    if args.model:
        if args.mode == "verify":
            base["models"] = list(args.model)
        else:
            if len(args.model) > 1:
                raise ParameterError(f"{args.mode} takes a single --model")
            base["model"] = args.model[0]
    if args.param:
        base["params"] = {**base.get("params", {}), **_parse_params(args.param)}
    for key in ("format", "seed", "c", "jobs"):
        if getattr(args, key) is not None:
            base[key] = getattr(args, key)
    if args.out is not None:
        base["out"] = str(args.out)
    config = ExperimentConfig.from_dict(base)
    config.validate()
    return config


def write_outputs(config: ExperimentConfig, report: dict, rows: list):
    if config.out is None:
        return
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    if config.format in ("json", "both"):
        (out / "report.json").write_text(dumps(report))
    if config.format in ("csv", "both"):
        (out / "rows.csv").write_text(rows_to_csv(rows))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        report, rows, code = RUNNERS[config.mode](config)
    except (ParameterError, C.CouplingError, ValueError) as exc:
        err = {"error": {"type": type(exc).__name__, "message": str(exc), "mode": args.mode}}
        sys.stdout.write(dumps(err))
        return EXIT_PARAM
    write_outputs(config, report, rows)
    if config.mode == "verify":
        print(summary_table(report))
    else:
        sys.stdout.write(dumps(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
