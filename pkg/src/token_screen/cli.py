"""Command line interface: ``token-screen <command> [options]``.

Exit codes: 0 success, 1 validation failure, 2 numerical-certificate
failure, 3 configuration or usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import exp1

from ._validation import CertificateError, TokenScreenError
from .baselines import constant_delay_solution, diffusion_solution, minimal_delay, sech
from .config import ConfigError, RunConfig, load_config
from .entropy import make_entropy
from .extensions import ValuationProfile, extended_menu, quality_curve
from .greedy import build_skeleton
from .payoffs import ExpPoly
from .screening import MENU_COLUMNS, TypeModel, build_menu, menu_revenue, virtual_surplus_revenue
from .stopping import capacity_audit, ks_distance, law_from_table, simulate_paths, stopping_law
from .verify import FOC_TOL, foc_check, foc_multiplier, ic_audit, oracle_upper_bound

EXIT_OK, EXIT_VALIDATION, EXIT_CERTIFICATE, EXIT_CONFIG = 0, 1, 2, 3

COLUMNS_HELP = """\
CSV outputs (header row, fixed column order, 17 significant digits):
  skeleton       t, k, mu_1..mu_n, beta_1..beta_n, zeta
  law            t, F_1..F_n, f, slack
  simulate       path, tau, state          (tau=inf, state=-1 if censored)
  menu           r, T, cap_tokens, price, marginal_price, utility, net_utility
  extended-menu  same columns as menu
  quality        t, kappa, upper, lower    (r, t, kappa, upper, lower for several --r)
  reproduce      r, price, closed_form, abs_error
JSON outputs: revenue, baselines, verify and reproduce summaries.
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def write_csv(path: Optional[str], header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    _emit(path, buf.getvalue())


def _emit(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _json(obj) -> str:
    def clean(v):
        if isinstance(v, dict):
            return {k: clean(u) for k, u in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(u) for u in v]
        if isinstance(v, (bool, np.bool_)):
            return bool(v)
        if isinstance(v, (float, np.floating)):
            v = float(v)
            return v if math.isfinite(v) else str(v)
        if isinstance(v, np.integer):
            return int(v)
        return v
    return json.dumps(clean(obj), indent=2) + "\n"


# --------------------------------------------------------------------------
# model assembly


class Context:
    """Objects derived from a config, built lazily."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.prior = np.asarray(cfg.prior, dtype=float)
        self.chi = cfg.chi
        self.entropy = make_entropy(cfg.entropy.kind, cfg.entropy.alpha, self.prior.size)
        self._sk = self._law = self._tm = None

    @property
    def skeleton(self):
        if self._sk is None:
            tol = self.cfg.tolerances
            self._sk = build_skeleton(self.entropy, self.prior, self.chi, step=self.cfg.grids.step,
                                      eps_iso=tol.eps_iso, eps_event=tol.eps_event)
        return self._sk

    @property
    def horizon(self) -> float:
        return self.skeleton.default_horizon(self.cfg.grids.horizon_lifetimes)

    @property
    def law(self):
        if self._law is None:
            self._law = stopping_law(self.skeleton, self.horizon)
        return self._law

    @property
    def types(self) -> TypeModel:
        if self._tm is None:
            spec = self.cfg.types
            if spec.kind == "uniform":
                self._tm = TypeModel.uniform(spec.lower, spec.upper)
            else:
                self._tm = TypeModel.tabulated(spec.r, cdf=spec.cdf, pdf=spec.pdf)
        return self._tm

    def menu(self):
        return build_menu(self.types, self.law, self.chi, self.cfg.grids.n_types)


# --------------------------------------------------------------------------
# commands


def cmd_skeleton(ctx: Context, args) -> int:
    sk = ctx.skeleton
    n = sk.n_states
    rows = []
    for k, ph in enumerate(sk.phases):
        for t in ph.times[:-1]:
            rows.append((t, k))
    tK = sk.t_stationary
    K = len(sk.phases)
    rows += [(t, K) for t in np.linspace(tK, ctx.horizon, 101)]
    out = []
    for t, k in rows:
        out.append([t, k, *sk.belief_at(t), *sk.rates_at(t), sk.zeta_at(t)])
    header = ["t", "k"] + [f"mu_{i + 1}" for i in range(n)] + [f"beta_{i + 1}" for i in range(n)] + ["zeta"]
    write_csv(args.out, header, out)
    return EXIT_OK


def cmd_law(ctx: Context, args) -> int:
    law = ctx.law
    times, F, dens, _ = law.view()
    audit = capacity_audit(law, ctx.entropy, ctx.prior, ctx.chi, times=times)
    n = law.n_states
    header = ["t"] + [f"F_{i + 1}" for i in range(n)] + ["f", "slack"]
    rows = [[t, *F[j], dens[j], audit.slack[j]] for j, t in enumerate(times)]
    write_csv(args.out, header, rows)
    if not audit.feasible(ctx.cfg.tolerances.eps_cap):
        print(f"capacity violated at t={audit.worst_time:.17g} (slack {audit.min_slack:.3g})", file=sys.stderr)
        return EXIT_CERTIFICATE
    return EXIT_OK


def cmd_simulate(ctx: Context, args) -> int:
    sim_cfg = ctx.cfg.simulation
    paths = args.paths if args.paths is not None else sim_cfg.paths
    seed = args.seed if args.seed is not None else ctx.cfg.seed
    workers = args.workers if args.workers is not None else sim_cfg.workers
    sk, law = ctx.skeleton, ctx.law
    res = simulate_paths(sk, paths, seed, horizon=ctx.horizon, checkpoints=sim_cfg.checkpoints, workers=workers)
    write_csv(args.out, ["path", "tau", "state"],
              ([j, t, int(s)] for j, (t, s) in enumerate(zip(res.times, res.states))))
    ks = ks_distance(res.times, law.cdf)
    band = 1.63 / math.sqrt(paths)
    sigma = 0.5 / math.sqrt(paths)
    drift = float(np.abs(res.mean_belief - ctx.prior[None, :]).max())
    report = {"paths": paths, "seed": seed, "ks": ks, "ks_band": band,
              "mean_belief_max_dev": drift, "mean_belief_band": 3 * sigma,
              "state_frequencies": res.state_frequencies().tolist()}
    sys.stderr.write(_json(report))
    return EXIT_OK if ks <= band and drift <= 3 * sigma else EXIT_VALIDATION


def _baselines(ctx: Context) -> dict:
    tm = ctx.types
    cd = constant_delay_solution(tm, ctx.entropy, ctx.prior, ctx.chi, ctx.cfg.grids.n_types)
    chi_qv = ctx.cfg.chi_qv if ctx.cfg.chi_qv is not None else ctx.chi
    dif = diffusion_solution(tm, chi_qv, ctx.cfg.grids.n_types)
    served = ~dif.excluded
    return {
        "constant_delay": {"t_min": cd.t_min, "revenue": cd.revenue,
                           "excluded_above": float(cd.result.types[~cd.result.excluded].max())
                           if (~cd.result.excluded).any() else None},
        "diffusion": {"chi_qv": chi_qv, "revenue": dif.revenue,
                      "sigma_min": float(np.nanmin(dif.allocation)) if served.any() else None,
                      "sigma_max": float(np.nanmax(dif.allocation)) if served.any() else None},
    }


def cmd_baselines(ctx: Context, args) -> int:
    _emit(args.out, _json(_baselines(ctx)))
    return EXIT_OK


def cmd_revenue(ctx: Context, args) -> int:
    menu = ctx.menu()
    rev = menu_revenue(menu)
    check = virtual_surplus_revenue(ctx.types, ctx.law)
    base = _baselines(ctx)
    cd, dif = base["constant_delay"]["revenue"], base["diffusion"]["revenue"]
    report = {"revenue": rev, "revenue_virtual_surplus": check,
              "baseline_constant_delay": cd, "baseline_diffusion": dif,
              "ratios": {"constant_delay": rev / cd if cd > 0 else None,
                         "diffusion": rev / dif if dif > 0 else None}}
    _emit(args.out, _json(report))
    return EXIT_OK


def cmd_menu(ctx: Context, args) -> int:
    menu = ctx.menu()
    write_csv(args.out, MENU_COLUMNS, menu.table())
    return EXIT_OK


def _valuation(ctx: Context, args) -> ValuationProfile:
    text = args.valuation if args.valuation is not None else ctx.cfg.valuation
    if text is None:
        return ValuationProfile.unit()
    return ValuationProfile.from_expression(text)


def cmd_extended_menu(ctx: Context, args) -> int:
    menu = extended_menu(ctx.types, _valuation(ctx, args), ctx.law, ctx.chi, ctx.cfg.grids.n_types)
    write_csv(args.out, MENU_COLUMNS, menu.table())
    return EXIT_OK


def cmd_quality(ctx: Context, args) -> int:
    alpha = args.alpha if args.alpha is not None else ctx.cfg.entropy.alpha
    rs = args.r if args.r else [1.25]
    val = _valuation(ctx, args) if (args.valuation or ctx.cfg.valuation) else None
    kw = {} if val is None else {"valuation": val}
    rows = []
    for r in rs:
        qc = quality_curve(r, ctx.types, alpha, ctx.chi, t_max=args.t_max, **kw)
        for t, k, u, lo in zip(qc.t, qc.kappa, qc.upper, qc.lower):
            rows.append(([r] if len(rs) > 1 else []) + [t, k, u, lo])
    header = (["r"] if len(rs) > 1 else []) + ["t", "kappa", "upper", "lower"]
    write_csv(args.out, header, rows)
    return EXIT_OK


def _read_law_csv(path: str, n: int):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    if not rows:
        raise ConfigError(f"{path}: empty file")
    header = rows[0]
    want = ["t"] + [f"F_{i + 1}" for i in range(n)]
    if header[: n + 1] != want:
        raise ConfigError(f"{path}:1: expected leading columns {want}, got {header[: n + 1]}")
    data = []
    for ln, row in enumerate(rows[1:], start=2):
        try:
            data.append([float(v) for v in row[: n + 1]])
        except ValueError:
            raise ConfigError(f"{path}:{ln}: non-numeric entry") from None
    data = np.array(data)
    # keep the last row of any duplicated time (phase boundaries appear twice)
    keep = np.append(np.diff(data[:, 0]) != 0, True)
    return data[keep, 0], data[keep, 1:]


def cmd_verify(ctx: Context, args) -> int:
    eps_cap = ctx.cfg.tolerances.eps_cap
    if args.law is not None:
        times, F = _read_law_csv(args.law, ctx.prior.size)
        law = law_from_table(ctx.prior, times, F)
        audit = capacity_audit(law, ctx.entropy, ctx.prior, ctx.chi, times=times)
        ok = audit.feasible(eps_cap)
        report = {"capacity": {"feasible": ok, "min_slack": audit.min_slack,
                               "violated_time": None if ok else audit.worst_time}}
        _emit(args.out, _json(report))
        if not ok:
            print(f"capacity violated at t={audit.worst_time:.17g} (slack {audit.min_slack:.3g})", file=sys.stderr)
            return EXIT_CERTIFICATE
        return EXIT_OK
    sk, law = ctx.skeleton, ctx.law
    rho = ExpPoly(args.rate)
    foc = foc_check(sk, law, foc_multiplier(sk, rho), rho)
    greedy = law.integrate(rho)
    oracle = oracle_upper_bound(rho, ctx.entropy, ctx.prior, ctx.chi, warm_law=law, tol=eps_cap)
    gap = oracle.value / greedy - 1.0
    ic = ic_audit(ctx.menu(), workers=ctx.cfg.simulation.workers)
    audit = capacity_audit(law, ctx.entropy, ctx.prior, ctx.chi)
    report = {
        "foc": {"passed": foc.passed, "max_violation": foc.max_violation,
                "max_active_gap": foc.max_active_gap, "min_lambda": foc.min_lambda,
                "ode_residual": foc.ode_residual, "a": foc.a.tolist(), "tol": FOC_TOL},
        "capacity_min_slack": audit.min_slack,
        "greedy_value": greedy, "oracle_value": oracle.value, "oracle_gap": gap,
        "ic_max_gain": ic.max_gain, "ir_min_slack": ic.min_ir_slack, "ir_top": ic.ir_top,
        "min_mixed_difference": ic.min_mixed_difference,
    }
    _emit(args.out, _json(report))
    ok = foc.passed and audit.feasible(eps_cap) and ic.passed() and gap <= 0.02
    return EXIT_OK if ok else EXIT_CERTIFICATE


def _closed_price(r: float) -> float:
    return (3.0 + 2.0 * math.exp(-2.5) - 5.0 * math.exp(-(r + 0.5) / (r - 1.0))) / 15.0


def cmd_reproduce(ctx: Context, args) -> int:
    if args.example != "leading":
        raise ConfigError(f"unknown example {args.example!r}")
    ctx = Context(RunConfig())
    tm, law, sk = ctx.types, ctx.law, ctx.skeleton
    checks = []

    def check(name, value, target, tol):
        err = abs(value - target)
        checks.append({"name": name, "value": value, "target": target, "tol": tol,
                       "error": err, "passed": bool(err <= tol)})

    t0 = time.perf_counter()
    check("t_min", minimal_delay(ctx.entropy, ctx.prior, ctx.chi), 2.0, 1e-12)
    base = _baselines(ctx)
    check("constant_delay_revenue", base["constant_delay"]["revenue"], 0.5 * math.exp(-3.0), 1e-6)
    check("diffusion_sigma", base["diffusion"]["sigma_max"], math.sqrt(ctx.chi), 1e-9)
    check("diffusion_revenue", base["diffusion"]["revenue"], sech(2.0 * math.sqrt(2.0)), 1e-6)
    check("stationary_hazard", sk.hazard, 0.5, 1e-12)
    for r in (1.25, 1.5, 1.75):
        check(f"T({r})", tm.cutoff(r), 1.0 / (r - 1.0), 1e-12)
    menu = ctx.menu()
    table = []
    for r in np.round(np.arange(1.1, 2.0001, 0.1), 10):
        p, c = menu.price_at(r), _closed_price(r)
        table.append([r, p, c, abs(p - c)])
        check(f"P({r:g})", p, c, 1e-6)
    pi_star = 0.2 * (1.0 - math.exp(-2.5)) + 0.5 * math.exp(-1.0) * exp1(1.5)
    check("revenue", menu_revenue(menu), pi_star, 1e-3)
    rho = ExpPoly(1.0)
    foc = foc_check(sk, law, foc_multiplier(sk, rho), rho)
    ic = ic_audit(menu)
    checks.append({"name": "foc_certificate", "passed": bool(foc.passed),
                   "max_violation": foc.max_violation, "min_lambda": foc.min_lambda})
    checks.append({"name": "ic_certificate", "passed": bool(ic.passed(1e-6)),
                   "max_gain": ic.max_gain, "ir_top": ic.ir_top})
    if args.out:
        write_csv(args.out, ["r", "price", "closed_form", "abs_error"], table)
    values_ok = all(c["passed"] for c in checks if "target" in c)
    certs_ok = all(c["passed"] for c in checks if "target" not in c)
    summary = {"example": "leading", "passed": values_ok and certs_ok,
               "seconds": time.perf_counter() - t0, "checks": checks}
    sys.stdout.write(_json(summary))
    if not certs_ok:
        return EXIT_CERTIFICATE
    return EXIT_OK if values_ok else EXIT_VALIDATION


COMMANDS = {
    "skeleton": (cmd_skeleton, "greedy belief/rate path"),
    "law": (cmd_law, "stopping-time law with capacity slack"),
    "simulate": (cmd_simulate, "Monte Carlo paths of the greedy process"),
    "menu": (cmd_menu, "optimal token menu"),
    "revenue": (cmd_revenue, "revenue report with baselines (JSON)"),
    "baselines": (cmd_baselines, "constant-delay and diffusion baselines (JSON)"),
    "verify": (cmd_verify, "FOC, oracle and IC certificates, or audit a law CSV (JSON)"),
    "quality": (cmd_quality, "reasoning-quality boundary curves"),
    "extended-menu": (cmd_extended_menu, "token menu with a valuation profile"),
    "reproduce": (cmd_reproduce, "recompute the leading example against stored targets"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="token-screen", description="Token-cap screening for information-acquisition services.",
                     epilog=COLUMNS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, help=helptext, description=helptext, epilog=COLUMNS_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="JSON run configuration (default: leading example)")
        p.add_argument("--out", help="output path (default: stdout)")
        if name == "simulate":
            p.add_argument("--paths", type=int)
            p.add_argument("--seed", type=int)
            p.add_argument("--workers", type=int)
        if name in ("quality",):
            p.add_argument("--r", type=float, nargs="+")
            p.add_argument("--alpha", type=float)
            p.add_argument("--t-max", dest="t_max", type=float)
        if name in ("quality", "extended-menu"):
            p.add_argument("--valuation", help="expression in r, e.g. 'exp(-r)'")
        if name == "verify":
            p.add_argument("--law", help="law CSV to audit for capacity feasibility")
            p.add_argument("--rate", type=float, default=1.0, help="discount rate of the test payoff")
        if name == "reproduce":
            p.add_argument("--example", default="leading", choices=["leading"])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        ctx = Context(load_config(args.config))
        return func(ctx, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CertificateError as exc:
        print(f"certificate failure: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    except TokenScreenError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
