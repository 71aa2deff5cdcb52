"""Command-line front end.

    magbottle landau --b 3
    magbottle fiber --b 3 --xi 1
    magbottle rect --b 1 --lambda 4 --R 5,10,20
    magbottle count --field bottle-j1 --lambda 20
    magbottle weyl --field bottle-j1 --lambda 20,40,80 --C 1
    magbottle compare --field "(x/y)^2 + y + 1/y" --lambda 20,40,80 --out run1
    magbottle check --field bottle-j1

Options may also come from a JSON document (``--config``); flags given on the
command line win.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from dataclasses import field as dc_field

import numpy as np

from . import __version__
from .discrete import write_coo
from .expr import ExprSyntaxError
from .fields import FieldModel, verify_bottle_conditions
from .hyperbolic import GROWTH_FAILURE, PipelineError, SolverPolicy, count_eigenvalues
from .landau import FiberProblem, WellNotContained, fiber_eigenvalues, landau_levels
from .rectangle import dos_convergence_scan, write_rect_csv
from .report import EXIT_FAILURE, EXIT_OK, emit_report, fmt
from .weyl import WeylError, weyl_main_term, write_weyl_csv

log = logging.getLogger("magbottle")


def parse_field_expr(source: str) -> FieldModel:
    """Parse an arithmetic expression in ``x`` and ``y`` into a field model."""
    return FieldModel.expression(source)


@dataclass
class RunConfig:
    field: object = "bottle-j1"
    lambdas: list = dc_field(default_factory=lambda: [20.0, 40.0, 80.0])
    kappa: float = 2.0
    a0: float = 2.0
    delta0: float = 0.35
    mesh_cap: int = 4_000_000
    h: float | None = None
    out: str = "magbottle-out"
    seed: int = 0
    jobs: int = 1
    C: float | None = None
    dump_matrix: bool = False

    def __post_init__(self):
        self.lambdas = [float(v) for v in self.lambdas]
        if not self.lambdas:
            raise ValueError("lambda list is empty")
        if any(b <= a for a, b in zip(self.lambdas, self.lambdas[1:])):
            raise ValueError("lambda list must be strictly ascending")
        if not 1 / 3 < self.delta0 < 2 / 5:
            raise ValueError("delta0 must lie in (1/3, 2/5)")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")

    def policy(self) -> SolverPolicy:
        return SolverPolicy(kappa=self.kappa, a0=self.a0, delta0=self.delta0, h=self.h, max_nodes=self.mesh_cap)

    def model(self) -> FieldModel:
        return FieldModel.from_spec(self.field)

    def echo(self) -> dict:
        d = asdict(self)
        d["field"] = self.model().to_spec()
        return d


def _one_lambda(cfg: RunConfig, lam: float) -> dict:
    model = cfg.model()
    row = {"lambda": lam}
    try:
        cnt = count_eigenvalues(model, lam, cfg.policy(), keep_operator=cfg.dump_matrix)
        row.update(N=cnt.N, N_err_domain=cnt.N_err_domain, N_err_mesh=cnt.N_err_mesh, n=cnt.n, h=cnt.h,
                   method=cnt.method, shift_jitter_applied=cnt.shift_jitter_applied, label=cnt.label,
                   warnings=cnt.warnings, runs={k: v for k, v in cnt.runs.items() if k != "operator"})
        if cfg.dump_matrix and cnt.runs.get("operator") is not None:
            path = os.path.join(cfg.out, f"matrix_{fmt(lam)}.coo" if len(cfg.lambdas) > 1 else "matrix.coo")
            os.makedirs(cfg.out, exist_ok=True)
            write_coo(cnt.runs["operator"], path)
    except PipelineError as exc:
        row["error"] = str(exc)
        return row
    try:
        w = weyl_main_term(model, lam, bracket=(cfg.C, cfg.delta0) if cfg.C is not None else None)
        row["weyl_main"] = w.main_term
        row["quad_error"] = w.quad_error
        if w.bracket:
            row["weyl_lo"], row["weyl_hi"] = w.bracket
        row["ratio"] = cnt.N / w.main_term if w.main_term > 0 else None
    except WeylError as exc:
        row["error"] = f"[weyl] {exc}"
    return row


def run_compare(cfg: RunConfig) -> list[dict]:
    """Numerical count against the Weyl main term for every lambda."""
    np.random.seed(cfg.seed)
    model = cfg.model()
    rep = verify_bottle_conditions(model)
    if not rep.growth_ok:
        return [{"lambda": lam, "error": GROWTH_FAILURE, "bottle_check": rep.summary()} for lam in cfg.lambdas]
    if cfg.jobs > 1 and len(cfg.lambdas) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            rows = list(ex.map(_one_lambda, [cfg] * len(cfg.lambdas), cfg.lambdas))
    else:
        rows = [_one_lambda(cfg, lam) for lam in cfg.lambdas]
    return sorted(rows, key=lambda r: r["lambda"])


# -- argument handling -------------------------------------------------------------


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(" ", "").split(",") if v]


_CONFIG_KEYS = {"field", "lambda", "lambdas", "kappa", "a0", "delta0", "mesh_cap", "h", "out", "seed", "jobs",
                "C", "dump_matrix"}


def _config_from(args) -> RunConfig:
    data = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "lambda" in data:
            data["lambdas"] = data.pop("lambda")
        if isinstance(data.get("lambdas"), (int, float)):
            data["lambdas"] = [data["lambdas"]]
    over = {"field": args.field, "lambdas": args.lam, "kappa": args.kappa, "a0": args.a0, "delta0": args.delta0,
            "mesh_cap": args.mesh_cap, "h": args.h, "out": args.out, "seed": args.seed, "jobs": args.jobs,
            "C": getattr(args, "C", None), "dump_matrix": getattr(args, "dump_matrix", None) or None}
    data.update({k: v for k, v in over.items() if v is not None})
    return RunConfig(**data)


def _add_run_flags(p):
    p.add_argument("--config", help="JSON document with run options")
    p.add_argument("--field", help="expression in x, y or a preset name")
    p.add_argument("--lambda", dest="lam", type=_floats, help="comma-separated lambda values")
    p.add_argument("--kappa", type=float, help="truncation margin, sublevel {b <= kappa lambda}")
    p.add_argument("--a0", type=float)
    p.add_argument("--delta0", type=float)
    p.add_argument("--mesh-cap", dest="mesh_cap", type=int, help="maximum number of grid nodes")
    p.add_argument("--h", type=float, help="fixed local mesh step (overrides the partition rule)")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="magbottle", description="Spectral counting for magnetic bottles on the half-plane")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("landau", help="constant-field levels and threshold")
    p.add_argument("--b", type=_floats, required=True)

    p = sub.add_parser("fiber", help="eigenvalues of one constant-field fiber")
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--xi", type=int, default=1, choices=(1, -1))
    p.add_argument("--h", type=float, default=2e-3)
    p.add_argument("--no-extrapolate", action="store_true")

    p = sub.add_parser("rect", help="Euclidean rectangle density-of-states scan")
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--R", type=_floats, default=[5.0, 10.0, 20.0])
    p.add_argument("--h", type=float, default=0.125)
    p.add_argument("--out")

    p = sub.add_parser("count", help="eigenvalue count for a field")
    _add_run_flags(p)
    p.add_argument("--dump-matrix", action="store_true")

    p = sub.add_parser("weyl", help="Weyl main term (and bracket with --C)")
    _add_run_flags(p)
    p.add_argument("--C", type=float)

    p = sub.add_parser("compare", help="count vs Weyl main term, writes results.csv and summary.json")
    _add_run_flags(p)
    p.add_argument("--C", type=float)
    p.add_argument("--dump-matrix", action="store_true")

    p = sub.add_parser("check", help="sampled bottle hypotheses")
    p.add_argument("--field", required=True)
    p.add_argument("--radius", type=float, default=8.0)
    p.add_argument("--samples", type=int, default=4000)
    return ap


def _print_rows(rows, header):
    print(",".join(header))
    for r in rows:
        print(",".join(fmt(r.get(k)) for k in header))


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (ValueError, ExprSyntaxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def _dispatch(args) -> int:
    if args.cmd == "landau":
        print("b,j,level,threshold")
        for b in args.b:
            spec = landau_levels(b)
            if not spec.levels:
                print(f"{fmt(b)},,,{fmt(spec.ac_threshold)}")
            for j, lv in enumerate(spec.levels):
                print(f"{fmt(b)},{j},{fmt(lv)},{fmt(spec.ac_threshold)}")
        return EXIT_OK
    if args.cmd == "fiber":
        try:
            vals = fiber_eigenvalues(FiberProblem(args.b, args.xi, h=args.h), extrapolate=not args.no_extrapolate)
        except WellNotContained as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        print("index,eigenvalue")
        for i, v in enumerate(vals):
            print(f"{i},{fmt(v)}")
        return EXIT_OK
    if args.cmd == "rect":
        rows = dos_convergence_scan(args.b, args.lam, args.R, h=args.h)
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            write_rect_csv(rows, os.path.join(args.out, "rect.csv"))
        _print_rows([{"b": r.b, "R1": r.R1, "R2": r.R2, "h": r.h, "lambda": r.lam, "N": r.N,
                      "N_over_area": r.N_over_area, "dos": r.dos, "cdv_upper": r.cdv_upper} for r in rows],
                    ["b", "R1", "R2", "h", "lambda", "N", "N_over_area", "dos", "cdv_upper"])
        return EXIT_OK
    if args.cmd == "check":
        rep = verify_bottle_conditions(FieldModel.from_spec(args.field), args.radius, args.samples)
        print(json.dumps(rep.summary(), indent=2, ensure_ascii=False))
        return EXIT_OK if rep.growth_ok else EXIT_FAILURE
    cfg = _config_from(args)
    if args.cmd == "count":
        model = cfg.model()
        code = EXIT_OK
        rows = []
        for lam in cfg.lambdas:
            try:
                c = count_eigenvalues(model, lam, cfg.policy(), keep_operator=cfg.dump_matrix)
            except PipelineError as exc:
                print(f"error: lambda={fmt(lam)}: {exc}", file=sys.stderr)
                code = EXIT_FAILURE
                continue
            rows.append({"lambda": lam, "N": c.N, "N_err_domain": c.N_err_domain, "N_err_mesh": c.N_err_mesh,
                         "n": c.n, "h": c.h})
            if cfg.dump_matrix and c.runs.get("operator") is not None:
                os.makedirs(cfg.out, exist_ok=True)
                write_coo(c.runs["operator"], os.path.join(cfg.out, f"matrix_{fmt(lam)}.coo"))
        _print_rows(rows, ["lambda", "N", "N_err_domain", "N_err_mesh", "n", "h"])
        return code
    if args.cmd == "weyl":
        model = cfg.model()
        res = [weyl_main_term(model, lam, bracket=(cfg.C, cfg.delta0) if cfg.C is not None else None)
               for lam in cfg.lambdas]
        os.makedirs(cfg.out, exist_ok=True)
        write_weyl_csv(res, os.path.join(cfg.out, "weyl.csv"))
        _print_rows([{"lambda": r.lam, "main_term": r.main_term, "lower": r.bracket[0] if r.bracket else None,
                      "upper": r.bracket[1] if r.bracket else None, "quad_error": r.quad_error} for r in res],
                    ["lambda", "main_term", "lower", "upper", "quad_error"])
        return EXIT_OK
    if args.cmd == "compare":
        rows = run_compare(cfg)
        code = emit_report(rows, cfg.out, cfg.echo())
        for r in rows:
            if r.get("error"):
                print(f"lambda={fmt(r['lambda'])}: {r['error']}", file=sys.stderr)
        with open(os.path.join(cfg.out, "results.csv"), encoding="ascii") as fh:
            sys.stdout.write(fh.read())
        return code
    raise ValueError(f"unknown command {args.cmd}")


if __name__ == "__main__":
    sys.exit(main())
