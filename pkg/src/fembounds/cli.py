"""Command line front end.

Exit codes: 0 success, 2 certification failure, 3 input or I/O error,
4 numerical failure.
"""
import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field

from .afem import CSV_COLUMNS, afem_run
from .constants import M_BISECT, ConstantsInput, evaluate_constants
from .errors import InputError, NumericalFailure
from .mesh import (diameter_study, load_mesh, make_preset, reference_tetrahedron,
                   reference_triangle)
from .verify import (CERT_TOL, extremal_friedrichs, extremal_operator_bound, report_json,
                     run_suite)

EXIT_OK, EXIT_CERT, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4
REPORT_SCHEMA = 1


@dataclass
class RunConfig:
    command: str
    mesh: str = None
    preset: str = None
    tol: float = CERT_TOL
    theta: list = field(default_factory=lambda: [0.3])
    max_ndof: int = 20_000
    out: str = None
    seed: int = 0

    @classmethod
    def from_args(cls, args):
        cfg = cls(command=args.command, mesh=args.mesh, preset=args.preset, tol=args.tol,
                  theta=getattr(args, "theta", [0.3]),
                  max_ndof=getattr(args, "max_ndof", 20_000), out=args.out, seed=args.seed)
        if not cfg.tol > 0:
            raise InputError("--tol must be positive")
        if cfg.max_ndof <= 0:
            raise InputError("--max-ndof must be positive")
        return cfg


def _mesh_from(args, required=False):
    if args.mesh and args.preset:
        raise InputError("give either --mesh or --preset, not both")
    if args.mesh:
        return load_mesh(args.mesh), args.mesh
    if args.preset:
        return make_preset(args.preset.replace("_", "-")), args.preset
    if required:
        raise InputError("a mesh is required (--mesh FILE or --preset NAME)")
    return None, None


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _failures(items):
    if items:
        sys.stderr.write(json.dumps({"failures": items}) + "\n")
        return EXIT_CERT
    return EXIT_OK


# ---------------------------------------------------------------- commands
def cmd_constants(args):
    mesh, source = _mesh_from(args)
    manual = {"omega0": args.omega0, "m_int": args.m_int, "m_bd": args.m_bd,
              "h_max": args.h_max, "domain_width": args.width, "c_quot": args.c_quot}
    if mesh is None and all(v is None for v in manual.values()):
        raise InputError("constants need a mesh (--mesh/--preset) or manual inputs (--omega0, ...)")
    if mesh is not None:
        inp = ConstantsInput.from_mesh(mesh, width=args.width)
        for key, val in manual.items():
            if val is not None:
                setattr(inp, key, val)
        inp.__post_init__()
    else:
        inp = ConstantsInput(n=args.dim, **manual)
    report = evaluate_constants(inp).to_dict()
    report["schema"] = REPORT_SCHEMA
    report["source"] = source or "manual"
    _emit(json.dumps(report, indent=2), args.out)
    return EXIT_OK


def cmd_verify(args):
    results = run_suite(seed=args.seed, tol=args.tol)
    mesh, source = _mesh_from(args)
    if mesh is not None and mesh.dim == 2:
        for kind in ("J1", "angle_weighted"):
            r = extremal_operator_bound(mesh, kind)
            r.name, r.mesh_id, r.tol = f"{source}:enrich[{kind}]", source, args.tol
            results.append(r)
        r = extremal_friedrichs(mesh)
        r.name, r.mesh_id, r.tol = f"{source}:friedrichs", source, args.tol
        results.append(r)
    doc = {"schema": REPORT_SCHEMA, "seed": args.seed, "tol": args.tol,
           "results": json.loads(report_json(results))}
    _emit(json.dumps(doc, indent=2), args.out)
    return _failures([r.to_dict() for r in results if not r.passed])


def cmd_bisect_study(args):
    rounds = args.rounds or M_BISECT[args.dim]
    if args.dim == 2:
        cases = [(0, reference_triangle())]
    else:
        types = [args.type] if args.type is not None else range(3)
        cases = [(t, reference_tetrahedron()) for t in types]
    rows, failures = [], []
    for t, pts in cases:
        ratios = diameter_study(pts, t, rounds)
        for lev, r in enumerate(ratios, start=1):
            rows.append({"dim": args.dim, "type": t, "round": lev, "ratio": float(r)})
        if rounds >= M_BISECT[args.dim] and ratios[M_BISECT[args.dim] - 1] > 0.5 + 1e-12:
            failures.append({"name": f"bisect-study[dim={args.dim},type={t}]",
                             "computed": float(ratios[M_BISECT[args.dim] - 1]), "bound": 0.5,
                             "anchor": "diameter halving after M(n) bisection rounds"})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["dim", "type", "round", "ratio"])
    w.writeheader()
    w.writerows(rows)
    _emit(buf.getvalue(), args.out)
    return _failures(failures)


def cmd_afem(args):
    mesh, source = _mesh_from(args, required=True)
    failures = []
    outputs = []
    for theta in args.theta:
        if theta == "theta0":
            inp = ConstantsInput.from_mesh(mesh)
            key = "theta0_CFEM" if args.which == "cfem" else "theta0_CRFEM"
            value = evaluate_constants(inp)[key]
        else:
            value = float(theta)
        hist = afem_run(mesh, 1.0, args.which, value, max_ndof=args.max_ndof,
                        max_iter=args.max_iter, check=not args.no_check)
        if not hist.axioms_hold():
            failures.append({"name": f"afem[{args.which},theta={value:g}]",
                             "anchor": "axioms (A1) stability and (A3) discrete reliability"})
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, extrasaction="ignore")
        w.writeheader()
        w.writerows(asdict(r) for r in hist.records)
        outputs.append((value, buf.getvalue()))
    if args.out and len(outputs) > 1:
        stem = args.out[:-4] if args.out.endswith(".csv") else args.out
        for value, text in outputs:
            _emit(text, f"{stem}_theta{value:g}.csv")
    else:
        for _, text in outputs:
            _emit(text, args.out)
    return _failures(failures)


# ------------------------------------------------------------------ parser
def _theta_list(text):
    out = []
    for item in text.split(","):
        item = item.strip()
        if item == "theta0":
            out.append(item)
            continue
        try:
            val = float(item)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid theta {item!r}") from None
        if not 0 < val <= 1:
            raise argparse.ArgumentTypeError("theta must lie in (0, 1]")
        out.append(val)
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="fembounds", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--mesh", help="mesh JSON file")
        sp.add_argument("--preset", help="named mesh preset")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=CERT_TOL)

    c = sub.add_parser("constants", help="closed-form constants report (JSON)")
    common(c)
    c.add_argument("--dim", type=int, default=2)
    c.add_argument("--omega0", type=float, help="minimal angle in radians")
    c.add_argument("--omega0-deg", type=float, help="minimal angle in degrees")
    c.add_argument("--m-int", type=int)
    c.add_argument("--m-bd", type=int)
    c.add_argument("--h-max", type=float)
    c.add_argument("--width", type=float)
    c.add_argument("--c-quot", type=float)
    c.set_defaults(func=cmd_constants)

    v = sub.add_parser("verify", help="run the certification suite (JSON)")
    common(v)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bisect-study", help="diameter ratios under uniform bisection (CSV)")
    common(b)
    b.add_argument("--dim", type=int, choices=(2, 3), default=2)
    b.add_argument("--rounds", type=int)
    b.add_argument("--type", type=int, choices=(0, 1, 2))
    b.set_defaults(func=cmd_bisect_study)

    a = sub.add_parser("afem", help="adaptive run with axiom checks (CSV)")
    common(a)
    a.add_argument("--which", choices=("cfem", "crfem"), default="crfem")
    a.add_argument("--theta", type=_theta_list, default=[0.3],
                   help="comma separated bulk parameters; 'theta0' uses the formula value")
    a.add_argument("--max-ndof", type=int, default=20_000)
    a.add_argument("--max-iter", type=int, default=50)
    a.add_argument("--no-check", action="store_true", help="skip the axiom checks")
    a.set_defaults(func=cmd_afem)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "omega0_deg", None) is not None:
        args.omega0 = math.radians(args.omega0_deg)
    try:
        RunConfig.from_args(args)
        return args.func(args)
    except (InputError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except NumericalFailure as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
