"""Command line front end: model energies, domain energies, coverings and certificates.

Exit codes: 0 success, 2 precondition failure, 3 solver failure, 4 indeterminate dichotomy.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings

import numpy as np

from . import __version__

EXIT_OK, EXIT_PRE, EXIT_SOLVER, EXIT_TIE = 0, 2, 3, 4
log = logging.getLogger("polymag")


class Indeterminate(Exception):
    def __init__(self, payload):
        super().__init__("indeterminate dichotomy at tolerance")
        self.payload = payload


# ---------------------------------------------------------------------------
# fields


def parse_vector(text):
    try:
        v = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise ValueError(f"cannot parse vector {text!r}") from None
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError(f"field must be three finite numbers, got {text!r}")
    return v


def _params(text):
    out = {}
    for item in filter(None, text.split(";" if ";" in text else ",")):
        k, _, v = item.partition("=")
        out[k.strip()] = float(v)
    return out


def confining_field(kappa=8.0, eps=0.5, cx=0.0, cy=0.0, cz=0.0):
    """B = (0, 2 eps z, 1 + kappa (x^2 + y^2)) about c, with the polynomial potential
    A = (eps z^2, x + kappa (x^3/3 + x y^2), 0)."""
    from .core_numerics import PotentialField

    c = np.array([cx, cy, cz])

    def B(x):
        d = np.atleast_2d(x) - c
        out = np.column_stack([np.zeros(len(d)), 2 * eps * d[:, 2],
                               1 + kappa * (d[:, 0] ** 2 + d[:, 1] ** 2)])
        return out[0] if np.ndim(x) == 1 else out

    def A(x):
        d = np.atleast_2d(x) - c
        return np.column_stack([eps * d[:, 2] ** 2,
                                d[:, 0] + kappa * (d[:, 0] ** 3 / 3 + d[:, 0] * d[:, 1] ** 2),
                                np.zeros(len(d))])

    return B, PotentialField(func=A)


FIELDS = {"confining": confining_field}


def field_from_args(args):
    """(B_field, A, label) from --B or --field name:params."""
    from .core_numerics import ConstantField
    from .quasimodes_bounds import symmetric_gauge_potential

    if getattr(args, "field", None):
        name, _, p = args.field.partition(":")
        if name not in FIELDS:
            raise ValueError(f"unknown field {name!r}; known: {sorted(FIELDS)}")
        B, A = FIELDS[name](**_params(p))
        return B, A, args.field
    if not getattr(args, "B", None):
        raise ValueError("give --B x,y,z or --field name:params")
    v = parse_vector(args.B)
    if np.linalg.norm(v) == 0:
        raise ValueError("vanishing field")
    return ConstantField(v), symmetric_gauge_potential(v), args.B


def load_domain(path):
    from .domain_model import PolyhedralDomain, cube, prism, tetrahedron

    named = {"cube": cube, "tetrahedron": tetrahedron, "prism": prism}
    if path in named:
        return named[path]()
    return PolyhedralDomain.from_json(path)


def hs_from(text):
    hs = [float(t) for t in text.split(",")]
    if any(not 0 < h < 1 for h in hs):
        raise ValueError("h values must lie in (0, 1)")
    return hs


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, (str, bool)) or obj is None:
        return obj
    return str(obj)


def emit(args, payload=None, text=None):
    if payload is not None:
        text = json.dumps(_clean(payload), sort_keys=True, indent=1) + "\n"
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# model commands


def cmd_theta0(args):
    from .model_problems import FiberConfig, compute_theta0

    r = compute_theta0(FiberConfig())
    emit(args, {"theta0": r.theta0, "tau_star": r.tau_star,
                "meta": {"zmax": r.zmax, "step": r.step, "evaluations": r.evaluations}})


def cmd_sigma(args):
    from .model_problems import SigmaConfig, sigma, sigma_curve

    cfg = SigmaConfig()
    if args.theta is not None:
        th = float(args.theta)
        if not 0 <= th <= math.pi / 2 + 1e-9:
            raise ValueError("theta must lie in [0, pi/2]")
        emit(args, text=csv_text(["theta", "sigma", "L", "step"],
                                 [(th, float(sigma(th, cfg)), float(cfg.L), float(cfg.step))]))
        return
    n = int(args.theta_grid or 17)
    if n < 2:
        raise ValueError("theta grid needs at least 2 points")
    emit(args, text=sigma_curve(n, cfg, workers=args.workers).to_csv())


def _wedge_cfg(args):
    from .wedge_spectra import WedgeConfig

    kw = {}
    if args.step:
        kw["step"] = args.step
    return WedgeConfig(**kw)


def cmd_wedge(args):
    from .model_problems import TAG_TIE
    from .wedge_spectra import WedgeModel, classify_wedge

    if not 0 < args.alpha < 2 * math.pi:
        raise ValueError("opening must lie in (0, 2 pi)")
    B = parse_vector(args.B)
    cfg = _wedge_cfg(args)
    rep = classify_wedge(WedgeModel(args.alpha, tuple(B / np.linalg.norm(B))), cfg)
    out = {k: v for k, v in rep.items() if k not in ("result", "eigenvector")}
    out["E"] = float(np.linalg.norm(B)) * rep["E"]
    out["E_star"] = float(np.linalg.norm(B)) * rep["E_star"]
    out["meta"] = {"step": cfg.step, "radius": cfg.radius, "tau_tol": cfg.tau_tol, "B": B}
    if rep["tag"] == TAG_TIE:
        raise Indeterminate(out)
    emit(args, out)


def cmd_sector2d(args):
    from .wedge_spectra import sector_energy_2d

    if not 0 < args.alpha < 2 * math.pi:
        raise ValueError("opening must lie in (0, 2 pi)")
    cfg = _wedge_cfg(args)
    E = sector_energy_2d(args.alpha, cfg)
    emit(args, {"alpha": args.alpha, "E": E, "meta": {"step": cfg.step, "radius": cfg.radius}})


def cmd_cone(args):
    from .cone_spectra import ConeConfig, PolyhedralCone, classify_cone
    from .model_problems import TAG_TIE

    with open(args.section_file) as fh:
        data = json.load(fh)
    dirs = data["vertices"] if isinstance(data, dict) else data
    cone = PolyhedralCone(np.asarray(dirs, dtype=float))
    B = parse_vector(args.B)
    kw = {"workers": args.workers}
    if args.step:
        kw["step"] = args.step
    cfg = ConeConfig(**kw)
    rep = classify_cone(B / np.linalg.norm(B), cone, cfg)
    b = float(np.linalg.norm(B))
    out = {k: v for k, v in rep.items() if k not in ("result",)}
    out["E"], out["E_star"] = b * rep["E"], b * rep["E_star"]
    out["meta"] = {"step": cfg.step, "radii": list(cfg.radii), "B": B, "cone": cone.to_json(),
                   **{k: v for k, v in rep["result"].meta.items() if k != "edge_obj"}}
    if rep["tag"] == TAG_TIE:
        raise Indeterminate(out)
    emit(args, out)


# ---------------------------------------------------------------------------
# domain commands


def _energy_cfg(args):
    from .cone_spectra import ConeConfig
    from .domain_model import EnergyConfig

    ckw = {"workers": args.workers}
    if args.step:
        ckw["step"] = args.step
    return EnergyConfig(cone=ConeConfig(**ckw))


def cmd_energy(args):
    from .domain_model import lowest_energy

    dom = load_domain(args.domain)
    B, _, label = field_from_args(args)
    le = lowest_energy(B, dom, _energy_cfg(args))
    if args.format == "json":
        emit(args, {"value": le.value, "stratum": le.stratum, "point": le.point, "tag": le.tag,
                    "chain": list(le.chain), "table": le.table,
                    "meta": {**le.meta, "field": label}})
    else:
        emit(args, text=le.to_csv())


def cmd_validate(args):
    from .covering import ims_lower_bound
    from .domain_model import EnergyCache, lowest_energy
    from .quasimodes_bounds import direct_solve, fitted_exponent, upper_bound_certificate

    dom = load_domain(args.domain)
    B, A, label = field_from_args(args)
    cfg = _energy_cfg(args)
    cache = EnergyCache(cfg)
    le = lowest_energy(B, dom, cfg, cache)
    rows = []
    for h in hs_from(args.h):
        direct = direct_solve(dom, A, h, tol=args.tol or 1e-8)
        up = upper_bound_certificate(dom, B, A, h, delta=args.delta, lowest=le, cfg=cfg,
                                     direct=direct)
        lo = ims_lower_bound(dom, B, A, h, delta=args.delta, K=args.K, cfg=cfg, cache=cache)
        lam = float(direct[0].value)
        rows.append({"h": h, "lambda_h": lam, "RQ": up.RQ, "lower": lo.lower,
                     "width_over_h": (up.RQ - lo.lower) / h,
                     "sandwich": bool(lo.lower <= lam <= up.RQ),
                     "upper": up.to_json(), "lower_report": lo.to_json(),
                     "direct": {"step": direct[1].step.tolist(), "nodes": direct[1].n_active}})
    hs = [r["h"] for r in rows]
    widths = [r["width_over_h"] for r in rows]
    out = {"E_script": le.value, "field": label, "rows": rows,
           "narrowing": bool(all(b < a for a, b in zip(widths, widths[1:]))),
           "sandwich": bool(all(r["sandwich"] for r in rows))}
    if len(rows) >= 2:
        out["excess_exponent"] = fitted_exponent(hs, [r["lambda_h"] / r["h"] - le.value
                                                      for r in rows])
        out["penalty_exponent"] = fitted_exponent(
            hs, [r["lower_report"]["budget_terms"]["ims"] for r in rows])
    emit(args, out)


def cmd_covering(args):
    from .covering import build_covering, partition_of_unity, sample_domain

    dom = load_domain(args.domain)
    cov = build_covering(dom, args.rho, args.K, check=True, seed=args.seed)
    X = sample_domain(dom, 30, args.seed)
    pou = partition_of_unity(cov, X)
    s2 = pou.sum_squares(X)
    rep = {"rho": args.rho, "K": args.K, "L": cov.params.L, "kappa": cov.params.kappa,
           "rho_max": cov.params.rho_max, "n_balls": len(cov), "checks": cov.meta["checks"],
           "partition": {"max_dev": float(np.abs(s2 - 1).max()), "C": pou.C}}
    rep["ok"] = all(rep["checks"][k] for k in ("covered", "chart", "overlap_ok", "radii_ok"))
    if args.balls:
        rep["balls"] = cov.to_json()["balls"]
    emit(args, rep)


def cmd_quasimode(args):
    from .quasimodes_bounds import refined_certificate_G2, upper_bound_certificate

    dom = load_domain(args.domain)
    B, A, _ = field_from_args(args)
    h = hs_from(args.h)
    cfg = _energy_cfg(args)
    out = []
    for hv in h:
        if args.refined:
            cert = refined_certificate_G2(dom, B, A, hv, delta=args.delta, cfg=cfg)
        else:
            cert = upper_bound_certificate(dom, B, A, hv, delta=args.delta, cfg=cfg)
        out.append(cert.to_json())
    emit(args, out[0] if len(out) == 1 else out)


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="polymag", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float)
    common.add_argument("--step", type=float)
    common.add_argument("-v", "--verbose", action="store_true")
    fld = argparse.ArgumentParser(add_help=False)
    fld.add_argument("--B", help="constant field x,y,z")
    fld.add_argument("--field", help="named field name:key=value,...")
    sub = p.add_subparsers(dest="cmd", required=True)

    sub.add_parser("theta0", parents=[common]).set_defaults(func=cmd_theta0)
    s = sub.add_parser("sigma", parents=[common])
    s.add_argument("--theta", type=float)
    s.add_argument("--theta-grid", type=int)
    s.set_defaults(func=cmd_sigma)
    s = sub.add_parser("wedge", parents=[common])
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--B", "--field", dest="B", required=True)
    s.set_defaults(func=cmd_wedge)
    s = sub.add_parser("sector2d", parents=[common])
    s.add_argument("--alpha", type=float, required=True)
    s.set_defaults(func=cmd_sector2d)
    s = sub.add_parser("cone", parents=[common])
    s.add_argument("--section-file", required=True)
    s.add_argument("--B", "--field", dest="B", required=True)
    s.set_defaults(func=cmd_cone)

    s = sub.add_parser("energy", parents=[common, fld])
    s.add_argument("domain")
    s.add_argument("--format", choices=["csv", "json"], default="csv")
    s.set_defaults(func=cmd_energy)
    s = sub.add_parser("validate", parents=[common, fld])
    s.add_argument("domain")
    s.add_argument("--h", "--h-ladder", dest="h", default="0.2,0.1,0.05")
    s.add_argument("--delta", type=float, default=3 / 8)
    s.add_argument("--K", type=float, default=2.0)
    s.set_defaults(func=cmd_validate)
    s = sub.add_parser("covering", parents=[common])
    s.add_argument("domain")
    s.add_argument("--rho", type=float, required=True)
    s.add_argument("--K", type=float, default=2.0)
    s.add_argument("--balls", action="store_true", help="include the ball list")
    s.set_defaults(func=cmd_covering)
    s = sub.add_parser("quasimode", parents=[common, fld])
    s.add_argument("domain")
    s.add_argument("--h", required=True)
    s.add_argument("--delta", type=float, default=3 / 8)
    s.add_argument("--refined", action="store_true", help="gauge-corrected certificate")
    s.set_defaults(func=cmd_quasimode)
    return p


def main(argv=None):
    from .core_numerics import SolverError
    from .model_problems import BracketError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        args.func(args)
    except Indeterminate as exc:
        emit(args, exc.payload)
        return EXIT_TIE
    except (SolverError, BracketError) as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER
    except (ValueError, KeyError, TypeError, OSError) as exc:
        sys.stderr.write(f"precondition failure: {exc}\n")
        return EXIT_PRE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
