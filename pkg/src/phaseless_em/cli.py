"""Command-line front end.

Commands::

    phaseless-em gen-data CONFIG -o DATA.csv
    phaseless-em verify CONFIG
    phaseless-em scan-ambiguity CONFIG [--direction X,Y,Z] [--range A B] [--points N]
    phaseless-em reconstruct CONFIG DATA.csv [--init CX,CY,CZ,R] [--trace TRACE.csv]
    phaseless-em admissible-ball --k K --radius R [R ...]

Exit codes: 0 success, 1 a check failed, 2 configuration error, 3 numerical failure.

Data files are CSV with ``#`` header lines carrying the package version and
the SHA-256 of the effective configuration, followed by the columns
theta,phi,d1x,d1y,d1z,d2x,d2y,d2z,p1x,p1y,p1z,p2x,p2y,p2z,m,value.  Rows are
ordered theta-major, then phi, then incident index, then m (phi before
theta).  Floats are written with 17 significant digits, so they round-trip.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
import warnings
from importlib.metadata import PackageNotFoundError, version

import numpy as np
from threadpoolctl import threadpool_limits

from . import config as cfgmod
from . import mie
from .core import COMPONENTS, PhaselessRecord, spherical_to_cartesian
from .errors import (
    ConfigError,
    GeometryError,
    HashMismatchError,
    PhaselessError,
    ResonanceError,
    SingularMatrixError,
    TooCloseError,
)
from .inverse import ObservedData, SphereParams, ambiguity_scan, reconstruct_sphere
from .scene import SolverSpec, phaseless_data
from .specfun import maxwell_eigenvalue_free
from . import verify as V

log = logging.getLogger("phaseless_em")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
COLUMNS = ["theta", "phi", "d1x", "d1y", "d1z", "d2x", "d2y", "d2z",
           "p1x", "p1y", "p1z", "p2x", "p2y", "p2z", "m", "value"]
AMBIGUITY_WARNING = "translation-ambiguous configuration"


def package_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _thread_limit(n: int):
    return threadpool_limits(limits=n)


def _effective_config(args) -> cfgmod.SceneConfig:
    raw = cfgmod.load_config(args.config)
    grid = tuple(args.grid) if getattr(args, "grid", None) else None
    raw = cfgmod.with_overrides(raw, getattr(args, "subdiv", None), grid, getattr(args, "seed", None))
    return cfgmod.build(raw, threads=args.threads)


def write_data(stream, sc: cfgmod.SceneConfig, table: np.ndarray) -> None:
    """Write the phaseless table (n_dirs, n_inc, 2) in the documented CSV layout."""
    stream.write(f"# phaseless-em data file\n# version={package_version()}\n")
    stream.write(f"# config_sha256={sc.digest}\n")
    stream.write(",".join(COLUMNS) + "\n")
    theta, phi = sc.grid.angles()
    inc_cols = [
        [_fmt(v) for v in (*i.d1, *i.d2, *i.p1, *i.p2)] for i in sc.incidents
    ]
    lines = []
    for x in range(len(theta)):
        head = _fmt(theta[x]) + "," + _fmt(phi[x]) + ","
        for j, cols in enumerate(inc_cols):
            mid = ",".join(cols)
            for m, name in enumerate(COMPONENTS):
                lines.append(f"{head}{mid},{name},{_fmt(table[x, j, m])}\n")
    stream.write("".join(lines))


def read_data(path) -> tuple[dict, list[PhaselessRecord]]:
    """Header fields and records of a data file."""
    header: dict = {}
    records = []
    with open(path, newline="") as fh:
        body = []
        for line in fh:
            if line.startswith("#"):
                if "=" in line:
                    k, v = line[1:].strip().split("=", 1)
                    header[k.strip()] = v.strip()
            else:
                body.append(line)
    reader = csv.DictReader(io.StringIO("".join(body)))
    if reader.fieldnames != COLUMNS:
        raise ConfigError(f"{path}: unexpected columns {reader.fieldnames}")
    for n, row in enumerate(reader, start=2):
        try:
            t, p = float(row["theta"]), float(row["phi"])
            vec = lambda *keys: tuple(float(row[k]) for k in keys)  # noqa: E731
            records.append(PhaselessRecord(
                tuple(spherical_to_cartesian(t, p)),
                vec("d1x", "d1y", "d1z"), vec("d2x", "d2y", "d2z"),
                vec("p1x", "p1y", "p1z"), vec("p2x", "p2y", "p2z"),
                row["m"], float(row["value"]),
            ))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: data row {n}: {exc}") from None
    return header, records


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, default=V._json_default) + "\n")


def cmd_gen_data(args) -> int:
    sc = _effective_config(args)
    if sc.solver.kind == "efie":
        sc.scene.check_reference_ball()
    with _thread_limit(args.threads):
        table = phaseless_data(sc.scene, sc.solver, sc.grid, sc.incidents)
    if args.out == "-":
        write_data(sys.stdout, sc, table)
    else:
        with open(args.out, "w", newline="") as fh:
            write_data(fh, sc, table)
        log.info("wrote %d records to %s", table.size, args.out)
    return EXIT_OK


def _verify_reports(sc: cfgmod.SceneConfig):
    ctx = sc.scene.ctx
    grid = sc.grid
    o = sc.scene.obstacles[0]
    ref = sc.scene.reference_ball
    if ref is not None:
        rep = maxwell_eigenvalue_free(ctx, ref.radius)
        yield V.IdentityReport("reference_ball_admissible", rep.margin, rep.tol, comparison="ge",
                               extra=rep.as_dict())
        if not rep.admissible:
            return
    origin = o.at_origin()
    coeffs = mie.mie_coefficients(origin, ctx)
    X = V.symmetric_directions(10, sc.seed)
    Xa, Xb = X[:, None, :], X[None, :, :]
    M = mie.far_field_matrix(coeffs, Xa, Xb)
    H = mie.magnetic_far_field_matrix(coeffs, Xa, Xb)
    sample = {"n_xhat": 10, "n_d": 10}
    yield V.check_farfield_relations(M, H, np.broadcast_to(Xa, M.shape[:-1]), grid=sample)
    yield V.check_polarization_null(M, np.broadcast_to(Xb, M.shape[:-1]), grid=sample)
    yield V.check_reciprocity(M, X, grid=sample)
    yield V.check_stratton_chu(origin, ctx, X[0], np.cross(X[0], X[2]) / np.linalg.norm(
        np.cross(X[0], X[2])), grid.directions()[::37])
    first = sc.incidents[0]
    yield V.check_translation_invariance(origin, o.center, first.d1, first.p1, grid, ctx)
    pair = next((i for i in sc.incidents if not np.allclose(i.d1, i.d2)), None)
    if pair is not None:
        z = np.array(o.center) if np.any(o.center) else np.array([0.5, 0.0, 0.0]) / ctx.k
        yield V.check_invariance_broken(origin, tuple(z), pair, grid, ctx)
    if sc.compare_scene is not None and ref is not None:
        solver = sc.solver if sc.solver.kind == "efie" else SolverSpec(threads=sc.solver.threads)
        dist = V.distinguishability_experiment(sc.scene, sc.compare_scene, sc.incidents, grid,
                                               solver)
        same = sc.compare_scene == sc.scene
        yield V.IdentityReport("distinguishability", dist.relative_linf, 0.0 if same else 1e-2,
                               comparison="le" if same else "ge", grid=grid.spec(),
                               extra=dist.as_dict())


def cmd_verify(args) -> int:
    sc = _effective_config(args)
    ok = True
    with _thread_limit(args.threads):
        for rep in _verify_reports(sc):
            _emit(rep.as_dict())
            ok &= rep.passed
    return EXIT_OK if ok else EXIT_CHECK


def _vector(text: str, n: int) -> tuple[float, ...]:
    try:
        v = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers") from None
    if len(v) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers")
    return v


def cmd_scan_ambiguity(args) -> int:
    sc = _effective_config(args)
    template = sc.scene
    if args.no_reference:
        template = type(template)(template.ctx, template.obstacles, None, template.containment)
    solver = None
    if template.reference_ball is not None:
        template.check_reference_ball()
        solver = sc.solver
    shifts = np.linspace(args.range[0], args.range[1], args.points)
    with _thread_limit(args.threads):
        res = ambiguity_scan(template.obstacles[0], template, sc.incidents, sc.grid,
                             args.direction, shifts, solver)
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    try:
        out.write(f"# config_sha256={sc.digest}\nshift,misfit\n")
        for s, v in zip(res.shifts, res.values):
            out.write(f"{_fmt(s)},{_fmt(v)}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    sc = _effective_config(args)
    if sc.translation_ambiguous:
        print(f"warning: {AMBIGUITY_WARNING}", file=sys.stderr)
    header, records = read_data(args.data)
    if header.get("config_sha256") != sc.digest and not args.allow_mismatch:
        raise HashMismatchError(
            f"{args.data} was generated from a different configuration "
            f"({header.get('config_sha256')} != {sc.digest}); use --allow-mismatch to override"
        )
    observed = ObservedData.from_records(records)
    inv = sc.inverse_settings()
    init = SphereParams(args.init[:3], args.init[3]) if args.init else inv["init"]
    if init is None:
        raise ConfigError("no initial guess: set inverse.init in the config or pass --init")
    if sc.scene.reference_ball is not None:
        sc.scene.check_reference_ball()
        solver = SolverSpec(subdivisions=inv["subdivisions"], test_order=sc.solver.test_order,
                            source_order=sc.solver.source_order,
                            volume_match=sc.solver.volume_match, threads=args.threads)
    else:
        solver = SolverSpec(kind="mie")
    t0 = time.perf_counter()
    with _thread_limit(args.threads), warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = reconstruct_sphere(observed, sc.scene, init, solver, truth=sc.truth,
                                 step=inv["step"], max_evals=args.max_evals or inv["max_evals"])
    out = res.as_dict()
    out["truth"] = {"center": list(sc.truth.center), "radius": sc.truth.radius}
    out["seconds"] = time.perf_counter() - t0
    out["budget_exceeded"] = res.reason == "budget"
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            fh.write("eval,misfit,cx,cy,cz,radius\n")
            for i, f, x in res.trace:
                fh.write(",".join([str(i), _fmt(f)] + [_fmt(v) for v in x]) + "\n")
    _emit(out)
    return EXIT_OK


def cmd_admissible_ball(args) -> int:
    from .core import WaveContext

    ctx = WaveContext(args.k)
    ok = True
    for r in args.radius:
        rep = maxwell_eigenvalue_free(ctx, r, args.n_max, args.tol)
        d = rep.as_dict()
        d["radius"] = r
        _emit(d)
        ok &= rep.admissible
    return EXIT_OK if ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phaseless-em", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", help="scene configuration (JSON)")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads; 1 gives bitwise reproducible output")
        sp.add_argument("--subdiv", type=int, help="override solver.subdivisions")
        sp.add_argument("--grid", type=int, nargs=2, metavar=("NTHETA", "NPHI"),
                        help="override the measurement grid")
        sp.add_argument("--seed", type=int, help="override the incident seed")

    g = sub.add_parser("gen-data", help="write phaseless data for the configured scene")
    common(g)
    g.add_argument("-o", "--out", required=True, help="output CSV path, '-' for stdout")
    g.set_defaults(func=cmd_gen_data)

    v = sub.add_parser("verify", help="run the identity checks as JSON lines")
    common(v)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("scan-ambiguity", help="misfit along a translation of the obstacle")
    common(s)
    s.add_argument("--direction", type=lambda t: _vector(t, 3), default=(1.0, 0.0, 0.0))
    s.add_argument("--range", type=float, nargs=2, default=(-0.2, 0.2), metavar=("FROM", "TO"))
    s.add_argument("--points", type=int, default=9)
    s.add_argument("--no-reference", action="store_true", help="drop the reference ball")
    s.add_argument("-o", "--out", default="-")
    s.set_defaults(func=cmd_scan_ambiguity)

    r = sub.add_parser("reconstruct", help="fit center and radius to a data file")
    common(r)
    r.add_argument("data", help="data CSV from gen-data")
    r.add_argument("--init", type=lambda t: _vector(t, 4), help="CX,CY,CZ,R")
    r.add_argument("--max-evals", type=int)
    r.add_argument("--trace", help="write the misfit trace CSV here")
    r.add_argument("--allow-mismatch", action="store_true",
                   help="accept a data file generated from a different config")
    r.set_defaults(func=cmd_reconstruct)

    a = sub.add_parser("admissible-ball", help="screen reference-ball radii")
    a.add_argument("--k", type=float, required=True)
    a.add_argument("--radius", type=float, nargs="+", required=True)
    a.add_argument("--n-max", type=int)
    a.add_argument("--tol", type=float, default=1e-8)
    a.set_defaults(func=cmd_admissible_ball)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be positive")
    try:
        return args.func(args)
    except (ConfigError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularMatrixError, ResonanceError, TooCloseError, OverflowError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PhaselessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
