"""Command line interface.

Subcommands::

    svfortin mesh gen --kind crisscross --n 2 -o mesh.txt
    svfortin analyze crisscross:2
    svfortin fortin apply --mesh diagonal:2 --degree 4 --field trig
    svfortin verify --suite divergence --suite dimension --mesh crisscross:2
    svfortin study convergence --field trig --levels 2,4,8,16
    svfortin study stability --eps 0.2,0.1,0.05,0.025

Options may also come from a JSON file given with ``--config``; command line
flags take precedence over file values.  Output files are written below
``--out``.  Exit status: 0 on success, 1 when a suite or check fails, 2 on
usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields
from dataclasses import field as _field

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


@dataclass
class RunConfig:
    """Resolved options of one invocation (see ``--config`` for the key set)."""

    command: str = ""
    mesh: str = "crisscross:2"
    kind: str = "crisscross"
    n: int = 2
    eps: float = 0.0
    degree: int = 4
    variant: str = "dirichlet"
    field: str = "trig"
    suites: list = _field(default_factory=lambda: ["divergence"])
    tol: float | None = None
    out: str = "."
    seed: int = 20240617
    threads: int = 1
    levels: list = _field(default_factory=lambda: [2, 4, 8, 16])
    j: int = 0
    p: float = 2.0
    eps_values: list = _field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    output: str = ""
    dump: bool = False

    def validate(self):
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")
        if self.tol is not None and not self.tol > 0:
            raise ValueError("tolerances must be positive")
        if self.variant not in ("dirichlet", "slip"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.threads < 1:
            raise ValueError("--threads must be >= 1")


class UsageError(Exception):
    pass


def _int_list(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x]


def _float_list(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig keys")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, help="seed for randomized checks")
    common.add_argument("--threads", type=int, help="BLAS thread cap (default 1)")

    p = argparse.ArgumentParser(prog="svfortin", description="Scott-Vogelius Fortin operator toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = mesh.add_subparsers(dest="action", required=True)
    gen = msub.add_parser("gen", parents=[common], help="generate a mesh file")
    gen.add_argument("--kind")
    gen.add_argument("--n", type=int)
    gen.add_argument("--eps", type=float)
    gen.add_argument("-o", "--output", help="mesh file name (relative to --out)")

    an = sub.add_parser("analyze", parents=[common], help="classify vertices and list regions")
    an.add_argument("mesh", nargs="?", help="mesh spec kind:n[:eps] or file path")

    fo = sub.add_parser("fortin", help="apply the Fortin operator")
    fsub = fo.add_subparsers(dest="action", required=True)
    ap = fsub.add_parser("apply", parents=[common])
    ap.add_argument("--mesh")
    ap.add_argument("--degree", type=int)
    ap.add_argument("--variant", choices=("dirichlet", "slip"))
    ap.add_argument("--field")
    ap.add_argument("--dump", action="store_true", default=None, help="write coefficients CSV")

    ve = sub.add_parser("verify", parents=[common], help="run verification suites")
    ve.add_argument("--suite", action="append", dest="suites")
    ve.add_argument("--mesh")
    ve.add_argument("--degree", type=int)
    ve.add_argument("--variant", choices=("dirichlet", "slip"))
    ve.add_argument("--tol", type=float)

    st = sub.add_parser("study", help="mesh-sequence studies")
    ssub = st.add_subparsers(dest="action", required=True)
    cv = ssub.add_parser("convergence", parents=[common])
    cv.add_argument("--field")
    cv.add_argument("--kind")
    cv.add_argument("--levels", type=_int_list)
    cv.add_argument("--degree", type=int)
    cv.add_argument("--variant", choices=("dirichlet", "slip"))
    cv.add_argument("--j", type=int, choices=(0, 1))
    cv.add_argument("--p", type=float)
    cv.add_argument("--eps", type=float)
    sb = ssub.add_parser("stability", parents=[common])
    sb.add_argument("--eps", type=_float_list, dest="eps_values")
    sb.add_argument("--n", type=int)
    sb.add_argument("--degree", type=int)
    sb.add_argument("--variant", choices=("dirichlet", "slip"))
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Built-in defaults, then the config file, then explicit flags."""
    cfg = RunConfig()
    names = {f.name for f in fields(RunConfig)}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(data) - names
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for k, v in data.items():
            setattr(cfg, k, v)
    for k, v in vars(args).items():
        if k in names and v is not None:
            setattr(cfg, k, v)
    cfg.command = " ".join(x for x in (args.command, getattr(args, "action", None)) if x)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _set_threads(n: int):
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _write(cfg: RunConfig, name: str, text: str) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


# -- commands ------------------------------------------------------------------

def cmd_mesh_gen(cfg: RunConfig) -> int:
    from .mesh import generate_mesh, save_mesh

    mesh = generate_mesh(cfg.kind, cfg.n, cfg.eps)
    name = cfg.output or f"{cfg.kind}_{cfg.n}.txt"
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, name)
    save_mesh(mesh, path)
    print(f"wrote {path}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
    return EXIT_OK


def _load(spec: str):
    from .harness import parse_mesh_spec

    if os.path.exists(spec):
        from .mesh import load_mesh
        from .singularity import FILE_TOL, classify_vertices

        mesh = load_mesh(spec)
        return mesh, classify_vertices(mesh, FILE_TOL)
    from .singularity import classify_vertices

    mesh = parse_mesh_spec(spec)
    return mesh, classify_vertices(mesh)


def cmd_analyze(cfg: RunConfig) -> int:
    from .harness import rows_to_csv
    from .singularity import VertexClass, build_decomposition

    mesh, cls = _load(cfg.mesh)
    rows = [{"vertex": z, "class": VertexClass(int(cls.cls[z])).name.lower(),
             "theta": float(cls.theta[z]), "triangles": len(mesh.vertex_to_triangles[z]),
             "boundary": bool(mesh.boundary_vertex[z])} for z in range(mesh.n_vertices)]
    _write(cfg, "analyze_vertices.csv", rows_to_csv(rows))
    regs = []
    for variant in ("dirichlet", "slip"):
        dec = build_decomposition(mesh, cls, variant)
        regs += [{"variant": variant, "region": r.label, "kind": r.kind.label, "n_triangles": len(r.triangles),
                  "theta": r.theta_D, "h": r.h_D} for r in dec.regions]
    _write(cfg, "analyze_regions.csv", rows_to_csv(regs))
    dec = build_decomposition(mesh, cls, "dirichlet")
    print(f"{mesh.n_vertices} vertices, {mesh.n_triangles} triangles; "
          f"{len(cls.interior_singular)} interior singular vertices, "
          f"{len(cls.boundary_singular)} boundary singular vertices in {len(dec.chains)} chains; "
          f"{len(dec)} regions")
    return EXIT_OK


def cmd_fortin_apply(cfg: RunConfig) -> int:
    from .catalog import catalog_field
    from .fortin import FortinOperator, apply_fortin, apply_fortin_slip
    from .harness import rows_to_csv

    mesh, cls = _load(cfg.mesh)
    if cfg.degree < 2:
        raise UsageError("the Fortin operator needs degree >= 2")
    F = FortinOperator(mesh, cfg.degree, cfg.variant, cls)
    fn = apply_fortin if cfg.variant == "dirichlet" else apply_fortin_slip
    v = catalog_field(cfg.field)
    fld, rep = fn(F, v, trace=True)
    rep.timings.clear()
    rows = [{"quantity": k, "value": val} for k, val in rep.rows()]
    path = _write(cfg, "fortin_report.csv", rows_to_csv(rows))
    if cfg.dump:
        keys = ("triangle", "component", "a", "b", "c", "coefficient")
        _write(cfg, "fortin_coefficients.csv", rows_to_csv([dict(zip(keys, r)) for r in fld.csv_rows()]))
    print(f"{cfg.variant} Pi on {cfg.mesh}, k={cfg.degree}, field {cfg.field}: "
          f"divergence residual {rep.divergence_residual:.3e}; report {path}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    from .harness import SUITES, run_suite

    mesh, _ = _load(cfg.mesh)
    suites = []
    for s in cfg.suites:
        suites += [x for x in s.split(",") if x]
    bad = [s for s in suites if s not in SUITES]
    if bad:
        raise UsageError(f"unknown suite(s) {bad}; expected {list(SUITES)}")
    status = EXIT_OK
    for name in suites:
        kw = {"variant": cfg.variant} if name in ("divergence", "projection", "trace", "rightinverse") else {}
        res = run_suite(name, mesh, cfg.degree, cfg.tol, cfg.seed, **kw)
        _write(cfg, f"verify_{name}.csv", res.to_csv())
        print(res.summary())
        if not res.passed:
            status = EXIT_FAIL
    return status


def cmd_study_convergence(cfg: RunConfig) -> int:
    from .harness import convergence_study, rows_to_csv

    rows = convergence_study(cfg.field, cfg.kind, cfg.levels, cfg.degree, cfg.j, cfg.p, cfg.variant, cfg.eps)
    path = _write(cfg, "convergence.csv", rows_to_csv(rows))
    orders = ", ".join(f"{r['order']:.3f}" for r in rows[1:])
    print(f"{cfg.field} on {cfg.kind} levels {cfg.levels}: orders {orders}; {path}")
    return EXIT_OK


def cmd_study_stability(cfg: RunConfig) -> int:
    import math

    from .harness import fit_constant, rows_to_csv, stability_study

    rows = stability_study(cfg.eps_values, cfg.n, cfg.degree, cfg.variant)
    path = _write(cfg, "stability.csv", rows_to_csv(rows))
    c, spread = fit_constant(rows)
    finite = all(math.isfinite(r["constant"]) for r in rows)
    print(f"right-inverse constants over eps {cfg.eps_values}: fitted c={c:.4f}, spread {spread:.3f}; {path}")
    return EXIT_OK if finite else EXIT_FAIL


COMMANDS = {
    "mesh gen": cmd_mesh_gen,
    "analyze": cmd_analyze,
    "fortin apply": cmd_fortin_apply,
    "verify": cmd_verify,
    "study convergence": cmd_study_convergence,
    "study stability": cmd_study_stability,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = resolve_config(args)
    except UsageError as exc:
        print(f"svfortin: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _set_threads(cfg.threads)
    from .harness import ConfigurationError
    from .mesh import MeshError

    try:
        return COMMANDS[cfg.command](cfg)
    except (UsageError, ConfigurationError, MeshError, FileNotFoundError) as exc:
        print(f"svfortin: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
