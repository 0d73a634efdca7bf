"""Command-line front end.

Every subcommand reads an optional flat ``key = value`` config file, writes
UTF-8 CSV files (17 significant digits) into ``--out`` and returns one of
the exit codes below.

====  =====================================================
0     success
1     a verified identity or inequality was violated
2     configuration rejected (bad value, unsupported phase)
3     the solver did not converge
4     a referenced solution file is missing
====  =====================================================
"""

from __future__ import annotations

import argparse
import ast
import math
import sys
from pathlib import Path

import numpy as np

from . import _io
from .geometry import GraphPatch, curvature_field
from .identities import SUITES, run_all
from .jacobi import verify_jacobi
from .ot2d import (
    OTInstance,
    assignment_agreement,
    c_convexity_check,
    det_form_residual,
    discrete_ot_oracle,
    mtw_scan,
    ot_map,
)
from .solver import (
    DirichletProblem,
    cap_problem,
    perturbed_cap_problem,
    probe_gradient_estimate,
    probe_interior_curvature,
    residual_grid,
    solve,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_MISSING = 4


class ConfigError(ValueError):
    """Rejected configuration; maps to exit code 2."""


# ---------------------------------------------------------------------------
# expressions and config values

_FUNCS = {
    name: getattr(np, name)
    for name in ("sqrt", "sin", "cos", "tan", "arctan", "exp", "log", "abs", "sinh", "cosh", "tanh", "minimum", "maximum")
}
_CONSTS = {"pi": math.pi, "e": math.e}
_ALLOWED = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
)


def evaluate(expr: str, variables: dict | None = None):
    """Evaluate an arithmetic expression over numbers, ``pi``, ``e``, numpy math functions and ``variables``."""
    variables = variables or {}
    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {expr!r}") from exc
    names = {**_CONSTS, **_FUNCS, **variables}
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ConfigError(f"disallowed syntax {type(node).__name__} in {expr!r}")
        if isinstance(node, ast.Name) and node.id not in names:
            raise ConfigError(f"unknown name {node.id!r} in {expr!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError(f"only {sorted(_FUNCS)} may be called in {expr!r}")
    with np.errstate(all="ignore"):
        return eval(compile(tree, "<config>", "eval"), {"__builtins__": {}}, names)


class Config:
    """Typed access to a flat key=value mapping, recording which keys were used."""

    def __init__(self, values: dict | None = None, base: Path | None = None):
        self.values = dict(values or {})
        self.base = base or Path.cwd()

    @classmethod
    def load(cls, path) -> "Config":
        if path is None:
            return cls()
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            return cls(_io.read_kv(path), path.parent)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def has(self, key) -> bool:
        return key in self.values

    def str(self, key, default=None):
        return self.values.get(key, default)

    def float(self, key, default=None):
        if key not in self.values:
            return default
        try:
            return float(evaluate(self.values[key]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: expected a number, got {self.values[key]!r}") from exc

    def int(self, key, default=None):
        val = self.float(key, None)
        if val is None:
            return default
        if val != int(val):
            raise ConfigError(f"{key}: expected an integer, got {self.values[key]!r}")
        return int(val)

    def floats(self, key, default=None):
        if key not in self.values:
            return default
        return [float(evaluate(p)) for p in self.values[key].split(",") if p.strip()]

    def bool(self, key, default=False):
        if key not in self.values:
            return default
        return self.values[key].strip().lower() in ("1", "true", "yes", "on")

    def path(self, key):
        if key not in self.values:
            return None
        p = Path(self.values[key])
        return p if p.is_absolute() else self.base / p


# ---------------------------------------------------------------------------
# verify-identities


def cmd_verify_identities(cfg: Config, seed: int, out: Path) -> int:
    samples = cfg.int("samples", 10_000)
    dims = range(cfg.int("n_min", 2), cfg.int("n_max", 6) + 1)
    fault_suite = cfg.str("inject_fault")
    if fault_suite is not None and fault_suite not in SUITES:
        raise ConfigError(f"inject_fault: unknown suite {fault_suite!r}; choose from {sorted(SUITES)}")
    results = run_all(seed, samples, dims, fault_suite, cfg.float("fault_size", 1e-3))
    first = None
    summary = []
    for res in results:
        rows = [(res.name, n, m, err, res.tolerance, bad) for n, m, err, bad in res.per_n]
        _io.write_csv(out / f"identities_{res.name}.csv",
                      ["suite", "n", "samples", "max_error", "tolerance", "violations"], rows)
        if res.counterexample is not None:
            n, values, err = res.counterexample
            _io.write_csv(out / f"identities_{res.name}_counterexample.csv",
                          ["suite", "n", "error"] + [f"v{i}" for i in range(values.size)],
                          [(res.name, n, err, *values)])
            if first is None:
                first = res
        summary.append((res.name, res.violations, res.max_error, res.tolerance, "pass" if res.ok else "FAIL"))
        print(f"{res.name:18s} {'pass' if res.ok else 'FAIL'}  max error {res.max_error:.3g}  "
              f"violations {res.violations}")
    _io.write_csv(out / "identities_summary.csv", ["suite", "violations", "max_error", "tolerance", "status"], summary)
    if first is not None:
        n, values, err = first.counterexample
        print(f"first counterexample: suite={first.name} n={n} error={err:.17g} values="
              + ",".join(_io.fmt(v) for v in values))
        return EXIT_VIOLATION
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify-jacobi


def cmd_verify_jacobi(cfg: Config, seed: int, out: Path) -> int:
    n = cfg.int("n", 3)
    mode = cfg.str("mode", "critical")
    theta = cfg.float("theta", None)
    try:
        report = verify_jacobi(
            n,
            theta,
            cfg.int("samples", 10_000),
            cfg.float("epsilon", 1.0 / 17.0),
            cfg.float("J", None),
            np.random.default_rng(seed),
            mode=mode,
            keep_rows=True,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    header = ["sample"] + [f"kappa{i + 1}" for i in range(n)] + ["slack"]
    _io.write_csv(out / "jacobi.csv", header, [(s, *k, sl) for s, k, sl in report.rows])
    print(report.summary())
    if not report.ok:
        s, k, sl = report.failures[0]
        print(f"first counterexample: sample={s} slack={sl:.17g} kappa=" + ",".join(_io.fmt(v) for v in k))
        return EXIT_VIOLATION
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve


def _parse_domain(text: str):
    lower, upper = [], []
    for part in text.split(","):
        if ":" not in part:
            raise ConfigError(f"domain: expected 'lo:hi, lo:hi, ...', got {text!r}")
        lo, hi = part.split(":", 1)
        lower.append(float(evaluate(lo)))
        upper.append(float(evaluate(hi)))
    return lower, upper


def _grid_function(expr: str, coords: np.ndarray) -> np.ndarray:
    n = coords.shape[-1]
    names = {f"x{i + 1}": coords[..., i] for i in range(n)}
    names.update(zip("xyz", (coords[..., i] for i in range(n))))
    names["r"] = np.sqrt(np.sum(coords**2, axis=-1))
    val = evaluate(expr, names)
    return np.broadcast_to(np.asarray(val, dtype=float), coords.shape[:-1]).copy()


def _read_grid_csv(path: Path, template: GraphPatch) -> np.ndarray:
    header, rows = _io.read_csv(path)
    n = template.n
    try:
        ucol = header.index("u")
    except ValueError as exc:
        raise ConfigError(f"{path}: no 'u' column") from exc
    out = np.full(template.u.shape, np.nan)
    origin = np.asarray(template.origin)
    for row in rows:
        x = np.array([float(v) for v in row[:n]])
        idx = np.rint((x - origin) / template.spacing).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(template.u.shape)):
            continue
        out[tuple(idx)] = float(row[ucol])
    return out


def build_problem(cfg: Config) -> DirichletProblem:
    """Dirichlet problem from ``domain``, ``spacing``, ``theta``, ``boundary`` and friends."""
    for key in ("domain", "spacing", "theta", "boundary"):
        if not cfg.has(key):
            raise ConfigError(f"problem config needs '{key}'")
    lower, upper = _parse_domain(cfg.str("domain"))
    spacing = cfg.float("spacing")
    theta = cfg.float("theta")
    n = len(lower)
    if not abs(theta) < n * math.pi / 2:
        raise ConfigError(f"theta must satisfy |theta| < n*pi/2 = {n * math.pi / 2:.17g}")
    try:
        template = GraphPatch.from_function(lambda X: np.zeros(X.shape[:-1]), lower, upper, spacing)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    coords = template.coords()
    source = cfg.str("boundary")
    if source.startswith("file:"):
        path = Path(source[5:].strip())
        path = path if path.is_absolute() else cfg.base / path
        if not path.exists():
            raise ConfigError(f"boundary file {path} not found")
        boundary = _read_grid_csv(path, template)
    else:
        boundary = _grid_function(source, coords)
    exact = _grid_function(cfg.str("exact"), coords) if cfg.has("exact") else None
    initial = None
    if cfg.bool("warm_start"):
        initial = exact if exact is not None else boundary
    steps = cfg.str("continuation_steps", "8")
    continuation = int(steps) if steps.strip().isdigit() else cfg.floats("continuation_steps")
    try:
        return DirichletProblem(lower, upper, spacing, boundary, theta, continuation, initial,
                                tol=cfg.float("tol", 1e-9), max_iter=cfg.int("max_iter", 50), exact=exact)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write_solution(report, out: Path, svg: bool) -> None:
    sol = report.solution
    n = sol.n
    coords = sol.coords().reshape(-1, n)
    u = sol.u.reshape(-1, 1)
    cols = [coords, u]
    header = [f"x{i + 1}" for i in range(n)] + ["u"]
    if report.problem.exact is not None:
        cols.append(report.problem.exact.reshape(-1, 1))
        cols.append((sol.u - report.problem.exact).reshape(-1, 1))
        header += ["u_exact", "error"]
    _io.write_csv(out / "solution.csv", header, np.concatenate(cols, axis=1))
    field = curvature_field(sol)
    res = residual_grid(sol, report.problem.theta)
    fh = [f"x{i + 1}" for i in range(n)] + ["u", "W"] + [f"kappa{i + 1}" for i in range(n)] + ["H", "V", "residual", "admissible"]
    rows = np.concatenate([field.points.reshape(-1, n), field.u.reshape(-1, 1), field.W.reshape(-1, 1),
                           field.kappa.reshape(-1, n), field.H.reshape(-1, 1), field.V.reshape(-1, 1),
                           res.reshape(-1, 1), report.admissible.reshape(-1, 1).astype(float)], axis=1)
    _io.write_csv(out / "field.csv", fh, rows)
    if svg:
        k1 = field.kappa[..., 0]
        if n == 3:
            k1 = k1[:, :, k1.shape[2] // 2]
        _io.write_svg_heatmap(out / "kappa1.svg", k1, title="kappa_1")


def _write_history(report, out: Path) -> None:
    _io.write_csv(out / "history.csv", ["phase", "iteration", "max_residual", "step"], report.history)


def cmd_solve(cfg: Config, seed: int, out: Path, svg: bool) -> int:
    if cfg.has("problem"):
        path = cfg.path("problem")
        if not path.exists():
            raise ConfigError(f"problem file {path} not found")
        cfg = Config.load(path)
    problem = build_problem(cfg)
    report = solve(problem)
    _write_history(report, out)
    if not report.converged:
        print(f"solver failed: status={report.status} max residual={report.max_residual:.3g} {report.message}")
        return EXIT_NO_CONVERGENCE
    _write_solution(report, out, svg)
    err = report.error_vs_exact()
    extra = "" if err is None else f" max error vs exact = {err:.17g}"
    print(f"converged: {report.newton_steps} Newton steps, max residual = {report.max_residual:.17g}{extra}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# probe


def _load_solution(cfg: Config):
    path = cfg.path("solution")
    if path is None:
        return None
    if not path.exists():
        raise FileNotFoundError(str(path))
    header, rows = _io.read_csv(path)
    n = header.index("u")
    data = np.array([[float(v) for v in row[: n + 1]] for row in rows])
    axes = [np.unique(data[:, i]) for i in range(n)]
    spacing = float(axes[0][1] - axes[0][0])
    u = np.full(tuple(a.size for a in axes), np.nan)
    idx = tuple(np.rint((data[:, i] - axes[i][0]) / spacing).astype(int) for i in range(n))
    u[idx] = data[:, n]
    if np.any(np.isnan(u)):
        raise ConfigError(f"{path}: not a complete grid")
    return GraphPatch(u, spacing, tuple(a[0] for a in axes))


def cmd_probe(cfg: Config, seed: int, out: Path) -> int:
    inner = cfg.float("inner_radius", 0.25)
    try:
        patch = _load_solution(cfg)
    except FileNotFoundError as exc:
        print(f"missing solution file: {exc}")
        return EXIT_MISSING
    rows = []
    if patch is not None:
        ck = probe_interior_curvature(patch, inner)
        cg = probe_gradient_estimate(patch)
        rows.append(("file", patch.spacing, ck["sup_kappa"], ck["osc_u"], ck["ratio"], cg["grad_norm"], cg["ratio"]))
    else:
        amps = cfg.floats("amplitudes", [0.01, 0.02, 0.03, 0.04, 0.05])
        spacings = cfg.floats("spacings", [1 / 32, 1 / 64])
        theta = cfg.float("theta", math.pi / 2)
        half = cfg.float("half_width", 0.375)
        for a in amps:
            for h in spacings:
                try:
                    prob = perturbed_cap_problem(a, h, theta, 2, half, cfg.int("continuation_steps", 8))
                except ValueError as exc:
                    raise ConfigError(str(exc)) from exc
                rep = solve(prob)
                if not rep.converged:
                    _write_history(rep, out)
                    print(f"solver failed for amplitude {a} spacing {h}: {rep.status}")
                    return EXIT_NO_CONVERGENCE
                ck = probe_interior_curvature(rep, inner)
                cg = probe_gradient_estimate(rep)
                rows.append((a, h, ck["sup_kappa"], ck["osc_u"], ck["ratio"], cg["grad_norm"], cg["ratio"]))
    _io.write_csv(out / "probe.csv",
                  ["amplitude", "spacing", "sup_kappa", "osc_u", "kappa_ratio", "grad_norm", "grad_ratio"], rows)
    for r in rows:
        print("amplitude=%s spacing=%s sup|kappa|=%.6g osc=%.6g |Du(0)|/osc=%.6g" % (_io.fmt(r[0]), _io.fmt(r[1]), r[2], r[3], r[6]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# ot


def cmd_ot(cfg: Config, seed: int, out: Path) -> int:
    theta = cfg.float("theta", math.pi / 3)
    if not 0 < theta < math.pi / 2:
        raise ConfigError("ot needs 0 < theta < pi/2")
    try:
        patch = _load_solution(cfg)
    except FileNotFoundError as exc:
        print(f"missing solution file: {exc}")
        return EXIT_MISSING
    if patch is None:
        spacing = cfg.float("spacing", 1 / 128)
        rep = solve(cap_problem(theta, 2, cfg.float("half_width", 0.375), spacing, cfg.int("continuation_steps", 8)))
        if not rep.converged:
            _write_history(rep, out)
            print(f"solver failed: {rep.status}")
            return EXIT_NO_CONVERGENCE
        patch = rep.solution
    if patch.n != 2:
        raise ConfigError("ot needs a two-dimensional solution")
    target = 1.0 / math.cos(theta) ** 2
    tmap = ot_map(patch, theta)
    dev = tmap.det_DT - target
    n_pts = tmap.det_points.reshape(-1, 2)
    _io.write_csv(out / "ot_consistency.csv", ["x1", "x2", "det_DT", "residual", "det_form_residual"],
                  np.column_stack([n_pts, tmap.det_DT.reshape(-1), dev.reshape(-1),
                                   det_form_residual(patch, theta)[1:-1, 1:-1].reshape(-1)]))
    max_dev = float(np.max(np.abs(dev)))
    print(f"measure preservation: max |det DT - 1/cos^2 Theta| = {max_dev:.17g}")
    ok = max_dev < cfg.float("det_tolerance", 5e-2)
    cconv = bool(np.all(c_convexity_check(patch, theta)))
    print(f"c-convex everywhere: {cconv}")

    # discrete assignment between a source grid and its image under T
    from scipy.interpolate import RegularGridInterpolator

    side = int(round(math.sqrt(cfg.int("points", 100))))
    half = cfg.float("source_half_width", 0.2)
    g = np.linspace(-half, half, side)
    src = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    axes = [a[1:-1] for a in patch.axes()]
    tgt = np.column_stack([RegularGridInterpolator(axes, tmap.T[..., k], method="cubic")(src) for k in range(2)])
    inst = discrete_ot_oracle(OTInstance(theta, src, tgt))
    agree = assignment_agreement(inst, np.arange(len(src)))
    inst.to_csv(out / "ot_assignment.csv")
    print(f"assignment agrees with T on {agree:.4f} of {len(src)} points")
    ok = ok and agree >= cfg.float("agreement", 0.95)

    phases = cfg.floats("mtw_phases", [k * math.pi / 12 for k in range(1, 6)])
    scan = mtw_scan(phases, cfg.int("mtw_trials", 1000), np.random.default_rng(seed))
    _io.write_csv(out / "mtw_scan.csv", ["theta", "min_A", "max_A"], scan)
    neg = all(row[2] < 0 for row in scan)
    print(f"MTW tensor negative at every scanned phase: {neg}")
    ok = ok and neg
    return EXIT_OK if ok else EXIT_VIOLATION


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slcurv", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key=value config file")
    common.add_argument("--seed", type=int, default=0, help="random seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--svg", action="store_true", help="also write an SVG heat map (solve only)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify-identities", parents=[common], help="randomized identity suites")
    sub.add_parser("verify-jacobi", parents=[common], help="sampled Jacobi inequality check")
    sub.add_parser("solve", parents=[common], help="solve a Dirichlet problem")
    sub.add_parser("probe", parents=[common], help="interior curvature and gradient probes")
    sub.add_parser("ot", parents=[common], help="transport-map consistency and MTW scan")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = Config.load(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "verify-identities":
            return cmd_verify_identities(cfg, args.seed, args.out)
        if args.command == "verify-jacobi":
            return cmd_verify_jacobi(cfg, args.seed, args.out)
        if args.command == "solve":
            return cmd_solve(cfg, args.seed, args.out, args.svg)
        if args.command == "probe":
            return cmd_probe(cfg, args.seed, args.out)
        return cmd_ot(cfg, args.seed, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
