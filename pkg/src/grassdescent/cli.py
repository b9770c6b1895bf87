"""Batch front end: ``solve``, ``verify`` and ``compare`` on a flat config file.

Config format: one ``key = value`` per line, ``#`` starts a comment. Unknown
keys are rejected. Relative paths are resolved against the config file.

Exit codes: 0 converged/pass, 2 not converged (or a verdict failed),
3 diverged, 4 usage or configuration error.
"""
import argparse
import csv
import io
import itertools
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics, operators, problems, solvers
from .errors import ConfigError, GrassDescentError, InsufficientData
from .manifold import subspace_distance
from .record import CSV_COLUMNS, ConvergenceRecord, row_from_mapping

EXIT_OK, EXIT_NOCONV, EXIT_DIVERGED, EXIT_USAGE = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


def _positive(kind):
    def parse(text):
        v = kind(text)
        if not v > 0:
            raise ValueError(f"must be positive, got {text}")
        return v
    return parse


def _potential(text):
    if text in operators.POTENTIALS:
        return text
    if text.startswith("diagonal:"):
        try:
            values = [float(v) for v in text[len("diagonal:"):].split(",")]
        except ValueError:
            raise ValueError(f"bad diagonal list in {text!r}") from None
        if not values:
            raise ValueError("empty diagonal list")
        return text
    raise ValueError(f"expected zero, harmonic, well or diagonal:<list>, got {text!r}")


def _unit_interval(text):
    v = float(text)
    if not 0 < v < 1:
        raise ValueError(f"must lie in (0, 1), got {text}")
    return v


_ALGOS = _choice("alg1", "alg2", "alg3", "scf")
_ORTHO = _choice("gram_schmidt", "cholesky", "rayleigh_ritz")

# key -> (parser, default)
SCHEMA = {
    "run.name": (str, None),
    "run.out_dir": (str, "out"),
    "report.svg": (_bool, False),
    "oracle.enabled": (_bool, True),
    "grid.n": (int, 400),
    "grid.a": (float, -10.0),
    "grid.b": (float, 10.0),
    "operator.potential": (_potential, "harmonic"),
    "precond.variant": (_choice("identity", "shifted", "inverse_a"), "shifted"),
    "precond.shift": (float, 1.0),
    "precond.alpha": (_positive(float), 1.0),
    "problem.kind": (_choice("simplified", "toy_lda"), "simplified"),
    "problem.N": (_positive(int), 4),
    "problem.kappa": (float, 0.5),
    "solver.algorithm": (_ALGOS, "alg1"),
    "solver.max_iters": (_positive(int), 500),
    "solver.tol": (_positive(float), 1e-10),
    "solver.ortho": (_ORTHO, "gram_schmidt"),
    "solver.linesearch": (_choice("off", "armijo"), "off"),
    "solver.armijo.c1": (_unit_interval, 1e-4),
    "solver.armijo.shrink": (_unit_interval, 0.5),
    "solver.armijo.max_backtracks": (int, 30),
    "solver.step_t": (float, 1.0),
    "solver.seed": (int, 0),
    "scf.inner.algorithm": (_choice("alg1", "alg2", "alg3"), "alg1"),
    "scf.inner.max_iters": (_positive(int), 200),
    "scf.inner.tol": (_positive(float), 1e-10),
    "scf.inner.ortho": (_ORTHO, "gram_schmidt"),
    "scf.inner.step_t": (float, 1.0),
    "scf.adaptive_tol": (_bool, True),
    "init.kind": (_choice("auto", "random", "perturbed_oracle"), "auto"),
    "init.scale": (_positive(float), 0.2),
    "verify.trials": (_positive(int), 8),
}


@dataclass
class RunConfig:
    """Typed configuration; ``values`` holds every schema key."""

    values: dict
    source: Path = None
    explicit: set = field(default_factory=set)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def base_dir(self):
        return self.source.parent if self.source is not None else Path.cwd()

    @property
    def out_dir(self):
        out = Path(self["run.out_dir"])
        return out if out.is_absolute() else self.base_dir / out

    def with_overrides(self, seed=None, out=None):
        values = dict(self.values)
        if seed is not None:
            values["solver.seed"] = int(seed)
        if out is not None:
            values["run.out_dir"] = str(Path(out).resolve())
        return RunConfig(values, self.source, set(self.explicit))


def parse_config_text(text, name="run", source=None):
    values = {key: default for key, (_, default) in SCHEMA.items()}
    explicit = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", "parse-error", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"empty key or value in {raw.strip()!r}", "parse-error", lineno)
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", "unknown-key", lineno)
        if key in explicit:
            raise ConfigError(f"duplicate key {key!r}", "parse-error", lineno)
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", "type-error", lineno) from None
        explicit.add(key)
    if values["run.name"] is None:
        values["run.name"] = name
    return RunConfig(values, source, explicit)


def parse_config(path):
    """Read and validate a config file; absent keys take their defaults."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}", "parse-error") from None
    return parse_config_text(text, path.stem, path.resolve())


# ---------------------------------------------------------------------------
# fixture assembly
# ---------------------------------------------------------------------------

@dataclass
class Fixture:
    problem: object
    precond: object
    start: np.ndarray
    cfg: solvers.SolverConfig
    oracle: object = None


def build_operator(cfg):
    pot = cfg["operator.potential"]
    if pot.startswith("diagonal:"):
        return operators.build_diagonal_operator([float(v) for v in pot[9:].split(",")])
    grid = operators.build_grid(cfg["grid.n"], cfg["grid.a"], cfg["grid.b"])
    return operators.build_schrodinger_1d(grid, operators.POTENTIALS[pot])


def solver_config(cfg, algorithm=None):
    linesearch = None
    if cfg["solver.linesearch"] == "armijo":
        linesearch = solvers.Armijo(cfg["solver.armijo.c1"], cfg["solver.armijo.shrink"],
                                    cfg["solver.armijo.max_backtracks"])
    inner = solvers.SolverConfig(algorithm=cfg["scf.inner.algorithm"],
                                 max_iters=cfg["scf.inner.max_iters"], tol=cfg["scf.inner.tol"],
                                 ortho=cfg["scf.inner.ortho"], step_t=cfg["scf.inner.step_t"],
                                 seed=cfg["solver.seed"])
    return solvers.SolverConfig(algorithm=algorithm or cfg["solver.algorithm"],
                                max_iters=cfg["solver.max_iters"], tol=cfg["solver.tol"],
                                ortho=cfg["solver.ortho"], linesearch=linesearch,
                                step_t=cfg["solver.step_t"], scf_inner=inner,
                                adaptive_inner_tol=cfg["scf.adaptive_tol"], seed=cfg["solver.seed"])


def build_fixture(cfg, algorithm=None):
    A = build_operator(cfg)
    if cfg["problem.kind"] == "simplified":
        p = problems.simplified(A, cfg["problem.N"])
    else:
        p = problems.toy_lda(A, cfg["problem.N"], cfg["problem.kappa"])
    B = operators.build_preconditioner(cfg["precond.variant"], A, cfg["precond.shift"],
                                       cfg["precond.alpha"])
    scfg = solver_config(cfg, algorithm)
    oracle = None
    if cfg["oracle.enabled"] or cfg["init.kind"] == "perturbed_oracle":
        oracle = diagnostics.dense_eigensolve(A, p.n_states)
    start = solvers.initial_frame(p, B, cfg["init.kind"], cfg["solver.seed"], cfg["init.scale"],
                                  None if oracle is None else oracle.frame)
    return Fixture(p, B, start, scfg, oracle if cfg["oracle.enabled"] else None)


def run_fixture(fx):
    """Solve; for toy_lda the oracle is the dense eigenframe of the converged ``A_Phi``."""
    if fx.oracle is None or fx.problem.kind == "simplified":
        phi, rec = solvers.solve(fx.problem, fx.precond, fx.start, fx.cfg, fx.oracle)
        return phi, rec, fx.oracle
    phi, rec = solvers.solve(fx.problem, fx.precond, fx.start, fx.cfg)
    if not rec.converged:
        return phi, rec, None
    ref = diagnostics.dense_eigensolve(problems.gradient_operator(fx.problem, phi),
                                       fx.problem.n_states)
    phi, rec = solvers.solve(fx.problem, fx.precond, fx.start, fx.cfg, ref)
    return phi, rec, ref


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------

def _verdict(name, fn, tolerances, seed, check):
    try:
        measured = fn()
    except (InsufficientData, GrassDescentError) as exc:
        return diagnostics.TheoryVerdict(name, {}, False, tolerances, seed, str(exc))
    return diagnostics.TheoryVerdict(name, measured, bool(check(measured)), tolerances, seed)


def basic_verdicts(fx, rec, ref):
    seed = fx.cfg.seed
    def contraction():
        chi, sd = diagnostics.contraction_estimate(rec)
        return {"chi_hat": chi, "stddev": sd, "converged": int(rec.converged)}

    # a tail of ratios below one means nothing if the errors never went to zero
    out = [_verdict("contraction", contraction,
                    {"chi_hat_below": 1.0, "stddev_below": 0.05}, seed,
                    lambda m: m["converged"] and m["chi_hat"] < 1 and m["stddev"] < 0.05)]
    if ref is not None and ref.spectrum is not None:
        out.append(_verdict("gap", lambda: {"gap": diagnostics.gap_check(ref)[0]},
                            {"gap_above": 1e-8}, seed, lambda m: m["gap"] > 1e-8))
    return out


def full_verdicts(fx, rec, ref, trials):
    seed = fx.cfg.seed
    out = basic_verdicts(fx, rec, ref)

    def equivalence():
        c, C = diagnostics.residual_equivalence(rec)
        return {"c": c, "C": C, "ratio": C / c}

    def quadratic():
        lo, hi = diagnostics.energy_quadraticity(rec, ref, fx.problem)
        return {"q_min": lo, "q_max": hi, "ratio": hi / lo}

    out.append(_verdict("residual_equivalence", equivalence, {"ratio_at_most": 100.0}, seed,
                        lambda m: m["ratio"] <= 100))
    out.append(_verdict("energy_quadraticity", quadratic, {"ratio_at_most": 10.0}, seed,
                        lambda m: m["q_min"] > 0 and m["ratio"] <= 10))
    if ref is not None:
        out.append(_verdict("oracle_residual",
                            lambda: {"residual": diagnostics.oracle_residual(
                                problems.gradient_operator(fx.problem, ref.frame), ref)},
                            {"at_most": 1e-10}, seed, lambda m: m["residual"] <= 1e-10))

        def ellipticity():
            m = {"min_quotient": diagnostics.ellipticity_probe(fx.problem, ref, trials, seed,
                                                                    precond=fx.precond)}
            if fx.problem.kind == "simplified" and ref.gap is not None:
                m["gap"] = ref.gap
            return m

        def elliptic_ok(m):
            if "gap" in m:
                return abs(m["min_quotient"] - m["gap"]) <= 1e-4 * max(abs(m["gap"]), 1e-300)
            return m["min_quotient"] > 0

        out.append(_verdict("ellipticity", ellipticity,
                            {"relative_to_gap": 1e-4} if fx.problem.kind == "simplified"
                            else {"min_above": 0.0}, seed, elliptic_ok))
    return out


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % x


def _atomic_write(path, text, written):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    written.append(path)
    return path


def convergence_csv_text(record):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in record.rows:
        w.writerow([_fmt(getattr(row, name)) for name in CSV_COLUMNS])
    return buf.getvalue()


def verdicts_csv_text(verdicts):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("check", "passed", "measured", "tolerances", "seed", "note"))
    for v in verdicts:
        measured = ";".join(f"{k}={_fmt(x)}" for k, x in v.measured.items())
        tol = ";".join(f"{k}={_fmt(x)}" for k, x in v.tolerances.items())
        w.writerow((v.name, "true" if v.passed else "false", measured, tol,
                    "" if v.seed is None else v.seed, v.note))
    return buf.getvalue()


def svg_text(record, width=640, height=400):
    """Log-scale line chart of the error and residual columns against iteration."""
    series = [(name, color) for name, color in (("subspace_err_l2", "#1f77b4"),
                                                ("subspace_err_bhat", "#ff7f0e"),
                                                ("res_dual", "#2ca02c"))]
    margin = 50
    cols = {name: record.column(name) for name, _ in series}
    finite = np.concatenate([c[np.isfinite(c) & (c > 0)] for c in cols.values()] + [np.ones(0)])
    lo, hi = (np.log10(finite.min()), np.log10(finite.max())) if finite.size else (-1.0, 0.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 1, hi + 1
    nmax = max(len(record) - 1, 1)

    def xy(k, val):
        x = margin + (width - 2 * margin) * k / nmax
        y = height - margin - (height - 2 * margin) * (np.log10(val) - lo) / (hi - lo)
        return f"{x:.2f},{y:.2f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
             f'y2="{height - margin}" stroke="black"/>',
             f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle">iteration</text>',
             f'<text x="5" y="{margin - 10}">log10 (1e{lo:.1f} .. 1e{hi:.1f})</text>']
    for i, (name, color) in enumerate(series):
        c = cols[name]
        pts = [xy(k, v) for k, v in enumerate(c) if np.isfinite(v) and v > 0]
        if not pts:
            continue
        parts.append(f'<polyline fill="none" stroke="{color}" points="{" ".join(pts)}"/>')
        parts.append(f'<text x="{width - margin - 150}" y="{margin + 15 * i}" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def report_text(cfg, fx, phi, rec, verdicts, extra=()):
    last = rec.rows[-1]
    lines = [f"run: {cfg['run.name']}",
             f"problem: {fx.problem.kind} n={fx.problem.operator.n} N={fx.problem.n_states}"
             + (f" kappa={fx.problem.kappa}" if fx.problem.kind == "toy_lda" else ""),
             f"preconditioner: {fx.precond.variant} shift={fx.precond.shift} alpha={fx.precond.alpha}",
             f"algorithm: {fx.cfg.algorithm} tol={fx.cfg.tol:g} max_iters={fx.cfg.max_iters} "
             f"seed={fx.cfg.seed}",
             f"status: {rec.status}" + (f" ({rec.message})" if rec.message else ""),
             f"rows: {len(rec)}",
             f"final energy: {_fmt(last.energy)}",
             f"final dual residual: {_fmt(last.res_dual)}"]
    if last.subspace_err_l2 is not None:
        lines.append(f"final subspace error (l2): {_fmt(last.subspace_err_l2)}")
    lines.extend(extra)
    for v in verdicts:
        measured = ", ".join(f"{k}={_fmt(x)}" for k, x in v.measured.items())
        lines.append(f"verdict {v.name}: {'pass' if v.passed else 'FAIL'} {measured} {v.note}".rstrip())
    return "\n".join(lines) + "\n"


@dataclass
class ReportBundle:
    convergence_csv: Path
    verdicts_csv: Path
    report: Path
    svg: Path = None
    status: str = ""
    exit_code: int = EXIT_OK


def emit_csv(record, verdicts, out_dir, name="run", written=None):
    written = [] if written is None else written
    out_dir = Path(out_dir)
    conv = _atomic_write(out_dir / f"{name}_convergence.csv", convergence_csv_text(record), written)
    ver = _atomic_write(out_dir / f"{name}_verdicts.csv", verdicts_csv_text(verdicts), written)
    return conv, ver


def emit_svg(record, out_dir, name="run", written=None):
    written = [] if written is None else written
    return _atomic_write(Path(out_dir) / f"{name}_convergence.svg", svg_text(record), written)


def read_csv(path):
    """Parse a convergence CSV back into a `ConvergenceRecord`."""
    rec = ConvergenceRecord(status="loaded")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected columns {reader.fieldnames}")
        for values in reader:
            rec.append(row_from_mapping(values))
    return rec


def _status_code(status):
    return {"converged": EXIT_OK, "diverged": EXIT_DIVERGED}.get(status, EXIT_NOCONV)


def _guarded(fn):
    written = []
    try:
        return fn(written)
    except BaseException:
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        raise


def run(cfg, verify=False):
    """Build, solve and (with the oracle enabled) run diagnostics; write the bundle."""
    def body(written):
        fx = build_fixture(cfg)
        phi, rec, ref = run_fixture(fx)
        if fx.oracle is None and ref is None:
            verdicts = basic_verdicts(fx, rec, None)
        elif verify:
            verdicts = full_verdicts(fx, rec, ref, cfg["verify.trials"])
        else:
            verdicts = basic_verdicts(fx, rec, ref)
        name, out = cfg["run.name"], cfg.out_dir
        conv, ver = emit_csv(rec, verdicts, out, name, written)
        svg = emit_svg(rec, out, name, written) if cfg["report.svg"] else None
        rep = _atomic_write(out / f"{name}_report.txt", report_text(cfg, fx, phi, rec, verdicts), written)
        code = _status_code(rec.status)
        if verify and code == EXIT_OK and not all(v.passed for v in verdicts):
            code = EXIT_NOCONV
        return ReportBundle(conv, ver, rep, svg, rec.status, code)
    return _guarded(body)


def compare(cfg):
    """Run alg1, alg2 and alg3 on one fixture; report pairwise final distances."""
    def body(written):
        name, out = cfg["run.name"], cfg.out_dir
        finals, records, extra = {}, {}, []
        base = build_fixture(cfg)
        for alg in ("alg1", "alg2", "alg3"):
            fx = Fixture(base.problem, base.precond, base.start, solver_config(cfg, alg), base.oracle)
            phi, rec, _ = run_fixture(fx)
            finals[alg], records[alg] = phi, rec
            _atomic_write(out / f"{name}_{alg}_convergence.csv", convergence_csv_text(rec), written)
            extra.append(f"{alg}: {rec.status} after {len(rec)} rows")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("pair", "subspace_distance", "chi_hat_first", "chi_hat_second"))
        chis = {}
        for alg, rec in records.items():
            try:
                chis[alg] = diagnostics.contraction_estimate(rec)[0]
            except InsufficientData:
                chis[alg] = None
        for a, b in itertools.combinations(finals, 2):
            d = subspace_distance(finals[a], finals[b], base.problem.h)
            w.writerow((f"{a}-{b}", _fmt(d), _fmt(chis[a]), _fmt(chis[b])))
            extra.append(f"distance {a}-{b}: {_fmt(d)}")
        _atomic_write(out / f"{name}_compare.csv", buf.getvalue(), written)
        _atomic_write(out / f"{name}_compare_report.txt", "\n".join(extra) + "\n", written)
        statuses = [rec.status for rec in records.values()]
        if "diverged" in statuses:
            return EXIT_DIVERGED
        return EXIT_OK if all(s == "converged" for s in statuses) else EXIT_NOCONV
    return _guarded(body)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="grassdescent",
                     description="Preconditioned descent for invariant subspaces.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("solve", "solve one fixture and write the convergence bundle"),
                       ("verify", "solve and run every theory verdict"),
                       ("compare", "run alg1, alg2 and alg3 and compare final subspaces")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config).with_overrides(args.seed, args.out)
        if args.command == "compare":
            code = compare(cfg)
        else:
            bundle = run(cfg, verify=args.command == "verify")
            print(bundle.report.read_text(encoding="utf-8"), end="")
            code = bundle.exit_code
    except ConfigError as exc:
        print(f"config error ({exc.kind}): {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GrassDescentError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return code


if __name__ == "__main__":
    sys.exit(main())
