"""Command-line front end: ``qostiefel run|compare|sweep <config>``.

Experiment configs are INI-style files::

    [problem]
    problem = laplacian        ; harmonic | hydrogen | matrix_market
    dimension = 1
    n = 63
    N = 4
    shift = auto               ; auto | none | <sigma>

    [init]
    init = orthonormal         ; raw | quasi_stiefel | orthonormal | near_solution
    seed = 7

    [solver]
    epsilon = 1e-5
    inner_policy = tolerance(1e-12, 8)

    [output]
    directory = out

Relative paths are resolved against the directory holding the config file.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import configparser
from dataclasses import dataclass, replace
import json
import math
import os
from pathlib import Path
import re
import sys

import numpy as np

from .baselines import baseline_projected_gradient, reference_eigensolve
from .diagnostics import fit_decay_ratio, write_trace
from .errors import ConfigError, FitError, QOError
from .gallery import auto_shift, build_problem, shift_operator
from .mmio import load_matrix_market
from .solver import INIT_MODES, PROJECTORS, InnerPolicy, SolverConfig, random_block, solve

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_ITER = 2
EXIT_USAGE = 64

GALLERY = ("laplacian", "harmonic", "hydrogen")
SWEEP_PARAMS = ("step_cap", "N", "n", "inner_p")
SUMMARY_FIELDS = ("problem", "dimension", "n", "N", "init", "seed", "converged", "iterations",
                  "ritz_values", "residual_norms", "omega", "omega_fit_residual",
                  "final_orth_error", "final_grad_norm", "shift", "step_cap")
SWEEP_COLUMNS = ("parameter", "value", "status", "converged", "iterations",
                 "final_grad_norm", "final_orth_error", "omega")

_SCHEMA = {
    "problem": {"problem", "dimension", "n", "domain", "N", "shift", "softening", "path"},
    "init": {"init", "eta", "seed"},
    "solver": {"epsilon", "step_cap", "step_mode", "inner_policy", "max_outer",
               "snapshot_stride", "corrector_projector"},
    "output": {"directory", "wall_time"},
}


@dataclass
class ExperimentConfig:
    """A parsed experiment; see the module docstring for the file format."""

    problem: str = "laplacian"
    path: Path = None
    dimension: int = 1
    n: int = 63
    domain: object = None
    N: int = 4
    softening: float = None
    shift: object = "auto"
    init: str = "orthonormal"
    eta: float = 0.1
    seed: int = 0
    solver: SolverConfig = None
    output: Path = Path("out")
    wall_time: bool = True

    def __post_init__(self):
        if self.solver is None:
            self.solver = SolverConfig(seed=self.seed)


class _Fields:
    """Typed access to one config section with line numbers in errors."""

    def __init__(self, parser, section, lines, path):
        self.items = dict(parser.items(section)) if parser.has_section(section) else {}
        self.section = section
        self.lines = lines
        self.path = path

    def fail(self, key, message):
        raise ConfigError(f"[{self.section}] {key}: {message}",
                          line=self.lines.get((self.section, key)), path=self.path)

    def get(self, key, convert, default=None):
        if key not in self.items:
            return default
        raw = self.items[key].strip()
        try:
            return convert(raw)
        except (ValueError, TypeError) as exc:
            self.fail(key, f"cannot interpret {raw!r} ({exc})")


def _key_lines(text):
    """Map ``(section, key)`` to its 1-based line number."""
    out, section = {}, None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", stripped)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"([^=:;#\s][^=:]*?)\s*[=:]", stripped)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip()), lineno)
    return out


def _parse_domain(text):
    parts = [p for p in text.split(";") if p.strip()]
    pairs = []
    for p in parts:
        vals = [float(v) for v in p.replace(",", " ").split()]
        if len(vals) != 2:
            raise ValueError("each interval needs two numbers 'lo, hi'")
        pairs.append(tuple(vals))
    return pairs[0] if len(pairs) == 1 else tuple(pairs)


def _parse_shift(text):
    if text.lower() in ("auto", "none"):
        return text.lower()
    return float(text)


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _parse_cap(text):
    return None if text.lower() == "auto" else float(text)


def load_config(path):
    """Parse an experiment config file.

    Raises
    ------
    ConfigError
        On syntax errors, unknown sections or keys, and bad values; the
        message names the file, line and field.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=path) from exc
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(exc.message.splitlines()[0], line=line, path=path) from None
    lines = _key_lines(text)
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]",
                              line=_section_line(text, section), path=path)
        for key in parser.options(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"[{section}] unknown field {key!r}",
                                  line=lines.get((section, key)), path=path)

    base = path.parent
    prob = _Fields(parser, "problem", lines, path)
    init = _Fields(parser, "init", lines, path)
    solv = _Fields(parser, "solver", lines, path)
    outp = _Fields(parser, "output", lines, path)

    problem = prob.get("problem", str, "laplacian").lower()
    mm_path = prob.get("path", lambda s: base / s)
    if problem == "matrix_market":
        if mm_path is None:
            prob.fail("problem", "matrix_market needs a 'path' field")
    elif problem in GALLERY:
        if mm_path is not None:
            prob.fail("path", "give either a gallery problem or a matrix file, not both")
    else:
        prob.fail("problem", f"expected one of {GALLERY + ('matrix_market',)}, got {problem!r}")

    init_mode = init.get("init", str, "orthonormal")
    if init_mode not in INIT_MODES:
        init.fail("init", f"expected one of {INIT_MODES}, got {init_mode!r}")
    seed = init.get("seed", int, 0)
    eta = init.get("eta", float, 0.1)
    if not eta > 0:
        init.fail("eta", "must be positive")

    kw = {"seed": seed}
    for key, conv in (("epsilon", float), ("max_outer", int), ("snapshot_stride", int)):
        value = solv.get(key, conv)
        if value is not None:
            kw[key] = value
    cap = solv.get("step_cap", _parse_cap)
    if cap is not None:
        kw["step_cap"] = cap
    mode = solv.get("step_mode", str)
    if mode is not None:
        m = re.fullmatch(r"fixed\s*\(\s*([^)]+)\)", mode)
        if mode == "adaptive":
            kw["step_mode"] = "adaptive"
        elif m:
            kw["step_mode"] = "fixed"
            kw["fixed_step"] = solv.get("step_mode", lambda s: float(m.group(1)))
        else:
            solv.fail("step_mode", f"expected 'adaptive' or 'fixed(s)', got {mode!r}")
    policy = solv.get("inner_policy", InnerPolicy.parse)
    if policy is not None:
        kw["inner_policy"] = policy
    proj = solv.get("corrector_projector", str)
    if proj is not None:
        if proj not in PROJECTORS:
            solv.fail("corrector_projector", f"expected one of {PROJECTORS}")
        kw["corrector_projector"] = proj
    try:
        solver_cfg = SolverConfig(**kw)
    except QOError as exc:
        raise ConfigError(f"[solver] {exc}", path=path) from None

    cfg = ExperimentConfig(
        problem=problem,
        path=mm_path,
        dimension=prob.get("dimension", int, 1),
        n=prob.get("n", int, 63),
        domain=prob.get("domain", _parse_domain),
        N=prob.get("N", int, 4),
        softening=prob.get("softening", float),
        shift=prob.get("shift", _parse_shift, "auto"),
        init=init_mode,
        eta=eta,
        seed=seed,
        solver=solver_cfg,
        output=outp.get("directory", lambda s: base / s, base / f"{path.stem}-out"),
        wall_time=outp.get("wall_time", _parse_bool, True),
    )
    if cfg.N < 1:
        prob.fail("N", "must be >= 1")
    return cfg


def _section_line(text, section):
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip() == f"[{section}]":
            return lineno
    return None


def build_operator(cfg):
    """Build and shift the operator described by ``cfg``."""
    if cfg.problem == "matrix_market":
        H = load_matrix_market(cfg.path)
    else:
        H = build_problem(cfg.problem, cfg.dimension, cfg.n, domain=cfg.domain,
                          softening=cfg.softening)
    if cfg.N > H.dim:
        raise ConfigError(f"[problem] N: {cfg.N} exceeds operator dimension {H.dim}")
    if cfg.shift == "auto":
        H, _ = auto_shift(H)
    elif cfg.shift != "none":
        H = shift_operator(H, cfg.shift)
    return H


def initial_block(cfg, H, mode=None):
    mode = mode or cfg.init
    if mode == "near_solution":
        _, V = reference_eigensolve(H, cfg.N)
        return random_block(H.dim, cfg.N, mode, seed=cfg.seed, eta=cfg.eta, V_ref=V)
    return random_block(H.dim, cfg.N, mode, seed=cfg.seed)


def _omega(result):
    try:
        fit = fit_decay_ratio([r.orth_err_post for r in result.trace])
    except FitError:
        return None, None
    return fit.ratio, fit.residual


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else float(x)


def summarize(cfg, result):
    """Summary dictionary with the fixed field set ``SUMMARY_FIELDS``."""
    omega, fit_res = _omega(result)
    out = {
        "problem": cfg.problem if cfg.problem != "matrix_market" else str(cfg.path),
        "dimension": cfg.dimension,
        "n": cfg.n,
        "N": cfg.N,
        "init": cfg.init,
        "seed": cfg.seed,
        "converged": result.converged,
        "iterations": result.iterations,
        "ritz_values": [float(v) for v in result.ritz_values],
        "residual_norms": [float(v) for v in result.residual_norms],
        "omega": _finite_or_none(omega),
        "omega_fit_residual": _finite_or_none(fit_res),
        "final_orth_error": result.final_orth_error,
        "final_grad_norm": result.trace[-1].grad_norm,
        "shift": float(result.shift),
        "step_cap": float(result.step_cap),
    }
    assert tuple(out) == SUMMARY_FIELDS
    return out


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def _trace_for_output(cfg, trace):
    if cfg.wall_time:
        return trace
    return [replace(r, wall_time_s=0.0) for r in trace]


def execute_run(cfg):
    """Run one experiment and write ``trace.csv`` and ``summary.json``.

    Returns ``(exit status, summary)``.
    """
    H = build_operator(cfg)
    U0 = initial_block(cfg, H)
    result = solve(H, U0, cfg.solver)
    cfg.output.mkdir(parents=True, exist_ok=True)
    write_trace(_trace_for_output(cfg, result.trace), cfg.output / "trace.csv")
    summary = summarize(cfg, result)
    _write_json(cfg.output / "summary.json", summary)
    return (EXIT_OK if result.converged else EXIT_MAX_ITER), summary


def _report(exc):
    print(f"qostiefel: error: {exc}", file=sys.stderr)
    return EXIT_ERROR


def cmd_run(config_path):
    """Exit status 0 on convergence, 2 when ``max_outer`` is hit, 1 on error."""
    try:
        status, _ = execute_run(load_config(config_path))
    except (QOError, OSError) as exc:
        return _report(exc)
    return status


def reduction_ratio(random_count, special_count):
    """``(random - special) / random``, e.g. counts (100, 80) give 0.2."""
    if random_count <= 0:
        return None
    return (random_count - special_count) / random_count


def _max_rel_diff(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), np.finfo(float).tiny)))


def cmd_compare(config_path):
    """Configured init vs near-solution init vs the re-orthonormalizing baseline.

    Writes ``comparison.json``; exit status 0 iff all three runs converge.
    """
    try:
        cfg = load_config(config_path)
        H = build_operator(cfg)
        lam, _ = reference_eigensolve(H, cfg.N)
        lam = lam + H.shift
        U0 = initial_block(cfg, H)
        runs = {
            "configured": solve(H, U0, cfg.solver),
            "near_solution": solve(H, initial_block(cfg, H, "near_solution"), cfg.solver),
            "baseline": baseline_projected_gradient(H, U0, cfg.solver),
        }
        cfg.output.mkdir(parents=True, exist_ok=True)
        for name, res in runs.items():
            write_trace(_trace_for_output(cfg, res.trace), cfg.output / f"trace_{name}.csv")
        iters = {k: r.iterations for k, r in runs.items()}
        report = {
            "init": cfg.init,
            "eta": cfg.eta,
            "seed": cfg.seed,
            "iterations": iters,
            "converged": {k: r.converged for k, r in runs.items()},
            "reduction_ratio": reduction_ratio(iters["configured"], iters["near_solution"]),
            "reference_values": [float(v) for v in lam],
            "ritz_values": {k: [float(v) for v in r.ritz_values] for k, r in runs.items()},
            "ritz_agreement": {
                "solver_vs_baseline": _max_rel_diff(runs["configured"].ritz_values,
                                                    runs["baseline"].ritz_values),
                "near_solution_vs_configured": _max_rel_diff(runs["near_solution"].ritz_values,
                                                             runs["configured"].ritz_values),
                "solver_vs_reference": _max_rel_diff(runs["configured"].ritz_values, lam),
            },
        }
        _write_json(cfg.output / "comparison.json", report)
    except (QOError, OSError) as exc:
        return _report(exc)
    return EXIT_OK if all(report["converged"].values()) else EXIT_MAX_ITER


def _sweep_variant(cfg, parameter, value):
    if parameter == "step_cap":
        cap = _parse_cap(value)
        return replace(cfg, solver=replace(cfg.solver, step_cap=cap))
    if parameter == "N":
        return replace(cfg, N=int(value))
    if parameter == "n":
        return replace(cfg, n=int(value))
    return replace(cfg, solver=replace(cfg.solver, inner_policy=InnerPolicy.fixed(int(value))))


def _thread_cap():
    env = os.environ.get("QOSTIEFEL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def cmd_sweep(config_path, parameter, values):
    """One run per value in ``<output>/<parameter>=<value>/`` plus ``sweep.csv``.

    Runs may execute concurrently, at most ``QOSTIEFEL_THREADS`` at a time.
    Exit status is 1 if any run failed, else 2 if any hit ``max_outer``,
    else 0; an unknown parameter is a usage error (64).
    """
    if parameter not in SWEEP_PARAMS:
        print(f"qostiefel sweep: unknown parameter {parameter!r}; "
              f"expected one of {', '.join(SWEEP_PARAMS)}", file=sys.stderr)
        return EXIT_USAGE
    values = [str(v).strip() for v in values if str(v).strip()]
    if not values:
        print("qostiefel sweep: need at least one value", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(config_path)
        variants = []
        for v in values:
            try:
                sub = _sweep_variant(cfg, parameter, v)
            except (ValueError, QOError) as exc:
                raise ConfigError(f"bad {parameter} value {v!r}: {exc}") from None
            variants.append(replace(sub, output=cfg.output / f"{parameter}={v}"))
    except (QOError, OSError) as exc:
        return _report(exc)

    def one(sub):
        try:
            return execute_run(sub)
        except (QOError, OSError) as exc:
            print(f"qostiefel sweep: {sub.output.name}: {exc}", file=sys.stderr)
            return EXIT_ERROR, None

    workers = min(len(variants), _thread_cap())
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(one, variants))

    rows = [",".join(SWEEP_COLUMNS)]
    for v, (status, summ) in zip(values, outcomes):
        if summ is None:
            rows.append(f"{parameter},{v},{status},,,,,")
            continue
        cells = [parameter, v, str(status), str(summ["converged"]).lower(), str(summ["iterations"]),
                 format(summ["final_grad_norm"], ".17g"), format(summ["final_orth_error"], ".17g"),
                 "" if summ["omega"] is None else format(summ["omega"], ".17g")]
        rows.append(",".join(cells))
    cfg.output.mkdir(parents=True, exist_ok=True)
    (cfg.output / "sweep.csv").write_text("\n".join(rows) + "\n")
    statuses = [s for s, _ in outcomes]
    if EXIT_ERROR in statuses:
        return EXIT_ERROR
    return EXIT_MAX_ITER if EXIT_MAX_ITER in statuses else EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="qostiefel",
                                     description="Quasi-orthogonal block eigensolver experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="solve one configured problem")
    p.add_argument("config")
    p = sub.add_parser("compare", help="configured vs near-solution init vs baseline")
    p.add_argument("config")
    p = sub.add_parser("sweep", help="repeat a run over a list of parameter values")
    p.add_argument("config")
    p.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMS)}")
    p.add_argument("--values", required=True, help="comma-separated values")
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "compare":
        return cmd_compare(args.config)
    return cmd_sweep(args.config, args.param, args.values.split(","))


if __name__ == "__main__":
    sys.exit(main())
