"""Command-line front end: ``unidec <command> [options]``.

Every command resolves its settings from built-in defaults, an optional
INI file (``--config``) and command-line flags, in that order of
precedence, validates them before any computation and writes its outputs
under ``--output``.  Exit codes: 0 success, 2 invalid input, 3 numerical
failure (non-finite values, divergence or a failed check), 64 unknown
command.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__

COMMANDS = ("verify", "sharpness", "solve", "scatter", "norms", "whitney", "report")
EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_USAGE = 0, 2, 3, 64

GRID_DEFAULTS = {"n": 2, "N": 128, "r": 3, "T": 4.0, "Nt": 64, "eps": None}
PRESETS = {
    "dnls1-n2-k3": {"n": 2, "kappa": (3, 3), "lam": (1.0, 1.0), "norm": "X1", "K": 6, "seed": 1},
}


class CheckFailed(RuntimeError):
    """A computed property did not hold."""


# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    command: str
    grid: dict
    K: int
    seed: int
    output: Path
    block: dict = field(default_factory=dict)

    def make_grid(self):
        from .grid import make_grid

        g = self.grid
        return make_grid(int(g["n"]), int(g["N"]), int(g["r"]), float(g["T"]), int(g["Nt"]), g["eps"])

    def family(self):
        from .decomp import build_family

        return build_family(self.make_grid(), self.K)

    def validate(self) -> None:
        """Build the grid and family so bad parameters fail before any compute."""
        if self.command in ("verify", "solve", "scatter", "norms"):
            self.family()
        if self.K < 0:
            raise ValueError("K must be non-negative")

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "grid": dict(self.grid),
            "K": self.K,
            "seed": self.seed,
            "output": str(self.output),
            self.command: dict(self.block),
        }


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise ValueError(f"expected a comma-separated integer list, got {text!r}") from exc


def _float(text: Any) -> float:
    try:
        return float(text)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"expected a number, got {text!r}") from exc


def _read_ini(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep N and Nt distinct
    if path:
        p = Path(path)
        if not p.is_file():
            raise ValueError(f"config file {path} not found")
        try:
            cp.read(p)
        except configparser.Error as exc:
            raise ValueError(f"malformed config: {exc}") from exc
    return cp


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cp = _read_ini(getattr(args, "config", None))
    grid = dict(GRID_DEFAULTS)
    preset = PRESETS.get(getattr(args, "preset", None) or "", {})
    if preset:
        grid["n"] = preset["n"]
    if cp.has_section("grid"):
        for key, val in cp.items("grid"):
            if key not in grid:
                raise ValueError(f"unknown grid key {key!r}")
            grid[key] = val
    for key in ("n", "N", "r", "T", "Nt"):
        flag = getattr(args, f"grid_{key}", None)
        if flag is not None:
            grid[key] = flag
    if getattr(args, "eps", None):
        grid["eps"] = args.eps
    try:
        for key in ("n", "N", "r", "Nt"):
            grid[key] = int(grid[key])
        grid["T"] = float(grid["T"])
        if isinstance(grid["eps"], str):
            grid["eps"] = [int(v) for v in grid["eps"].split(",")]
    except ValueError as exc:
        raise ValueError(f"malformed grid setting: {exc}") from exc
    fam_K = cp.getint("family", "K", fallback=preset.get("K", 6)) if cp.has_section("family") else preset.get("K", 6)
    K = int(args.K) if getattr(args, "K", None) is not None else fam_K
    seed = cp.getint("run", "seed", fallback=preset.get("seed", 0)) if cp.has_section("run") else preset.get("seed", 0)
    if getattr(args, "seed", None) is not None:
        seed = int(args.seed)
    out = getattr(args, "output", None) or (cp.get("run", "output", fallback="unidec_out") if cp.has_section("run") else "unidec_out")
    block = dict(cp.items(args.command)) if cp.has_section(args.command) else {}
    for key, val in vars(args).items():
        if key in ("command", "config", "output", "seed", "K", "eps") or key.startswith("grid_"):
            continue
        if val is not None:
            block[key] = val
    cfg = ExperimentConfig(args.command, grid, K, seed, Path(out), block)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------- output helpers


def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, payload: dict, cfg: ExperimentConfig) -> Path:
    doc = {"version": __version__, "config": cfg.as_dict(), **payload}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]], cfg: ExperimentConfig) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# unidec {__version__} config={json.dumps(_clean(cfg.as_dict()), sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _read_csv(path: Path) -> list[list[str]]:
    with path.open() as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    return rows[1:]


# ---------------------------------------------------------------- commands


def _params(pairs: Sequence[str] | None) -> dict:
    out: dict = {}
    for item in pairs or ():
        if "=" not in item:
            raise ValueError(f"parameter {item!r} is not key=value")
        key, val = item.split("=", 1)
        try:
            out[key] = float(val) if val not in ("inf", "true", "false") else {"inf": math.inf, "true": True, "false": False}[val]
        except ValueError:
            out[key] = val
        if isinstance(out[key], float) and out[key].is_integer() and key in ("n", "i"):
            out[key] = int(out[key])
    return out


def cmd_verify(cfg: ExperimentConfig) -> int:
    from .estimates import make_spec, maximal_sweep, orthogonality_check, run_estimate

    b = cfg.block
    spec_id = str(b["spec_id"])
    samples = int(b.get("samples", 50))
    if spec_id == "ORTH":
        res = orthogonality_check(n_tuples=int(b.get("tuples", 10_000)), seed=cfg.seed)
        write_json(cfg.output / "verify_ORTH.json", {"result": res.__dict__}, cfg)
        if res.failures_derived or res.failures_spec:
            raise CheckFailed("orthogonality failures")
        return EXIT_OK
    k1 = _int_list(b["k1"]) if b.get("k1") else None
    if spec_id == "MAX" and k1:
        q = _float(b.get("q", 4.0))
        rep = maximal_sweep(k1, q=q, samples=samples, seed=cfg.seed, n=cfg.grid["n"])
    else:
        params = _params(b.get("param"))
        if b.get("q") is not None:
            params["q"] = _float(b["q"])
        params.setdefault("n", cfg.grid["n"])
        spec = make_spec(spec_id, str(b.get("variant") or ""), **params)
        fam = cfg.family()
        ks = None
        if spec.localized:
            ks = [(v,) + (0,) * (spec.params["n"] - 1) for v in (k1 or [0])]
        ball = _float(b["ball"]) if b.get("ball") is not None else None
        rep = run_estimate(spec, fam, samples, cfg.seed, ks, ball, refine=bool(b.get("refine", False)))
    summary = rep.summary()
    name = rep.spec.name
    write_json(cfg.output / f"verify_{name}.json", {"summary": summary}, cfg)
    write_csv(cfg.output / f"verify_{name}.csv", ["id", "k", "seed", "ratio", "normalized"], rep.rows(), cfg)
    if rep.fit is not None:
        write_json(cfg.output / "fits.json", {"id": name, "slope": rep.fit.slope, "stderr": rep.fit.stderr,
                                              "expected_slope": rep.spec.expected_slope, "per_k": summary.get("per_k", {})}, cfg)
    if not np.all(np.isfinite(rep.ratios)):
        raise FloatingPointError("non-finite ratios")
    return EXIT_OK


def cmd_sharpness(cfg: ExperimentConfig) -> int:
    from .estimates import fit_scaling, sharpness_witness

    b = cfg.block
    k1s = _int_list(b.get("k1", "8,16,32,64"))
    q = _float(b.get("q", 4.0))
    vals = [sharpness_witness(k, q=q, n=cfg.grid["n"]) for k in k1s]
    fit = fit_scaling(k1s, vals)
    write_csv(cfg.output / "sharpness.csv", ["k1", "witness"], list(zip(k1s, vals)), cfg)
    write_json(cfg.output / "sharpness.json", {"k1": k1s, "witness": vals, "slope": fit.slope,
                                               "stderr": fit.stderr, "expected_slope": 1.0, "q": q}, cfg)
    return EXIT_OK


def _solver_setup(cfg: ExperimentConfig):
    from .solver import NonlinearitySpec, SolverConfig, normalized_datum

    b = cfg.block
    preset = PRESETS.get(str(b.get("preset") or "dnls1-n2-k3"))
    if preset is None:
        raise ValueError(f"unknown preset {b.get('preset')!r}; known: {', '.join(PRESETS)}")
    n = cfg.grid["n"]
    if n != preset["n"]:
        raise ValueError(f"preset needs n={preset['n']}")
    nl = NonlinearitySpec.dnls1(n, preset["kappa"], preset["lam"])
    sc = SolverConfig(
        nl,
        delta=_float(b.get("delta", 1e-3)),
        norm=str(b.get("norm") or preset["norm"]),
        max_iter=int(b.get("max_iter", 8)),
        tol=_float(b.get("tol", 1e-12)),
        padding=int(b.get("padding", 2)),
    )
    fam = cfg.family()
    u0 = normalized_datum(fam.grid, fam, sc.delta, sc.regularity, seed=cfg.seed)
    return sc, fam, u0


def _iterate_rows(diag) -> list[tuple]:
    rows = []
    for m in range(len(diag.norms)):
        def at(seq, j=m):
            return seq[j] if j < len(seq) else ""
        rows.append((m, at(diag.norms), at(diag.differences), at(diag.ratios), at(diag.residuals)))
    return rows


def cmd_solve(cfg: ExperimentConfig) -> int:
    from .grid import write_snapshot
    from .solver import picard_solve

    sc, fam, u0 = _solver_setup(cfg)
    sol = picard_solve(u0, sc, fam)
    d = sol.diagnostics
    write_json(cfg.output / "solve.json", {"solver": sc.as_dict(), "diagnostics": d.as_dict()}, cfg)
    write_csv(cfg.output / "iterates.csv", ["iterate", "norm", "difference", "ratio", "residual"], _iterate_rows(d), cfg)
    write_snapshot(sol.field, cfg.output / "solution.udf")
    if not d.contracting:
        raise FloatingPointError(d.message or "non-contracting iteration")
    return EXIT_OK


def cmd_scatter(cfg: ExperimentConfig) -> int:
    from .solver import picard_solve, scattering_state

    sc, fam, u0 = _solver_setup(cfg)
    sol = picard_solve(u0, sc, fam)
    if not sol.diagnostics.converged:
        write_json(cfg.output / "scatter.json", {"solver": sc.as_dict(), "diagnostics": sol.diagnostics.as_dict()}, cfg)
        raise FloatingPointError("solve did not converge; no scattering states")
    states = {}
    for direction in "+-":
        _, info = scattering_state(sol, direction, fam)
        info["norm_over_delta"] = info["norm"] / sc.delta
        states[direction] = info
    write_json(cfg.output / "scatter.json", {"solver": sc.as_dict(), "diagnostics": sol.diagnostics.as_dict(), "states": states}, cfg)
    rows = [(k, v["norm"], v["norm_over_delta"], v["cauchy"][0], v["cauchy"][1]) for k, v in states.items()]
    write_csv(cfg.output / "scatter.csv", ["direction", "norm", "norm_over_delta", "cauchy_T", "cauchy_T2"], rows, cfg)
    return EXIT_OK


def cmd_norms(cfg: ExperimentConfig) -> int:
    from .decomp import build_family
    from .grid import read_snapshot
    from .norms import besov_norm, modulation_norm, sobolev_norm, working_norm, working_norm_spec

    b = cfg.block
    path = Path(str(b["snapshot"]))
    if not path.is_file():
        raise ValueError(f"snapshot {path} not found")
    f = read_snapshot(path, T=cfg.grid["T"], eps=cfg.grid["eps"])
    fam = build_family(f.grid, cfg.K)
    out: dict = {"snapshot": str(path), "kind": f.kind, "l2": f.l2_norm()}
    if f.kind == "spatial":
        for s in (0.0, 0.5, 1.5):
            out[f"modulation_s{s:g}"] = modulation_norm(f, s, fam)
        out["besov_s0.5"] = besov_norm(f, 0.5)
        out["sobolev_s1"] = sobolev_norm(f, 1.0)
    else:
        name = str(b.get("norm") or "X1")
        res = working_norm(f, working_norm_spec(name, f.grid.n, 3.0 if name in ("X", "X1") else None), fam)
        out[f"working_{name}"] = res.value
        out["breakdown"] = dict(res.rows())
    write_json(cfg.output / "norms.json", out, cfg)
    vals = [v for v in out.values() if isinstance(v, float)]
    if not all(math.isfinite(v) for v in vals):
        raise FloatingPointError("non-finite norm")
    return EXIT_OK


def cmd_whitney(cfg: ExperimentConfig) -> int:
    from . import christ_kiselev as ck

    b = cfg.block
    depth = int(b.get("depth", 10))
    check = ck.check_whitney(depth)
    pairs = ck.whitney_decompose(depth)
    write_csv(cfg.output / "whitney_pairs.csv", ["level", "I_offset", "J_offset"],
              [(p.level, p.I.offset, p.J.offset) for p in pairs], cfg)
    uncovered = {str(j): float(ck.uncovered_area(j)) for j in range(1, depth + 1)}
    depths = _int_list(b["defect_depths"]) if b.get("defect_depths") else list(range(max(2, depth - 4), depth + 1))
    decay = ck.defect_decay(depths, seed=cfg.seed)
    write_csv(cfg.output / "whitney_defect.csv", ["depth", "defect"], decay, cfg)
    write_json(cfg.output / "whitney.json", {"check": check.as_dict(), "uncovered": uncovered,
                                             "defect": [list(r) for r in decay]}, cfg)
    if not check.ok:
        raise CheckFailed("Whitney property check failed")
    return EXIT_OK


def cmd_report(cfg: ExperimentConfig) -> int:
    from . import plots

    root = cfg.output
    if not root.is_dir():
        raise ValueError(f"output directory {root} does not exist")
    docs = {}
    for p in sorted(root.glob("*.json")):
        if p.name == "report.json":
            continue
        try:
            docs[p.name] = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{p.name} is not valid JSON") from exc
    rows = []
    for name, doc in docs.items():
        for key, val in _flatten(doc):
            if not key.startswith("config.") and not isinstance(val, (list, dict)):
                rows.append((name, key, val))
    write_csv(root / "report.csv", ["source", "key", "value"], rows, cfg)
    figures = []
    for name, doc in docs.items():
        stem = Path(name).stem
        per_k = doc.get("summary", {}).get("per_k") or doc.get("per_k")
        if name.startswith("verify_") and per_k:
            ks = sorted(per_k, key=lambda s: [int(v) for v in s.split()])
            x = [1 + math.hypot(*[int(v) for v in k.split()]) for k in ks]
            y = [per_k[k]["geo_mean_ratio"] for k in ks]
            slope = doc["summary"].get("slope")
            figures.append(plots.loglog_fit(x, y, slope, stem, "<k>", root / f"{stem}.png"))
        elif name == "sharpness.json":
            figures.append(plots.loglog_fit(doc["k1"], doc["witness"], doc["slope"], "sharpness witness", "k1", root / "sharpness.png"))
        elif name in ("solve.json", "scatter.json"):
            d = doc["diagnostics"]
            figures.append(plots.semilog_series({"difference": d["differences"], "residual": d["residuals"]},
                                                f"{stem} iterates", "iterate", root / f"{stem}_iterates.png"))
        elif name == "whitney.json":
            dec = doc["defect"]
            figures.append(plots.semilog_series({"defect": [r[1] for r in dec]}, "reconstruction defect",
                                                f"depth - {dec[0][0]}", root / "whitney_defect.png"))
            pairs_csv = root / "whitney_pairs.csv"
            if pairs_csv.is_file():
                pairs = [tuple(int(v) for v in r) for r in _read_csv(pairs_csv)]
                figures.append(plots.whitney_squares(pairs, root / "whitney_squares.png"))
    write_json(root / "report.json", {"sources": sorted(docs), "figures": [p.name for p in figures], "rows": len(rows)}, cfg)
    return EXIT_OK


def _flatten(obj: Any, prefix: str = ""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}{k}.")
    else:
        yield prefix[:-1], obj


HANDLERS = {
    "verify": cmd_verify,
    "sharpness": cmd_sharpness,
    "solve": cmd_solve,
    "scatter": cmd_scatter,
    "norms": cmd_norms,
    "whitney": cmd_whitney,
    "report": cmd_report,
}


# ---------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [grid], [family], [run] and per-command sections")
    p.add_argument("--output", help="output directory (default unidec_out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", dest="grid_n", type=int)
    p.add_argument("--N", dest="grid_N", type=int)
    p.add_argument("--r", dest="grid_r", type=int)
    p.add_argument("--T", dest="grid_T", type=float)
    p.add_argument("--Nt", dest="grid_Nt", type=int)
    p.add_argument("--eps", type=lambda s: [int(v) for v in s.split(",")])
    p.add_argument("--K", type=int)


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", help=f"nonlinearity preset ({', '.join(PRESETS)})")
    p.add_argument("--delta", type=float)
    p.add_argument("--norm", choices=["X", "Y", "X1", "Y1"])
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--padding", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unidec", description="Frequency-uniform decomposition experiments.")
    parser.add_argument("--version", action="version", version=f"unidec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run one estimate from the catalogue")
    p.add_argument("spec_id")
    p.add_argument("--variant")
    p.add_argument("--q", type=float)
    p.add_argument("--k1", help="comma-separated first box coordinates")
    p.add_argument("--samples", type=int)
    p.add_argument("--ball", type=float)
    p.add_argument("--tuples", type=int)
    p.add_argument("--refine", action="store_true", default=None)
    p.add_argument("--param", action="append", help="extra key=value parameter")
    _common(p)

    p = sub.add_parser("sharpness", help="lower-bound witness for the maximal estimate")
    p.add_argument("--k1")
    p.add_argument("--q", type=float)
    _common(p)

    p = sub.add_parser("solve", help="Picard solve of the small-data problem")
    _solver_flags(p)
    _common(p)

    p = sub.add_parser("scatter", help="solve and extract scattering states")
    _solver_flags(p)
    _common(p)

    p = sub.add_parser("norms", help="norms of a stored field snapshot")
    p.add_argument("snapshot")
    p.add_argument("--norm", choices=["X", "Y", "X1", "Y1"])
    _common(p)

    p = sub.add_parser("whitney", help="Whitney decomposition checks and reconstruction defects")
    p.add_argument("--depth", type=int)
    p.add_argument("--defect-depths", dest="defect_depths")
    _common(p)

    p = sub.add_parser("report", help="aggregate JSON outputs into CSV and figures")
    _common(p)
    return parser


def run_command(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    first = argv[0] if argv else None
    if first is None:
        print(f"unidec: expected a command ({', '.join(COMMANDS)})", file=sys.stderr)
        return EXIT_USAGE
    if not first.startswith("-") and first not in COMMANDS:
        print(f"unidec: unknown command {first!r}", file=sys.stderr)
        return EXIT_USAGE
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        cfg = resolve_config(args)
        return HANDLERS[cfg.command](cfg)
    except (ValueError, KeyError) as exc:
        print(f"unidec: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FloatingPointError, CheckFailed, ArithmeticError) as exc:
        print(f"unidec: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as exc:  # NumericalFailure from the solver
        print(f"unidec: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
