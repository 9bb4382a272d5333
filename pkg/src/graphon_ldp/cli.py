"""Command-line front end: ``graphon-ldp <subcommand> [flags]``.

Exit status: 0 success, 1 usage error, 2 domain/size error, 3 non-convergence
(output is still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, SizeError
from .graphon import StepGraphon

SUBCOMMANDS = ("rate", "minorant", "phase", "solve", "cutdist", "simulate", "validate", "conditional")
CSV_SCHEMA_PREFIX = "graphon-ldp"

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_NONCONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    output_path: str | None = None
    format: str = "json"


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def _round(obj):
    """Round every float to 9 significant digits for stable JSON output."""
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.9g}") if math.isfinite(x) else x
    return obj


def to_json(obj) -> str:
    return json.dumps(_round(obj), indent=2) + "\n"


def to_csv(schema: str, header: list[str], rows: list[list], footer: list[str] = ()) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={CSV_SCHEMA_PREFIX}/{schema}/v1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    for line in footer:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def resolve_threads(value: int | None) -> int:
    if value is None:
        value = int(os.environ.get("GRAPHON_LDP_THREADS", "1"))
    return value if value > 0 else (os.cpu_count() or 1)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


# -- subcommand handlers: each returns (text, exit status) ------------------

def _rate(cfg: RunConfig):
    from .rate import h_p, ip_graphon, ip_scalar

    prm = cfg.params
    if prm.get("graphon"):
        value = ip_graphon(StepGraphon.load(prm["graphon"]), prm["p"])
    elif prm.get("t") is not None:
        value = h_p(prm["t"], prm["p"])
    elif prm.get("u") is not None:
        value = ip_scalar(prm["u"], prm["p"])
    else:
        raise UsageError("rate needs one of --u, --t or --graphon")
    return fmt(value) + "\n", EXIT_OK


def _minorant(cfg: RunConfig):
    from .rate import convex_minorant, h_curve, phase_grid

    p = cfg.params["p"]
    grid = phase_grid(p, cfg.params["grid_size"])
    h = h_curve(grid, p)
    hat = convex_minorant(grid, h)
    rows = [[t, a, b] for t, a, b in zip(grid, h, hat)]
    return to_csv("minorant", ["t", "h", "h_hat"], rows), EXIT_OK


def _phase(cfg: RunConfig):
    from .rate import phase_diagram

    prm = cfg.params
    t_grid = _floats(prm["t"]) if prm.get("t") else None
    diagram = phase_diagram(_floats(prm["p"]), t_grid, tol=prm["tol"],
                            grid_size=prm["grid_size"], t_points=prm["t_grid"])
    if cfg.format == "json":
        return to_json({
            "points": [{"p": q.p, "t": q.t, "h": q.h, "h_hat": q.h_hat, "beta": q.beta,
                        "phase": q.phase.value} for q in diagram.points],
            "double_transition": {fmt(p): v for p, v in diagram.double_transition.items()},
        }), EXIT_OK
    text = diagram.to_csv()
    for p, flag in diagram.double_transition.items():
        text += f"# double_transition p={fmt(p)} {fmt(flag)}\n"
    return text, EXIT_OK


def _solve(cfg: RunConfig):
    from .solver import solve_phi

    prm = cfg.params
    res = solve_phi(prm["p"], prm["t"], prm["blocks"], seed=cfg.seed, method=prm["method"],
                    threads=resolve_threads(prm.get("threads")))
    return to_json(res.to_dict()), EXIT_OK if res.converged else EXIT_NONCONVERGED


def _cutdist(cfg: RunConfig):
    from .cut import cut_distance, delta_cut

    prm = cfg.params
    f, g = StepGraphon.load(prm["first"]), StepGraphon.load(prm["second"])
    if prm["delta"]:
        res = delta_cut(f, g, budget=prm["budget"], seed=cfg.seed, blocks=prm.get("blocks"))
    else:
        res = cut_distance(f, g, seed=cfg.seed)
    return to_json(res.to_dict()), EXIT_OK


def _tilt(prm, t):
    from .solver import candidate_constant

    if prm.get("tilt"):
        return StepGraphon.load(prm["tilt"])
    return candidate_constant(t)


def _simulate(cfg: RunConfig):
    from .sampler import tilted_tail_estimate

    prm = cfg.params
    est = tilted_tail_estimate(prm["n"], prm["p"], prm["t"], _tilt(prm, prm["t"]),
                               prm["samples"], cfg.seed)
    return to_json(est.to_dict()), EXIT_OK


def _validate(cfg: RunConfig):
    from .sampler import exact_tail, tilted_tail_estimate

    prm = cfg.params
    n, p = prm["n"], prm["p"]
    if prm.get("min_triangles") is not None:
        t = prm["min_triangles"] / n**3
    elif prm.get("t") is not None:
        t = prm["t"]
    else:
        raise UsageError("validate needs --min-triangles or --t")
    exact = exact_tail(n, p, t)
    tilt = StepGraphon.load(prm["tilt"]) if prm.get("tilt") else StepGraphon.constant(p)
    rows = []
    for k in range(prm["seeds"]):
        est = tilted_tail_estimate(n, p, t, tilt, prm["samples"], cfg.seed + k)
        prob = est.probability
        se = prob * est.std_error * n * n
        z = (prob - exact) / se if se > 0 else (0.0 if prob == exact else math.inf)
        rows.append([cfg.seed + k, exact, prob, se, z, abs(z) <= 3.0])
    if cfg.format == "json":
        keys = ["seed", "exact", "estimate", "std_error", "z", "within_3se"]
        return to_json([dict(zip(keys, r)) for r in rows]), EXIT_OK
    return to_csv("validate", ["seed", "exact", "estimate", "std_error", "z", "within_3se"], rows), EXIT_OK


def _conditional(cfg: RunConfig):
    from .sampler import conditional_structure_experiment
    from .solver import candidate_clique, candidate_constant, solve_phi

    prm = cfg.params
    n, p, t, k = prm["n"], prm["p"], prm["t"], prm["blocks"]
    refs, labels = [], []
    for name in prm["refs"].split(","):
        name = name.strip()
        if name == "constant":
            refs.append(candidate_constant(t))
        elif name == "clique":
            refs.append(candidate_clique(t))
        elif name == "optimizer":
            refs.append(solve_phi(p, t, k, seed=cfg.seed).optimizer)
        else:
            refs.append(StepGraphon.load(name))
        labels.append(name)
    rows = conditional_structure_experiment(n, p, t, refs, k, prm["samples"], cfg.seed,
                                            labels=labels, budget=prm["budget"],
                                            max_distance_samples=prm.get("max_distance_samples"))
    if cfg.format == "json":
        return to_json(rows), EXIT_OK
    header = ["ref_label", "mean_distance", "std_error", "accepted_samples"]
    footer = [r["warning"] for r in rows[:1] if r["warning"]]
    return to_csv("conditional", header, [[r[h] for h in header] for r in rows], footer), EXIT_OK


HANDLERS = {
    "rate": _rate, "minorant": _minorant, "phase": _phase, "solve": _solve,
    "cutdist": _cutdist, "simulate": _simulate, "validate": _validate,
    "conditional": _conditional,
}
DEFAULT_FORMAT = {"minorant": "csv", "phase": "csv", "validate": "csv", "conditional": "csv"}


def run(config: RunConfig, stdout=None) -> int:
    """Dispatch ``config`` to its handler and write the result."""
    stdout = sys.stdout if stdout is None else stdout
    handler = HANDLERS.get(config.subcommand)
    if handler is None:
        print(f"unknown subcommand {config.subcommand!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        text, status = handler(config)
    except (UsageError, OSError, json.JSONDecodeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, SizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    if config.output_path:
        Path(config.output_path).write_text(text)
    else:
        stdout.write(text)
    return status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--output", "-o", dest="output_path")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads, 0 = all cores (default: $GRAPHON_LDP_THREADS or 1)")

    parser = _Parser(prog="graphon-ldp", description="Triangle upper-tail large deviations at desk scale.")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    s = sub.add_parser("rate", parents=[common], help="evaluate I_p(u), h_p(t) or I_p of a graphon")
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--u", type=float)
    s.add_argument("--t", type=float)
    s.add_argument("--graphon")

    s = sub.add_parser("minorant", parents=[common], help="sampled h_p and its convex minorant")
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--grid-size", type=int, default=2000)

    s = sub.add_parser("phase", parents=[common], help="phase classification table")
    s.add_argument("--p", required=True, help="comma-separated edge probabilities")
    s.add_argument("--t", help="comma-separated densities (default: refined grid)")
    s.add_argument("--t-grid", type=int, default=200, help="points of the refined t grid")
    s.add_argument("--grid-size", type=int, default=2000)
    s.add_argument("--tol", type=float, default=1e-9)

    s = sub.add_parser("solve", parents=[common], help="solve the triangle variational problem")
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--blocks", type=int, default=8)
    s.add_argument("--method", choices=("auto", "fixed-point", "gradient"), default="auto")

    s = sub.add_parser("cutdist", parents=[common], help="cut distance between two graphon files")
    s.add_argument("first")
    s.add_argument("second")
    s.add_argument("--delta", action="store_true", help="minimise over block relabellings")
    s.add_argument("--blocks", type=int)
    s.add_argument("--budget", type=int, default=100_000)

    s = sub.add_parser("simulate", parents=[common], help="tilted tail estimate")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--tilt", help="StepGraphon JSON (default: constant (6t)^(1/3))")
    s.add_argument("--samples", type=int, default=10_000)

    s = sub.add_parser("validate", parents=[common], help="exact tail vs tilted estimates")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--min-triangles", type=int)
    s.add_argument("--t", type=float)
    s.add_argument("--tilt")
    s.add_argument("--samples", type=int, default=5000)
    s.add_argument("--seeds", type=int, default=10)

    s = sub.add_parser("conditional", parents=[common], help="conditioned structure distances")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--blocks", type=int, default=8)
    s.add_argument("--samples", type=int, default=2000)
    s.add_argument("--refs", default="constant,clique")
    s.add_argument("--budget", type=int, default=20_000)
    s.add_argument("--max-distance-samples", type=int, default=300)
    return parser


def parse_config(argv=None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    sub = args.pop("subcommand")
    seed = args.pop("seed")
    out = args.pop("output_path")
    fmt_ = args.pop("format") or DEFAULT_FORMAT.get(sub, "json")
    return RunConfig(sub, args, seed, out, fmt_)


def main(argv=None) -> int:
    return run(parse_config(argv))


if __name__ == "__main__":
    raise SystemExit(main())
