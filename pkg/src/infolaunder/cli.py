"""Command-line interface.

Subcommands: optimize, sweep, benchmark, evaluate, quantize, apply.  Exit
codes: 0 success, 1 usage or domain error, 2 numerical failure, 3 I/O or
malformed input file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .bench import (
    QuantizerConfig,
    dirichlet_benchmark,
    monte_carlo_agreement,
    quantize,
    surrogate_extraction,
    sweep,
)
from .engine import OilConfig, fixed_point_residual, objective_arrays, oil_optimize
from .errors import (
    BudgetExceeded,
    DegenerateInputError,
    DomainError,
    FileFormatError,
    LaunderError,
    NumericalFailure,
    PositivityError,
    ShapeError,
)
from .prob import Alphabet, DeterministicModel, Kernel, as_kernel, cascade, normalize, sample
from .special import oil_x, oil_y, oil_y_general, r_from_model

log = logging.getLogger("infolaunder")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
MODES = {"joint": "joint", "output-only": "output_only", "input-only": "input_only"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# helpers


def _load(loader, path):
    """Run a file loader; anything wrong with the file becomes an I/O-class error."""
    try:
        return loader(path)
    except (OSError, FileFormatError):
        raise
    except (LaunderError, ValueError, TypeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from None


def _inline_or_file(text: str):
    """Comma-separated numbers, or a path to a file holding them (JSON list or whitespace/commas)."""
    candidate = Path(text)
    if candidate.exists():
        raw = candidate.read_text().strip()
        if raw.startswith("[") or raw.startswith("{"):
            payload = fio.read_json(candidate)
            values = payload.get("probs", payload.get("values")) if isinstance(payload, dict) else payload
        else:
            values = raw.replace(",", " ").split()
    else:
        values = [v for v in text.split(",") if v.strip()]
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError):
        raise UsageError(f"cannot parse numbers from {text!r}") from None


def _r_argument(text: str):
    path = Path(text)
    if path.exists() and path.read_text().lstrip().startswith("{"):
        return _load(fio.load_distribution, path)
    weights = _inline_or_file(text)
    return normalize(weights, Alphabet.of_size(len(weights)))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.10g" % float(v)


def summary_line(values: dict) -> str:
    return " ".join(f"{k}={_fmt(v)}" for k, v in values.items())


def _model_and_dist(args):
    if args.model is None or args.input_dist is None:
        raise UsageError("--model and --input-dist are required")
    model = _load(fio.load_model, args.model)
    px = _load(fio.load_distribution, args.input_dist)
    return model, px


# ---------------------------------------------------------------------------
# optimize


def solve(px, model, mode: str, beta1: float, beta2: float, config: OilConfig):
    """Dispatch to the right solver.  Returns (k1, k2, objective_trace, delta_trace, converged, b1, b2).

    ``b1``, ``b2`` are the weights actually optimized; a zero weight pins its
    side to the identity and reduces the joint problem to a one-sided one.
    """
    kstar = as_kernel(model)
    ident1, ident2 = Kernel.identity(kstar.input_alphabet), Kernel.identity(kstar.output_alphabet)
    if mode == "output_only":
        beta1 = 0.0
    elif mode == "input_only":
        beta2 = 0.0
    for name, value in (("beta1", beta1), ("beta2", beta2)):
        if not np.isfinite(value) or value < 0:
            raise DomainError(f"{name} must be a finite non-negative number, got {value}")
    if beta1 == 0 and beta2 == 0:
        val = objective_arrays(px.probs, kstar.matrix, ident1.matrix, ident2.matrix, 0.0, 0.0)[0]
        return ident1, ident2, [val], [], True, 0.0, 0.0
    if beta1 == 0:
        if isinstance(model, DeterministicModel):
            res = oil_y(r_from_model(px, model), beta2, max_iters=config.max_iters, tol=config.tol,
                        safeguard=config.safeguard)
        else:
            res = oil_y_general(px, kstar, beta2, max_iters=config.max_iters, tol=config.tol,
                                safeguard=config.safeguard)
        return ident1, res.kernel, res.objective_trace, res.delta_trace, res.converged, 0.0, beta2
    if beta2 == 0:
        res = oil_x(px, model, beta1, max_iters=config.max_iters, tol=config.tol, safeguard=config.safeguard)
        return res.kernel, ident2, res.objective_trace, res.delta_trace, res.converged, beta1, 0.0
    sol = oil_optimize(px, kstar, OilConfig(beta1, beta2, config.max_iters, config.tol, config.restarts,
                                            config.init, config.seed, safeguard=config.safeguard))
    return sol.k1, sol.k2, sol.objective_trace, sol.delta_trace, sol.converged, beta1, beta2


def run_optimize(args) -> int:
    mode = MODES[args.mode]
    if args.r is not None:
        if mode != "output_only":
            raise UsageError("--r is only meaningful with --mode output-only")
        px = _r_argument(args.r)
        model = DeterministicModel(px.alphabet, px.alphabet, tuple(range(px.alphabet.size)))
    else:
        model, px = _model_and_dist(args)
    need = {"joint": ("beta1", "beta2"), "output_only": ("beta2",), "input_only": ("beta1",)}[mode]
    for name in need:
        if getattr(args, name) is None:
            raise UsageError(f"--{name} is required for --mode {args.mode}")
    beta1 = args.beta1 if args.beta1 is not None else 0.0
    beta2 = args.beta2 if args.beta2 is not None else 0.0
    config = OilConfig(1.0, 1.0, max_iters=args.iters, tol=args.tol, restarts=args.restarts, seed=args.seed,
                       init=args.init)
    k1, k2, trace, deltas, converged, b1, b2 = solve(px, model, mode, beta1, beta2, config)
    kstar = as_kernel(model)
    _, ekl, mi_in, mi_out = objective_arrays(px.probs, kstar.matrix, k1.matrix, k2.matrix, 0.0, 0.0)
    residual = fixed_point_residual(px, kstar, k1, k2, b1, b2)
    components = {"utility_kl": ekl, "mi_input": mi_in, "mi_output": mi_out}
    echo = {"mode": args.mode, "beta1": b1, "beta2": b2, "max_iters": args.iters, "tol": args.tol,
            "restarts": args.restarts, "seed": args.seed, "init": args.init}
    payload = fio.solution_payload(k1, k2, cascade(cascade(k1, kstar), k2), objective_trace=trace,
                                   delta_trace=deltas, converged=converged, residual=residual,
                                   config=echo, components=components)
    if args.out:
        fio.write_json(payload, args.out)
    summary = {"objective": trace[-1], "residual": residual, "iterations": len(deltas), "converged": converged}
    summary.update(components)
    summary["initial_delta"] = deltas[0] if deltas else 0.0
    summary["final_delta"] = deltas[-1] if deltas else 0.0
    summary["mean_diag_k1"] = float(np.mean(np.diag(k1.matrix)))
    summary["mean_diag_k2"] = float(np.mean(np.diag(k2.matrix)))
    print(summary_line(summary))
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep and benchmark


def _betas(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse --betas {text!r}") from None


def run_sweep(args) -> int:
    model, px = _model_and_dist(args)
    config = OilConfig(1.0, 1.0, max_iters=args.iters, tol=args.tol, restarts=args.restarts, seed=args.seed)
    curve = sweep(px, model, _betas(args.betas), MODES[args.mode], config, seed=args.seed, n_samples=args.samples)
    text = fio.curve_csv(curve)
    if args.out_csv:
        Path(args.out_csv).write_text(text)
    else:
        sys.stdout.write(text)
    if args.out_svg:
        from .plotting import plot_tradeoff
        plot_tradeoff(curve, args.out_svg)
    return EXIT_OK


def _pairs(text: str):
    pairs = []
    for item in (t for t in text.split(",") if t.strip()):
        try:
            a, b = item.split(":")
            pairs.append((float(a), float(b)))
        except ValueError:
            raise UsageError(f"--dirichlet expects a:b pairs, got {item!r}") from None
    if not pairs:
        raise UsageError("--dirichlet needs at least one a:b pair")
    return pairs


def run_benchmark(args) -> int:
    model, px = _model_and_dist(args)
    rows = dirichlet_benchmark(px, model, _pairs(args.dirichlet), args.replications, args.seed,
                               args.samples, args.beta2)
    text = fio.benchmark_csv(rows)
    if args.out_csv:
        Path(args.out_csv).write_text(text)
    else:
        sys.stdout.write(text)
    if args.out_svg:
        from .plotting import plot_benchmark
        plot_benchmark(rows, args.out_svg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate, quantize, apply


def run_evaluate(args) -> int:
    model, px = _model_and_dist(args)
    sol = _load(fio.load_solution, args.kernels)
    kstar = as_kernel(model)
    k1, k2 = sol["k1"], sol["k2"]
    _, ekl, mi_in, mi_out = objective_arrays(px.probs, kstar.matrix, k1.matrix, k2.matrix, 0.0, 0.0)
    agreement = monte_carlo_agreement(kstar, k1, k2, px, args.samples, args.seed)
    _, fidelity = surrogate_extraction(kstar, k1, k2, px, args.samples, args.seed)
    for key, value in (("utility_kl", ekl), ("mi_input", mi_in), ("mi_output", mi_out),
                       ("agreement", agreement), ("extraction_fidelity", fidelity)):
        print(f"{key}={_fmt(value)}")
    return EXIT_OK


def run_quantize(args) -> int:
    if args.config:
        config = _load(fio.load_quantizer_config, args.config)
    else:
        if args.mu is None or args.sigma is None:
            raise UsageError("quantize needs --mu and --sigma (or --config)")
        config = QuantizerConfig(args.mu, args.sigma, args.n)
    if args.values is None:
        raise UsageError("quantize needs --values")
    indices = quantize(_inline_or_file(args.values), config)
    print(",".join(str(i) for i in indices))
    return EXIT_OK


def run_apply(args) -> int:
    model = _load(fio.load_model, args.model)
    sol = _load(fio.load_solution, args.kernels)
    k1, k2 = sol["k1"], sol["k2"]
    kstar = as_kernel(model)
    if k1.output_alphabet != kstar.input_alphabet or kstar.output_alphabet != k2.input_alphabet:
        raise ShapeError("solution kernels do not chain with the model")
    x = k1.input_alphabet.index(args.query)
    rng = np.random.default_rng(args.seed)
    for _ in range(args.repeat):
        x_tilde = sample(k1.column(x), rng)
        if isinstance(model, DeterministicModel):
            y_tilde = model(x_tilde)
        else:
            y_tilde = sample(kstar.column(x_tilde), rng)
        y = sample(k2.column(y_tilde), rng)
        print(k2.output_alphabet.labels[y])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_problem(p):
    p.add_argument("--model", help="kernel or deterministic-model JSON file")
    p.add_argument("--input-dist", help="query distribution JSON file")


def _add_solver(p):
    p.add_argument("--iters", type=int, default=5000, help="iteration cap (default 5000)")
    p.add_argument("--tol", type=float, default=1e-10, help="stop when the mean kernel change drops below this")
    p.add_argument("--restarts", type=int, default=0, help="extra random restarts for the joint solver")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="infolaunder", description="Optimal information laundering of finite-alphabet models.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("optimize", help="optimize laundering kernels and write a solution file")
    _add_problem(p)
    p.add_argument("--r", help="output frequencies (inline list or file); output-only shortcut for an identity model")
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--mode", choices=sorted(MODES), default="joint")
    p.add_argument("--init", choices=("random", "uniform"), default="random",
                   help="starting kernels for the joint solver")
    _add_solver(p)
    p.add_argument("--out", help="solution JSON path")
    p.set_defaults(func=run_optimize)

    p = sub.add_parser("sweep", help="tradeoff curve over a beta grid")
    _add_problem(p)
    p.add_argument("--betas", required=True, help="comma-separated, strictly increasing")
    p.add_argument("--mode", choices=sorted(MODES), default="output-only")
    p.add_argument("--samples", type=int, default=10000, help="Monte Carlo samples for agreement")
    _add_solver(p)
    p.add_argument("--out-csv")
    p.add_argument("--out-svg")
    p.set_defaults(func=run_sweep)

    p = sub.add_parser("benchmark", help="Dirichlet random output-kernel baseline")
    _add_problem(p)
    p.add_argument("--dirichlet", required=True, help="comma-separated a:b pairs, e.g. 100:1,10:10")
    p.add_argument("--replications", type=int, default=50)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--beta2", type=float, default=1.0, help="weight of the output MI in the objective column")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-csv")
    p.add_argument("--out-svg")
    p.set_defaults(func=run_benchmark)

    p = sub.add_parser("evaluate", help="metrics of a solution file")
    p.add_argument("--kernels", required=True, help="solution JSON written by optimize")
    _add_problem(p)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=run_evaluate)

    p = sub.add_parser("quantize", help="map values to the mu +- 3 sigma grid")
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--config", help="quantizer JSON {mu, sigma, n_points}")
    p.add_argument("--values", help="inline comma list or file")
    p.set_defaults(func=run_quantize)

    p = sub.add_parser("apply", help="answer one query through the laundered model")
    p.add_argument("--kernels", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--query", required=True, help="input symbol label")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeat", type=int, default=1, help="answer the query this many times")
    p.set_defaults(func=run_apply)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"infolaunder: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FileFormatError) as exc:
        print(f"infolaunder: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalFailure, PositivityError, DegenerateInputError) as exc:
        print(f"infolaunder: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, ShapeError, BudgetExceeded) as exc:
        print(f"infolaunder: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
