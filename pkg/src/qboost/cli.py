"""Command-line interface wiring the toolkit together.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
All stochastic commands take ``--seed`` and are deterministic given it;
output files use canonical serialization (sorted ids, repr floats, LF)
so identical runs produce identical bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import DataError, NumericalError
from .metrics import agreement_proportion
from .pcm import read_acr_csv, read_pcm_csv, to_pcm_csv, pcm_from_acr, pcm_merge
from .recovery import FitOptions, QualityEstimate, fit_model
from .sampling import gauss_hermite_rule, select_batch
from .simulate import SimulationConfig, run_simulation

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: A002 - argparse API
        raise UsageError(message)


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="")


def _read_pcm(path: str):
    with open(path, "r", encoding="utf-8", newline="") as handle:
        return read_pcm_csv(handle)


def _read_estimate(path: str) -> QualityEstimate:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"bad JSON: {exc}", line=exc.lineno) from exc
    return QualityEstimate.from_json_dict(payload)


def _fit_options(args) -> FitOptions:
    return FitOptions(
        pseudocount=args.pseudocount,
        gradient_tolerance=args.tolerance,
        max_iterations=args.max_iterations,
        restarts=args.restarts,
        seed=args.seed,
        dispersion_ridge=args.dispersion_ridge,
    )


def _add_fit_arguments(parser) -> None:
    parser.add_argument("--pseudocount", type=float, default=0.5)
    parser.add_argument("--tolerance", type=float, default=1e-8)
    parser.add_argument("--max-iterations", type=int, default=2000)
    parser.add_argument("--restarts", type=int, default=3)
    parser.add_argument("--dispersion-ridge", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="qboost",
        description=(
            "Recover latent quality scales from rating and pair-comparison "
            "data, select informative comparison batches, and evaluate the "
            "active fusion loop in simulation."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-acr", help="fold an ACR rating CSV into a PCM CSV")
    p.add_argument("acr_csv")
    p.add_argument("-o", "--output", default=None)

    p = sub.add_parser("fit", help="fit a preference model to a PCM CSV")
    p.add_argument("pcm_csv")
    p.add_argument("--model", choices=("case3", "case5", "bt"), default="case3")
    p.add_argument("-o", "--output", default=None)
    _add_fit_arguments(p)

    p = sub.add_parser("select", help="pick the next comparison batch")
    p.add_argument("estimate_json")
    p.add_argument("--batch-size", type=int, required=True)
    p.add_argument("--quadrature-order", type=int, default=21)
    p.add_argument("--iteration", type=int, default=1)
    p.add_argument("--mode", choices=("mst", "global"), default="mst")
    p.add_argument("-o", "--output", default=None)

    p = sub.add_parser("merge", help="element-wise sum of two PCM CSVs")
    p.add_argument("base_csv")
    p.add_argument("delta_csv")
    p.add_argument("-o", "--output", default=None)

    p = sub.add_parser("simulate", help="Monte Carlo evaluation of the loop")
    p.add_argument("--n", type=int, default=60)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--models",
        default="case3,case5,bt",
        help="comma-separated subset of case3,case5,bt",
    )
    p.add_argument("--acr-init", action="store_true")
    p.add_argument("--acr-observers", type=int, default=15)
    p.add_argument("--noise", choices=("gaussian", "uniform"), default="gaussian")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--csv", default=None, help="also write a CSV report")

    p = sub.add_parser("agreement", help="agreement proportion of scores vs PCM")
    p.add_argument("pcm_csv")
    p.add_argument("estimate_json")

    p = sub.add_parser("serve", help="run the study service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", required=True)

    return parser


def _cmd_ingest_acr(args) -> int:
    with open(args.acr_csv, "r", encoding="utf-8", newline="") as handle:
        table = read_acr_csv(handle)
    _write_text(args.output, to_pcm_csv(pcm_from_acr(table)))
    return EXIT_OK


def _cmd_fit(args) -> int:
    pcm = _read_pcm(args.pcm_csv)
    estimate = fit_model(args.model, pcm, _fit_options(args))
    _write_text(args.output, estimate.canonical_json())
    return EXIT_OK


def _cmd_select(args) -> int:
    estimate = _read_estimate(args.estimate_json)
    rule = gauss_hermite_rule(args.quadrature_order)
    batch = select_batch(
        estimate,
        args.batch_size,
        rule,
        iteration=args.iteration,
        mode=args.mode,
    )
    text = json.dumps(batch.to_json_dict(), sort_keys=True, indent=2) + "\n"
    _write_text(args.output, text)
    return EXIT_OK


def _cmd_merge(args) -> int:
    merged = pcm_merge(_read_pcm(args.base_csv), _read_pcm(args.delta_csv))
    _write_text(args.output, to_pcm_csv(merged))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    models = tuple(m.strip() for m in args.models.split(",") if m.strip())
    config = SimulationConfig(
        n=args.n,
        reps=args.reps,
        standard_trials=args.trials,
        models=models,
        seed=args.seed,
        acr_init=args.acr_init,
        acr_observers=args.acr_observers,
        noise_model=args.noise,
        workers=args.workers,
    )
    report = run_simulation(config)
    _write_text(args.output, report.to_json())
    if args.csv:
        _write_text(args.csv, report.to_csv())
    return EXIT_OK


def _cmd_agreement(args) -> int:
    pcm = _read_pcm(args.pcm_csv)
    estimate = _read_estimate(args.estimate_json)
    if estimate.stimulus_ids != pcm.stimulus_ids:
        raise DataError("estimate and PCM stimulus ids differ")
    value = agreement_proportion(pcm, estimate.s_hat)
    sys.stdout.write(f"{value!r}\n")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


_HANDLERS = {
    "ingest-acr": _cmd_ingest_acr,
    "fit": _cmd_fit,
    "select": _cmd_select,
    "merge": _cmd_merge,
    "simulate": _cmd_simulate,
    "agreement": _cmd_agreement,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    try:
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc.filename}: no such file\n")
        return EXIT_DATA
    except DataError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA
    except NumericalError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_NUMERICAL
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
