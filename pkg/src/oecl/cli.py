"""Command-line entry point (``oecl`` or ``python -m oecl``).

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 a verification verdict failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments as X
from . import theory
from .config import ExperimentConfig, config_to_text, load_config
from .data import load_dataset
from .encoder import load_params, save_params
from .errors import NumericalError, OECLError
from .scoring import DEFAULT_N_AUG, SCORE_KINDS, evaluate
from .train import emit_metrics, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_VERDICT = 0, 1, 2, 3

log = logging.getLogger("oecl")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    return cfg.replace(seed=args.seed) if args.seed is not None else cfg


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    cfg = _config(args)
    result = train(cfg)
    out = _out_dir(args.out)
    emit_metrics(result.metrics, out / "metrics.csv")
    save_params(result.params, out / "checkpoint.bin")
    (out / "config.txt").write_text(config_to_text(cfg))
    f = result.metrics.final
    print(f"epoch {f.epoch}: loss {f.loss_total:.6f} auroc_s_mu {f.auroc_s_mu:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    params = load_params(args.checkpoint)
    samples = load_dataset(args.data)
    normal = [s for s in samples if s.origin == "normal"]
    anomalous = [s for s in samples if s.origin != "normal"]
    ev = evaluate(params, normal, anomalous, kind=args.score, n_aug=args.n_aug, seed=cfg.seed,
                  transforms=cfg.data.augment)
    if args.out:
        ev.write_csv(args.out)
    print(f"auroc {ev.auroc:.17g}")
    return EXIT_OK


def cmd_verify_theorem(args) -> int:
    specs = theory.load_grid(args.grid) if args.grid else theory.default_grid()
    check = theory.verify_theorem1(specs, n_samples=args.samples, seed=args.seed or 0, workers=args.workers)
    if args.out:
        theory.write_reports(args.out, check.reports)
    bad = [r for r in check.reports if r.verdict != theory.BOUNDS_HOLD]
    for r in bad:
        s = r.spec
        print(f"{r.verdict}: mu={s.mu} sigma={s.sigma} sigma_v_sq={s.sigma_v_sq} dim={s.dim} "
              f"estimate={r.estimate:.6g} stderr={r.stderr:.2g} bounds=[{r.lower:.6g}, {r.upper:.6g}]")
    for a, b in check.monotonicity_violations:
        print(f"monotonicity violated between mu={specs[a].mu} and mu={specs[b].mu}")
    print(f"{len(check.reports) - len(bad)}/{len(check.reports)} bounds hold, "
          f"{len(check.monotonicity_violations)} monotonicity violations")
    return EXIT_OK if check.passed else EXIT_VERDICT


def cmd_verify_lemma(args) -> int:
    rep = theory.verify_lemma1(args.mu, args.sigma, args.y_grid)
    for y, v in zip(rep.y_grid, rep.values):
        print(f"f({y:g}) = {v:.12g}")
    print(f"non-increasing: {rep.non_increasing}, convex: {rep.convex}")
    return EXIT_OK if rep.passed else EXIT_VERDICT


def cmd_sweep_alpha(args) -> int:
    res = X.run_alpha_sweep(_config(args), args.weights, workers=args.workers)
    _emit(args, res.rows)
    return EXIT_OK


def cmd_diminish(args) -> int:
    rows = X.run_diminishing(_config(args), args.fractions, oe_kinds=args.kinds, workers=args.workers)
    _emit(args, rows)
    return EXIT_OK


def cmd_fewshot(args) -> int:
    rows = X.run_fewshot(_config(args), args.k, workers=args.workers)
    _emit(args, rows)
    return EXIT_OK


def _emit(args, rows) -> None:
    if args.out:
        X.write_table(args.out, rows)
    for r in rows:
        print(r)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oecl", description="Outlier-exposed contrastive learning on synthetic data.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_text, config=True, out_help="CSV output path (stdout summary only if omitted)"):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--seed", type=int, default=None, help="overrides the seed in the configuration")
        if config:
            sp.add_argument("--config", help="key = value configuration file")
        if out_help:
            sp.add_argument("--out", help=out_help)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("train", cmd_train, "train an encoder", out_help=None)
    sp.add_argument("--out", required=True, help="output directory for metrics.csv, checkpoint.bin, config.txt")

    sp = add("eval", cmd_eval, "score a labelled dataset with a checkpoint", out_help="score table CSV")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True, help="dataset CSV; origin 'normal' is the positive class")
    sp.add_argument("--score", choices=SCORE_KINDS, default="s_mu")
    sp.add_argument("--n-aug", type=int, default=DEFAULT_N_AUG)

    sp = add("verify-theorem", cmd_verify_theorem, "Monte Carlo check of the expected-cosine bounds",
             config=False, out_help="report CSV")
    sp.add_argument("--grid", help="CSV with header mu,sigma,sigma_v_sq,dim (built-in grid if omitted)")
    sp.add_argument("--samples", type=int, default=1_000_000)
    sp.add_argument("--workers", type=int, default=1)

    sp = add("verify-lemma", cmd_verify_lemma, "check that f(y) is non-increasing and convex", config=False,
             out_help=None)
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--y-grid", type=_floats, default=[0.0, 0.25, 1.0, 4.0, 16.0, 64.0])

    for name, fn, arg, conv, help_text in (
        ("sweep-alpha", cmd_sweep_alpha, "--weights", _floats, "train on weighted align/uniform combinations"),
        ("diminish", cmd_diminish, "--fractions", _floats, "outlier-exposure gain versus training-set size"),
        ("fewshot", cmd_fewshot, "--k", _ints, "train with k outlier samples"),
    ):
        sp = add(name, fn, help_text)
        sp.add_argument(arg, type=conv, required=True, help="comma-separated list")
        sp.add_argument("--workers", type=int, default=1)
        if name == "diminish":
            sp.add_argument("--kinds", type=lambda s: [k.strip() for k in s.split(",") if k.strip()],
                            default=["near", "far"])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.fn(args)
    except NumericalError as exc:
        print(f"oecl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OECLError, OSError) as exc:
        print(f"oecl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
