"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .. import elm
from .config import ConfigError, ExperimentConfig, load_config
from .io import DatasetFormatError, read_dataset, write_csv, write_dataset
from .runs import RATE_HEADER, ROBUSTNESS_HEADER, TIMING_HEADER, run_rate_vs_snr, run_robustness_sweep, run_timing

log = logging.getLogger("elmhbf")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; map that to the config-error code
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


EPILOG = f"""\
CSV outputs (UTF-8, header row first):
  rate-sweep        {",".join(RATE_HEADER)}
  robustness-sweep  {",".join(ROBUSTNESS_HEADER)}
  timing            {",".join(TIMING_HEADER)}

method is one of FP-FD, FP-MM-HBF, ELM-HBF. csi_snr_test_db is "clean" for
perfect CSI. median_s in the timing table is wall-clock on this machine; all
other columns are reproducible for a fixed config and seed.

Datasets are binary HBFD files, models binary ELMB files.
HBF_THREADS caps the number of worker processes (default: CPU count).

exit status: 0 success, 1 configuration/usage error, 2 runtime error
"""


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="elmhbf",
        description="Hybrid beamforming experiments: FP fully-digital, MM hybrid and ELM designs.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def common(sp, out_help):
        sp.add_argument("--config", required=True, help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, default=None, help="override the config's base seed")
        sp.add_argument("--out", default=None, help=out_help + " (default: paths.out from the config)")

    sp = sub.add_parser("gen-dataset", help="label channels with FP-MM and write a training dataset",
                        formatter_class=argparse.RawDescriptionHelpFormatter, epilog=EPILOG)
    common(sp, "dataset file to write")

    sp = sub.add_parser("train", help="train an ELM on a dataset",
                        formatter_class=argparse.RawDescriptionHelpFormatter, epilog=EPILOG)
    common(sp, "model file to write")
    sp.add_argument("--dataset", default=None, help="dataset file (default: paths.dataset)")

    sp = sub.add_parser("rate-sweep", help="sum-rate vs SNR for FP-FD, FP-MM-HBF and optionally ELM-HBF",
                        formatter_class=argparse.RawDescriptionHelpFormatter, epilog=EPILOG)
    common(sp, "CSV file to write")
    sp.add_argument("--model", default=None, help="ELM model file; adds ELM-HBF rows (default: paths.model)")

    sp = sub.add_parser("robustness-sweep", help="ELM-HBF vs FP-MM-HBF sum-rate vs SNR_Test",
                        formatter_class=argparse.RawDescriptionHelpFormatter, epilog=EPILOG)
    common(sp, "CSV file to write")
    sp.add_argument("--model", default=None, help="ELM model file (default: paths.model)")

    sp = sub.add_parser("timing", help="solve / predict / train wall-clock per Nt",
                        formatter_class=argparse.RawDescriptionHelpFormatter, epilog=EPILOG)
    common(sp, "CSV file to write")
    return p


def _path(value: Optional[str], fallback: Optional[str], what: str) -> Path:
    chosen = value if value is not None else fallback
    if chosen is None:
        raise ConfigError(f"no {what} given (flag or paths section)")
    return Path(chosen)


def _load_model(path: Path, exp: ExperimentConfig) -> elm.ElmModel:
    model = elm.load_model(path)
    if model.layout != elm.Layout.from_config(exp.system):
        raise ConfigError(f"model {path} was trained for {model.layout}, config describes {elm.Layout.from_config(exp.system)}")
    return model


def _gen_dataset(args, exp: ExperimentConfig):
    out = _path(args.out, exp.paths.out or exp.paths.dataset, "output path")
    ep = exp.elm
    ds = elm.build_dataset(
        exp.system, exp.channel, ep.n_realizations, ep.n_noisy, ep.snr_train_db, seed=exp.seed,
        fp_stop=exp.fp, mm_stop=exp.mm, db_divisor=ep.db_divisor, workers=exp.workers,
    )
    write_dataset(ds, out)
    log.info("wrote %d rows to %s", len(ds), out)


def _train(args, exp: ExperimentConfig):
    out = _path(args.out, exp.paths.out or exp.paths.model, "output path")
    ds = read_dataset(_path(args.dataset, exp.paths.dataset, "dataset"))
    ep = exp.elm
    model = elm.init_random(ds.meta.cfg, ep.L, activation=ep.activation, lam=ep.lam, seed=exp.seed, slope=ep.slope)
    if ep.lam_grid:
        # hold out the last tenth of the realizations (rows are grouped per realization)
        n_val = max(1, ds.meta.n_realizations // 10) * ds.meta.n_noisy
        if n_val >= len(ds):
            raise ConfigError("dataset too small to hold out a validation split for lam_grid")
        fit = elm.TrainingDataset(ds.X[:-n_val], ds.T[:-n_val], ds.meta)
        val = elm.TrainingDataset(ds.X[-n_val:], ds.T[-n_val:], ds.meta)
        best, scores = elm.select_lambda(model, fit, val, ep.lam_grid)
        log.info("validation MSE per lambda: %s; using %g", scores, best)
        model.lam = best
    elm.train(model, ds)
    elm.save_model(model, out)
    log.info("wrote model (L=%d) to %s", model.L, out)


def _rate_sweep(args, exp: ExperimentConfig):
    out = _path(args.out, exp.paths.out, "output path")
    model_path = args.model if args.model is not None else exp.paths.model
    model = _load_model(Path(model_path), exp) if model_path else None
    write_csv(run_rate_vs_snr(exp, model), out)


def _robustness_sweep(args, exp: ExperimentConfig):
    out = _path(args.out, exp.paths.out, "output path")
    model = _load_model(_path(args.model, exp.paths.model, "model"), exp)
    write_csv(run_robustness_sweep(exp, model), out)


def _timing(args, exp: ExperimentConfig):
    out = _path(args.out, exp.paths.out, "output path")
    write_csv(run_timing(exp), out)


COMMANDS = {
    "gen-dataset": _gen_dataset,
    "train": _train,
    "rate-sweep": _rate_sweep,
    "robustness-sweep": _robustness_sweep,
    "timing": _timing,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    try:
        exp = load_config(args.config).with_seed(args.seed)
        COMMANDS[args.command](args, exp)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, DatasetFormatError, elm.ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report any solver failure as a runtime error
        log.debug("traceback", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
