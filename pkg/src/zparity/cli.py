"""Command-line entry point: config loading, experiment dispatch, report emission.

Exit codes: 0 success, 1 usage error, 2 config error, 3 numerical-invariant
failure.  Identical (config, seed, flags) invocations produce byte-identical
reports; the manifest timestamp is therefore a fixed epoch unless the
``ZP_TIMESTAMP`` environment variable supplies one.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .calibration import (
    NoiseParams,
    ReadoutRecords,
    config_hash,
    fit_readout,
    load_config,
    simulate_repeated_readout,
)
from .errors import ConfigError, InvariantError
from .experiments import (
    canonical_json,
    csv_text,
    nchv_bound,
    run_ghz_generation,
    run_nci,
    run_single_shot_ghz,
    run_zeno_study,
)

DEFAULT_TIMESTAMP = "1970-01-01T00:00:00Z"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: A003 - argparse API
        raise _UsageError(message)


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_path: str | None
    config_sha256: str
    seed: int | None
    engine: str | None
    mode: str | None
    timestamp: str
    version: str

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_path": self.config_path,
            "config_sha256": self.config_sha256,
            "seed": self.seed,
            "engine": self.engine,
            "mode": self.mode,
            "timestamp": self.timestamp,
            "version": self.version,
        }


def _build_parser() -> _Parser:
    parser = _Parser(prog="zparity", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser, mode: bool = True) -> None:
        p.add_argument("--config", default=None, help="config file (overrides ZP_CONFIG)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--engine", choices=("exact", "sampled"), default="exact")
        p.add_argument("--trials", type=int, default=None)
        if mode:
            p.add_argument("--mode", choices=("branched", "echoed"), default="branched")
        p.add_argument("--out", default=None, help="write the report to this path")
        p.add_argument("--format", choices=("json", "csv", "text"), default="text")
        p.add_argument("--threads", type=int, default=1)

    common(sub.add_parser("ghz", help="GHZ generation by three parity measurements"))
    common(sub.add_parser("single-shot", help="single-shot GHZ contradiction"))
    common(sub.add_parser("nci", help="eight-dimensional noncontextuality test"), mode=False)

    zeno = sub.add_parser("zeno", help="measurement-suppressed dephasing study")
    common(zeno, mode=False)
    zeno.add_argument("--repetitions", type=int, default=4)

    cal = sub.add_parser("calibrate", help="fit readout parameters by maximum likelihood")
    common(cal, mode=False)
    cal.add_argument("--records", default=None, help="CSV of readout records to fit")

    nchv = sub.add_parser("nchv-bound", help="exhaustive noncontextual bound")
    nchv.add_argument("--out", default=None)
    nchv.add_argument("--format", choices=("json", "csv", "text"), default="text")

    val = sub.add_parser("validate-config", help="check a config file")
    val.add_argument("--config", default=None)
    return parser


def _resolve_config(args) -> tuple[str | None, NoiseParams]:
    path = getattr(args, "config", None) or os.environ.get("ZP_CONFIG") or None
    return path, load_config(path)


def _manifest(args, config_path: str | None) -> RunManifest:
    return RunManifest(
        command=args.command,
        config_path=config_path,
        config_sha256=config_hash(config_path),
        seed=getattr(args, "seed", None),
        engine=getattr(args, "engine", None),
        mode=getattr(args, "mode", None),
        timestamp=os.environ.get("ZP_TIMESTAMP", DEFAULT_TIMESTAMP),
        version=__version__,
    )


def _emit(args, manifest: RunManifest, doc: dict, text: str, rows: list[list]) -> None:
    fmt = getattr(args, "format", "text")
    if fmt == "json":
        payload = canonical_json({"manifest": manifest.to_dict(), **doc})
    elif fmt == "csv":
        payload = "# manifest " + canonical_json(manifest.to_dict()).strip() + "\n" + csv_text(rows)
    else:
        manifest_line = "# " + canonical_json(manifest.to_dict()).strip()
        payload = text + "\n" + manifest_line + "\n"
    out = getattr(args, "out", None)
    if out:
        Path(out).write_bytes(payload.encode())
    else:
        sys.stdout.write(payload)


def _check_sampled(args) -> None:
    if args.engine == "sampled" and (args.trials is None or args.seed is None):
        raise _UsageError("--engine sampled requires --trials and --seed")


def _run(argv: list[str] | None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "nchv-bound":
        bound, assignment = nchv_bound()
        manifest = RunManifest(
            command="nchv-bound",
            config_path=None,
            config_sha256=config_hash(None),
            seed=None,
            engine=None,
            mode=None,
            timestamp=os.environ.get("ZP_TIMESTAMP", DEFAULT_TIMESTAMP),
            version=__version__,
        )
        text = f"{bound}\nassignment: " + " ".join(
            f"{k}={'+1' if v > 0 else '-1'}" for k, v in assignment.items()
        )
        rows = [["outcome", "value", "standard_error"], ["bound", str(bound), "0"]]
        _emit(args, manifest, {"bound": bound, "assignment": assignment}, text, rows)
        return 0

    if args.command == "validate-config":
        path = args.config or os.environ.get("ZP_CONFIG") or None
        params = load_config(path)
        ro = params.readout
        sys.stdout.write(
            "ok\n"
            f"q0={ro.same_state_prob(0):.6f} q1={ro.same_state_prob(1):.6f} "
            f"f0={ro.assignment_fidelity(0):.6f} f1={ro.assignment_fidelity(1):.6f} "
            f"p_gate={params.p_gate} p_echo={params.p_echo}\n"
        )
        return 0

    config_path, params = _resolve_config(args)
    manifest = _manifest(args, config_path)

    if args.command == "ghz":
        _check_sampled(args)
        report = run_ghz_generation(
            params, mode=args.mode, engine=args.engine,
            n_trials=args.trials, seed=args.seed, threads=args.threads,
        )
        _emit(args, manifest, report.to_dict(), report.to_text(), report.csv_rows())
        return 0

    if args.command == "single-shot":
        _check_sampled(args)
        report = run_single_shot_ghz(
            params, mode=args.mode, engine=args.engine,
            n_trials=args.trials, seed=args.seed, threads=args.threads,
        )
        _emit(args, manifest, report.to_dict(), report.to_text(), report.csv_rows())
        return 0

    if args.command == "nci":
        _check_sampled(args)
        report = run_nci(
            params, engine=args.engine, n_trials=args.trials, seed=args.seed, threads=args.threads
        )
        _emit(args, manifest, report.to_dict(), report.to_text(), report.csv_rows())
        return 0

    if args.command == "zeno":
        _check_sampled(args)
        report = run_zeno_study(
            params, repetitions=args.repetitions, engine=args.engine,
            n_trials=args.trials, seed=args.seed,
        )
        _emit(args, manifest, report.to_dict(), report.to_text(), report.csv_rows())
        return 0

    if args.command == "calibrate":
        seed = args.seed if args.seed is not None else 0
        if args.records:
            try:
                records = ReadoutRecords.from_csv(Path(args.records).read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read records: {exc}") from exc
        else:
            trials = args.trials if args.trials is not None else 200_000
            records = simulate_repeated_readout(params, trials, "mixed", seed)
        fit = fit_readout(records, params.readout, seed=seed)
        fitted = fit.fidelities
        doc = {
            "experiment": "calibrate",
            "n_trials": records.n_trials,
            "prepared": records.prepared,
            "fitted": fitted,
            "std_errors": fit.std_errors,
            "log_likelihood": fit.log_likelihood,
            "converged": fit.converged,
            "restart_index": fit.restart_index,
        }
        text_lines = [f"readout fit on {records.n_trials} trials (prepared {records.prepared})"]
        for key in ("f0", "f1", "q0", "q1"):
            text_lines.append(f"{key} = {fitted[key]:.6f} +- {fit.std_errors[key]:.6f}")
        text_lines.append(f"log-likelihood = {fit.log_likelihood:.6f}")
        rows = [["outcome", "value", "standard_error"]] + [
            [key, f"{fitted[key]:.9f}", f"{fit.std_errors[key]:.9f}"] for key in ("f0", "f1", "q0", "q1")
        ]
        _emit(args, manifest, doc, "\n".join(text_lines), rows)
        return 0

    raise _UsageError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    try:
        return _run(argv)
    except _UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 1
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except InvariantError as exc:
        sys.stderr.write(f"invariant failure: {exc}\n")
        return 3


def entrypoint() -> None:
    raise SystemExit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
