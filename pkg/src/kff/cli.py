"""Command-line entry point: ``kff <subcommand> --config cfg.json --out dir``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from kff.evolution import StepError, evolve
from kff.experiment import (
    ConfigError,
    dumps,
    initial_state,
    load_config,
    run_classify,
    run_sweep,
    setup,
    thread_count,
    write_json,
    write_run_files,
    write_state_csv,
)
from kff.functionals import MountainPassError, NehariError, spectrum
from kff.operator import dump_operator
from kff.stationary import certify_stationary

log = logging.getLogger("kff")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def cmd_validate(cfg, out, args):
    report = cfg.hypotheses.to_dict()
    write_json(out / "validate.json", {"config": cfg.resolved(), **cfg.stamp(), "hypotheses": report})
    sys.stdout.write(dumps(report))
    return EXIT_OK


def cmd_assemble(cfg, out, args):
    st = setup(cfg, workers=thread_count())
    H = st.form.H
    info = {
        "N": st.form.N,
        "h": st.form.grid.h,
        "max_abs_entry": float(np.max(np.abs(H))),
        "hermitian_defect": float(np.max(np.abs(H - H.conj().T))),
        "lambda1": st.lam1,
    }
    if args.dump_operator:
        dump_operator(st.form, args.dump_operator)
        info["dump"] = str(args.dump_operator)
    write_json(out / "assemble.json", {"config": cfg.resolved(), **cfg.stamp(), "operator": info})
    log.info("assembled N=%d, lambda1=%.6g", st.form.N, st.lam1)
    return EXIT_OK


def cmd_spectrum(cfg, out, args):
    st = setup(cfg)
    vals = spectrum(st.form, args.k)
    with open(out / "spectrum.csv", "w") as fh:
        fh.write("index,eigenvalue\n")
        for i, v in enumerate(vals):
            fh.write(f"{i},{v:.17g}\n")
    write_json(out / "spectrum.json", {"config": cfg.resolved(), **cfg.stamp(),
                                       "lambda1": float(vals[0]), "eigenvalues": [float(v) for v in vals]})
    print(f"lambda1 = {vals[0]:.12g}")
    return EXIT_OK


def cmd_groundstate(cfg, out, args):
    st = setup(cfg, need_ground=True)
    gs = st.ground
    write_state_csv(out / "groundstate.csv", st.x, gs.state, cfg)
    record = gs.to_dict()
    record["certificate"] = certify_stationary(st.form, cfg.params, gs.state, seed=cfg.seed)
    record["lambda1"] = st.lam1
    write_json(out / "groundstate.json", {"config": cfg.resolved(), **cfg.stamp(), "result": record})
    print(f"d = {gs.d_estimate:.12g}  J = {gs.J_value:.12g}  residual = {gs.residual:.3g}")
    return EXIT_OK if gs.converged else EXIT_NUMERIC


def cmd_evolve(cfg, out, args):
    st = setup(cfg)
    u0 = initial_state(st)
    summary = evolve(st.form, cfg.params, u0, cfg.controls, lam1=st.lam1, record_states=False)
    write_run_files(out, "run", cfg, summary)
    print(f"{summary.outcome} at t = {summary.t_end:.6g}")
    return EXIT_NUMERIC if summary.outcome == "step_failure" else EXIT_OK


def cmd_classify(cfg, out, args):
    res = run_classify(cfg, out, workers=thread_count())
    print(f"predicted {res.classification.verdict}, observed {res.summary.outcome}, "
          f"agreement {res.agreement}")
    return EXIT_NUMERIC if res.summary.outcome == "step_failure" else EXIT_OK


def cmd_sweep(cfg, out, args):
    rows = run_sweep(cfg, out)
    failed = sum(1 for r in rows if r["error"])
    print(f"{len(rows)} points, {failed} failed")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "assemble": cmd_assemble,
    "spectrum": cmd_spectrum,
    "groundstate": cmd_groundstate,
    "evolve": cmd_evolve,
    "classify": cmd_classify,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kff", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="experiment JSON file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        if name == "assemble":
            p.add_argument("--dump-operator", type=Path, help="write H as CSV rows i,j,re,im")
        if name == "spectrum":
            p.add_argument("--k", type=int, default=6, help="number of eigenvalues")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MountainPassError, NehariError, StepError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
