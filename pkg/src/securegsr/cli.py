"""Command-line entry point: ``securegsr {bench,sweep-eta,instance,detect,recover,calibrate}``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import harness
from .detector import DetectorParams, analysis_terms, calibrate, clamp_eta, detect, error_probabilities
from .errors import DomainError, SecureGSRError
from .graph import laplacian, read_edge_list, write_edge_list
from .recovery import recover, write_trace
from .signals import GftBasis, read_signal, write_signal

log = logging.getLogger("securegsr")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="output path (default: stdout)")
    p.add_argument("--workers", type=int, default=1)
    for f in fields(harness.ExperimentConfig):
        if f.name == "seed":
            continue
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", metavar="VALUE")


def _config_from(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig()
    if args.config is not None:
        cfg = harness.load_config(args.config.read_text(), cfg)
    raw = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    values = harness.parse_overrides(raw)
    if args.seed is not None:
        values["seed"] = args.seed
    return replace(cfg, **values)


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)
        log.info("wrote %s", out)


def cmd_bench(args) -> int:
    cfg = _config_from(args)
    table = harness.run_experiment(cfg, workers=args.workers)
    _write(table.to_csv(), args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config_from(args)
    etas = [float(v) for v in args.etas.split(",")] if args.etas else None
    rows = harness.sweep_eta(cfg, etas, snr_db=args.snr, workers=args.workers)
    _write(harness.sweep_csv(rows), args.out)
    return 0


def cmd_instance(args) -> int:
    cfg = _config_from(args)
    inst = harness.make_instance(cfg, args.snr, np.random.default_rng(cfg.seed))
    g, obs, truth, sigma_nu = inst.graph, inst.observation, inst.observation.truth, inst.observation.sigma_nu
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(g, out / "graph.txt")
    write_signal(truth, out / "truth.txt")
    write_signal(obs.observed, out / "observed.txt")
    write_signal(obs.scenario.mask, out / "mask.txt")
    print(f"sigma_nu = {sigma_nu:.17g}")
    return 0


def _load_instance(args):
    g = read_edge_list(args.graph)
    x = read_signal(args.signal)
    return g, laplacian(g), x


def _params(args, lap) -> DetectorParams:
    th = args.sigma_a**2 if args.threshold is None else args.threshold
    return DetectorParams(eta=clamp_eta(args.eta, lap), threshold=th, sigma_a=args.sigma_a,
                          sigma_nu=args.sigma_nu if args.sigma_nu is not None else 0.0,
                          sigma_sub=math.sqrt(th) if th > 0 else None)


def cmd_detect(args) -> int:
    g, lap, x = _load_instance(args)
    params = _params(args, lap)
    res = detect(lap, x, params)
    print("node T_f flagged" + (" p_md p_fd" if args.sigma_nu is not None else ""))
    for k in range(g.n):
        line = f"{k} {res.statistics[k]:.10g} {int(res.estimated_mask[k])}"
        if args.sigma_nu is not None:
            terms = analysis_terms(lap, x, k, params)
            try:
                p_md, p_fd = error_probabilities(terms, params.threshold)
            except DomainError:
                p_md, p_fd = 0.0, 1.0
            line += f" {p_md:.6g} {p_fd:.6g}"
        print(line)
    return 0


def cmd_recover(args) -> int:
    g, lap, x = _load_instance(args)
    if args.mask is not None:
        mask = read_signal(args.mask).astype(np.int8)
    else:
        mask = detect(lap, x, _params(args, lap)).estimated_mask
    basis = GftBasis.from_laplacian(lap)
    res = recover(lap, x, mask, basis=basis, bw=args.bw)
    if res.fallback:
        log.warning("fallback %s used: %s", res.fallback, res.reason)
    if args.trace is not None and res.trace is not None:
        write_trace(res.trace, args.trace)
    text = "".join(f"{v:.17g}\n" for v in res.estimate)
    _write(text, args.out)
    return 0


def cmd_calibrate(args) -> int:
    _, lap, x = _load_instance(args)
    if args.sigma_nu is None:
        raise SystemExit("calibrate needs --sigma-nu")
    params = _params(args, lap)
    cal = calibrate(lap, x, replace(params, eta=args.eta), eta_policy=args.eta_policy,
                    threshold_policy=args.threshold_policy)
    eta = np.asarray(cal.params.eta)
    print(f"threshold = {cal.params.threshold:.10g}")
    print("eta = " + ", ".join(f"{v:.10g}" for v in np.atleast_1d(eta)))
    print(f"network_error = {cal.objective:.10g}")
    print(f"basic_network_error = {cal.basic_objective:.10g}")
    return 0


def _add_instance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", type=Path, required=True, help="edge list 'i j w' file")
    p.add_argument("--signal", type=Path, required=True, help="observed signal, one value per line")
    p.add_argument("--eta", type=float, default=0.8)
    p.add_argument("--threshold", type=float)
    p.add_argument("--sigma-a", type=float, default=5.0)
    p.add_argument("--sigma-nu", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="securegsr", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="full Monte Carlo table (CSV)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep-eta", help="MSD of the basic detector versus eta")
    _add_config_flags(p)
    p.add_argument("--etas", help="comma-separated eta grid (default 0.1..1.9)")
    p.add_argument("--snr", type=float, default=20.0)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("instance", help="dump a random instance (graph, truth, observed, mask)")
    _add_config_flags(p)
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_instance)

    p = sub.add_parser("detect", help="per-node statistic and decision")
    _add_instance_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("recover", help="recover a dumped instance")
    _add_instance_flags(p)
    p.add_argument("--mask", type=Path, help="0/1 mask file (default: run the detector)")
    p.add_argument("--bw", type=int, default=2)
    p.add_argument("--trace", type=Path, help="write the Dinkelbach trace here")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("calibrate", help="optimal threshold / eta for a dumped instance")
    _add_instance_flags(p)
    p.add_argument("--eta-policy", default="optimal", choices=harness.ETA_POLICIES)
    p.add_argument("--threshold-policy", default="fixed_sigma_a_sq", choices=harness.THRESHOLD_POLICIES)
    p.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SecureGSRError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
