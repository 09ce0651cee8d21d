"""Command-line entry point: ``qdhyper {simulate,tomo,metrics,run,sweep}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import detection as det
from . import runner
from .metrics import concurrence, fidelity_to_pure, hyper_fidelity, subspace_report
from .qlin import QuantumStateError, read_density_matrix, write_density_matrix
from .source import PHI_PLUS, TB_PLUS
from .tomography import (
    MLEConfig,
    ReconstructionError,
    mle_reconstruct,
    projector_set_from_labels,
)


def _base_config(args) -> runner.RunConfig:
    cfg = runner.load_config(args.config) if args.config else runner.RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.pairs is not None:
        changes["n_pairs_per_setting"] = args.pairs
    if getattr(args, "campaign", None):
        changes["campaign"] = args.campaign
    if getattr(args, "out", None):
        changes["output_dir"] = Path(args.out)
    return cfg.replace(**changes) if changes else cfg


def cmd_simulate(args) -> int:
    cfg = _base_config(args)
    settings, hists, counts = runner.simulate_campaign(cfg)
    out = Path(cfg.output_dir or ".")
    (out / "histograms").mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(runner.dump_config(cfg))
    for k, h in enumerate(hists):
        det.write_histogram(out / "histograms" / f"setting_{k:02d}.csv", h)
    det.write_counts(out / "counts.tsv", counts)
    print(f"wrote {len(hists)} histograms and counts.tsv to {out}")
    return runner.EXIT_OK


def cmd_tomo(args) -> int:
    counts = det.read_counts(args.counts)
    labels = [lab for pc in counts for lab in pc.counts]
    pset = projector_set_from_labels(labels)
    cfg = MLEConfig(max_iterations=args.max_iterations, rel_loglik_tol=args.tol)
    res = mle_reconstruct(counts, pset, cfg)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_density_matrix(out / "rho.json", res.rho)
    text = (
        f"dim: {res.rho.dim}\n"
        f"projections: {len(labels)} ({len(pset)} distinct, rank {pset.completeness_rank})\n"
        f"iterations: {res.iterations}\n"
        f"log_likelihood: {res.log_likelihood:.6f}\n"
        f"converged: {res.converged}\n"
        f"grad_norm: {res.grad_norm:.3e}\n"
    )
    (out / "reconstruction.txt").write_text(text)
    print(text, end="")
    return runner.EXIT_OK if res.converged else runner.EXIT_CONVERGENCE


def cmd_metrics(args) -> int:
    rho = read_density_matrix(args.matrix)
    if rho.dim == 4:
        lines = [
            f"fidelity: {fidelity_to_pure(rho, PHI_PLUS):.6f}",
            f"concurrence: {concurrence(rho):.6f}",
            f"purity: {rho.purity():.6f}",
        ]
    elif rho.dim == 16:
        lines = [f"fidelity_hyp: {hyper_fidelity(rho, PHI_PLUS, TB_PLUS):.6f}", f"purity: {rho.purity():.6f}"]
        for sub, tgt in (("polarization", PHI_PLUS), ("timebin", TB_PLUS)):
            r = subspace_report(rho, sub, tgt)
            lines += [f"{sub}.fidelity: {r.fidelity:.6f}", f"{sub}.concurrence: {r.concurrence:.6f}",
                      f"{sub}.purity: {r.purity:.6f}"]
    else:
        lines = [f"purity: {rho.purity():.6f}"]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    print(text, end="")
    return runner.EXIT_OK


def cmd_run(args) -> int:
    cfg = _base_config(args)
    if cfg.output_dir is None:
        cfg = cfg.replace(output_dir=Path("run-output"))
    rep = runner.run(cfg)
    print(rep.text, end="")
    if not rep.converged:
        print("warning: maximum-likelihood reconstruction did not converge", file=sys.stderr)
    return rep.exit_code


def cmd_sweep(args) -> int:
    cfg = _base_config(args)
    res = runner.sweep_phase(cfg, args.points, exact=args.exact)
    table = res.table()
    summary = (f"offset: {res.offset:.6g}\namplitude: {res.amplitude:.6g}\n"
               f"visibility: {res.visibility:.6f} +/- {res.visibility_err:.6f}\n")
    if cfg.output_dir is not None:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.tsv").write_text(table)
        (out / "sweep_fit.txt").write_text(summary)
    print(table + summary, end="")
    return runner.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--pairs", type=int, help="emitted pairs per measurement setting")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="qdhyper", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="synthesize coincidence histograms only")
    p.add_argument("--campaign", choices=runner.CAMPAIGNS)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tomo", help="reconstruct a density matrix from a counts table")
    p.add_argument("counts", type=Path)
    p.add_argument("--out")
    p.add_argument("--max-iterations", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_tomo)

    p = sub.add_parser("metrics", help="fidelity, concurrence and purity of a density-matrix file")
    p.add_argument("matrix", type=Path)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("run", parents=[common], help="simulate, reconstruct and report a campaign")
    p.add_argument("--campaign", choices=runner.CAMPAIGNS)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="scan the X analysis phase and fit the fringe")
    p.add_argument("--points", type=int, default=16)
    p.add_argument("--exact", action="store_true", help="use exact probabilities instead of Poisson counts")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except runner.ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return runner.EXIT_USAGE
    except (ValueError, ReconstructionError, QuantumStateError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return runner.EXIT_USAGE if isinstance(exc, (ValueError, OSError)) else runner.EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return runner.EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
