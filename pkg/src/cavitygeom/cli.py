"""Command-line entry point: ``cavitygeom <verb> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import geometry as geo
from .config import ConfigError, ExperimentConfig, preset, preset_catalog
from .pipeline import analyze_ensemble, compare_to_model, progress_printer, read_matrix, run_pipeline
from .twa import ensemble_csv, run_ensemble
from .waveform import dispersion, spectrum_csv, waveform_csv


def _param(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected KEY=VALUE")
    k, v = text.split("=", 1)
    try:
        v = json.loads(v)
    except json.JSONDecodeError:
        pass
    return k, v


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cavitygeom", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", type=Path, help="experiment JSON file")
        sp.add_argument("--preset", help="preset name (see preset-list)")
        sp.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE",
                        help="preset parameter, e.g. s=-1 or r=5 (repeatable)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trajectories", type=int)
        sp.add_argument("--T", type=float, dest="T", help="Bloch periods")
        if out:
            sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sub.add_parser("preset-list", help="list presets").add_argument("--format", choices=("csv", "json"), default="csv")
    common(sub.add_parser("synth", help="compile couplings into a drive waveform"))
    common(sub.add_parser("simulate", help="run the truncated Wigner ensemble"))
    sp = sub.add_parser("analyze", help="correlations from an ensemble CSV")
    common(sp)
    sp.add_argument("--input", type=Path, required=True, help="ensemble.csv")
    sp = sub.add_parser("embed", help="geometry from a C^xx matrix")
    sp.add_argument("--input", type=Path, required=True, help="corr_xx.json or corr_xx.csv")
    sp.add_argument("--dim", type=int, default=3)
    sp.add_argument("--out", type=Path)
    sp.add_argument("--format", choices=("csv", "json"), default="json")
    sp = sub.add_parser("bulk", help="bulk graph from a C^xx matrix")
    sp.add_argument("--input", type=Path, required=True)
    sp.add_argument("--out", type=Path)
    sp.add_argument("--format", choices=("csv", "json"), default="json")
    common(sub.add_parser("pipeline", help="full run writing a bundle"))
    sp = sub.add_parser("compare", help="fit the growth-law model to a bundle")
    sp.add_argument("bundle", type=Path)
    return p


def _config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset", "$")
    if args.config:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", "$") from exc
        cfg = ExperimentConfig.from_json(text)
    elif args.preset:
        cfg = preset(args.preset, **dict(args.param))
    else:
        raise ConfigError("either --config or --preset is required", "$")
    return cfg.with_overrides(seed=args.seed, trajectories=args.trajectories, T=args.T)


def _emit(text: str, out: Path | None, name: str):
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.verb == "preset-list":
            cat = preset_catalog()
            if args.format == "json":
                print(json.dumps(cat, indent=1))
            else:
                print("name,M,periodic,drive,omega_B_hz,q_hz,interaction_time_ms,T_exact,T,peak_chi_tau")
                for c in cat:
                    print(",".join(str(c[k]) for k in ("name", "M", "periodic", "drive", "omega_B_hz", "q_hz",
                                                       "interaction_time_ms", "T_exact", "T", "peak_chi_tau")))
            return 0
        if args.verb == "synth":
            cfg = _config(args)
            wf = cfg.waveform()
            if args.format == "json":
                d = dispersion(wf, cfg.lattice)
                text = json.dumps({
                    "kind": wf.kind,
                    "dc_offset": wf.dc_offset,
                    "terms": [list(t) for t in wf.terms],
                    "pulse_weights": None if wf.pulse_weights is None else wf.pulse_weights.tolist(),
                    "k": d.k.tolist(),
                    "chi": d.chi.real.tolist(),
                })
                _emit(text, args.out, "waveform.json")
            else:
                _emit(waveform_csv(wf), args.out, "waveform.csv")
                if args.out is not None:
                    _emit(spectrum_csv(wf), args.out, "spectrum.csv")
            return 0
        if args.verb == "simulate":
            cfg = _config(args)
            recs = run_ensemble(cfg.lattice, cfg.waveform(), cfg.noise, cfg.trajectories, cfg.T, cfg.seed,
                                frame=cfg.frame, settings=cfg.integrator, progress=progress_printer())
            if args.format == "json":
                text = json.dumps([{"realization": r.realization, "seed": str(r.seed), "n_plus": r.n_plus.tolist(),
                                    "n_zero": r.n_zero.tolist(), "n_minus": r.n_minus.tolist(), "fx": r.fx.tolist()}
                                   for r in recs])
                _emit(text, args.out, "ensemble.json")
            else:
                _emit(ensemble_csv(recs), args.out, "ensemble.csv")
                if args.out is not None:
                    (args.out / "ensemble.json").write_text(
                        json.dumps({"config": cfg.to_dict(), "seeds": [str(r.seed) for r in recs]}))
            return 0
        if args.verb == "analyze":
            cfg = _config(args)
            files = analyze_ensemble(args.input, cfg, args.out or Path("."))
            print("\n".join(files))
            return 0
        if args.verb == "embed":
            C = read_matrix(args.input)
            emb = geo.embed(C, args.dim)
            bonds = geo.coupling_bonds(emb.Jprime)
            if args.format == "json":
                _emit(emb.to_json() + "\n", args.out, "embedding.json")
                if args.out is not None:
                    (args.out / "bonds.json").write_text(json.dumps(bonds))
            else:
                lines = ["site," + ",".join(f"x{i}" for i in range(emb.coordinates.shape[1]))]
                lines += [f"{i}," + ",".join(repr(float(x)) for x in row) for i, row in enumerate(emb.coordinates)]
                _emit("\n".join(lines) + "\n", args.out, "embedding.csv")
            return 0
        if args.verb == "bulk":
            C = read_matrix(args.input)
            rho = geo.embed(C, couplings=False).coordinates
            g = geo.reconstruct_bulk(C, rho)
            if args.format == "json":
                _emit(g.to_json() + "\n", args.out, "bulk.json")
            else:
                lines = ["a,b,level,kind"] + [f"{a},{b},{lvl},{k}" for a, b, lvl, k in g.edges]
                _emit("\n".join(lines) + "\n", args.out, "bulk_edges.csv")
            return 0
        if args.verb == "pipeline":
            cfg = _config(args)
            out = run_pipeline(cfg, args.out, progress=progress_printer())
            print(out)
            return 0
        if args.verb == "compare":
            print(json.dumps(compare_to_model(args.bundle), indent=1))
            return 0
    except ConfigError as exc:
        print(f"ConfigError: invalid configuration at {exc.path}: {exc.message}", file=sys.stderr)
        return 2
    except Exception as exc:  # module errors become a nonzero exit with the class name
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
