"""End-to-end runs that write every intermediate artifact to a bundle directory."""

from __future__ import annotations

import json
import math
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import correlations as cl
from . import geometry as geo
from .config import ExperimentConfig
from .spinwave import fit_log_amplitude, predict_correlations, structure_factor_growth
from .twa import ensemble_csv, read_ensemble_csv, run_ensemble
from .waveform import dispersion, drive_at_momentum, spectrum_csv, waveform_csv

MANIFEST_VERSION = "1.0.0"


class ReportError(ValueError):
    """A bundle lacks what the model comparison needs."""


def _versions() -> dict:
    from . import __version__

    out = {"python": platform.python_version(), "numpy": np.__version__, "cavitygeom": __version__}
    for pkg in ("scipy", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            pass
    return out


def _write(path: Path, text: str, files: list):
    path.write_text(text)
    files.append(path.name)


def run_pipeline(config: ExperimentConfig, out_dir=None, progress=None) -> Path:
    """Synthesize, simulate, analyse and reconstruct; return the bundle path.

    On failure the files written so far stay in place and the manifest is
    marked partial before the exception propagates.
    """
    out = Path(out_dir if out_dir is not None else config.output)
    out.mkdir(parents=True, exist_ok=True)
    files: list[str] = []
    started = time.time()
    manifest = {
        "version": MANIFEST_VERSION,
        "config": config.to_dict(),
        "seed": config.seed,
        "trajectories": config.trajectories,
        "software": _versions(),
        "partial": True,
        "files": files,
    }
    try:
        lattice = config.lattice
        wf = config.waveform()
        _write(out / "waveform.csv", waveform_csv(wf), files)
        _write(out / "spectrum.csv", spectrum_csv(wf), files)
        disp = dispersion(wf, lattice)
        T_int = max(1, int(round(config.T)))
        pred = structure_factor_growth(disp, T_int)
        _write(out / "prediction_structure_factor.csv", pred.to_csv(), files)
        _write(out / "prediction_correlations.csv", predict_correlations(disp, T_int).to_csv(), files)

        records = run_ensemble(
            lattice, wf, config.noise, config.trajectories, config.T, config.seed,
            frame=config.frame, settings=config.integrator, progress=progress,
        )
        _write(out / "ensemble.csv", ensemble_csv(records), files)
        sidecar = {"config": config.to_dict(), "seeds": [str(r.seed) for r in records]}
        _write(out / "ensemble.json", json.dumps(sidecar), files)

        meta = {"T": config.T, "preset": config.name, "periodic": lattice.periodic}
        C_pm = cl.corr(records, "n_plus", "n_minus", meta)
        C_xx = cl.corr(records, "fx", "fx", meta)
        c_xx = cl.cxx(records, lattice.n, meta)
        for tag, C in (("pm", C_pm), ("xx", C_xx), ("cxx", c_xx)):
            _write(out / f"corr_{tag}.csv", C.to_csv(), files)
            _write(out / f"corr_{tag}.json", C.to_json(), files)
            _write(out / f"profile_{tag}.csv", cl.distance_profile(C).to_csv(), files)
        _write(out / "structure_factor.csv", cl.structure_factor_csv(cl.structure_factor(records)), files)

        emb = geo.embed(C_xx)
        _write(out / "embedding.json", emb.to_json(), files)
        _write(out / "bonds.json", json.dumps(geo.coupling_bonds(emb.Jprime)), files)
        if lattice.M >= 4:
            bulk = geo.reconstruct_bulk(C_xx, emb.coordinates)
            _write(out / "bulk.json", bulk.to_json(), files)
        report = compare_to_model(out, config)
        _write(out / "model_report.json", json.dumps(report, indent=1), files)
        manifest["partial"] = False
    except Exception as exc:
        manifest["error"] = {"class": type(exc).__name__, "message": str(exc)}
        raise
    finally:
        manifest["wall_clock_s"] = time.time() - started
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return out


def load_bundle_config(bundle) -> ExperimentConfig:
    m = json.loads((Path(bundle) / "manifest.json").read_text())
    return ExperimentConfig.from_dict(m["config"])


def _read_structure_factor(path: Path) -> np.ndarray:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return np.atleast_1d(data["magnitude"]).astype(float)


def compare_to_model(bundle, config: ExperimentConfig | None = None) -> dict:
    """Fit one amplitude of |Jt(k/omega_B)|^T to the measured structure factor.

    The fit is least squares on the log scale over modes where the model is
    at least 10% of its peak; the residual is the rms of (data - fit) over
    those modes, relative to the largest measured value.
    """
    bundle = Path(bundle)
    if config is None:
        config = load_bundle_config(bundle)
    if config.T is None or config.T <= 0:
        raise ReportError("bundle has no positive evolution time T")
    data = _read_structure_factor(bundle / "structure_factor.csv")
    M = config.lattice.M
    k = 2.0 * math.pi * np.arange(M) / M
    wf = config.waveform()
    if wf.kind == "pulsed":
        Jk = np.abs(wf.pulse_weights)
    else:
        Jk = np.abs(drive_at_momentum(wf, k))
    model = Jk ** config.T
    report = {
        "T": config.T,
        "drive": config.drive,
        "open_bc": not config.lattice.periodic,
        "model": "|J(k/omega_B)|^T",
    }
    if np.ptp(model) <= 1e-12 * max(model.max(), 1e-300):
        report.update({"degenerate": True, "amplitude": float(np.mean(data) / max(model.mean(), 1e-300)), "rms_residual": None})
        return report
    A, res, mask = fit_log_amplitude(data, model)
    report.update({
        "degenerate": False,
        "amplitude": A,
        "rms_residual": res,
        "modes_used": [int(m) for m in np.flatnonzero(mask)],
    })
    if report["open_bc"]:
        report["note"] = (
            "open chain: momentum modes are only approximately independent, "
            "so an offset from the model is expected"
        )
    return report


def analyze_ensemble(ensemble_path, config: ExperimentConfig, out_dir) -> list[str]:
    """Correlation stage on an existing ensemble CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = read_ensemble_csv(Path(ensemble_path).read_text(), config.T)
    files: list[str] = []
    meta = {"T": config.T, "preset": config.name, "periodic": config.lattice.periodic}
    for tag, C in (
        ("pm", cl.corr(records, "n_plus", "n_minus", meta)),
        ("xx", cl.corr(records, "fx", "fx", meta)),
        ("cxx", cl.cxx(records, config.lattice.n, meta)),
    ):
        _write(out / f"corr_{tag}.csv", C.to_csv(), files)
        _write(out / f"corr_{tag}.json", C.to_json(), files)
        _write(out / f"profile_{tag}.csv", cl.distance_profile(C).to_csv(), files)
    _write(out / "structure_factor.csv", cl.structure_factor_csv(cl.structure_factor(records)), files)
    return files


def read_matrix(path) -> cl.CorrelationMatrix:
    """Load a correlation matrix written as JSON or as (row, col, value) CSV."""
    path = Path(path)
    if path.suffix == ".json":
        d = json.loads(path.read_text())
        vals = np.array([[np.nan if v is None else v for v in row] for row in d["values"]], dtype=float)
        return cl.CorrelationMatrix(d.get("kind", "xx"), vals, d.get("sample_count", 0), d.get("metadata", {}))
    data = np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True))
    M = int(max(data["row"].max(), data["col"].max())) + 1
    vals = np.full((M, M), np.nan)
    vals[data["row"].astype(int), data["col"].astype(int)] = data["value"]
    return cl.CorrelationMatrix("xx", vals, 0, {})


def progress_printer(stream=sys.stderr):
    def report(done, total):
        print(f"  {done}/{total} trajectories", file=stream)

    return report
