"""Experiment runner: one validated config in, one reproducible result record out."""

from __future__ import annotations

import copy
import csv
import io as _io
import logging
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .conditions import check_theorem_conditions
from .config import build_ifs, config_hash, expand_sweep, get_path, validate_config
from .conformal_maps import Similarity
from .convolution import (DISSONANCE_CSV_HEADER, DissonanceConfig, convolve, dissonance_experiment,
                          orthogonal_project, project_lambda, random_basis, random_lambda)
from .dimension import CSV_HEADER, CorrelationDimension, DimensionEstimate, box_dim
from .errors import ConfigInvalid, DissonanceError
from .ifs import chaos_game, check_strong_separation, moran_dimension
from .io import dumps, read_pointcloud, write_gridmass, write_json, write_pointcloud
from .scenery import pairwise_lp, scenery_dim, scenery_distribution

log = logging.getLogger(__name__)

RESULT_FORMAT = "dissonance-result v1"
SWEEP_HEADER = "row,status,seed,params,error,config_hash,summary"


class StageError(DissonanceError):
    """A numeric stage failed; ``stage`` names it."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage {stage!r} failed: {type(exc).__name__}: {exc}")
        self.stage = stage
        self.cause = exc


@dataclass
class ResultRecord:
    experiment_id: str
    kind: str
    config_hash: str
    build: str
    wall_time: float
    payload: dict
    summary: str
    artifacts: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"format": RESULT_FORMAT, "id": self.experiment_id, "kind": self.kind,
                "config_hash": self.config_hash, "build": self.build, "wall_time": self.wall_time,
                "payload": self.payload, "summary": self.summary, "artifacts": self.artifacts}

    def payload_bytes(self) -> bytes:
        return dumps(self.payload).encode()


_BUILD = None


def git_describe() -> str:
    """``git describe`` of the source tree, or the package version outside a checkout."""
    global _BUILD
    if _BUILD is None:
        try:
            out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                                 cwd=Path(__file__).parent, capture_output=True, text=True, timeout=10)
            _BUILD = out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else f"v{__version__}"
        except (OSError, subprocess.SubprocessError):
            _BUILD = f"v{__version__}"
    return _BUILD


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        if exc is not None and not isinstance(exc, (ConfigInvalid, StageError)) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


def _estimate(cloud, spec: dict | None) -> DimensionEstimate:
    spec = dict(spec or {})
    method = spec.pop("method", "box")
    if method == "box":
        return box_dim(cloud, **spec)
    if "algorithm" in spec:
        spec["method"] = spec.pop("algorithm")
    est = CorrelationDimension(**spec).fit(cloud.points, sample_weight=cloud.weights)
    return est.estimate(cloud.seed)


def _similarity_dimension(ifs):
    if all(isinstance(f, Similarity) for f in ifs.maps):
        return moran_dimension([f.r for f in ifs.maps])
    return None


def _sample(cfg: dict, key: str, seed: int, workers: int):
    ifs = build_ifs(cfg[key], f"$.{key}")
    with _Stage("sample"):
        return ifs, chaos_game(ifs, cfg["n"], seed=seed, workers=workers)


def _run_validate(cfg, out, workers):
    ifs = build_ifs(cfg["ifs"])
    payload = {"valid": True, "d": ifs.d, "maps": len(ifs), "probs": ifs.probs.tolist(),
               "contraction_bounds": ifs.contraction_bounds().tolist(),
               "similarity_dimension": _similarity_dimension(ifs)}
    if "depth" in cfg:
        with _Stage("separation"):
            payload["separation"] = check_strong_separation(ifs, cfg["depth"])
    summary = f"valid,{ifs.d},{len(ifs)},{payload.get('separation', {}).get('verdict', '')}"
    return payload, summary, []


def _run_sample(cfg, out, workers):
    seed = cfg.get("seed", 0)
    _, cloud = _sample(cfg, "ifs", seed, workers)
    artifacts = []
    if out is not None:
        path = out / "cloud.txt"
        write_pointcloud(path, cloud)
        artifacts.append(str(path))
    payload = {"n": cloud.n, "d": cloud.d, "seed": seed,
               "mean": cloud.points.mean(axis=0).tolist(), "min": cloud.points.min(axis=0).tolist(),
               "max": cloud.points.max(axis=0).tolist()}
    return payload, f"{cloud.n},{cloud.d},{seed}", artifacts


def _run_dim(cfg, out, workers):
    seed = cfg.get("seed", 0)
    if "cloud" in cfg:
        cloud = read_pointcloud(cfg["cloud"])
        oracle = None
    else:
        ifs, cloud = _sample(cfg, "ifs", seed, workers)
        oracle = _similarity_dimension(ifs)
    with _Stage("estimate"):
        est = _estimate(cloud, cfg.get("estimator"))
    payload = {"estimate": est.to_dict(), "similarity_dimension": oracle}
    return payload, est.csv_row(), []


def _run_convolve(cfg, out, workers):
    seed = cfg.get("seed", 0)
    _, mu = _sample(cfg, "ifs", seed, workers)
    _, nu = _sample(cfg, "psi", seed + 1, workers)
    with _Stage("convolve"):
        conv = convolve(mu, nu, cfg.get("m", cfg["n"]), seed=seed + 2)
    with _Stage("estimate"):
        ests = [_estimate(c, cfg.get("estimator")) for c in (mu, nu, conv)]
    predicted = min(float(mu.d), ests[0].value + ests[1].value)
    payload = {"dim_mu": ests[0].to_dict(), "dim_nu": ests[1].to_dict(), "dim_conv": ests[2].to_dict(),
               "predicted": predicted, "measured": ests[2].value}
    return payload, ests[2].csv_row(), []


def _run_project(cfg, out, workers):
    seed = cfg.get("seed", 0)
    spec = cfg["projection"]
    ifs, cloud = _sample(cfg, "ifs", seed, workers)
    with _Stage("estimate"):
        source = _estimate(cloud, cfg.get("estimator"))
    if spec["type"] == "orthogonal":
        basis = spec.get("basis")
        if basis is None:
            basis = random_basis(cloud.d, spec.get("k", 1), spec.get("basis_seed", 0))
        with _Stage("project"):
            image = orthogonal_project(cloud, basis)
        k = image.d
        predicted = min(float(k), source.value)
        params = {"basis": np.asarray(basis).tolist()}
        sources = [source]
    else:
        copies = spec.get("copies", 2)
        clouds = [cloud]
        sources = [source]
        for j in range(1, copies):
            with _Stage("sample"):
                clouds.append(chaos_game(ifs, cfg["n"], seed=seed + j, workers=workers))
            with _Stage("estimate"):
                sources.append(_estimate(clouds[-1], cfg.get("estimator")))
        lam = random_lambda(cloud.d, copies, tuple(spec.get("t_interval", (-1.0, 1.0))), spec.get("lambda_seed", 0))
        with _Stage("project"):
            image = project_lambda(clouds, lam, cfg.get("m", cfg["n"]), seed=seed + copies)
        predicted = min(float(cloud.d), sum(s.value for s in sources))
        params = lam.to_dict()
    with _Stage("estimate"):
        est = _estimate(image, cfg.get("estimator"))
    payload = {"estimate": est.to_dict(), "sources": [s.to_dict() for s in sources],
               "predicted": predicted, "measured": est.value, "params": params}
    return payload, est.csv_row(), []


def _run_scenery(cfg, out, workers):
    seed = cfg.get("seed", 0)
    spec = cfg["scenery"]
    _, cloud = _sample(cfg, "ifs", seed, workers)
    x = spec.get("x")
    if x is None:
        x = cloud.points[spec.get("point_index", 0) % cloud.n]
    with _Stage("scenery"):
        sd = scenery_distribution(cloud, x, spec.get("T", 4.0), spec.get("dt", 0.25), spec.get("resolution", 8))
        dim = scenery_dim(sd)
        lp = pairwise_lp(sd)
    quartiles = np.quantile(lp, [0.25, 0.5, 0.75]).tolist() if lp.size else [0.0, 0.0, 0.0]
    artifacts = []
    if out is not None:
        for k, dm in enumerate(sd.members):
            path = out / f"member_{k:03d}.csv"
            write_gridmass(path, dm)
            artifacts.append(str(path))
    payload = {"x": np.asarray(x, dtype=float).tolist(), "T": sd.provenance["T"], "dt": sd.provenance["dt"],
               "members": len(sd), "scenery_dim": dim, "lp_quartiles": quartiles,
               "lp_max": float(lp.max()) if lp.size else 0.0, "provenance": sd.provenance}
    summary = ",".join(map(repr, [*payload["x"], payload["T"], payload["dt"], dim, *quartiles]))
    return payload, summary, artifacts


def _run_conditions(cfg, out, workers):
    phi = build_ifs(cfg["ifs"])
    psi = build_ifs(cfg["psi"], "$.psi") if "psi" in cfg else None
    kw = {k: cfg[k] for k in ("word_len", "max_denominator") if k in cfg}
    with _Stage("conditions"):
        report = check_theorem_conditions(phi, psi, cfg["theorem"], seed=cfg.get("seed"), **kw)
    payload = report.to_dict()
    summary = ",".join([report.theorem, report.status] + [c.status for c in report.conditions])
    return payload, summary, []


def _run_dissonance(cfg, out, workers):
    phi = build_ifs(cfg["ifs"])
    psi = build_ifs(cfg["psi"], "$.psi")
    est = dict(cfg.get("estimator", {}))
    method = est.pop("method", "box")
    if "algorithm" in est:
        est["method"] = est.pop("algorithm")
    dc = DissonanceConfig(n=cfg["n"], m=cfg.get("m"), seed=cfg.get("seed", 0), estimator=method,
                          estimator_params=est, theorem=cfg.get("theorem"), **cfg.get("margins", {}))
    with _Stage("dissonance"):
        report = dissonance_experiment(phi, psi, dc)
    payload = report.to_dict()
    payload["measured"] = report.dim_conv.value
    return payload, report.csv_row(), []


RUNNERS = {
    "validate": _run_validate,
    "sample": _run_sample,
    "dim": _run_dim,
    "convolve": _run_convolve,
    "project": _run_project,
    "scenery": _run_scenery,
    "check-conditions": _run_conditions,
    "dissonance": _run_dissonance,
}

SUMMARY_HEADERS = {
    "validate": "status,d,maps,separation",
    "sample": "n,d,seed",
    "dim": CSV_HEADER,
    "convolve": CSV_HEADER,
    "project": CSV_HEADER,
    "scenery": "x...,T,dt,scenery_dim,lp_q1,lp_median,lp_q3",
    "check-conditions": "theorem,status,conditions...",
    "dissonance": DISSONANCE_CSV_HEADER,
    "sweep": SWEEP_HEADER,
}


def run(cfg: dict, out=None, seed: int | None = None, threads: int = 1) -> ResultRecord:
    """Validate ``cfg`` and execute it.  ``seed`` overrides the config seed."""
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["seed"] = int(seed)
    validate_config(cfg)
    out_dir = Path(out) if out is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    digest = config_hash(cfg)
    start = time.perf_counter()
    if cfg["kind"] == "sweep":
        payload, summary, artifacts = _run_sweep(cfg, out_dir, threads)
    else:
        payload, summary, artifacts = RUNNERS[cfg["kind"]](cfg, out_dir, max(1, threads))
    wall = time.perf_counter() - start
    record = ResultRecord(cfg.get("id", f"{cfg['kind']}-{digest[:12]}"), cfg["kind"], digest,
                          git_describe(), wall, payload, summary, artifacts)
    if out_dir is not None:
        write_json(out_dir / "result.json", record.to_dict())
        record.artifacts.append(str(out_dir / "result.json"))
    return record


def _run_sweep(cfg, out_dir, threads):
    rows = expand_sweep(cfg)
    results = []
    table = _io.StringIO()
    writer = csv.writer(table, lineterminator="\n")
    writer.writerow(SWEEP_HEADER.split(","))
    for i, row in enumerate(rows):
        if "seed" in cfg and "seed" not in row:
            row["seed"] = cfg["seed"]
        params = {key: get_path(row, key) for key in cfg.get("grid", {})}
        head = {"row": i, "seed": row.get("seed"), "params": params}
        cells = [i, None, row.get("seed", ""), dumps(params)]
        sub = out_dir / f"row_{i:03d}" if out_dir is not None else None
        try:
            rec = run(row, sub, threads=threads)
            results.append({**head, "status": "ok", "config_hash": rec.config_hash, "payload": rec.payload})
            cells[1] = "ok"
            writer.writerow(cells + ["", rec.config_hash, rec.summary])
        except (DissonanceError, ValueError) as exc:
            log.warning("sweep row %d failed: %s", i, exc)
            error = f"{type(exc).__name__}: {exc}"
            results.append({**head, "status": "error", "error": error})
            cells[1] = "error"
            writer.writerow(cells + [error, "", ""])
    artifacts = []
    if out_dir is not None:
        path = out_dir / "table.csv"
        path.write_text(table.getvalue())
        artifacts.append(str(path))
    ok = sum(r["status"] == "ok" for r in results)
    payload = {"rows": results, "n_rows": len(results), "n_ok": ok, "table": table.getvalue()}
    return payload, f"{len(results)},{ok},{len(results) - ok}", artifacts


def gate_status(record: ResultRecord) -> str | None:
    """The verdict or status ``--strict`` gates on, if the kind has one."""
    p = record.payload
    if record.kind == "dissonance":
        return p["verdict"]
    if record.kind == "check-conditions":
        return p["status"]
    return None
