"""Config-driven experiment runner: sample, construct, certify, estimate, probe.

All science parameters live in a JSON config validated against a strict
schema (unknown keys are rejected so typos cannot silently change an
experiment).  Outputs are CSV and JSON-lines files with fixed column
orders; reruns of the same config and seeds are byte-identical, and the
only environment influence is SPARSELOC_WORKERS (parallel cell count),
which must not change any output byte.
"""

from __future__ import annotations

import hashlib
import json
import math
import multiprocessing
import os
import sys
import time
import warnings
from pathlib import Path

import click
import jsonschema

from . import __version__
from .certify import (
    build_decomposition_quasi1d,
    build_decomposition_sparse,
    certify_ac,
    difference_support,
    smallest_integer_above,
)
from .models import (
    CouplingMap,
    model_from_dict,
    sample_couplings,
)
from .spectral import (
    discretize,
    localization_report,
    resolvent_decay,
)
from .stochastic import borel_cantelli_report, brute_force_a_n

import numpy as np

PIPELINES = ("certify-sparse", "certify-quasi1d", "lemma-mc", "spectral-probe", "full-report")

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dimension", "sites", "law", "potential"],
    "properties": {
        "dimension": {"type": "integer", "minimum": 1},
        "sites": {
            "type": "object",
            "additionalProperties": False,
            "required": ["generator"],
            "properties": {
                "generator": {"enum": ["lattice", "tube", "explicit"]},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "offsets": {"type": "array"},
                "points": {"type": "array"},
                "r_sigma": {"type": "number", "exclusiveMinimum": 0},
                "window_radius": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "law": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {
                    "enum": [
                        "bernoulli",
                        "uniform",
                        "bernoulli_times_uniform",
                        "point_masses",
                        "radial_bernoulli",
                        "shared",
                        "per_site",
                    ]
                },
                "p": {"type": "number", "minimum": 0, "maximum": 1},
                "lo": {"type": "number"},
                "hi": {"type": "number"},
                "tau": {"type": "number", "minimum": 0},
                "cap": {"type": "number", "minimum": 0, "maximum": 1},
                "atoms": {"type": "array"},
                "law": {"type": "object"},
                "laws": {"type": "array"},
            },
        },
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "amplitude", "radius"],
            "properties": {
                "kind": {"enum": ["indicator"]},
                "amplitude": {"type": "number"},
                "radius": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "background": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["zero", "constant", "periodic_step"]},
                "value": {"type": "number"},
                "values": {"type": "array", "items": {"type": "number"}},
                "cell": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "p_exponent": {"type": "number", "exclusiveMinimum": 0},
        "distinguished_site": {"type": "integer", "minimum": 0},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["pipeline", "seeds", "output_dir"],
    "properties": {
        "pipeline": {"enum": list(PIPELINES)},
        "model": MODEL_SCHEMA,
        "model_file": {"type": "string"},
        "seeds": {
            "type": "array",
            "items": {"type": "integer", "minimum": 0},
            "minItems": 1,
        },
        "output_dir": {"type": "string"},
        "parameters": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "gammas": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 1,
                },
                "n_range": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 2,
                    "maxItems": 2,
                },
                "a": {"type": "number", "exclusiveMinimum": 1},
                "alpha": {"type": "number", "exclusiveMinimum": 1},
                "trials": {"type": "integer", "minimum": 1},
                "box": {"type": "number", "exclusiveMinimum": 0},
                "h": {"type": "number", "exclusiveMinimum": 0},
                "window": {"type": "number", "exclusiveMinimum": 0},
                "energies": {"type": "array", "items": {"type": "number"}},
            },
        },
    },
}


class ConfigError(Exception):
    """Invalid configuration; `errors` lists field-level diagnostics."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


def _json_path(err: jsonschema.ValidationError) -> str:
    return "$" + "".join(
        f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path
    )


def load_config(path: str | Path) -> dict:
    """Parse and validate a config file; raises ConfigError with diagnostics."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from exc
    errors = [
        f"{_json_path(e)}: {e.message}"
        for e in jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(cfg)
    ]
    if errors:
        raise ConfigError(sorted(errors))
    errors = _semantic_errors(cfg, path.parent)
    if errors:
        raise ConfigError(errors)
    if "model_file" in cfg:
        model_path = (path.parent / cfg["model_file"]).resolve()
        cfg = dict(cfg)
        cfg["model"] = json.loads(model_path.read_text())
        model_errors = [
            f"model_file {_json_path(e)}: {e.message}"
            for e in jsonschema.Draft202012Validator(MODEL_SCHEMA).iter_errors(cfg["model"])
        ]
        if model_errors:
            raise ConfigError(sorted(model_errors))
    return cfg


def _required_radius_for_scales(a: float, n_hi: int) -> float:
    return max(a ** (n_hi + 1), a**n_hi + n_hi)


def _semantic_errors(cfg: dict, base_dir: Path) -> list[str]:
    errors: list[str] = []
    if ("model" in cfg) == ("model_file" in cfg):
        errors.append("$.model: exactly one of model / model_file is required")
        return errors
    if "model_file" in cfg and not (base_dir / cfg["model_file"]).exists():
        errors.append(f"$.model_file: {cfg['model_file']} does not exist")
        return errors
    params = cfg.get("parameters", {})
    pipeline = cfg["pipeline"]
    need = {
        "certify-sparse": ["eps", "gammas", "n_range"],
        "certify-quasi1d": ["eps", "gammas", "n_range", "a"],
        "lemma-mc": ["eps", "a", "n_range", "trials"],
        "spectral-probe": ["eps", "box", "h"],
        "full-report": ["eps", "gammas", "n_range", "a", "trials", "box", "h"],
    }[pipeline]
    for key in need:
        if key not in params:
            errors.append(f"$.parameters.{key}: required for pipeline {pipeline}")
    if "n_range" in params and params["n_range"][0] > params["n_range"][1]:
        errors.append("$.parameters.n_range: lower bound exceeds upper bound")
    if errors or "model" not in cfg:
        return errors

    model_cfg = cfg["model"]
    window = model_cfg.get("sites", {}).get("radius", math.inf)
    d = model_cfg.get("dimension", 1)
    if pipeline in ("certify-sparse", "full-report") and "gammas" in params:
        n_hi = params["n_range"][1]
        for gamma in params["gammas"]:
            ell = smallest_integer_above(2.0 * (d - 1) / gamma)
            a = 1.0 + 1.0 / ell
            needed = _required_radius_for_scales(a, n_hi)
            if needed > window:
                errors.append(
                    f"$.parameters.n_range: scale {n_hi} at gamma={gamma} needs window "
                    f"radius {needed:.2f} > site radius {window:.2f}"
                )
    if pipeline in ("certify-quasi1d", "lemma-mc", "full-report") and "a" in params:
        needed = _required_radius_for_scales(params["a"], params["n_range"][1])
        if needed > window:
            errors.append(
                f"$.parameters.n_range: scale {params['n_range'][1]} at a={params['a']} "
                f"needs window radius {needed:.2f} > site radius {window:.2f}"
            )
    if pipeline in ("spectral-probe", "full-report") and "box" in params:
        rho = model_cfg.get("potential", {}).get("radius", 1.0)
        needed = params["box"] * math.sqrt(d) + rho
        if needed > window:
            errors.append(
                f"$.parameters.box: box needs window radius {needed:.2f} "
                f"> site radius {window:.2f}"
            )
    return errors


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


# ---------------------------------------------------------------------------
# Formatting helpers (byte-stable output)
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w") as fp:
        fp.write(",".join(header) + "\n")
        for row in rows:
            fp.write(",".join(_fmt(x) for x in row) + "\n")


def _write_jsonl(path: Path, records: list[dict]) -> None:
    with open(path, "w") as fp:
        for rec in records:
            fp.write(json.dumps(rec, sort_keys=True) + "\n")


def _workers() -> int:
    return max(1, int(os.environ.get("SPARSELOC_WORKERS", "1")))


def _parallel_map(fn, items: list) -> list:
    if _workers() <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with multiprocessing.Pool(_workers()) as pool:
        return pool.map(fn, items)


# ---------------------------------------------------------------------------
# Pipeline cells (module-level for multiprocessing)
# ---------------------------------------------------------------------------


def _zero_couplings(model, window):
    indices = np.arange(len(model.sites))
    radius = window if window is not None else model.sites.window_radius
    return CouplingMap(model, indices, np.zeros(len(indices)), None, radius, "zero")


def _certify_sparse_cell(args: dict) -> dict:
    model = model_from_dict(args["model"])
    seed, gamma = args["seed"], args["gamma"]
    cm = sample_couplings(model, seed, args.get("window"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if args["pipeline"] == "certify-quasi1d":
            td = build_decomposition_quasi1d(
                cm,
                args["eps"],
                gamma,
                alpha=args.get("alpha", 2.0),
                a=args["a"],
                n_range=tuple(args["n_range"]),
            )
        else:
            td = build_decomposition_sparse(
                cm, args["eps"], gamma, n_range=tuple(args["n_range"])
            )
    diff = difference_support(model, cm, args["eps"])
    cert = certify_ac(td, diff, gamma)
    head = cert.to_records()[0]
    head.update({"seed": seed, "gamma": gamma})
    td_records = td.to_records()
    td_records[0].update({"seed": seed, "gamma": gamma})
    return {
        "seed": seed,
        "gamma": gamma,
        "summary": head,
        "decomposition": td_records,
        "terms": [
            [seed, gamma, t.scale, t.member, t.role, t.clearance, t.surface, t.value]
            for t in cert.terms
        ],
        "free": [
            [
                seed,
                gamma,
                rec["scale"],
                int(rec["free"]),
                rec["inner_radius"],
                int(rec["degenerate"]),
            ]
            for rec in td.params["free_records"]
        ],
        "cap_counts": [
            [seed, row["scale"], row["sites_near"], row["distinct_caps"],
             row["raw_bound"], row["scaled_bound"]]
            for row in td.params.get("cap_counts", [])
        ],
    }


def _lemma_cell(args: dict) -> dict:
    model = model_from_dict(args["model"])
    report = borel_cantelli_report(
        model,
        args["eps"],
        args["a"],
        tuple(args["n_range"]),
        args["trials"],
        args["seed"],
    )
    return {
        "seed": args["seed"],
        "verdict": report.verdict,
        "rows": [
            [
                args["seed"],
                r.scale,
                r.exact,
                r.estimate,
                r.std_error,
                r.bound,
                r.bound_eta,
                r.bound_vacuous,
                r.degenerate,
                r.partial_sum,
            ]
            for r in report.rows
        ],
    }


def _spectral_cell(args: dict) -> dict:
    model = model_from_dict(args["model"])
    seed = args["seed"]
    cm = sample_couplings(model, seed, args.get("window"))
    box, h = args["box"], args["h"]
    reference = discretize(model, _zero_couplings(model, args.get("window")), box, h)
    report = localization_report(model, cm, box, h, reference)
    rate_rows = []
    for energy in args.get("energies", []):
        try:
            fit = resolvent_decay(reference, float(energy))
        except ValueError:
            continue
        rate_rows.append(
            [seed, fit.energy, fit.spectrum_distance, fit.rate, fit.quality]
        )
    return {
        "seed": seed,
        "verdict": report.verdict,
        "gap_median_ipr": report.gap_median_ipr,
        "bulk_median_ipr": report.bulk_median_ipr,
        "boundary_max_amplitude": report.boundary_max_amplitude,
        "states": [
            [seed, s.energy, s.ipr, s.decay_rate, s.decay_quality, s.center, s.in_gap]
            for s in report.states
        ],
        "rates": rate_rows,
        "checks": [list(c) for c in report.resolvent_checks],
    }


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def _stage_certify(cfg: dict, outdir: Path, pipeline: str) -> dict:
    params = cfg["parameters"]
    cells = [
        {
            "model": cfg["model"],
            "pipeline": pipeline,
            "seed": seed,
            "gamma": gamma,
            "eps": params["eps"],
            "n_range": params["n_range"],
            "a": params.get("a"),
            "alpha": params.get("alpha", 2.0),
            "window": params.get("window"),
        }
        for seed in cfg["seeds"]
        for gamma in params["gammas"]
    ]
    results = _parallel_map(_certify_sparse_cell, cells)
    name = "certify-quasi1d" if pipeline == "certify-quasi1d" else "certify-sparse"
    outputs = []
    _write_jsonl(outdir / "certificates.jsonl", [r["summary"] for r in results])
    outputs.append("certificates.jsonl")
    _write_jsonl(
        outdir / "decompositions.jsonl",
        [rec for r in results for rec in r["decomposition"]],
    )
    outputs.append("decompositions.jsonl")
    _write_csv(
        outdir / "certificate_terms.csv",
        ["seed", "gamma", "scale", "member", "role", "clearance", "surface", "term"],
        [row for r in results for row in r["terms"]],
    )
    outputs.append("certificate_terms.csv")
    _write_csv(
        outdir / "free_annuli.csv",
        ["seed", "gamma", "scale", "found", "inner_radius", "degenerate"],
        [row for r in results for row in r["free"]],
    )
    outputs.append("free_annuli.csv")
    if pipeline == "certify-quasi1d":
        _write_csv(
            outdir / "member_counts.csv",
            ["seed", "scale", "sites_near", "distinct_caps", "raw_bound", "scaled_bound"],
            [row for r in results for row in r["cap_counts"]],
        )
        outputs.append("member_counts.csv")
    return {"name": name, "outputs": outputs}


def _stage_lemma(cfg: dict, outdir: Path) -> dict:
    params = cfg["parameters"]
    cells = [
        {
            "model": cfg["model"],
            "seed": seed,
            "eps": params["eps"],
            "a": params["a"],
            "n_range": params["n_range"],
            "trials": params["trials"],
        }
        for seed in cfg["seeds"]
    ]
    results = _parallel_map(_lemma_cell, cells)
    _write_csv(
        outdir / "an_rows.csv",
        ["seed", "n", "exact", "estimate", "std_error", "bound", "eta",
         "vacuous", "degenerate", "partial_sum"],
        [row for r in results for row in r["rows"]],
    )
    _write_jsonl(
        outdir / "an_verdicts.jsonl",
        [{"record": "an_verdict", "seed": r["seed"], "verdict": r["verdict"]} for r in results],
    )
    return {"name": "lemma-mc", "outputs": ["an_rows.csv", "an_verdicts.jsonl"]}


def _stage_spectral(cfg: dict, outdir: Path) -> dict:
    params = cfg["parameters"]
    cells = [
        {
            "model": cfg["model"],
            "seed": seed,
            "box": params["box"],
            "h": params["h"],
            "window": params.get("window"),
            "energies": params.get("energies", []),
        }
        for seed in cfg["seeds"]
    ]
    results = _parallel_map(_spectral_cell, cells)
    _write_csv(
        outdir / "states.csv",
        ["seed", "energy", "ipr", "decay_rate", "decay_quality", "center", "in_gap"],
        [row for r in results for row in r["states"]],
    )
    _write_csv(
        outdir / "resolvent_rates.csv",
        ["seed", "energy", "gap_distance", "rate", "quality"],
        [row for r in results for row in r["rates"]],
    )
    _write_jsonl(
        outdir / "localization.jsonl",
        [
            {
                "record": "localization",
                "seed": r["seed"],
                "verdict": r["verdict"],
                "gap_median_ipr": r["gap_median_ipr"],
                "bulk_median_ipr": r["bulk_median_ipr"],
                "boundary_max_amplitude": r["boundary_max_amplitude"],
                "resolvent_checks": r["checks"],
            }
            for r in results
        ],
    )
    return {
        "name": "spectral-probe",
        "outputs": ["states.csv", "resolvent_rates.csv", "localization.jsonl"],
    }


def run(config: dict | str | Path, config_path: Path | None = None) -> dict:
    """Execute the configured pipeline; returns (and writes) the manifest."""
    if not isinstance(config, dict):
        config_path = Path(config)
        config = load_config(config_path)
    outdir = Path(config["output_dir"])
    if config_path is not None and not outdir.is_absolute():
        outdir = config_path.parent / outdir
    outdir.mkdir(parents=True, exist_ok=True)
    pipeline = config["pipeline"]
    stages: list[dict] = []

    def run_stage(fn, *args):
        t0 = time.monotonic()
        stage = fn(*args)
        stage["wall_s"] = time.monotonic() - t0
        stages.append(stage)

    if pipeline in ("certify-sparse", "certify-quasi1d"):
        run_stage(_stage_certify, config, outdir, pipeline)
    elif pipeline == "lemma-mc":
        run_stage(_stage_lemma, config, outdir)
    elif pipeline == "spectral-probe":
        run_stage(_stage_spectral, config, outdir)
    elif pipeline == "full-report":
        run_stage(_stage_certify, config, outdir, "certify-sparse")
        run_stage(_stage_lemma, config, outdir)
        run_stage(_stage_spectral, config, outdir)
    manifest = {
        "record": "run_manifest",
        "tool_version": __version__,
        "pipeline": pipeline,
        "config_hash": config_hash(config),
        "output_dir": str(outdir),
    }
    records = [manifest] + [
        {
            "record": "stage",
            "name": s["name"],
            "outputs": s["outputs"],
            "wall_s": s["wall_s"],
        }
        for s in stages
    ]
    _write_jsonl(outdir / "manifest.jsonl", records)
    manifest["stages"] = stages
    return manifest


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------


def emit_plotdata(manifest_path: str | Path) -> list[str]:
    """Project stage outputs onto per-figure CSV series.

    an_series.csv:            n, exact, estimate, stderr, bound
    terms_vs_n.csv:           seed, gamma, n, delta, sigma, term
    ipr_vs_energy.csv:        seed, energy, ipr, in_gap
    rate_vs_gap_distance.csv: energy, gap_distance, rate, quality
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"manifest {manifest_path} does not exist")
    outdir = manifest_path.parent
    records = [json.loads(line) for line in manifest_path.read_text().splitlines()]
    stage_outputs = {
        rec["name"]: rec["outputs"] for rec in records if rec.get("record") == "stage"
    }
    if not stage_outputs:
        raise ValueError("manifest lists no completed stages")
    written: list[str] = []

    def read_rows(name: str) -> tuple[list[str], list[list[str]]]:
        lines = (outdir / name).read_text().splitlines()
        header = lines[0].split(",")
        return header, [line.split(",") for line in lines[1:]]

    if "lemma-mc" in stage_outputs:
        header, rows = read_rows("an_rows.csv")
        col = {name: i for i, name in enumerate(header)}
        out = [
            [r[col["n"]], r[col["exact"]], r[col["estimate"]], r[col["std_error"]], r[col["bound"]]]
            for r in rows
        ]
        _write_raw_csv(outdir / "an_series.csv", ["n", "exact", "estimate", "stderr", "bound"], out)
        written.append("an_series.csv")
    if "certify-sparse" in stage_outputs or "certify-quasi1d" in stage_outputs:
        header, rows = read_rows("certificate_terms.csv")
        col = {name: i for i, name in enumerate(header)}
        out = [
            [r[col["seed"]], r[col["gamma"]], r[col["scale"]], r[col["clearance"]],
             r[col["surface"]], r[col["term"]]]
            for r in rows
        ]
        _write_raw_csv(
            outdir / "terms_vs_n.csv", ["seed", "gamma", "n", "delta", "sigma", "term"], out
        )
        written.append("terms_vs_n.csv")
    if "spectral-probe" in stage_outputs:
        header, rows = read_rows("states.csv")
        col = {name: i for i, name in enumerate(header)}
        out = [
            [r[col["seed"]], r[col["energy"]], r[col["ipr"]], r[col["in_gap"]]] for r in rows
        ]
        _write_raw_csv(outdir / "ipr_vs_energy.csv", ["seed", "energy", "ipr", "in_gap"], out)
        written.append("ipr_vs_energy.csv")
        header, rows = read_rows("resolvent_rates.csv")
        col = {name: i for i, name in enumerate(header)}
        out = [
            [r[col["energy"]], r[col["gap_distance"]], r[col["rate"]], r[col["quality"]]]
            for r in rows
        ]
        _write_raw_csv(
            outdir / "rate_vs_gap_distance.csv",
            ["energy", "gap_distance", "rate", "quality"],
            out,
        )
        written.append("rate_vs_gap_distance.csv")
    return written


def _write_raw_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w") as fp:
        fp.write(",".join(header) + "\n")
        for row in rows:
            fp.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# Command-line interface
# ---------------------------------------------------------------------------


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Sparse random Schrodinger operators: certify, estimate, probe."""


@main.command("run")
@click.argument("config", type=click.Path())
def cmd_run(config: str) -> None:
    """Run the pipeline described by CONFIG (JSON)."""
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        for line in exc.errors:
            click.echo(f"config error: {line}", err=True)
        sys.exit(2)
    try:
        manifest = run(cfg, config_path=Path(config))
    except Exception as exc:  # stage failure
        click.echo(f"stage failure: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps({k: v for k, v in manifest.items() if k != "stages"}))
    sys.exit(0)


@main.command("validate")
@click.argument("config", type=click.Path())
def cmd_validate(config: str) -> None:
    """Validate CONFIG without running anything."""
    try:
        load_config(config)
    except ConfigError as exc:
        for line in exc.errors:
            click.echo(f"config error: {line}", err=True)
        sys.exit(2)
    click.echo("ok")
    sys.exit(0)


@main.command("plotdata")
@click.argument("manifest", type=click.Path())
def cmd_plotdata(manifest: str) -> None:
    """Emit per-figure CSV series next to MANIFEST."""
    try:
        written = emit_plotdata(manifest)
    except (FileNotFoundError, ValueError, OSError) as exc:
        click.echo(f"plotdata error: {exc}", err=True)
        sys.exit(1)
    for name in written:
        click.echo(name)
    sys.exit(0)


@main.group("oracle")
def cmd_oracle() -> None:
    """Exact small-configuration oracles."""


@cmd_oracle.command("an")
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--dimension", type=int, default=1, show_default=True)
@click.option("--p", type=float, default=0.5, show_default=True, help="shared Bernoulli weight")
@click.option("--radius", type=float, default=None, help="lattice window radius")
@click.option("--a", "growth", type=float, required=True)
@click.option("--n", "scale", type=int, required=True)
@click.option("--eps", type=float, required=True)
def cmd_oracle_an(model_path, dimension, p, radius, growth, scale, eps) -> None:
    """Exact a_n by full enumeration of the relevant sites."""
    if model_path is not None:
        model = model_from_dict(json.loads(Path(model_path).read_text()))
    else:
        if radius is None:
            radius = max(growth ** (scale + 1), growth**scale + scale) + 1.0
        model = model_from_dict(
            {
                "dimension": dimension,
                "sites": {"generator": "lattice", "radius": radius},
                "law": {"kind": "bernoulli", "p": p},
                "potential": {"kind": "indicator", "amplitude": 1.0, "radius": 1.0},
            }
        )
    try:
        value = brute_force_a_n(model, eps, growth, scale)
    except Exception as exc:
        click.echo(f"oracle error: {exc}", err=True)
        sys.exit(1)
    click.echo(repr(value))
    sys.exit(0)


if __name__ == "__main__":
    main()
