"""Command-line entry point.

Subcommands: ``geometry``, ``simulate``, ``correlate``, ``spectrum``,
``metrics``. Each accepts ``--config FILE`` (TOML or JSON); flags given on
the command line override file values.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import correlation as corr
from . import estimators as est
from .evaluation import (
    METHODS,
    MonteCarloConfig,
    geometry_label,
    monte_carlo,
)
from .geometry import (
    PlanarArrayGeometry,
    build_coprime_linear,
    build_full_ula,
    build_nested_linear,
    build_sirca,
    build_sirna,
    difference_coarray,
)
from .simulate import (
    Scenario,
    SnapshotSet,
    exact_snapshots,
    generate_snapshots,
    sources_from_snr,
)

OUTPUT_ENV = "MNMDOA_OUTPUT_DIR"


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def parse_geometry(spec: str):
    """Parses ``kind:p1,p2,...`` into a geometry.

    ``coprime:M_e,N,N_e,M``, ``nested:M_e,N_e``, ``ula:L``, ``sirna:M,N``,
    ``sirca:M``.
    """
    kind, _, rest = str(spec).partition(":")
    try:
        params = [int(p) for p in rest.split(",")] if rest else []
    except ValueError:
        raise ValueError(f"non-integer geometry parameters in {spec!r}") from None
    builders = {
        "coprime": (build_coprime_linear, 4),
        "nested": (build_nested_linear, 2),
        "ula": (build_full_ula, 1),
        "full-ula": (build_full_ula, 1),
        "sirna": (build_sirna, 2),
        "sirca": (build_sirca, 1),
    }
    if kind not in builders:
        raise ValueError(f"unknown geometry kind {kind!r} (expected one of {sorted(builders)})")
    fn, n = builders[kind]
    if len(params) != n:
        raise ValueError(f"geometry {kind!r} takes {n} parameter(s), got {len(params)}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*params)


def parse_sources(value):
    """Accepts a list or a string such as ``-0.1,0.2`` or ``0.297:0.46,0:-0.094``."""
    if isinstance(value, str):
        items = [s for s in value.replace(";", ",").split(",") if s.strip()]
        out = []
        for s in items:
            if ":" in s:
                a, b = s.split(":")
                out.append((float(a), float(b)))
            else:
                out.append(float(s))
        return out
    return [tuple(float(x) for x in v) if isinstance(v, (list, tuple)) else float(v) for v in value]


@dataclass
class ExperimentConfig:
    """Validated options shared by all subcommands."""

    geometry: object = None
    sources: list = field(default_factory=list)
    snr_db: object = 0.0
    noise_power: float = 1.0
    snapshots: int = 100
    seed: int = 0
    methods: List[str] = field(default_factory=lambda: ["mnm"])
    grid_step: Optional[float] = None
    lag_count: Optional[int] = None
    trials: int = 1000
    sweep_variable: Optional[str] = None
    sweep_values: Optional[list] = None
    planar: str = "linear"
    construction: str = "auto"
    rows: str = "all"
    exact: bool = False
    format: str = "json"
    input: Optional[str] = None
    output_dir: str = "."
    raw: dict = field(default_factory=dict)

    def scenario(self) -> Scenario:
        snr = self.snr_db
        if isinstance(snr, (list, tuple)):
            if len(snr) != len(self.sources):
                raise ValueError("snr_db list must have one entry per source")
            srcs = []
            for d, s in zip(self.sources, snr):
                srcs += sources_from_snr([d], s, self.noise_power)
        else:
            srcs = sources_from_snr(self.sources, float(snr), self.noise_power)
        return Scenario(self.geometry, srcs, self.noise_power, self.snapshots, self.seed)

    def provenance(self) -> dict:
        d = dict(self.raw)
        d["seed"] = self.seed
        return d


KEYS = {
    "geometry", "sources", "snr_db", "noise_power", "snapshots", "seed", "methods",
    "method", "grid_step", "lag_count", "trials", "sweep", "planar", "construction",
    "rows", "exact", "format", "input", "output_dir",
}


def load_config_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file not found: {path}"])
    text = p.read_bytes()
    try:
        if p.suffix.lower() == ".json":
            return json.loads(text)
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(text.decode())
    except Exception as exc:
        raise ConfigError([f"cannot parse {path}: {exc}"]) from None


def build_config(raw: dict) -> ExperimentConfig:
    """Validates a merged key/value mapping, collecting every problem."""
    problems = []
    unknown = sorted(set(raw) - KEYS)
    if unknown:
        problems.append(f"unknown config key(s): {', '.join(unknown)}")
    cfg = ExperimentConfig(raw=dict(raw))

    def take(key, conv, check=None, msg=None):
        if key not in raw or raw[key] is None:
            return
        try:
            val = conv(raw[key])
        except (TypeError, ValueError) as exc:
            problems.append(f"{key}: {exc}")
            return
        if check is not None and not check(val):
            problems.append(f"{key}: {msg} (got {raw[key]!r})")
            return
        setattr(cfg, key, val)

    if "geometry" in raw:
        try:
            cfg.geometry = parse_geometry(raw["geometry"])
        except ValueError as exc:
            problems.append(f"geometry: {exc}")
    if "sources" in raw:
        try:
            cfg.sources = parse_sources(raw["sources"])
        except (TypeError, ValueError) as exc:
            problems.append(f"sources: {exc}")
    take("snr_db", lambda v: [float(x) for x in v] if isinstance(v, (list, tuple)) else float(v))
    take("noise_power", float, lambda v: v > 0, "must be positive")
    take("snapshots", int, lambda v: v >= 1, "must be >= 1")
    take("seed", int, lambda v: v >= 0, "must be non-negative")
    take("grid_step", float, lambda v: 0 < v <= 1, "must be in (0, 1]")
    take("lag_count", int, lambda v: v >= 2, "must be >= 2")
    take("trials", int, lambda v: v >= 1, "must be >= 1")
    take("planar", str, lambda v: v in ("direct", "linear"), "must be 'direct' or 'linear'")
    take("construction", str, lambda v: v in ("auto", "block", "x", "y", "sample"),
         "must be auto, block, x, y or sample")
    take("rows", str, lambda v: v in ("all", "subarray"), "must be 'all' or 'subarray'")
    take("exact", bool)
    take("format", str, lambda v: v in ("json", "csv"), "must be 'json' or 'csv'")
    take("input", str)
    take("output_dir", str)
    methods = raw.get("methods", raw.get("method"))
    if methods is not None:
        if isinstance(methods, str):
            methods = [m for m in methods.split(",") if m]
        bad = [m for m in methods if m not in METHODS]
        if bad:
            problems.append(f"method: unknown method(s) {bad}; expected {list(METHODS)}")
        else:
            cfg.methods = list(methods)
    sweep = raw.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict):
            problems.append("sweep: must be a table with 'variable' and 'values'")
        else:
            extra = sorted(set(sweep) - {"variable", "values"})
            if extra:
                problems.append(f"sweep: unknown key(s) {', '.join(extra)}")
            var = sweep.get("variable")
            if var not in ("snr-db", "snapshots"):
                problems.append(f"sweep.variable: must be 'snr-db' or 'snapshots' (got {var!r})")
            vals = sweep.get("values")
            if not isinstance(vals, (list, tuple)) or not vals:
                problems.append("sweep.values: must be a nonempty list")
            else:
                cfg.sweep_variable, cfg.sweep_values = var, [float(v) for v in vals]
    if cfg.geometry is not None and cfg.sources:
        planar = isinstance(cfg.geometry, PlanarArrayGeometry)
        if any(isinstance(s, tuple) != planar for s in cfg.sources):
            problems.append("sources: direction dimensionality does not match the geometry")
        elif any(np.any(np.abs(np.atleast_1d(s)) > 1) for s in cfg.sources):
            problems.append("sources: direction cosines must lie in [-1, 1]")
    if problems:
        raise ConfigError(problems)
    return cfg


def _fmt(x) -> str:
    return repr(float(x))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _complex_rows(M):
    for row in np.atleast_2d(M):
        out = []
        for z in row:
            out += [_fmt(z.real), _fmt(z.imag)]
        yield out


def write_outputs(outdir, files: dict):
    """Writes every file via temp-then-rename after all contents are ready."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, out / name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


def geometry_report(g) -> dict:
    if isinstance(g, PlanarArrayGeometry):
        co = g.coarray_2d()
        return {
            "geometry": geometry_label(g),
            "kind": g.kind,
            "M": g.M,
            "N": g.N,
            "beta": list(g.beta),
            "sensor_count": g.size,
            "positions": [list(p) for p in g.positions],
            "aperture": g.aperture,
            "equivalent_ula_size": g.equivalent_ula_size,
            "m_tilde": g.m_tilde,
            "contiguous_halfwidth": co.contiguous_halfwidth,
            "block_correlation_dimension": g.virtual_size ** 2,
            "linear_coarray": _coarray_dict(difference_coarray(g.beta)),
        }
    return {
        "geometry": geometry_label(g),
        "kind": g.kind,
        "M_e": g.M_e,
        "N": g.N,
        "N_e": g.N_e,
        "M": g.M,
        "positions": list(g.positions),
        "sensor_count": g.size,
        "aperture": g.aperture,
        "equivalent_ula_size": g.equivalent_ula_size,
        "coarray": _coarray_dict(g.coarray()),
    }


def _coarray_dict(co) -> dict:
    return {
        "lags": sorted(co.lags),
        "weights": {str(k): v for k, v in co.weights.items()},
        "contiguous_len": co.contiguous_len,
    }


def _require(cfg, *names):
    missing = [n for n in names if not getattr(cfg, n)]
    if missing:
        raise ConfigError([f"missing required option: {n}" for n in missing])


def cmd_geometry(cfg: ExperimentConfig, stdout) -> int:
    _require(cfg, "geometry")
    g = cfg.geometry
    if cfg.format == "csv":
        if isinstance(g, PlanarArrayGeometry):
            stdout.write(_csv_text(["i", "j"], g.positions))
        else:
            stdout.write(_csv_text(["k"], [[k] for k in g.positions]))
    else:
        stdout.write(_json(geometry_report(g)))
    return 0


def _load_snapshots(cfg: ExperimentConfig) -> SnapshotSet:
    if cfg.input:
        path = Path(cfg.input)
        side = path.with_suffix(".json")
        if not path.is_file() or not side.is_file():
            raise ConfigError([f"input snapshots or sidecar not found: {path}, {side}"])
        meta = json.loads(side.read_text())
        sub = build_config({k: v for k, v in meta["config"].items() if k in KEYS})
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        data = raw[:, 0::2] + 1j * raw[:, 1::2]
        return SnapshotSet(data, sub.scenario())
    _require(cfg, "geometry", "sources")
    if cfg.exact:
        return exact_snapshots(cfg.scenario())
    return generate_snapshots(cfg.scenario())


def cmd_simulate(cfg: ExperimentConfig, stdout) -> int:
    _require(cfg, "geometry", "sources")
    snaps = generate_snapshots(cfg.scenario())
    n = snaps.data.shape[1]
    header = [f"s{k}_{part}" for k in range(n) for part in ("re", "im")]
    meta = {
        "config": cfg.provenance(),
        "geometry": geometry_report(cfg.geometry),
        "snapshots": snaps.Q,
        "sensor_order": "geometry positions" if not snaps.scenario.is_planar
        else "column-major vec(): x outer, y inner",
        "snr_db": snaps.scenario.snr_db().tolist(),
    }
    write_outputs(cfg.output_dir, {
        "snapshots.csv": _csv_text(header, _complex_rows(snaps.data)),
        "snapshots.json": _json(meta),
    })
    stdout.write(f"wrote {snaps.Q} snapshots x {n} sensors to {cfg.output_dir}\n")
    return 0


def _correlation(cfg: ExperimentConfig, snaps: SnapshotSet):
    g = snaps.scenario.geometry
    c = cfg.construction
    if c == "sample":
        return corr.CorrelationEstimate(corr.sample_correlation(snaps), "sample")
    if isinstance(g, PlanarArrayGeometry):
        if c in ("x", "y"):
            return corr.axis_averaged_correlation(snaps, g, c, cfg.lag_count, cfg.rows)
        return corr.planar_block_correlation(snaps, g)
    return corr.linear_correlation(snaps, g, cfg.lag_count)


def cmd_correlate(cfg: ExperimentConfig, stdout) -> int:
    snaps = _load_snapshots(cfg)
    R = _correlation(cfg, snaps)
    meta = {
        "config": cfg.provenance(),
        "dimension": R.dimension,
        "construction": R.construction,
        "lag_counts": {str(k): v for k, v in R.lag_counts.items()},
    }
    n = R.dimension
    header = [f"c{k}_{part}" for k in range(n) for part in ("re", "im")]
    write_outputs(cfg.output_dir, {
        "correlation.csv": _csv_text(header, _complex_rows(R.matrix)),
        "correlation.json": _json(meta),
    })
    stdout.write(f"wrote {n}x{n} {R.construction} correlation to {cfg.output_dir}\n")
    return 0


def _peaks_json(spec):
    return [{"location": p.location, "value": p.value} for p in spec.peaks]


def cmd_spectrum(cfg: ExperimentConfig, stdout) -> int:
    snaps = _load_snapshots(cfg)
    g = snaps.scenario.geometry
    P = len(snaps.scenario.sources)
    files = {}
    report = {"config": cfg.provenance(), "methods": {}}
    planar = isinstance(g, PlanarArrayGeometry)
    for m in cfg.methods:
        if not planar:
            grid = est.default_grid(cfg.grid_step or est.GRID_STEP_1D)
            spec = est.estimate_1d(_correlation(cfg, snaps), P, m, grid)
            files[f"spectrum_{m}.csv"] = _csv_text(["u", "value"], zip(spec.grid, spec.values))
            report["methods"][m] = {"peaks": _peaks_json(spec), "short": spec.short}
        elif cfg.planar == "direct":
            grid = est.default_grid(cfg.grid_step or est.GRID_STEP_2D)
            R = _correlation(_with(cfg, construction="block"), snaps)
            spec = est.estimate_2d(R, P, g.m_tilde, m, grid)
            gx, gy = spec.grid
            rows = ((gx[a], gy[b], spec.values[a, b]) for a in range(gx.size) for b in range(gy.size))
            files[f"spectrum_{m}.csv"] = _csv_text(["u_x", "u_y", "value"], rows)
            report["methods"][m] = {"peaks": _peaks_json(spec), "short": spec.short}
        else:
            grid = est.default_grid(cfg.grid_step or est.GRID_STEP_1D)
            entry = {}
            for axis in ("x", "y"):
                R = _correlation(_with(cfg, construction=axis), snaps)
                spec = est.estimate_1d(R, P, m, grid)
                files[f"spectrum_{m}_{axis}.csv"] = _csv_text(
                    [f"u_{axis}", "value"], zip(spec.grid, spec.values)
                )
                entry[f"peaks_{axis}"] = _peaks_json(spec)
            R_block = _correlation(_with(cfg, construction="block"), snaps)
            res = est.linear_planar_estimate(snaps, g, P, grid, m, cfg.rows, R_block)
            entry.update(pairs=res.pairs, candidates=res.candidates, scores=res.scores, short=res.short)
            report["methods"][m] = entry
    files["peaks.json"] = _json(report)
    write_outputs(cfg.output_dir, files)
    stdout.write(_json({m: r.get("peaks", r.get("pairs")) for m, r in report["methods"].items()}))
    return 0


def _with(cfg, **kw):
    return replace(cfg, **kw)


def cmd_metrics(cfg: ExperimentConfig, stdout) -> int:
    _require(cfg, "geometry", "sweep_variable")
    kw = dict(
        methods=cfg.methods if ("methods" in cfg.raw or "method" in cfg.raw) else list(METHODS),
        trials=cfg.trials,
        seed=cfg.seed,
        snapshots=cfg.snapshots,
        snr_db=float(cfg.snr_db) if not isinstance(cfg.snr_db, list) else cfg.snr_db[0],
        noise_power=cfg.noise_power,
        lag_count=cfg.lag_count,
        rows=cfg.rows,
        exact=bool(cfg.exact),
    )
    if cfg.grid_step:
        kw["grid_step"] = cfg.grid_step
    if cfg.sources:
        kw["directions"] = cfg.sources
    mc = MonteCarloConfig(cfg.geometry, cfg.sweep_variable, cfg.sweep_values, **kw)
    curves = monte_carlo(mc)
    files = {}
    for name, c in curves.items():
        rows = []
        for i, v in enumerate(c.sweep_values):
            for m in c.series:
                rows.append([v, m, c.series[m][i], c.stderr[m][i], c.trials])
        files[f"{name}.csv"] = _csv_text(["sweep_value", "algorithm", "value", "stderr", "trials"], rows)
    files["metrics.json"] = _json({"config": cfg.provenance(), "resolved": mc.to_dict()})
    write_outputs(cfg.output_dir, files)
    stdout.write(f"wrote {', '.join(sorted(files))} to {cfg.output_dir}\n")
    return 0


COMMANDS = {
    "geometry": cmd_geometry,
    "simulate": cmd_simulate,
    "correlate": cmd_correlate,
    "spectrum": cmd_spectrum,
    "metrics": cmd_metrics,
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file")
    common.add_argument("--geometry", help="e.g. coprime:4,2,4,3  nested:3,4  ula:10  sirna:3,4  sirca:2")
    common.add_argument("--sources", help="direction cosines, e.g. --sources=-0.1,0.2 or 0.297:0.46,0:-0.094")
    common.add_argument("--snr-db", dest="snr_db", type=float)
    common.add_argument("--noise-power", dest="noise_power", type=float)
    common.add_argument("--snapshots", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--grid-step", dest="grid_step", type=float)
    common.add_argument("--lag-count", dest="lag_count", type=int)
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--method", dest="methods", help="mnm, music or mnm,music")
    common.add_argument("--planar", choices=["direct", "linear"])
    common.add_argument("--construction", choices=["auto", "block", "x", "y", "sample"])
    common.add_argument("--rows", choices=["all", "subarray"])
    common.add_argument("--exact", action="store_true", default=None,
                        help="use the exact ensemble correlation instead of snapshots")
    common.add_argument("--input", help="snapshot CSV written by 'simulate'")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--sweep", help="metrics sweep, e.g. snr-db=-10,-5,0 or snapshots=10,100")

    parser = argparse.ArgumentParser(prog="mnmdoa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = make_parser().parse_args(argv)
    try:
        raw = load_config_file(args.config) if args.config else {}
        flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command")}
        if "sweep" in flags:
            var, _, vals = flags.pop("sweep").partition("=")
            flags["sweep"] = {"variable": var, "values": [float(v) for v in vals.split(",") if v]}
        if os.environ.get(OUTPUT_ENV):
            raw["output_dir"] = os.environ[OUTPUT_ENV]
        raw.update(flags)
        cfg = build_config(raw)
        return COMMANDS[args.command](cfg, stdout)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"error: {p}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
