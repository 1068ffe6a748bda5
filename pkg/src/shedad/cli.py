"""Command line front end: ``shedad {simulate,run,eval,metrics}``.

Every subcommand reads one flat ``key = value`` config file (see
:class:`shedad.config.RunConfig`); ``--seed``, ``--out``, ``--workers`` and
``--set KEY=VALUE`` override file values. Exit codes: 0 success, 1 usage or
config error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .config import RunConfig
from .dtw import DistanceMatrix, euclidean_matrix, set_workers
from .estimator import SHEDAD
from .exceptions import ConfigError, DataError, ShedadError
from .hierarchy import ClusterAssignment
from .ingest import day_starts, exclusions_to_json, load_csv, validate_and_align
from .metrics import detection_confusion, long_format, metrics_to_json, quality_report
from .simulator import FaultSpec, NetworkSpec, Window, default_faults, emit_csv, generate_network, simulate
from .anomaly import report_to_json

logger = logging.getLogger("shedad")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@contextmanager
def stage(name):
    """Log stage timing and tag errors with the stage name."""
    t = time.perf_counter()
    try:
        yield
    except Exception as exc:
        if getattr(exc, "stage", None) is None:
            try:
                exc.stage = name
            except AttributeError:  # pragma: no cover - builtins without __dict__
                pass
        raise
    logger.info("[%s] done in %.2fs", name, time.perf_counter() - t)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _check_writable(out: Path, names, force: bool):
    existing = [n for n in names if (out / n).exists()]
    if existing and not force:
        raise ConfigError(f"refusing to overwrite {', '.join(existing)} in {out} (use --force)")
    out.mkdir(parents=True, exist_ok=True)


def _write_manifest(out: Path, command: str, cfg: RunConfig, files, extra=None):
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config_digest": cfg.digest(),
        "config_echo": cfg.to_dict(),
        "files": {str(Path(f).relative_to(out)): file_digest(f) for f in sorted(files)},
    }
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_faults(path) -> list[FaultSpec]:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read faults file {path}: {exc}") from exc
    if isinstance(raw, dict):
        raw = raw.get("faults", [])
    try:
        return [FaultSpec.from_dict(f) for f in raw]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed fault spec in {path}: {exc}") from exc


def _window(cfg: RunConfig) -> Window:
    try:
        start = pd.Timestamp(cfg.start)
    except ValueError as exc:
        raise ConfigError(f"start: cannot parse {cfg.start!r}") from exc
    start = start.tz_localize("UTC") if start.tzinfo is None else start.tz_convert("UTC")
    return Window(start=start, days=cfg.days)


def simulate_from_config(cfg: RunConfig):
    """In-memory ``(series, ground_truth)`` for the simulator settings of ``cfg``."""
    spec = NetworkSpec(n_substations=cfg.n_substations, seed=cfg.seed, noise_sigma=cfg.noise_sigma)
    window = _window(cfg)
    topo = generate_network(spec)
    if cfg.faults:
        faults = _load_faults(cfg.faults)
    else:
        faults = default_faults(topo, window, cfg.n_supply_faults, cfg.n_performance_faults, cfg.seed)
    return simulate(topo, spec, faults, window)


def estimator_from_config(cfg: RunConfig, n_substations: int) -> SHEDAD:
    """Unfitted estimator carrying the pipeline settings of ``cfg``."""
    return SHEDAD(n_days=cfg.r, band_radius=cfg.band_radius, k_base=cfg.k_b, theta_min=cfg.theta_min,
                  theta_max=cfg.theta_max, thresholds_as_quantiles=cfg.thresholds_as_quantiles,
                  kappa_min=cfg.kappa_min, dissimilarity=cfg.dissimilarity,
                  n_clusters=min(cfg.n_clusters, n_substations), singleton_threshold=cfg.singleton_threshold,
                  n_neighbors=cfg.comparison_k or None, z_threshold=cfg.z_threshold,
                  flag_threshold=cfg.flag_threshold, random_state=cfg.seed, n_jobs=cfg.workers or None)


def cmd_simulate(cfg: RunConfig, force=False, debug_dump=False):
    """Generate a synthetic dataset and its ground truth."""
    out = Path(cfg.out)
    with stage("simulate"):
        # faults are validated here, before anything touches the disk
        series, truth = simulate_from_config(cfg)
        logger.info("[simulate] %d substations, %d samples, %d faults", len(series), len(series[0]),
                    len(truth.faults))
    with stage("write"):
        names = ["data.csv", "ground_truth.json", "manifest.json"]
        _check_writable(out, names, force)
        data_path, truth_path = emit_csv(series, truth, out)
        _write_manifest(out, "simulate", cfg, [data_path, truth_path])
    return data_path, truth_path


def cmd_run(cfg: RunConfig, force=False, debug_dump=False) -> dict:
    """Full pipeline on an ingest-schema CSV; returns the report dict."""
    if not cfg.input:
        raise ConfigError("run needs an input CSV (--input or 'input = ...' in the config)")
    out = Path(cfg.out)
    names = ["report.json", "report.csv", "assignment.csv", "exclusions.json", "metrics.json", "manifest.json"]
    if debug_dump:
        names.append("debug")
    _check_writable(out, names, force)

    with stage("ingest"):
        readings = load_csv(cfg.input)
        if not readings:
            raise DataError(f"{cfg.input} holds no readings")
        series, excluded = validate_and_align(readings)
        logger.info("[ingest] %d substations read, %d retained, %d excluded",
                    len(readings), len(series), len(excluded))
    with stage("days"):
        first = series[0]
        dates, starts = day_starts(len(first), first.start, first.step, cfg.timezone)
        logger.info("[days] %d complete days in %s", len(dates), cfg.timezone)

    ids = [s.substation_id for s in series]
    X = np.vstack([s.supply for s in series])
    R = np.vstack([s.return_temp for s in series])
    est = estimator_from_config(cfg, len(ids))
    with stage("pipeline"):
        est.fit(X, return_temp=R, ids=ids, day_starts=starts, dates=dates)

    with stage("report"):
        echo = cfg.echo()
        report = est.scorecard_.to_report(echo, cfg.seed)
        report["config_digest"] = cfg.digest()
        report["substations"] = list(ids)
        report["excluded"] = [e.substation_id for e in excluded]
        report["selected_days"] = [str(d) for d in est.selected_days_]
        (out / "report.json").write_text(report_to_json(report), encoding="utf-8")
        est.scorecard_.to_frame().to_csv(out / "report.csv", index=False, lineterminator="\n")
        est.assignment_.to_csv(out / "assignment.csv")
        (out / "exclusions.json").write_text(exclusions_to_json(excluded) + "\n", encoding="utf-8")
        quality = quality_report(est.assignment_, est.euclidean_)
        quality.update(config_echo=echo, config_digest=cfg.digest(), seed=cfg.seed)
        (out / "metrics.json").write_text(metrics_to_json(quality), encoding="utf-8")
        written = [out / n for n in names if n not in ("manifest.json", "debug")]
        if debug_dump:
            written += _debug_dump(est, out / "debug")
        _write_manifest(out, "run", cfg, written, {"input_digest": file_digest(cfg.input)})
        logger.info("[report] %d supply anomalies, %d performance anomalies",
                    len(report["supply_anomalies"]), len(report["performance"]))
    return report


def _debug_dump(est: SHEDAD, root: Path) -> list[Path]:
    root.mkdir(parents=True, exist_ok=True)
    files = []
    for d, mat, g in zip(est.selected_days_, est.daily_matrices_, est.daily_graphs_):
        files.append(root / f"dtw_{d}.csv")
        mat.to_csv(files[-1])
        files.append(root / f"graph_{d}.csv")
        g.to_csv(files[-1])
    files.append(root / "merged_graph.csv")
    est.graph_.to_csv(files[-1])
    files.append(root / "similarity.csv")
    pd.DataFrame(est.similarity_.values, index=est.ids_, columns=est.ids_).to_csv(files[-1], lineterminator="\n")
    files.append(root / "dissimilarity.csv")
    est.dissimilarity_.to_csv(files[-1])
    files.append(root / "dendrogram.json")
    est.dendrogram_.to_json(files[-1])
    return files


def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {what} {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{what} {path} is not valid JSON: {exc}") from exc


def _predictions(report: dict):
    try:
        supply = [e["id"] for e in report["supply_anomalies"]]
        perf = [e["id"] for e in report["performance"]]
    except (KeyError, TypeError) as exc:
        raise DataError(f"report does not follow the report schema: {exc}") from exc
    return supply, perf


def _truth_sets(truth: dict, population, excluded=()):
    """Truth anomaly sets restricted to the evaluated population.

    Ids excluded at ingest are dropped silently; any other unknown id is an error.
    """
    try:
        supply, perf = set(truth["supply_anomalies"]), set(truth["performance_anomalies"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"ground truth does not follow the ground-truth schema: {exc}") from exc
    pop, skip = set(population), set(excluded)
    unknown = sorted((supply | perf) - pop - skip)
    if unknown:
        raise DataError(f"ground-truth ids missing from the report population: {unknown}")
    return supply & pop, perf & pop


def cmd_eval(cfg: RunConfig, report_path, truth_path, force=False, debug_dump=False) -> dict:
    """Confusion matrices of a run report against simulator ground truth."""
    out = Path(cfg.out)
    _check_writable(out, ["eval.json"], force)
    with stage("eval"):
        report = _read_json(report_path, "report")
        truth = _read_json(truth_path, "ground truth")
        supply_pred, perf_pred = _predictions(report)
        population = report.get("substations")
        if population is None:
            population = [s["id"] for s in truth.get("substations", [])]
        unknown = sorted(set(supply_pred + perf_pred) - set(population))
        if unknown:
            raise DataError(f"report ids missing from the population: {unknown}")
        supply_true, perf_true = _truth_sets(truth, population, report.get("excluded", ()))
        conf = detection_confusion(supply_pred, perf_pred, supply_true, perf_true, population)
        result = {
            "detection": {k: v.to_dict() for k, v in conf.items()},
            "population": len(population),
            "report": str(report_path),
            "ground_truth": str(truth_path),
            "config_echo": cfg.echo(),
            "config_digest": cfg.digest(),
            "seed": cfg.seed,
        }
        (out / "eval.json").write_text(metrics_to_json(result), encoding="utf-8")
        for k, v in conf.items():
            logger.info("[eval] %s: sensitivity=%s specificity=%s", k, v.sensitivity, v.specificity)
    return result


def cmd_metrics(cfg: RunConfig, labels_path, matrix_path=None, method="shedad", report_path=None,
                truth_path=None, force=False, debug_dump=False) -> dict:
    """MI/MV quality of any labeling CSV, optionally with detection rates."""
    out = Path(cfg.out)
    _check_writable(out, ["quality.json", "quality_clusters.csv", "quality_long.csv"], force)
    with stage("metrics"):
        try:
            assignment = ClusterAssignment.from_csv(labels_path, cfg.singleton_threshold)
        except (OSError, KeyError, ValueError) as exc:
            raise DataError(f"cannot read labeling {labels_path}: {exc}") from exc
        if matrix_path:
            dist, distance = DistanceMatrix.from_csv(matrix_path), "matrix"
        elif cfg.input:
            series, _ = validate_and_align(load_csv(cfg.input))
            dist, distance = euclidean_matrix(series), "euclidean"
        else:
            raise ConfigError("metrics needs --matrix or an input CSV")
        unknown = sorted(set(assignment.labels) - set(dist.ids))
        if unknown:
            raise DataError(f"labeling ids missing from the distance matrix: {unknown[:20]}")
        truth = predictions = None
        if report_path and truth_path:
            supply, perf = _predictions(_read_json(report_path, "report"))
            predictions = {"supply": supply, "performance": perf}
            st, pt = _truth_sets(_read_json(truth_path, "ground truth"), dist.ids)
            truth = {"supply": st, "performance": pt}
        result = quality_report(assignment, dist, truth, predictions, distance)
        result.update(method=method, config_echo=cfg.echo(), config_digest=cfg.digest(), seed=cfg.seed)
        (out / "quality.json").write_text(metrics_to_json(result), encoding="utf-8")
        frame = pd.DataFrame(result["clusters"])
        frame.to_csv(out / "quality_clusters.csv", index=False, lineterminator="\n")
        k = assignment.n_clusters
        long_format([(method, k, "mi", result["mean_mi"]), (method, k, "mv", result["mean_mv"])]).to_csv(
            out / "quality_long.csv", index=False, lineterminator="\n")
        logger.info("[metrics] %s k=%d MI=%.4g MV=%.4g", method, k, result["mean_mi"], result["mean_mv"])
    return result


def build_parser() -> argparse.ArgumentParser:
    shared = _Parser(add_help=False)
    shared.add_argument("--config", help="flat key = value config file")
    shared.add_argument("--seed", type=int, help="override the config seed")
    shared.add_argument("--out", help="output directory")
    shared.add_argument("--workers", type=int, help="thread bound for DTW (0 = all cores)")
    shared.add_argument("--debug-dump", action="store_true", help="also write intermediate matrices and graphs")
    shared.add_argument("--force", action="store_true", help="overwrite existing outputs")
    shared.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    shared.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")

    parser = _Parser(prog="shedad", description="Topology approximation and anomaly detection "
                                                "for district heating substations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("simulate", parents=[shared], help="generate a synthetic dataset with ground truth")
    p = sub.add_parser("run", parents=[shared], help="run the full pipeline on a CSV")
    p.add_argument("--input", help="ingest-schema CSV")
    p = sub.add_parser("eval", parents=[shared], help="score a report against ground truth")
    p.add_argument("--report", required=True)
    p.add_argument("--truth", required=True)
    p = sub.add_parser("metrics", parents=[shared], help="cluster quality of a labeling")
    p.add_argument("--labels", required=True, help="CSV with substation_id, cluster_id")
    p.add_argument("--input", help="ingest-schema CSV for Euclidean distances")
    p.add_argument("--matrix", help="distance matrix CSV (overrides --input)")
    p.add_argument("--method", default="shedad", help="method name for the long-format CSV")
    p.add_argument("--report")
    p.add_argument("--truth")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig().validate()
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for key in ("seed", "out", "workers", "input"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return cfg.updated(overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        set_workers(cfg.workers or None)
        common = dict(force=args.force, debug_dump=args.debug_dump)
        if args.command == "simulate":
            cmd_simulate(cfg, **common)
        elif args.command == "run":
            cmd_run(cfg, **common)
        elif args.command == "eval":
            cmd_eval(cfg, args.report, args.truth, **common)
        else:
            cmd_metrics(cfg, args.labels, args.matrix, args.method, args.report, args.truth, **common)
    except ConfigError as exc:
        _report_error(exc, "config")
        return EXIT_USAGE
    except ShedadError as exc:
        _report_error(exc, "data")
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        _report_error(exc, "internal")
        logger.debug("traceback", exc_info=True)
        return EXIT_INTERNAL
    return EXIT_OK


def _report_error(exc, default_stage):
    where = getattr(exc, "stage", None) or default_stage
    print(f"shedad: error [{where}]: {exc}", file=sys.stderr)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
