"""End-to-end pipeline: ingest -> returns -> correlations -> clustering ->
dynamics -> spectra/histograms -> MDS -> report bundle.

Every stage writes into ``output_dir``; intermediate stores live under
``output_dir/cache`` and are reused when the config hash is unchanged, so
each stage can also be run on its own from the CLI. All randomness derives
from the single config seed via a per-stage hash, so reruns with identical
config and data are bit-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from . import plots
from .clustering import StateSequence, contiguous_runs, kmeans_states, state_report
from .correlation import EpochSpec, ReturnsMatrix, epoch_series, log_returns
from .dynamics import markovianity_check, nearly_tridiagonal_score, transition_matrix
from .errors import ConfigError, DataError
from .ingest import load_universe, write_ingest_manifest
from .mds import classical_mds, pairwise_distances
from .spectral import element_histogram, pr_period_moments, pr_series
from .store import read_epoch_store, write_epoch_store

CONFIG_DEFAULTS = {
    "index_ticker": "SPX",
    "epoch_length": 20,
    "epoch_shift": 1,
    "correlation_kind": "pearson",
    "k_values": (5,),
    "seed": 12345,
    "restarts": 100,
    "bins": 201,
    "cluster_metric": "l2",
    "mds_metric": "l1_mean",
    "render_figures": True,
}


@dataclass(frozen=True)
class RunConfig:
    """All parameters of a pipeline run."""

    data_dir: Path
    output_dir: Path
    horizon: tuple[date, date]
    index_ticker: str = "SPX"
    epoch: EpochSpec = field(default_factory=EpochSpec)
    correlation_kind: str = "pearson"  # pearson | relative | both
    k_values: tuple[int, ...] = (5,)
    seed: int = 12345
    restarts: int = 100
    bins: int = 201
    cluster_metric: str = "l2"
    mds_metric: str = "l1_mean"
    periods: dict = field(default_factory=dict)  # name -> (start, end)
    render_figures: bool = True

    def __post_init__(self):
        if self.horizon[0] >= self.horizon[1]:
            raise ConfigError(
                f"horizon start {self.horizon[0]} not before end {self.horizon[1]}")
        if self.correlation_kind not in ("pearson", "relative", "both"):
            raise ConfigError(f"bad correlation_kind {self.correlation_kind!r}")
        if not self.k_values or any(k < 1 for k in self.k_values):
            raise ConfigError(f"k_values must all be >= 1, got {self.k_values}")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if self.bins < 2:
            raise ConfigError("bins must be >= 2")

    @property
    def kinds(self) -> tuple[str, ...]:
        if self.correlation_kind == "both":
            return ("pearson", "relative")
        return (self.correlation_kind,)

    def to_dict(self) -> dict:
        return {
            "data_dir": str(self.data_dir),
            "output_dir": str(self.output_dir),
            "horizon": [d.isoformat() for d in self.horizon],
            "index_ticker": self.index_ticker,
            "epoch_length": self.epoch.length,
            "epoch_shift": self.epoch.shift,
            "correlation_kind": self.correlation_kind,
            "k_values": list(self.k_values),
            "seed": self.seed,
            "restarts": self.restarts,
            "bins": self.bins,
            "cluster_metric": self.cluster_metric,
            "mds_metric": self.mds_metric,
            "periods": {
                name: [a.isoformat(), b.isoformat()]
                for name, (a, b) in sorted(self.periods.items())
            },
            "render_figures": self.render_figures,
        }

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


def _parse_date(text: str, key: str) -> date:
    try:
        return date.fromisoformat(str(text).strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: bad date {text!r}") from exc


def _parse_periods(text: str) -> dict:
    periods = {}
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            name, span = chunk.split("=", 1)
            start, end = span.split("..", 1)
        except ValueError as exc:
            raise ConfigError(f"bad period spec {chunk!r} (want name=start..end)") from exc
        periods[name.strip()] = (_parse_date(start, chunk), _parse_date(end, chunk))
    return periods


def load_config(path=None, **overrides) -> RunConfig:
    """Build a RunConfig from a flat ``key = value`` file plus overrides.

    Every file key has a CLI flag of the same name; overrides win.
    Lines may carry ``#`` comments.
    """
    raw: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            raw[key.strip()] = value.strip()
    raw.update({k: v for k, v in overrides.items() if v is not None})

    def require(key):
        if key not in raw:
            raise ConfigError(f"missing required config key {key!r}")
        return raw[key]

    def get(key):
        return raw.get(key, CONFIG_DEFAULTS[key])

    try:
        k_values = raw.get("k_values", CONFIG_DEFAULTS["k_values"])
        if isinstance(k_values, str):
            k_values = tuple(int(v) for v in k_values.split(",") if v.strip())
        else:
            k_values = tuple(int(v) for v in k_values)
        periods = raw.get("periods", {})
        if isinstance(periods, str):
            periods = _parse_periods(periods)
        render = get("render_figures")
        if isinstance(render, str):
            render = render.lower() in ("1", "true", "yes", "on")
        return RunConfig(
            data_dir=Path(require("data_dir")),
            output_dir=Path(require("output_dir")),
            horizon=(_parse_date(require("start"), "start"),
                     _parse_date(require("end"), "end")),
            index_ticker=str(get("index_ticker")),
            epoch=EpochSpec(length=int(get("epoch_length")),
                            shift=int(get("epoch_shift"))),
            correlation_kind=str(get("correlation_kind")),
            k_values=k_values,
            seed=int(get("seed")),
            restarts=int(get("restarts")),
            bins=int(get("bins")),
            cluster_metric=str(get("cluster_metric")),
            mds_metric=str(get("mds_metric")),
            periods=periods,
            render_figures=bool(render),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def stage_seed(seed: int, stage: str) -> int:
    """Derive a per-stage seed: stage name hashed into the config seed."""
    digest = hashlib.sha256(stage.encode()).digest()
    return (seed + int.from_bytes(digest[:4], "little")) % (2**31)


class _Cache:
    """Stage cache under output_dir/cache, keyed on the full config hash."""

    def __init__(self, config: RunConfig):
        self.dir = config.output_dir / "cache"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hash = config.config_hash()
        self.marker = self.dir / "config_hash.txt"
        self.valid = self.marker.is_file() and self.marker.read_text() == self.hash
        if not self.valid:
            self.marker.write_text(self.hash)

    def has(self, *names) -> bool:
        return self.valid and all((self.dir / n).is_file() for n in names)


def ensure_returns(config: RunConfig, cache: _Cache | None = None,
                   log=None) -> ReturnsMatrix:
    """Ingest prices and compute log returns, or load them from cache."""
    cache = cache or _Cache(config)
    path = cache.dir / "returns.npz"
    if cache.has("returns.npz"):
        if log:
            log("ingest: cached")
        data = np.load(path, allow_pickle=False)
        return ReturnsMatrix(
            tickers=tuple(str(t) for t in data["tickers"]),
            returns=data["returns"],
            index_returns=data["index_returns"],
            return_dates=tuple(date.fromisoformat(str(d))
                               for d in data["return_dates"]),
        )
    table = load_universe(config.data_dir, config.index_ticker, config.horizon)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    write_ingest_manifest(table, config.output_dir / "ingest_manifest.json")
    rm = log_returns(table)
    np.savez(path,
             tickers=np.array(rm.tickers),
             returns=rm.returns,
             index_returns=rm.index_returns,
             return_dates=np.array([d.isoformat() for d in rm.return_dates]))
    return rm


def ensure_matrices(config: RunConfig, kind: str,
                    cache: _Cache | None = None, log=None) -> list:
    """Compute (or load) the epoch correlation series of one kind."""
    cache = cache or _Cache(config)
    store = f"epochs_{kind}.epcm"
    if cache.has(store):
        if log:
            log(f"correlate:{kind}: cached")
        matrices, _ = read_epoch_store(cache.dir / store)
        return matrices
    returns = ensure_returns(config, cache, log)
    matrices = epoch_series(returns, config.epoch, kind)
    write_epoch_store(cache.dir / store, matrices, returns.tickers, config.epoch)
    return matrices


def ensure_states(config: RunConfig, kind: str, k: int,
                  cache: _Cache | None = None, log=None,
                  matrices=None) -> StateSequence:
    """Cluster one (kind, k) combination, or load it from cache."""
    cache = cache or _Cache(config)
    centroid_file = f"centroids_{kind}_k{k}.npz"
    if cache.has(centroid_file):
        if log:
            log(f"cluster:{kind}:k{k}: cached")
        return load_state_sequence(config.output_dir, kind, k)
    if matrices is None:
        matrices = ensure_matrices(config, kind, cache, log)
    seq = kmeans_states(
        matrices, k,
        seed=stage_seed(config.seed, f"cluster:{kind}:k{k}"),
        restarts=config.restarts,
        metric=config.cluster_metric,
    )
    _write_states_csv(config.output_dir / f"states_{kind}_k{k}.csv", seq)
    _write_cluster_summary(config.output_dir / f"cluster_{kind}_k{k}.json",
                           seq, matrices)
    np.savez(cache.dir / centroid_file,
             centroids=seq.centroids, labels=seq.labels,
             state_avg_corr=seq.state_avg_corr, inertia=seq.inertia,
             seed=seq.seed,
             epoch_dates=np.array([d.isoformat() for d in seq.epoch_dates]))
    return seq


def load_state_sequence(output_dir, kind: str, k: int) -> StateSequence:
    """Rebuild a StateSequence from a run's cached cluster artifacts."""
    path = Path(output_dir) / "cache" / f"centroids_{kind}_k{k}.npz"
    if not path.is_file():
        raise DataError(f"no cached clustering for kind={kind}, k={k} under {output_dir}")
    data = np.load(path, allow_pickle=False)
    return StateSequence(
        k=int(data["centroids"].shape[0]),
        labels=data["labels"],
        centroids=data["centroids"],
        state_avg_corr=data["state_avg_corr"],
        inertia=float(data["inertia"]),
        seed=int(data["seed"]),
        epoch_dates=tuple(date.fromisoformat(str(d)) for d in data["epoch_dates"]),
    )


@dataclass
class RunResult:
    """In-memory view of a finished pipeline run."""

    config: RunConfig
    matrices: dict            # kind -> list[EpochCorrelation]
    states: dict              # (kind, k) -> StateSequence
    report_dir: Path
    manifest: dict


def run_pipeline(config: RunConfig, log=None) -> RunResult:
    """Execute every stage and assemble the report bundle."""
    timings = {}
    cache = _Cache(config)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    report_dir = config.output_dir / "report"
    report_dir.mkdir(exist_ok=True)

    def timed(stage, fn):
        t0 = time.perf_counter()
        result = fn()
        timings[stage] = round(time.perf_counter() - t0, 4)
        if log:
            log(f"{stage}: {timings[stage]:.2f}s")
        return result

    returns = timed("ingest", lambda: ensure_returns(config, cache))
    matrices = {
        kind: timed(f"correlate:{kind}",
                    lambda kind=kind: ensure_matrices(config, kind, cache))
        for kind in config.kinds
    }
    del returns
    states = {
        (kind, k): timed(
            f"cluster:{kind}:k{k}",
            lambda kind=kind, k=k: ensure_states(config, kind, k, cache,
                                                 matrices=matrices[kind]))
        for kind in config.kinds for k in config.k_values
    }

    primary_kind = config.kinds[0]
    primary_k = config.k_values[0]
    timed("report:states", lambda: write_states_report(report_dir, config, states))
    timed("report:transitions",
          lambda: write_transitions_report(report_dir, config, states))
    timed("report:histograms",
          lambda: write_histograms_report(report_dir, config, matrices))
    timed("report:spectra", lambda: write_spectra_report(report_dir, config, matrices))
    timed("report:mds", lambda: write_mds_report(
        report_dir, config, matrices[primary_kind],
        states[(primary_kind, primary_k)]))
    if config.render_figures:
        timed("report:figures", lambda: plots.render_report(report_dir))

    manifest = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "stage_timings": timings,
        "checksums": _checksum_artifacts(config.output_dir, report_dir),
    }
    (report_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True))
    return RunResult(config=config, matrices=matrices, states=states,
                     report_dir=report_dir, manifest=manifest)


def _checksum_artifacts(out: Path, report_dir: Path) -> dict:
    checksums = {}
    for path in sorted(list(out.glob("*.csv")) + list(out.glob("*.json"))
                       + list(report_dir.glob("*.csv"))
                       + list(report_dir.glob("*.json"))):
        if path.name == "manifest.json":
            continue
        checksums[str(path.relative_to(out))] = hashlib.sha256(
            path.read_bytes()).hexdigest()
    return checksums


def _write_states_csv(path: Path, seq: StateSequence) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch_id", "end_date", "state_id"])
        for i, (d, lab) in enumerate(zip(seq.epoch_dates, seq.labels)):
            writer.writerow([i, d.isoformat(), int(lab)])


def _write_cluster_summary(path: Path, seq: StateSequence, matrices) -> None:
    summary = {
        "k": seq.k,
        "seed": seq.seed,
        "inertia": seq.inertia,
        "state_avg_corr": [float(v) for v in seq.state_avg_corr],
        "states": [
            {**row,
             "first_date": row["first_date"].isoformat(),
             "last_date": row["last_date"].isoformat(),
             "runs": [[int(a), int(b)] for a, b in row["runs"]]}
            for row in state_report(seq, matrices)
        ],
    }
    path.write_text(json.dumps(summary, indent=2))


def write_states_report(report_dir: Path, config: RunConfig, states) -> None:
    keys = [(kind, k) for kind in config.kinds for k in config.k_values]
    first = states[keys[0]]
    with open(report_dir / "fig1_states.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch_id", "end_date"]
                        + [f"state_{kind}_k{k}" for kind, k in keys])
        for i, d in enumerate(first.epoch_dates):
            writer.writerow([i, d.isoformat()]
                            + [int(states[key].labels[i]) for key in keys])


def write_transitions_report(report_dir: Path, config: RunConfig, states) -> None:
    rows = []
    diagnostics = {}
    for (kind, k), seq in states.items():
        model = transition_matrix(seq.labels, k)
        diag = markovianity_check(seq.labels, k) if len(seq.labels) >= 3 else None
        for a in range(k):
            for b in range(k):
                rows.append([kind, k, a + 1, b + 1,
                             int(model.counts[a, b]), f"{model.probs[a, b]:.10g}"])
        diagnostics[f"{kind}_k{k}"] = {
            "equilibrium": [float(v) for v in model.equilibrium],
            "empirical_freq": [float(v) for v in model.empirical_freq],
            "ck_deviation": diag.ck_deviation if diag else None,
            "stationarity_tv": diag.stationarity_tv if diag else None,
            "ck_pass": diag.ck_pass if diag else None,
            "stationarity_pass": diag.stationarity_pass if diag else None,
            "tridiagonal_score": nearly_tridiagonal_score(model.probs,
                                                          model.empirical_freq),
            "flagged_states": list(model.flagged_states),
        }
    with open(report_dir / "fig3_transitions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "k", "from_state", "to_state", "count", "prob"])
        writer.writerows(rows)
    (report_dir / "fig3_diagnostics.json").write_text(
        json.dumps(diagnostics, indent=2))


def write_histograms_report(report_dir: Path, config: RunConfig, matrices) -> None:
    for kind in config.kinds:
        suffix = "" if kind == config.kinds[0] else f"_{kind}"
        with open(report_dir / f"fig4_histograms{suffix}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            edges = None
            for m in matrices[kind]:
                h = element_histogram(m, config.bins)
                if edges is None:
                    edges = h.bin_edges
                    writer.writerow(["epoch_id", "end_date"]
                                    + [f"{e:.6f}" for e in edges[:-1]])
                writer.writerow([m.epoch_id, m.window[1].isoformat()]
                                + [int(c) for c in h.counts])


def write_spectra_report(report_dir: Path, config: RunConfig, matrices) -> dict:
    series = {kind: pr_series(matrices[kind]) for kind in config.kinds}
    first = series[config.kinds[0]]
    with open(report_dir / "fig5_pr.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["end_date"]
        for kind in config.kinds:
            header += [f"pr_{kind}", f"degenerate_{kind}"]
        writer.writerow(header)
        for i, (d, _, _) in enumerate(first):
            row = [d.isoformat()]
            for kind in config.kinds:
                _, pr, flag = series[kind][i]
                row += [f"{pr:.10g}", int(flag)]
            writer.writerow(row)

    moments = {
        kind: {name: pr_period_moments(series[kind], span)
               for name, span in sorted(config.periods.items())}
        for kind in config.kinds
    }
    (report_dir / "fig6_moments.json").write_text(json.dumps(moments, indent=2))
    return moments


def write_mds_report(report_dir: Path, config: RunConfig, matrices,
                     seq: StateSequence) -> None:
    distances = pairwise_distances(matrices, metric=config.mds_metric)
    embedding = classical_mds(distances, dims=3)
    with open(report_dir / "figS3_mds.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch_id", "end_date", "x", "y", "z", "state_id"])
        for i, m in enumerate(matrices):
            x, y, z = embedding.coords[i]
            writer.writerow([m.epoch_id, m.window[1].isoformat(),
                             f"{x:.10g}", f"{y:.10g}", f"{z:.10g}",
                             int(seq.labels[i])])
    (report_dir / "figS3_eigenvalues.json").write_text(json.dumps({
        "metric": config.mds_metric,
        "eigenvalues_used": [float(v) for v in embedding.eigenvalues_used],
        "stress": embedding.stress,
        "clamped": embedding.clamped,
        "degenerate": embedding.degenerate,
    }, indent=2))


@dataclass
class StateAlignment:
    """Result of aligning the states of two runs by centroid distance."""

    matches: list            # dicts: state_b, nearest_state_a, distance, is_new
    new_states: list[int]
    new_state_spans: dict    # state_b -> (onset date, offset date)
    threshold: float

    def to_dict(self) -> dict:
        return {
            "matches": self.matches,
            "new_states": self.new_states,
            "new_state_spans": {
                str(s): [a.isoformat(), b.isoformat()]
                for s, (a, b) in self.new_state_spans.items()
            },
            "threshold": self.threshold,
        }


def compare_states(run_a: StateSequence, run_b: StateSequence,
                   threshold_factor: float = 1.0) -> StateAlignment:
    """Align run_b states to run_a by nearest centroid; flag unmatched ones.

    A run_b state is "new" when its centroid is farther from every run_a
    centroid than ``threshold_factor`` times the smallest spacing among the
    run_a centroids. New states are reported with onset/offset dates.
    """
    if run_a.centroids.shape[1] != run_b.centroids.shape[1]:
        raise DataError("runs have different feature dimensions (universe mismatch)")
    if not (set(run_a.epoch_dates) & set(run_b.epoch_dates)):
        raise DataError("runs have disjoint horizons")

    a, b = run_a.centroids, run_b.centroids
    cross = cdist(b, a, metric="euclidean")
    if run_a.k > 1:
        within = cdist(a, a, metric="euclidean")
        spacing = within[~np.eye(run_a.k, dtype=bool)].min()
    else:
        spacing = cross.min() + 1.0  # single reference state: nothing is "new"
    threshold = threshold_factor * spacing

    matches = []
    new_states = []
    spans = {}
    for state_b in range(run_b.k):
        nearest = int(cross[state_b].argmin())
        distance = float(cross[state_b, nearest])
        is_new = bool(distance > threshold)
        matches.append({
            "state_b": state_b + 1,
            "nearest_state_a": nearest + 1,
            "distance": distance,
            "is_new": is_new,
        })
        if is_new:
            new_states.append(state_b + 1)
            runs = contiguous_runs(run_b.labels, state_b + 1)
            spans[state_b + 1] = (run_b.epoch_dates[runs[0][0]],
                                  run_b.epoch_dates[runs[-1][1]])
    return StateAlignment(matches=matches, new_states=new_states,
                          new_state_spans=spans, threshold=float(threshold))
