"""Command-line interface.

Subcommands mirror the pipeline stages and can be run independently
against the cached stores in the output directory:

    marketstates ingest|correlate|cluster|transitions|spectra|histograms|
                 mds|report|compare

Every config-file key has a CLI flag of the same name; flags win.
Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import pipeline, plots
from .errors import ConfigError, DataError, NumericError

EXIT_CODES = [(ConfigError, 2), (DataError, 3), (NumericError, 4)]


def _run(fn):
    try:
        fn()
    except tuple(exc for exc, _ in EXIT_CODES) as exc:
        for exc_type, code in EXIT_CODES:
            if isinstance(exc, exc_type):
                click.echo(f"error: {exc}", err=True)
                sys.exit(code)
    sys.exit(0)


def config_options(fn):
    """Flags mirroring every RunConfig / config-file key."""
    options = [
        click.option("--config", "config_path", type=click.Path(), default=None,
                     help="Flat key = value config file."),
        click.option("--data-dir", default=None),
        click.option("--output-dir", default=None),
        click.option("--start", default=None, help="Horizon start (YYYY-MM-DD)."),
        click.option("--end", default=None, help="Horizon end (YYYY-MM-DD)."),
        click.option("--index-ticker", default=None),
        click.option("--epoch-length", type=int, default=None),
        click.option("--epoch-shift", type=int, default=None),
        click.option("--correlation-kind", default=None,
                     type=click.Choice(["pearson", "relative", "both"])),
        click.option("--k-values", default=None, help="Comma-separated list."),
        click.option("--seed", type=int, default=None),
        click.option("--restarts", type=int, default=None),
        click.option("--bins", type=int, default=None),
        click.option("--cluster-metric", default=None,
                     type=click.Choice(["l2", "l1"])),
        click.option("--mds-metric", default=None,
                     type=click.Choice(["l1_mean", "l2"])),
        click.option("--periods", default=None,
                     help="name=start..end, comma-separated."),
        click.option("--render-figures/--no-render-figures", default=None),
        click.option("--threads", type=int, default=None,
                     help="Worker cap (numeric backends only; results are "
                          "independent of this)."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _config_from_kwargs(kwargs):
    kwargs = dict(kwargs)
    config_path = kwargs.pop("config_path")
    threads = kwargs.pop("threads", None)
    if threads is not None:
        # caps BLAS worker pools; results do not depend on this
        import os
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)
    return pipeline.load_config(config_path, **kwargs)


@click.group()
def main():
    """Market-state analysis of equity correlation matrices."""


@main.command()
@config_options
def ingest(**kwargs):
    """Load price CSVs, filter the universe, cache the returns."""
    def go():
        config = _config_from_kwargs(kwargs)
        returns = pipeline.ensure_returns(config, log=click.echo)
        click.echo(f"{len(returns.tickers)} tickers, "
                   f"{returns.returns.shape[1]} return days")
    _run(go)


@main.command()
@config_options
def correlate(**kwargs):
    """Compute sliding-epoch correlation matrices into the epoch store."""
    def go():
        config = _config_from_kwargs(kwargs)
        for kind in config.kinds:
            matrices = pipeline.ensure_matrices(config, kind, log=click.echo)
            click.echo(f"{kind}: {len(matrices)} epochs")
    _run(go)


@main.command()
@config_options
def cluster(**kwargs):
    """Cluster epochs into market states for every configured k."""
    def go():
        config = _config_from_kwargs(kwargs)
        for kind in config.kinds:
            for k in config.k_values:
                seq = pipeline.ensure_states(config, kind, k, log=click.echo)
                avg = ", ".join(f"{v:.3f}" for v in seq.state_avg_corr)
                click.echo(f"{kind} k={k}: state avg corr [{avg}]")
    _run(go)


@main.command()
@config_options
def transitions(**kwargs):
    """Estimate transition matrices and Markovianity diagnostics."""
    def go():
        config = _config_from_kwargs(kwargs)
        report_dir = config.output_dir / "report"
        report_dir.mkdir(parents=True, exist_ok=True)
        states = {(kind, k): pipeline.ensure_states(config, kind, k, log=click.echo)
                  for kind in config.kinds for k in config.k_values}
        pipeline.write_transitions_report(report_dir, config, states)
        click.echo(f"wrote {report_dir / 'fig3_transitions.csv'}")
    _run(go)


@main.command()
@config_options
def spectra(**kwargs):
    """Participation-ratio series and period moments."""
    def go():
        config = _config_from_kwargs(kwargs)
        report_dir = config.output_dir / "report"
        report_dir.mkdir(parents=True, exist_ok=True)
        matrices = {kind: pipeline.ensure_matrices(config, kind, log=click.echo)
                    for kind in config.kinds}
        pipeline.write_spectra_report(report_dir, config, matrices)
        click.echo(f"wrote {report_dir / 'fig5_pr.csv'}")
    _run(go)


@main.command()
@config_options
def histograms(**kwargs):
    """Per-epoch histograms of correlation matrix elements."""
    def go():
        config = _config_from_kwargs(kwargs)
        report_dir = config.output_dir / "report"
        report_dir.mkdir(parents=True, exist_ok=True)
        matrices = {kind: pipeline.ensure_matrices(config, kind, log=click.echo)
                    for kind in config.kinds}
        pipeline.write_histograms_report(report_dir, config, matrices)
        click.echo(f"wrote {report_dir / 'fig4_histograms.csv'}")
    _run(go)


@main.command()
@config_options
def mds(**kwargs):
    """Pairwise epoch distances and 3D classical MDS embedding."""
    def go():
        config = _config_from_kwargs(kwargs)
        report_dir = config.output_dir / "report"
        report_dir.mkdir(parents=True, exist_ok=True)
        kind = config.kinds[0]
        matrices = pipeline.ensure_matrices(config, kind, log=click.echo)
        seq = pipeline.ensure_states(config, kind, config.k_values[0],
                                     log=click.echo)
        pipeline.write_mds_report(report_dir, config, matrices, seq)
        click.echo(f"wrote {report_dir / 'figS3_mds.csv'}")
    _run(go)


@main.command()
@config_options
def report(**kwargs):
    """Run the full pipeline and assemble the report bundle with figures."""
    def go():
        config = _config_from_kwargs(kwargs)
        result = pipeline.run_pipeline(config, log=click.echo)
        click.echo(f"report bundle in {result.report_dir}")
    _run(go)


@main.command()
@click.argument("run_a", type=click.Path(exists=True))
@click.argument("run_b", type=click.Path(exists=True))
@click.option("--kind", default="pearson",
              type=click.Choice(["pearson", "relative"]))
@click.option("--k-a", type=int, default=5, help="k of the reference run.")
@click.option("--k-b", type=int, default=5, help="k of the probe run.")
@click.option("--threshold-factor", type=float, default=1.0)
@click.option("--out", type=click.Path(), default=None,
              help="Write the alignment report JSON here.")
def compare(run_a, run_b, kind, k_a, k_b, threshold_factor, out):
    """Align the states of two finished runs and report new states.

    RUN_A and RUN_B are output directories of previous runs; RUN_A is the
    reference.
    """
    def go():
        seq_a = pipeline.load_state_sequence(run_a, kind, k_a)
        seq_b = pipeline.load_state_sequence(run_b, kind, k_b)
        alignment = pipeline.compare_states(seq_a, seq_b, threshold_factor)
        payload = json.dumps(alignment.to_dict(), indent=2)
        if out:
            Path(out).write_text(payload)
        click.echo(payload)
    _run(go)


@main.command()
@click.argument("report_dir", type=click.Path(exists=True))
def render(report_dir):
    """Re-render the figures for an existing report bundle."""
    def go():
        written = plots.render_report(report_dir)
        for path in written:
            click.echo(str(path))
    _run(go)


if __name__ == "__main__":
    main()
