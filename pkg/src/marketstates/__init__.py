"""Market-state analysis of equity correlation matrices."""

from .correlation import (EpochCorrelation, EpochSpec, ReturnsMatrix,
                          average_correlation, epoch_series, epoch_windows,
                          log_returns, pearson_epoch, relative_epoch)
from .clustering import StateSequence, kmeans_states, state_report, states_after
from .dynamics import (TransitionModel, markovianity_check,
                       nearly_tridiagonal_score, transition_matrix)
from .errors import ConfigError, DataError, MarketStatesError, NumericError
from .ingest import (PriceTable, RawQuoteSeries, TradingCalendar,
                     build_calendar, filter_universe, load_quotes, load_universe)
from .mds import classical_mds, pairwise_distances
from .pipeline import RunConfig, compare_states, load_config, run_pipeline
from .spectral import (element_histogram, participation_ratio,
                       pr_period_moments, pr_series, spectrum)
from .store import read_epoch_store, write_epoch_store

__version__ = "0.1.0"
