"""ss-Mamba style forecasting engine: semantic series-name embeddings,
B-spline temporal encoding, and a selective state-space backbone."""

from .autograd import (Parameter, Tensor, finite_difference_gradient,
                       gradient_check, reverse_accumulate, zero_grads)
from .config import Config
from .data import SeriesRecord, SplitSpec, load_series_csv, synth_series
from .embedding import (EmbeddingTable, IndexProjection, embed_name,
                        hash_fallback_embedding, load_embedding_table)
from .model import ForecastModel, load_checkpoint, save_checkpoint
from .ssm import Backbone, SsmParams, discretize, inject_context, selective_scan
from .temporal import CalendarDescriptor, KanParams, calendar_descriptor, kan_forward
from .trainer import (MetricsReport, evaluate_records, persistence_baseline,
                      run_ablation_suite, train, zero_shot_eval)

__version__ = "0.1.0"
