"""Train movement and demand-supply-gap inference from passive traces.

The package splits into:

- :mod:`railsense.types`, :mod:`railsense.traces` -- domain types, trace
  I/O, and record-to-journey vectorization
- :mod:`railsense.sim` -- ground-truth transit simulator with a noisy
  passive-sensing channel
- :mod:`railsense.similarity` -- journey similarity metrics and the
  sparse similarity graph
- :mod:`railsense.clustering` -- baseline and spectral train-trip
  identification, outlier pruning, timetable extraction
- :mod:`railsense.dsg` -- scaling factors, features, logistic models,
  hierarchy, prediction
- :mod:`railsense.metrics`, :mod:`railsense.experiments` -- accuracy
  metrics and experiment drivers
- :mod:`railsense.streaming` -- mini-batch replay with incremental output
"""

from .types import DeviceId, Journey, LineTopology, ObservationRecord, StationId, TrainId
from .traces import read_records, vectorize_journeys, write_records
from .similarity import SimilarityGraph, SimilarityParams, build_graph, hard_similarity, overlap, soft_similarity
from .clustering import (
    OUTLIER,
    ClusterLabeling,
    EstimatedTimetable,
    PipelineParams,
    TrainTrip,
    baseline_pipeline,
    dbscan_1d,
    extract_timetable,
    prune_knn_outliers,
    prune_similarity_outliers,
    reconcile_fragments,
    spectral_cluster,
    spectral_pipeline,
)
from .sim import (
    GroundTruthTimetable,
    ScenarioConfig,
    SensingConfig,
    generate_timetable,
    inject_incident,
    observe,
    simulate_commuters,
    simulate_scenario,
)
from .dsg import (
    DsgFeatures,
    DsgModel,
    ModelHierarchy,
    ScalingFactor,
    estimate_scaling,
    extract_features,
    predict,
    train_hierarchy,
    train_logistic,
    update_scaling_online,
)
from .metrics import adjusted_rand_index, classification_report, hit_rate, match_arrivals, rmse_minutes
from .streaming import stream_run

__version__ = "0.1.0"
