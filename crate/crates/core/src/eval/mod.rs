//! Dataset ingestion, metrics, experiments, knowledge statistics and the
//! synthetic generator.

pub mod experiment;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use experiment::{
    arm_hash, evaluate, run_experiment, ArmConfig, ExperimentConfig, ExperimentResult, MetricReport, Summary,
};
pub use ingest::{
    ingest, ingest_readers, ingest_with_vocab, n_core_filter, quantile_boundary, temporal_split, write_interactions,
    write_items, IngestReport, Ingested,
};
pub use metrics::{coverage_at, gini, gini_at, mrr_at, ndcg_at};
pub use pipeline::{
    apply_cover_update, build_logic_graphs, collect_logic_pairs, distill_logic, distill_tag_kind, extract_item_tags,
    ExtractionReport,
};
pub use stats::{kb_stats, KbStats};
pub use synth::{overlap_point_biserial, synth_generate, SynthConfig, SynthOutput, SynthTruth};
