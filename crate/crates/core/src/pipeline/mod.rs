//! Command implementations behind the `bold3d` binary. Every command reads a
//! [`RunConfig`] and writes only below its output directory (or, for
//! [`cmd_synth`], the requested data directory).

mod cohort;
mod commands;
mod config;
mod table;

pub use cohort::{Cohort, CohortEntry, COHORT_FILE, COHORT_HEADER, PARCELLATION_FILE, TRUTH_DIR};
pub use commands::{
    cmd_baseline, cmd_eval, cmd_interpret, cmd_prepare, cmd_synth, cmd_train, predict_subjects, predictions_csv,
    run_dir, BaselineRun, BaselineSummary, EvalOutcome, InterpretOutcome, PrepareSummary, RunOutcome, SynthSummary,
    TrainSummary, HISTORY_FILE, MANIFEST_FILE, MODEL_FILE, PREDICTIONS_FILE, PREDICTIONS_HEADER, REPORT_FILE,
    STATE_FILE,
};
pub use config::RunConfig;
pub use table::{update_table, TABLE_FILE, TABLE_HEADER};
