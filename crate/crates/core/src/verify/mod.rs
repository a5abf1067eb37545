//! Executable forms of the contraction, curvature and regularization
//! inequalities, producing structured check records.

mod checks;
mod record;
mod suite;

pub use checks::*;
pub use record::{ext_f64, params, slack_of, CheckRecord, Exactness, Param, Params, Verdict};
pub use suite::{
    run_suite, run_suite_with_threads, CheckSpec, InstanceConfig, MeasureSpec, SettingSpec, SuiteConfig, SuiteReport,
    WorstSlack, DEFAULT_SEED,
};
