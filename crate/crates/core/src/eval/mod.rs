pub mod auc;
pub mod harness;
pub mod routes;

pub use auc::auc;
pub use harness::{iin_structure_report, train_and_eval, train_model, EvalPoint, Schedule, TestSet, TrainOutcome, TrainingSet};
pub use routes::{acr, fcr_avg, fsr_avg, yr_avg, Exact, NavigationSession, Route};
