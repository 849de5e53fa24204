pub mod criterion;
pub mod flow;
pub mod identity;
pub mod oracle;
pub mod reconstruct;
pub mod uniqueness;

use crate::report::Report;
use crate::LabError;

/// Runs a sub-step; a failure becomes a report note and the suite continues.
pub(crate) fn attempt<T>(report: &mut Report, what: &str, step: impl FnOnce() -> Result<T, LabError>) -> Option<T> {
    match step() {
        Ok(v) => Some(v),
        Err(e) => {
            report.note(format!("{what}: {e}"));
            None
        }
    }
}
