//! Code extraction and sandboxed judging of Python solutions.

mod extract;
mod judge;

pub use extract::{extract_code, NoCodeFound};
pub use judge::{judge, normalize_output, Judge, LimitsError, ResourceLimits, SandboxSetupError, TestOutcome, TestStatus, Verdict};
