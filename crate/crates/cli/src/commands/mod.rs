//! One module per subcommand family; each `run` takes the shared [`RunCtx`]
//! plus any flags that are execution details rather than configuration.
//!
//! [`RunCtx`]: crate::runctx::RunCtx

pub mod deploy;
pub mod evaluate;
pub mod preprocess;
pub mod profile;
pub mod synth;
pub mod train;
