//! Driver behind the `kspace` binary: configuration handling and one
//! function per subcommand. Every command writes its artifacts into the
//! configured output directory.

pub mod commands;
pub mod config;

pub use config::{DataSource, RunConfig, Seeds};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] kspace_policy::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        use kspace_policy::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Core(e) => match e {
                E::InvalidArgument(_) => "invalid_argument",
                E::Precondition(_) => "precondition",
                E::NoActionsAvailable(_) => "no_actions",
                E::MissingReconstruction { .. } => "missing_reconstruction",
                E::Numerical(_) => "numerical",
                E::DegenerateVariance(_) => "degenerate_variance",
                E::Parse { .. } => "parse",
                E::Io { .. } => "io",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    /// `error kind=<kind> message="<escaped message>"` on one line.
    pub fn record(&self) -> String {
        let msg = self
            .to_string()
            .replace('\\', "\\\\")
            .replace('"', "\\\"")
            .replace('\n', "\\n");
        format!("error kind={} message=\"{}\"", self.kind(), msg)
    }
}

/// Version string written into every run directory.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "-", env!("KSPACE_GIT_DESCRIBE"));
