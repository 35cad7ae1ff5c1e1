use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called after the episode ended; call reset first")]
    StepAfterDone,
    #[error("action {action} is out of range for {count} actions")]
    InvalidAction { action: usize, count: usize },
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("unknown environment name {name:?}: {reason}")]
    UnknownEnv { name: String, reason: String },
    #[error("no layout with reachable beacons and flags after {0} attempts")]
    Unreachable(usize),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, EnvError>;
