use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] dbgfqn_tensor::TensorError),
    #[error(transparent)]
    Env(#[from] dbgfqn_envs::EnvError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("environment observation width {env} does not match encoder obs_width {encoder}")]
    ObsWidthMismatch { env: usize, encoder: usize },
    #[error("environment action count {env} does not match encoder action_count {encoder}")]
    ActionCountMismatch { env: usize, encoder: usize },
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("cannot select an action from an empty Q vector")]
    EmptyQ,
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
    #[error("{path}: {detail}")]
    Format { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn csv_err(path: &std::path::Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn format_err(path: &std::path::Path, detail: impl ToString) -> Error {
    Error::Format {
        path: path.display().to_string(),
        detail: detail.to_string(),
    }
}
