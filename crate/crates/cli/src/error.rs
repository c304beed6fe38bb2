use serde::Serialize;
use std::fmt;

/// Machine-readable failure category, also the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Config,
    Io,
    Data,
    Compute,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Io => 3,
            Category::Data => 4,
            Category::Compute => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            category: Category::Config,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            category: Category::Io,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ssicl_core::Error> for CliError {
    fn from(err: ssicl_core::Error) -> Self {
        use ssicl_core::Error as E;
        let category = match &err {
            E::Io(_) | E::Csv(_) => Category::Io,
            E::EmptySplit(_)
            | E::InvalidSplit(_)
            | E::FeatureParse { .. }
            | E::LabelSchema { .. } => Category::Data,
            _ => Category::Compute,
        };
        Self {
            category,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Self::io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
