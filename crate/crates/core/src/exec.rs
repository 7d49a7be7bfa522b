//! Sequential / parallel execution switch.
//!
//! Every parallel kernel in the crate is written as an indexed map whose
//! per-index work is independent and internally ordered, so both modes yield
//! bit-identical results.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// `(0..n).map(f).collect()`, optionally spread over the rayon pool.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
        }
    }
}
