//! JSON state records.
//!
//! ```json
//! { "format": "loopcat-state", "version": 1, "modes": 1, "dim": 30,
//!   "deficit": 0.0, "amplitudes": [[re, im], ...] }
//! ```
//!
//! Two-mode amplitudes are flattened row-major over `(n₀, n₁)`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CVector, FockCutoff, PureState, C64};
use crate::error::{file_err, Error, Result};

pub const STATE_FORMAT: &str = "loopcat-state";
pub const STATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub format: String,
    pub version: u32,
    pub modes: usize,
    pub dim: usize,
    #[serde(default)]
    pub deficit: f64,
    pub amplitudes: Vec<[f64; 2]>,
}

impl From<&PureState> for StateRecord {
    fn from(state: &PureState) -> Self {
        Self {
            format: STATE_FORMAT.into(),
            version: STATE_VERSION,
            modes: state.modes(),
            dim: state.dim(),
            deficit: state.deficit(),
            amplitudes: state.amplitudes().iter().map(|c| [c.re, c.im]).collect(),
        }
    }
}

impl StateRecord {
    pub fn into_state(self) -> Result<PureState> {
        if self.format != STATE_FORMAT {
            return Err(Error::Config(format!("not a state record: format {:?}", self.format)));
        }
        if self.version != STATE_VERSION {
            return Err(Error::CheckpointVersion { found: self.version, expected: STATE_VERSION });
        }
        let cutoff = FockCutoff::new(self.dim)?;
        let v = CVector::from_iterator(self.amplitudes.len(), self.amplitudes.iter().map(|[re, im]| C64::new(*re, *im)));
        let mut state = PureState::from_amplitudes(v, cutoff, self.modes)?;
        state.set_deficit(self.deficit);
        Ok(state)
    }
}

pub fn save_state(state: &PureState, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&StateRecord::from(state))?;
    fs::write(path, text).map_err(file_err(path))
}

pub fn load_state(path: &Path) -> Result<PureState> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    let record: StateRecord = serde_json::from_str(&text)?;
    record.into_state()
}
