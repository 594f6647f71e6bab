//! Cascade model files (`.agm`). The byte layout is owned by
//! `agm_core::codec` and described in `docs/model-format.md`.

use std::fs;
use std::path::Path;

use agm_core::{codec, CascadeModel};

use crate::error::{Error, Result};

pub fn save_model(model: &CascadeModel, path: &Path) -> Result<()> {
    fs::write(path, codec::encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<CascadeModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    codec::decode(&bytes).map_err(|source| Error::Model {
        path: path.to_path_buf(),
        source,
    })
}
