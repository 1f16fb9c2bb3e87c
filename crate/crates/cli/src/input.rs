//! Reading and checking input documents.

use std::path::Path;

use anyhow::Result;
use serde::de::DeserializeOwned;
use shg_core::topology::assign_ports;
use shg_core::{ArchParams, Topology};

use crate::exit::InputError;
use crate::manifest::Recorder;

/// Parses JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(bytes: &[u8]) -> std::result::Result<T, InputError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = (path != ".").then_some(path);
        InputError::new(field, e.into_inner().to_string())
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path, rec: &mut Recorder) -> Result<T> {
    let bytes = std::fs::read(path)
        .map_err(|e| InputError::new(None, format!("cannot read {}: {e}", path.display())))?;
    rec.input(path, &bytes);
    parse_json(&bytes).map_err(|e| {
        InputError::new(e.field, format!("{}: {}", path.display(), e.message)).into()
    })
}

/// Loads a topology and checks it; missing ports are assigned.
pub fn load_topology(path: &Path, rec: &mut Recorder) -> Result<Topology> {
    let t: Topology = read_json(path, rec)?;
    t.spec.validate(t.dims)?;
    t.check_structure()?;
    let unported = t.links.iter().any(|l| l.port_a.is_none() || l.port_b.is_none());
    Ok(if unported { assign_ports(&t) } else { t })
}

pub fn load_arch(path: &Path, rec: &mut Recorder) -> Result<ArchParams> {
    let arch: ArchParams = read_json(path, rec)?;
    arch.validate()?;
    Ok(arch)
}

/// The architecture with its tile count set to `n_tiles`.
pub fn fit_arch(arch: &ArchParams, n_tiles: usize) -> ArchParams {
    if arch.n_tiles as usize != n_tiles {
        log::warn!(
            "architecture describes {} tiles; using its per-tile parameters for {n_tiles}",
            arch.n_tiles
        );
    }
    arch.with_tiles(n_tiles as u32)
}
