use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use spacnet_tensor::checkpoint::{read_checkpoint, write_checkpoint};
use spacnet_tensor::ParamStore;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::network::SpacNet;

pub fn write_model(out: &mut impl Write, config: &ModelConfig, store: &ParamStore<f32>) -> Result<()> {
    Ok(write_checkpoint(out, store, &config.to_json())?)
}

/// Reads a checkpoint and checks its parameters against the structure its config describes.
pub fn read_model(input: &mut impl Read) -> Result<(SpacNet, ParamStore<f32>)> {
    let (header, store) = read_checkpoint(input)?;
    let config: ModelConfig = serde_json::from_value(header.config)?;
    let (net, reference) = SpacNet::init(&config)?;
    let names: Vec<&str> = reference.names().collect();
    if names != store.names().collect::<Vec<_>>() {
        return Err(Error::Config("checkpoint parameters do not match its model config".into()));
    }
    for (name, t) in reference.iter() {
        if store.get(name)?.shape() != t.shape() {
            return Err(Error::Config(format!("checkpoint parameter `{name}` has the wrong shape")));
        }
    }
    Ok((net, store))
}

pub fn save_model(path: &Path, config: &ModelConfig, store: &ParamStore<f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, config, store)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(SpacNet, ParamStore<f32>)> {
    read_model(&mut BufReader::new(File::open(path)?))
}
