//! Binary checkpoints: magic, little-endian header length, JSON header, then
//! every tensor as raw little-endian values in [`Params::tensors`] order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, Params, SasRecModel};
use crate::{Error, Result, Scalar};

const MAGIC: &[u8; 8] = b"NEGSCKP1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    scalar: String,
    tensors: Vec<(String, usize)>,
}

/// A loaded model with the seed it was trained from.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: SasRecModel<T>,
    pub seed: u64,
}

pub fn save_checkpoint<T: Scalar>(path: &Path, model: &SasRecModel<T>, seed: u64) -> Result<()> {
    let tensors = model.params.tensors();
    let header = Header {
        config: model.config.clone(),
        seed,
        scalar: T::NAME.to_string(),
        tensors: tensors.iter().map(|(n, t)| (n.clone(), t.len())).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(MAGIC)?;
    write(&(json.len() as u64).to_le_bytes())?;
    write(&json)?;
    let mut buf = Vec::new();
    for (_, t) in &tensors {
        buf.clear();
        t.iter().for_each(|&x| x.write_le(&mut buf));
        write(&buf)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut read = |n: usize| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        Ok(buf)
    };
    if read(8)? != MAGIC {
        return Err(Error::Format(format!("{}: not a checkpoint", path.display())));
    }
    let len = u64::from_le_bytes(read(8)?.try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(&read(len)?)?;
    if header.scalar != T::NAME {
        return Err(Error::Format(format!(
            "checkpoint stores {} values, requested {}",
            header.scalar,
            T::NAME
        )));
    }
    header.config.validate()?;
    let mut params = Params::<T>::zeros(&header.config);
    let mut slots = params.tensors_mut();
    if slots.len() != header.tensors.len() {
        return Err(Error::Format("tensor count does not match the configuration".into()));
    }
    for ((name, slot), (hname, hlen)) in slots.iter_mut().zip(&header.tensors) {
        if name != hname || slot.len() != *hlen {
            return Err(Error::Format(format!(
                "tensor {hname} ({hlen}) does not match {name} ({})",
                slot.len()
            )));
        }
        let bytes = read(hlen * T::BYTES)?;
        for (x, chunk) in slot.iter_mut().zip(bytes.chunks_exact(T::BYTES)) {
            *x = T::read_le(chunk);
        }
    }
    drop(slots);
    Ok(Checkpoint {
        model: SasRecModel {
            config: header.config,
            params,
        },
        seed: header.seed,
    })
}
