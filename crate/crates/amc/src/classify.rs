//! Single-image inference.

use std::path::Path;

use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::dataset::image_from_gray;
use crate::error::{HarnessError, Result};
use crate::pgm;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub label: String,
    pub label_index: usize,
    pub probabilities: Vec<(String, f64)>,
}

pub fn classify_bytes(checkpoint: &Checkpoint, pgm_bytes: &[u8]) -> Result<Classification> {
    let gray = pgm::decode(pgm_bytes)?;
    if gray.width != checkpoint.input_size || gray.height != checkpoint.input_size {
        return Err(HarnessError::ImageSize {
            expected: checkpoint.input_size,
            found: gray.width.max(gray.height),
        });
    }
    let net = checkpoint.default_network()?;
    let (label_index, probs) = net.predict(&checkpoint.params, &image_from_gray(&gray)?)?;
    Ok(Classification {
        label: checkpoint.classes[label_index].clone(),
        label_index,
        probabilities: checkpoint.classes.iter().cloned().zip(probs).collect(),
    })
}

pub fn classify(checkpoint: &Path, image: &Path) -> Result<Classification> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let bytes = std::fs::read(image).map_err(|source| HarnessError::Io {
        path: image.into(),
        source,
    })?;
    classify_bytes(&ckpt, &bytes)
}
