use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversarial::ModelParams;
use crate::error::{Error, Result};
use crate::numerics::{read_matrix, write_matrix, AdamState, Matrix};

#[derive(Serialize, Deserialize)]
struct AdamMeta {
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

pub(crate) fn save_adam(dir: &Path, name: &str, a: &AdamState, shape: (usize, usize)) -> Result<()> {
    let (r, c) = shape;
    write_matrix(&dir.join(format!("{name}_m.bin")), &Matrix::from_vec(r, c, a.m.clone())?)?;
    write_matrix(&dir.join(format!("{name}_v.bin")), &Matrix::from_vec(r, c, a.v.clone())?)?;
    let meta = AdamMeta {
        step: a.step,
        beta1: a.beta1,
        beta2: a.beta2,
        eps: a.eps,
    };
    crate::io::write_json(&dir.join(format!("{name}.json")), &meta)
}

pub(crate) fn load_adam(dir: &Path, name: &str, shape: (usize, usize)) -> Result<AdamState> {
    let m = read_matrix(&dir.join(format!("{name}_m.bin")))?;
    let v = read_matrix(&dir.join(format!("{name}_v.bin")))?;
    if m.shape() != shape || v.shape() != shape {
        return Err(Error::Corrupt {
            path: dir.join(name),
            message: format!("optimizer state shape {} does not match {shape:?}", m.shape_str()),
        });
    }
    let meta: AdamMeta = crate::io::read_json(&dir.join(format!("{name}.json")))?;
    Ok(AdamState {
        m: m.into_vec(),
        v: v.into_vec(),
        step: meta.step,
        beta1: meta.beta1,
        beta2: meta.beta2,
        eps: meta.eps,
    })
}

/// Writes both tables and their optimizer states under `dir`.
pub fn save_params(dir: &Path, p: &ModelParams) -> Result<()> {
    write_matrix(&dir.join("structure.bin"), &p.structure)?;
    write_matrix(&dir.join("words.bin"), &p.words)?;
    save_adam(dir, "structure_adam", &p.structure_adam, p.structure.shape())?;
    save_adam(dir, "words_adam", &p.words_adam, p.words.shape())
}

pub fn load_params(dir: &Path) -> Result<ModelParams> {
    let structure = read_matrix(&dir.join("structure.bin"))?;
    let words = read_matrix(&dir.join("words.bin"))?;
    Ok(ModelParams {
        structure_adam: load_adam(dir, "structure_adam", structure.shape())?,
        words_adam: load_adam(dir, "words_adam", words.shape())?,
        structure,
        words,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{RngStream, Substream};

    #[test]
    fn params_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = RngStream::new(0, Substream::Init);
        let mut p = ModelParams::init(3, 4, 2, &mut rng).unwrap();
        let g = Matrix::from_vec(3, 2, vec![0.1, -0.3, 0.2, 0.0, 1.0, 0.5]).unwrap();
        p.step_structure(&g, 0.01).unwrap();
        save_params(dir.path(), &p).unwrap();
        assert_eq!(load_params(dir.path()).unwrap(), p);
    }
}
