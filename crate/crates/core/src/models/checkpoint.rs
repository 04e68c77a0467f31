use std::io::{BufRead, Write};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{ModelConfig, ModelError, TrainedModel};

const MAGIC: &str = "commrobust-checkpoint v1";

/// Writes a text checkpoint: header, config as one JSON line, then each
/// parameter as a `tensor ROWS COLS` line followed by one value per line.
pub fn save_checkpoint<T: Scalar, W: Write>(model: &TrainedModel<T>, mut w: W) -> Result<(), ModelError> {
    let config = serde_json::to_string(&model.config).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "config {config}")?;
    writeln!(w, "k {}", model.k)?;
    writeln!(w, "input_scale {}", model.input_scale.to_f64_lossy())?;
    writeln!(w, "params {}", model.params.len())?;
    for p in &model.params {
        writeln!(w, "tensor {} {}", p.rows(), p.cols())?;
        for v in p.data() {
            writeln!(w, "{}", v.to_f64_lossy())?;
        }
    }
    Ok(())
}

fn field<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str, ModelError> {
    line.and_then(|l| l.strip_prefix(key))
        .and_then(|l| l.strip_prefix(' '))
        .ok_or_else(|| ModelError::Checkpoint(format!("expected `{key}` line")))
}

fn number<N: std::str::FromStr>(s: &str) -> Result<N, ModelError> {
    s.trim().parse().map_err(|_| ModelError::Checkpoint(format!("bad number `{s}`")))
}

/// Reads a checkpoint written by [`save_checkpoint`]. The loss history is
/// not stored and comes back empty.
pub fn load_checkpoint<T: Scalar, R: BufRead>(r: R) -> Result<TrainedModel<T>, ModelError> {
    let lines: Vec<String> = r.lines().collect::<Result<_, _>>()?;
    let mut it = lines.iter().map(String::as_str);
    if it.next() != Some(MAGIC) {
        return Err(ModelError::Checkpoint("missing or unknown version header".into()));
    }
    let config: ModelConfig =
        serde_json::from_str(field(it.next(), "config")?).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let k: usize = number(field(it.next(), "k")?)?;
    let input_scale = T::of(number::<f64>(field(it.next(), "input_scale")?)?);
    let count: usize = number(field(it.next(), "params")?)?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let shape = field(it.next(), "tensor")?;
        let (r, c) = shape
            .split_once(' ')
            .ok_or_else(|| ModelError::Checkpoint(format!("bad shape `{shape}`")))?;
        let (rows, cols): (usize, usize) = (number(r)?, number(c)?);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let line = it.next().ok_or_else(|| ModelError::Checkpoint("truncated tensor".into()))?;
            data.push(T::of(number::<f64>(line)?));
        }
        params.push(Tensor::from_vec(rows, cols, data)?);
    }
    if it.any(|l| !l.trim().is_empty()) {
        return Err(ModelError::Checkpoint("trailing content".into()));
    }
    Ok(TrainedModel { config, k, params, input_scale, losses: Vec::new() })
}
