//! Self-describing binary model container.
//!
//! Layout: magic `PEVC`, little-endian u32 version, u32 header length, JSON
//! header (spec plus a tensor manifest of names and shapes), then raw
//! little-endian f32 tensor data in manifest order. Running statistics are
//! included so a loaded model evaluates identically.

use std::io::{Read, Write};

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::network::{BnParams, ConvParams, Params};
use super::{ClassifierError, NetworkSpec};

const MAGIC: &[u8; 4] = b"PEVC";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    tensors: Vec<TensorInfo>,
}

fn tensor_list(params: &Params<f32>) -> Vec<(String, ArrayD<f32>)> {
    let mut tensors = Vec::new();
    for (i, conv) in params.conv.iter().enumerate() {
        tensors.push((format!("conv{}.weight", i), conv.weight.clone().into_dyn()));
        tensors.push((format!("conv{}.bias", i), conv.bias.clone().into_dyn()));
    }
    for (i, bn) in params.bn.iter().enumerate() {
        tensors.push((format!("bn{}.gamma", i), bn.gamma.clone().into_dyn()));
        tensors.push((format!("bn{}.beta", i), bn.beta.clone().into_dyn()));
        tensors.push((
            format!("bn{}.running_mean", i),
            bn.running_mean.clone().into_dyn(),
        ));
        tensors.push((
            format!("bn{}.running_var", i),
            bn.running_var.clone().into_dyn(),
        ));
    }
    tensors.push(("fc.weight".into(), params.fc_weight.clone().into_dyn()));
    tensors.push(("fc.bias".into(), params.fc_bias.clone().into_dyn()));
    tensors
}

pub fn save_checkpoint(
    writer: &mut impl Write,
    spec: &NetworkSpec,
    params: &Params<f32>,
) -> Result<(), ClassifierError> {
    let io = |e: std::io::Error| ClassifierError::Checkpoint(e.to_string());
    let tensors = tensor_list(params);
    let header = Header {
        spec: *spec,
        tensors: tensors
            .iter()
            .map(|(name, data)| TensorInfo {
                name: name.clone(),
                shape: data.shape().to_vec(),
            })
            .collect(),
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| ClassifierError::Checkpoint(e.to_string()))?;
    writer.write_all(MAGIC).map_err(io)?;
    writer.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    writer
        .write_all(&(header_bytes.len() as u32).to_le_bytes())
        .map_err(io)?;
    writer.write_all(&header_bytes).map_err(io)?;
    for (_, data) in tensors {
        for v in data.iter() {
            writer.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(
    reader: &mut impl Read,
) -> Result<(NetworkSpec, Params<f32>), ClassifierError> {
    let io = |e: std::io::Error| ClassifierError::Checkpoint(e.to_string());
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(ClassifierError::Checkpoint("bad magic bytes".into()));
    }
    let mut word = [0u8; 4];
    reader.read_exact(&mut word).map_err(io)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(ClassifierError::Checkpoint(format!(
            "unsupported version {}",
            version
        )));
    }
    reader.read_exact(&mut word).map_err(io)?;
    let header_len = u32::from_le_bytes(word) as usize;
    let mut header_bytes = vec![0u8; header_len];
    reader.read_exact(&mut header_bytes).map_err(io)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| ClassifierError::Checkpoint(e.to_string()))?;

    let mut tensors = Vec::with_capacity(header.tensors.len());
    for info in &header.tensors {
        let count: usize = info.shape.iter().product();
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            reader.read_exact(&mut word).map_err(io)?;
            values.push(f32::from_le_bytes(word));
        }
        let data = ArrayD::from_shape_vec(IxDyn(&info.shape), values)
            .map_err(|e| ClassifierError::Checkpoint(e.to_string()))?;
        tensors.push((info.name.clone(), data));
    }

    let take = |name: String| -> Result<ArrayD<f32>, ClassifierError> {
        tensors
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, d)| d.clone())
            .ok_or_else(|| ClassifierError::Checkpoint(format!("missing tensor {}", name)))
    };
    let dims = |name: String| -> Result<ndarray::Array1<f32>, ClassifierError> {
        take(name.clone())?
            .into_dimensionality()
            .map_err(|_| ClassifierError::Checkpoint(format!("bad shape for {}", name)))
    };

    let mut conv = Vec::with_capacity(4);
    let mut bn = Vec::with_capacity(4);
    for i in 0..4 {
        conv.push(ConvParams {
            weight: take(format!("conv{}.weight", i))?
                .into_dimensionality()
                .map_err(|_| ClassifierError::Checkpoint("bad conv weight shape".into()))?,
            bias: dims(format!("conv{}.bias", i))?,
        });
        bn.push(BnParams {
            gamma: dims(format!("bn{}.gamma", i))?,
            beta: dims(format!("bn{}.beta", i))?,
            running_mean: dims(format!("bn{}.running_mean", i))?,
            running_var: dims(format!("bn{}.running_var", i))?,
        });
    }
    let params = Params {
        conv,
        bn,
        fc_weight: take("fc.weight".into())?
            .into_dimensionality()
            .map_err(|_| ClassifierError::Checkpoint("bad fc weight shape".into()))?,
        fc_bias: dims("fc.bias".into())?,
    };
    Ok((header.spec, params))
}
