//! Checkpoint format:
//!
//! ```text
//! b"DXCK" | u32 version | u32 header length | JSON header | f32 parameters
//! ```
//!
//! All integers and floats are little-endian. The header lists the layers
//! the ablation and the input standardization; parameters follow layer by layer, weights then bias.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Ablation, Activation, ConvLayer, ConvRegressor, EpochLoss, LearnError};

const MAGIC: &[u8; 4] = b"DXCK";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerHeader {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct Header {
    layers: Vec<LayerHeader>,
    ablation: Ablation,
    input_shift: Vec<f64>,
    input_scale: Vec<f64>,
}

pub fn encode_checkpoint(model: &ConvRegressor) -> Vec<u8> {
    let header = Header {
        layers: model
            .layers
            .iter()
            .map(|l| LayerHeader {
                in_channels: l.in_channels,
                out_channels: l.out_channels,
                kernel: l.kernel,
                activation: l.activation,
            })
            .collect(),
        ablation: model.ablation,
        input_shift: model.input_shift.clone(),
        input_scale: model.input_scale.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header always serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * model.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for l in &model.layers {
        for v in l.weights.iter().chain(&l.bias) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8], LearnError> {
    if bytes.len() < n {
        return Err(LearnError::BadCheckpoint("truncated".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn take_u32(bytes: &mut &[u8]) -> Result<u32, LearnError> {
    Ok(u32::from_le_bytes(take(bytes, 4)?.try_into().expect("four bytes")))
}

pub fn decode_checkpoint(mut bytes: &[u8]) -> Result<ConvRegressor, LearnError> {
    if take(&mut bytes, 4)? != MAGIC {
        return Err(LearnError::BadCheckpoint("bad magic".into()));
    }
    let version = take_u32(&mut bytes)?;
    if version != VERSION {
        return Err(LearnError::BadCheckpoint(format!("unsupported version {version}")));
    }
    let len = take_u32(&mut bytes)? as usize;
    let header: Header =
        serde_json::from_slice(take(&mut bytes, len)?).map_err(|e| LearnError::BadCheckpoint(e.to_string()))?;
    let mut layers = Vec::with_capacity(header.layers.len());
    for h in header.layers {
        let mut l = ConvLayer::zeros(h.in_channels, h.out_channels, h.kernel, h.activation);
        for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
            *v = f32::from_le_bytes(take(&mut bytes, 4)?.try_into().expect("four bytes")) as f64;
        }
        layers.push(l);
    }
    if !bytes.is_empty() {
        return Err(LearnError::BadCheckpoint("trailing bytes".into()));
    }
    let model = ConvRegressor {
        layers,
        ablation: header.ablation,
        input_shift: header.input_shift,
        input_scale: header.input_scale,
    };
    model
        .validate()
        .map_err(|e| LearnError::BadCheckpoint(e.to_string()))?;
    Ok(model)
}

pub fn save_checkpoint(model: &ConvRegressor, path: &Path) -> Result<(), LearnError> {
    fs::write(path, encode_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ConvRegressor, LearnError> {
    decode_checkpoint(&fs::read(path)?)
}

/// Writes `epoch,train_loss,test_loss`; the test column is empty when absent.
pub fn write_loss_csv<W: Write>(curve: &[EpochLoss], mut w: W) -> Result<(), LearnError> {
    writeln!(w, "epoch,train_loss,test_loss")?;
    for e in curve {
        match e.test_loss {
            Some(t) => writeln!(w, "{},{:e},{:e}", e.epoch, e.train_loss, t)?,
            None => writeln!(w, "{},{:e},", e.epoch, e.train_loss)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rounds_to_f32() {
        let mut m = ConvRegressor::new(5);
        m.ablation = Ablation::ZeroDynamic;
        let bytes = encode_checkpoint(&m);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.ablation, Ablation::ZeroDynamic);
        for (a, b) in back.layers.iter().zip(&m.layers) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn malformed_checkpoints_rejected() {
        let bytes = encode_checkpoint(&ConvRegressor::new(5));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_checkpoint(b"nope").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
    }

    #[test]
    fn loss_csv_layout() {
        let curve = vec![
            EpochLoss {
                epoch: 1,
                train_loss: 0.5,
                test_loss: Some(0.25),
            },
            EpochLoss {
                epoch: 2,
                train_loss: 0.125,
                test_loss: None,
            },
        ];
        let mut out = Vec::new();
        write_loss_csv(&curve, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "epoch,train_loss,test_loss\n1,5e-1,2.5e-1\n2,1.25e-1,\n"
        );
    }
}
