//! Flat binary checkpoint format for networks.
//!
//! Layout: version byte, then a header (layer count, per-layer widths and
//! activation codes as little-endian integers), then every parameter as a
//! little-endian 64-bit float in layer order, weights row-major before the
//! bias.

use super::{Activation, DenseNet, Layer, NnError};
use ndarray::{Array1, Array2};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const FORMAT_VERSION: u8 = 1;

pub fn save_net(net: &DenseNet, w: &mut impl Write) -> Result<(), NnError> {
    w.write_all(&[FORMAT_VERSION])?;
    w.write_all(&(net.layers().len() as u32).to_le_bytes())?;
    for layer in net.layers() {
        w.write_all(&(layer.in_width() as u32).to_le_bytes())?;
        w.write_all(&(layer.out_width() as u32).to_le_bytes())?;
        w.write_all(&[layer.activation.code()])?;
    }
    for layer in net.layers() {
        for &v in layer.weight.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in layer.bias.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_net(r: &mut impl Read) -> Result<DenseNet, NnError> {
    let mut byte = [0u8; 1];
    r.read_exact(&mut byte)?;
    if byte[0] != FORMAT_VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported checkpoint version {}",
            byte[0]
        )));
    }
    let n_layers = read_u32(r)? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(NnError::Checkpoint(format!("implausible layer count {}", n_layers)));
    }
    let mut shapes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let in_width = read_u32(r)? as usize;
        let out_width = read_u32(r)? as usize;
        r.read_exact(&mut byte)?;
        let activation = Activation::from_code(byte[0])
            .ok_or_else(|| NnError::Checkpoint(format!("unknown activation code {}", byte[0])))?;
        shapes.push((in_width, out_width, activation));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (in_width, out_width, activation) in shapes {
        let mut weight = Vec::with_capacity(out_width * in_width);
        for _ in 0..out_width * in_width {
            weight.push(read_f64(r)?);
        }
        let mut bias = Vec::with_capacity(out_width);
        for _ in 0..out_width {
            bias.push(read_f64(r)?);
        }
        layers.push(Layer {
            weight: Array2::from_shape_vec((out_width, in_width), weight)
                .map_err(|e| NnError::Checkpoint(e.to_string()))?,
            bias: Array1::from_vec(bias),
            activation,
        });
    }
    DenseNet::from_layers(layers)
}

pub fn save_net_to_path(net: &DenseNet, path: impl AsRef<Path>) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    save_net(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_net_from_path(path: impl AsRef<Path>) -> Result<DenseNet, NnError> {
    let mut r = BufReader::new(File::open(path)?);
    load_net(&mut r)
}

fn read_u32(r: &mut impl Read) -> Result<u32, NnError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64, NnError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
