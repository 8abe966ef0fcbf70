//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian u32 unless noted):
//! magic `TVNN`, version, model kind tag (u8), input rank and dims, layer
//! count, per layer a tag (u8) and argument, parameter tensor count, then
//! per tensor its rank, dims and f32 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::spec::{LayerSpec, ModelKind, ModelSpec};
use super::{Network, NnError, Real, Tensor};

pub const MAGIC: &[u8; 4] = b"TVNN";
pub const VERSION: u32 = 1;

fn layer_tag(layer: &LayerSpec) -> (u8, u32) {
    match *layer {
        LayerSpec::Flatten => (0, 0),
        LayerSpec::Dense { units } => (1, units as u32),
        LayerSpec::Conv2d { filters } => (2, filters as u32),
        LayerSpec::MaxPool2d => (3, 0),
        LayerSpec::Relu => (4, 0),
        LayerSpec::Softmax => (5, 0),
    }
}

fn layer_from_tag(tag: u8, arg: u32) -> Result<LayerSpec, NnError> {
    Ok(match tag {
        0 => LayerSpec::Flatten,
        1 => LayerSpec::Dense { units: arg as usize },
        2 => LayerSpec::Conv2d { filters: arg as usize },
        3 => LayerSpec::MaxPool2d,
        4 => LayerSpec::Relu,
        5 => LayerSpec::Softmax,
        other => return Err(NnError::Corrupt(format!("unknown layer tag {other}"))),
    })
}

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u32(r: &mut impl Read) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u8(r: &mut impl Read) -> Result<u8, NnError> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(b[0])
}

fn truncated(e: std::io::Error) -> NnError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        NnError::Corrupt("truncated file".into())
    } else {
        NnError::Io(e)
    }
}

pub fn write<T: Real>(net: &Network<T>, w: &mut impl Write) -> Result<(), NnError> {
    let spec = net.spec();
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    w.write_all(&[spec.kind.tag()])?;
    put_u32(w, spec.input_shape.len() as u32)?;
    for &d in &spec.input_shape {
        put_u32(w, d as u32)?;
    }
    put_u32(w, spec.layers.len() as u32)?;
    for layer in &spec.layers {
        let (tag, arg) = layer_tag(layer);
        w.write_all(&[tag])?;
        put_u32(w, arg)?;
    }
    put_u32(w, net.params().len() as u32)?;
    for p in net.params() {
        put_u32(w, p.shape().len() as u32)?;
        for &d in p.shape() {
            put_u32(w, d as u32)?;
        }
        let mut buf = Vec::with_capacity(p.len() * 4);
        for &v in p.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Reads a checkpoint, validating the architecture against its kind's
/// layer pattern and every parameter shape against the architecture.
pub fn read<T: Real>(r: &mut impl Read) -> Result<Network<T>, NnError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(NnError::BadMagic);
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let kind_tag = get_u8(r)?;
    let kind = ModelKind::from_tag(kind_tag)
        .ok_or_else(|| NnError::Corrupt(format!("unknown model kind tag {kind_tag}")))?;
    let rank = get_u32(r)? as usize;
    if rank > 8 {
        return Err(NnError::Corrupt(format!("input rank {rank}")));
    }
    let input_shape = (0..rank).map(|_| get_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
    let n_layers = get_u32(r)? as usize;
    if n_layers > 64 {
        return Err(NnError::Corrupt(format!("{n_layers} layers")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let tag = get_u8(r)?;
        let arg = get_u32(r)?;
        layers.push(layer_from_tag(tag, arg)?);
    }
    let spec = ModelSpec {
        kind,
        input_shape,
        layers,
    };
    check_builder_pattern(&spec)?;

    let n_params = get_u32(r)? as usize;
    if n_params > 2 * n_layers {
        return Err(NnError::Corrupt(format!("{n_params} parameter tensors")));
    }
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let rank = get_u32(r)? as usize;
        if rank == 0 || rank > 4 {
            return Err(NnError::Corrupt(format!("tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| get_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let len: usize = shape.iter().product();
        if len > 1 << 28 {
            return Err(NnError::Corrupt(format!("tensor of {len} elements")));
        }
        let mut bytes = vec![0u8; len * 4];
        r.read_exact(&mut bytes).map_err(truncated)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| T::from_f64_lossy(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        params.push(Tensor::new(shape, data)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(NnError::Corrupt("trailing bytes".into()));
    }
    Network::from_params(spec, params)
}

/// The kind tag promises the builder's layer sequence (widths may differ).
fn check_builder_pattern(spec: &ModelSpec) -> Result<(), NnError> {
    let reference = match spec.kind {
        ModelKind::Fc => ModelSpec::fc(1, 1, 1),
        ModelKind::Cnn => ModelSpec::cnn(1, 1, 1),
    };
    let same_shape = |a: &LayerSpec, b: &LayerSpec| std::mem::discriminant(a) == std::mem::discriminant(b);
    if spec.input_shape != reference.input_shape
        || spec.layers.len() != reference.layers.len()
        || !spec.layers.iter().zip(&reference.layers).all(|(a, b)| same_shape(a, b))
    {
        return Err(NnError::InvalidArchitecture(format!(
            "checkpoint layers do not follow the {} builder",
            spec.kind
        )));
    }
    spec.validate()
}

pub fn save<T: Real>(net: &Network<T>, path: impl AsRef<Path>) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    write(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load<T: Real>(path: impl AsRef<Path>) -> Result<Network<T>, NnError> {
    read(&mut BufReader::new(File::open(path)?))
}
