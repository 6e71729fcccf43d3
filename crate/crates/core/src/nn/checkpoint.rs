//! Binary parameter checkpoints.
//!
//! Layout (all integers `u32` little-endian, all reals `f64` little-endian):
//!
//! ```text
//! "WUDA-CKPT-1\n"
//! network_count
//! per network:  name_len name_bytes layer_count
//!   per layer:  in out activation:u8 dropout has_bn:u8
//!               weights[in*out] bias[out]
//!               (gamma beta running_mean running_var)[out]   if has_bn
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::layer::{Activation, BatchNorm, DenseLayer};
use super::matrix::Matrix;
use super::network::Network;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8] = b"WUDA-CKPT-1\n";

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, vs: &[f64]) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn get_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_checkpoint<W: Write>(w: &mut W, nets: &[(&str, &Network)]) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, nets.len())?;
    for (name, net) in nets {
        put_u32(w, name.len())?;
        w.write_all(name.as_bytes())?;
        put_u32(w, net.layers().len())?;
        for layer in net.layers() {
            put_u32(w, layer.in_dim())?;
            put_u32(w, layer.out_dim())?;
            let act = match layer.activation {
                Activation::Relu => 0u8,
                Activation::Identity => 1u8,
            };
            w.write_all(&[act])?;
            put_f64s(w, &[layer.dropout_rate])?;
            w.write_all(&[layer.batchnorm.is_some() as u8])?;
            put_f64s(w, layer.weights.data())?;
            put_f64s(w, &layer.bias)?;
            if let Some(bn) = &layer.batchnorm {
                put_f64s(w, &bn.gamma)?;
                put_f64s(w, &bn.beta)?;
                put_f64s(w, &bn.running_mean)?;
                put_f64s(w, &bn.running_var)?;
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Vec<(String, Network)>> {
    let mut magic = vec![0u8; CHECKPOINT_MAGIC.len()];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("missing WUDA-CKPT-1 magic".into()));
    }
    let count = get_u32(r)?;
    let mut nets = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = get_u32(r)?;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let n_layers = get_u32(r)?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let in_dim = get_u32(r)?;
            let out_dim = get_u32(r)?;
            let activation = match get_u8(r)? {
                0 => Activation::Relu,
                1 => Activation::Identity,
                other => return Err(Error::Checkpoint(format!("unknown activation tag {other}"))),
            };
            let dropout_rate = get_f64s(r, 1)?[0];
            let has_bn = get_u8(r)? != 0;
            let weights = Matrix::new(in_dim, out_dim, get_f64s(r, in_dim * out_dim)?)?;
            let bias = get_f64s(r, out_dim)?;
            let batchnorm = if has_bn {
                Some(BatchNorm {
                    gamma: get_f64s(r, out_dim)?,
                    beta: get_f64s(r, out_dim)?,
                    running_mean: get_f64s(r, out_dim)?,
                    running_var: get_f64s(r, out_dim)?,
                })
            } else {
                None
            };
            layers.push(DenseLayer {
                weights,
                bias,
                activation,
                dropout_rate,
                batchnorm,
            });
        }
        nets.push((name, Network::new(layers)?));
    }
    Ok(nets)
}

pub fn save_checkpoint(path: &Path, nets: &[(&str, &Network)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, nets)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Network)>> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_preserves_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Network::mlp(&[4, 6, 3], 0.5, true, false, &mut rng).unwrap();
        let b = Network::mlp(&[3, 2], 0.0, false, true, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("a", &a), ("b", &b)]).unwrap();
        assert!(buf.starts_with(b"WUDA-CKPT-1"));
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back[0].0, "a");
        assert_eq!(back[0].1.layers(), a.layers());
        assert_eq!(back[1].1.layers(), b.layers());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let err = read_checkpoint(&mut &b"WUDA-CKPT-2\n\0\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
    }
}
