//! Binary parameter checkpoints.
//!
//! All integers are little-endian `u32`, all values little-endian IEEE-754
//! `f64`:
//!
//! ```text
//! magic        4 bytes  "FDCP"
//! version      u32      = 1
//! layer_count  u32
//! layer table, per layer:
//!     kind       u8   0 = fully-connected, 1 = convolutional
//!     low_rank   u8   0 = no personalized branch, 1 = B and A follow
//!     shapes     for sigma, bias, [B, A]: ndim u32 then ndim × u32 dims
//! payload, per layer in table order:
//!     sigma, bias, [B, A] as row-major f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::params::{DecomposedParam, LowRank, ModelParams};
use super::spec::LayerKind;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FDCP";
pub const VERSION: u32 = 1;

pub fn write_params<W: Write>(mut out: W, params: &ModelParams) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(params.layer_count() as u32).to_le_bytes())?;
    for (w, b) in params.weights.iter().zip(&params.biases) {
        let kind = match w.kind {
            LayerKind::FullyConnected => 0u8,
            LayerKind::Convolutional => 1u8,
        };
        out.write_all(&[kind, w.low_rank.is_some() as u8])?;
        for t in layer_tensors(w, b) {
            out.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                out.write_all(&(d as u32).to_le_bytes())?;
            }
        }
    }
    for (w, b) in params.weights.iter().zip(&params.biases) {
        for t in layer_tensors(w, b) {
            for v in t.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn layer_tensors<'a>(w: &'a DecomposedParam, b: &'a Tensor) -> Vec<&'a Tensor> {
    let mut ts = vec![&w.sigma, b];
    if let Some(lr) = &w.low_rank {
        ts.push(&lr.factor_b);
        ts.push(&lr.factor_a);
    }
    ts
}

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|_| Error::Format {
            offset: self.offset,
            message: format!("truncated while reading {what}"),
        })?;
        self.offset += N as u64;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>(what)?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes::<8>("payload")?))
    }

    fn shape(&mut self) -> Result<Vec<usize>> {
        let at = self.offset;
        let ndim = self.u32("tensor rank")?;
        if ndim == 0 || ndim > 4 {
            return Err(Error::Format {
                offset: at,
                message: format!("unsupported tensor rank {ndim}"),
            });
        }
        (0..ndim).map(|_| self.u32("dimension").map(|d| d as usize)).collect()
    }

    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::new(shape.to_vec(), data)
    }
}

pub fn read_params<R: Read>(input: R) -> Result<ModelParams> {
    let mut r = Reader {
        inner: input,
        offset: 0,
    };
    if &r.bytes::<4>("magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic, expected FDCP".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let layers = r.u32("layer count")? as usize;
    let mut table = Vec::with_capacity(layers);
    for _ in 0..layers {
        let at = r.offset;
        let [kind, has_lr] = r.bytes::<2>("layer header")?;
        let kind = match kind {
            0 => LayerKind::FullyConnected,
            1 => LayerKind::Convolutional,
            other => {
                return Err(Error::Format {
                    offset: at,
                    message: format!("unknown layer kind {other}"),
                })
            }
        };
        let count = match has_lr {
            0 => 2,
            1 => 4,
            other => {
                return Err(Error::Format {
                    offset: at + 1,
                    message: format!("bad low-rank flag {other}"),
                })
            }
        };
        let shapes = (0..count).map(|_| r.shape()).collect::<Result<Vec<_>>>()?;
        table.push((kind, shapes));
    }
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    for (kind, shapes) in table {
        let sigma = r.tensor(&shapes[0])?;
        biases.push(r.tensor(&shapes[1])?);
        let low_rank = if shapes.len() == 4 {
            Some(LowRank {
                factor_b: r.tensor(&shapes[2])?,
                factor_a: r.tensor(&shapes[3])?,
            })
        } else {
            None
        };
        weights.push(DecomposedParam {
            kind,
            sigma,
            low_rank,
        });
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing).unwrap_or(0) != 0 {
        return Err(Error::Format {
            offset: r.offset,
            message: "trailing bytes after payload".into(),
        });
    }
    ModelParams::new(weights, biases)
}

pub fn save_params(path: &Path, params: &ModelParams) -> Result<()> {
    let mut buf = Vec::new();
    write_params(&mut buf, params).expect("writing to a Vec cannot fail");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_params(bytes.as_slice())
}
