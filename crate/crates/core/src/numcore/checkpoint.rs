//! Versioned binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "JMCKPT\0\x01"
//! version      u32      = 1
//! config       u32 length + UTF-8 bytes (key=value lines, includes schedule)
//! step         u64      completed optimizer steps of the run
//! entries      u32      parameter count P
//! P times:     u32 name length + UTF-8 name
//!              u32 rank, rank x u64 extents
//!              f64 x prod(extents) values
//! has_moments  u8       0 or 1
//! if 1:        u64 applied steps, u64 rejected steps
//!              f64 x 4  lr, beta1, beta2, eps
//!              f64      clip norm (NaN when disabled)
//!              P times: f64 first moment, f64 second moment (same extents)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::adam::{Adam, AdamConfig};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::binio::*;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"JMCKPT\0\x01";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub step: u64,
    pub params: ParamStore,
    pub optimizer: Option<Adam>,
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        put_u32(w, CHECKPOINT_VERSION)?;
        put_str(w, &self.config)?;
        put_u64(w, self.step)?;
        put_u32(w, self.params.len() as u32)?;
        for (name, t) in self.params.iter() {
            put_str(w, name)?;
            put_u32(w, t.shape().len() as u32)?;
            for &d in t.shape() {
                put_u64(w, d as u64)?;
            }
            put_f64s(w, t.data())?;
        }
        match &self.optimizer {
            None => put_u8(w, 0)?,
            Some(opt) => {
                put_u8(w, 1)?;
                put_u64(w, opt.t)?;
                put_u64(w, opt.rejected)?;
                let c = opt.config;
                for v in [c.lr, c.beta1, c.beta2, c.eps, c.clip_norm.unwrap_or(f64::NAN)] {
                    put_f64(w, v)?;
                }
                for (m, v) in opt.m.iter().zip(&opt.v) {
                    put_f64s(w, m.data())?;
                    put_f64s(w, v.data())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, CHECKPOINT_MAGIC)?;
        let version = get_u32(r, "version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let config = get_str(r, "config")?;
        let step = get_u64(r, "step")?;
        let count = get_u32(r, "entry count")?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name = get_str(r, "parameter name")?;
            let rank = get_u32(r, "rank")? as usize;
            if rank > 4 {
                return Err(Error::Format(format!("parameter {name} has rank {rank}")));
            }
            let shape = (0..rank)
                .map(|_| get_u64(r, "extent").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = get_f64s(r, n, &name)?;
            params.insert(name, Tensor::new(&shape, data)?)?;
        }
        let optimizer = match get_u8(r, "moment flag")? {
            0 => None,
            1 => {
                let t = get_u64(r, "adam step")?;
                let rejected = get_u64(r, "adam rejected")?;
                let mut vals = [0.0; 5];
                for v in vals.iter_mut() {
                    *v = get_f64(r, "adam config")?;
                }
                let config = AdamConfig {
                    lr: vals[0],
                    beta1: vals[1],
                    beta2: vals[2],
                    eps: vals[3],
                    clip_norm: (!vals[4].is_nan()).then_some(vals[4]),
                };
                let mut m = Vec::with_capacity(params.len());
                let mut v = Vec::with_capacity(params.len());
                for (name, p) in params.iter() {
                    m.push(Tensor::new(p.shape(), get_f64s(r, p.len(), name)?)?);
                    v.push(Tensor::new(p.shape(), get_f64s(r, p.len(), name)?)?);
                }
                Some(Adam {
                    config,
                    m,
                    v,
                    t,
                    rejected,
                })
            }
            f => return Err(Error::Format(format!("bad moment flag {f}"))),
        };
        Ok(Self {
            config,
            step,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_moments() {
        let mut params = ParamStore::new();
        params
            .insert(
                "a.w",
                Tensor::matrix(2, 3, vec![1.0, -2.0, 3.5, 0.0, 1e-300, -0.0]).unwrap(),
            )
            .unwrap();
        params
            .insert("a.b", Tensor::new(&[3], vec![0.1, 0.2, 0.3]).unwrap())
            .unwrap();
        let mut opt = Adam::new(AdamConfig::default(), &params);
        let grads: Vec<Tensor> = params.iter().map(|(_, t)| t.map(|x| x * 0.5 + 0.1)).collect();
        opt.step(&mut params, &grads).unwrap();
        let ck = Checkpoint {
            config: "d=8\nT=5\n".into(),
            step: 7,
            params,
            optimizer: Some(opt),
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(Checkpoint::read_from(&mut &b""[..]), Err(Error::Format(_))));
        assert!(Checkpoint::read_from(&mut &b"NOTACKPTxxxx"[..]).is_err());
    }
}
