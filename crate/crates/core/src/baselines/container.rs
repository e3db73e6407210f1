//! VBLM: magic, u16 version, kind, free-form metadata text, optional PCA
//! block, then the logistic-regression block.

use std::fs;
use std::path::Path;

use volcore::Volume;

use super::{ColumnMap, LogRegModel, Matrix, PcaModel};
use crate::binio::{Reader, Writer};
use crate::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"VBLM";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    FisherZ,
    Pca,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::FisherZ => "fisherz-lr",
            BaselineKind::Pca => "pca-lr",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fisherz-lr" => Ok(BaselineKind::FisherZ),
            "pca-lr" => Ok(BaselineKind::Pca),
            _ => Err(Error::Config(format!("baseline kind {s:?} (expected fisherz-lr or pca-lr)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    /// `key = value` lines describing how features were built.
    pub meta: String,
    pub pca: Option<PcaModel>,
    pub logreg: LogRegModel,
}

fn vector(v: &[f64]) -> Volume {
    Volume::from_vec(&[v.len().max(1)], if v.is_empty() { vec![0.0] } else { v.to_vec() })
        .expect("rank-1 shape is valid")
}

fn read_vector(r: &mut Reader, len: usize) -> Result<Vec<f64>, FormatError> {
    let v = r.array()?;
    if v.rank() != 1 || v.len() != len.max(1) {
        return Err(FormatError::Corrupt(format!("vector of shape {:?}, expected {len}", v.shape())));
    }
    let mut data = v.into_data();
    data.truncate(len);
    Ok(data)
}

impl BaselineModel {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(&MAGIC);
        w.u16(VERSION);
        w.u8(match self.kind {
            BaselineKind::FisherZ => 1,
            BaselineKind::Pca => 2,
        });
        w.str32(&self.meta);
        match &self.pca {
            None => w.u8(0),
            Some(p) => {
                w.u8(1);
                match &p.columns {
                    None => w.u8(0),
                    Some(c) => {
                        w.u8(1);
                        w.u32(c.n_input as u32);
                        w.u32(c.kept.len() as u32);
                        c.kept.iter().for_each(|&i| w.u32(i as u32));
                    }
                }
                w.u32(p.mean.len() as u32);
                w.u32(p.n_components() as u32);
                w.array(&vector(&p.mean));
                w.array(&vector(p.components.data()));
                w.array(&vector(&p.explained_variance));
            }
        }
        let lr = &self.logreg;
        w.u32(lr.weights.len() as u32);
        w.array(&vector(&lr.weights));
        w.f64(lr.bias);
        w.f64(lr.l2);
        w.u8(lr.converged as u8);
        w.u32(lr.iterations as u32);
        w.f64(lr.grad_norm);
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let kind = match r.u8()? {
            1 => BaselineKind::FisherZ,
            2 => BaselineKind::Pca,
            k => return Err(FormatError::Corrupt(format!("baseline kind {k}"))),
        };
        let meta = r.str32()?;
        let pca = match r.u8()? {
            0 => None,
            1 => {
                let columns = match r.u8()? {
                    0 => None,
                    1 => {
                        let n_input = r.u32()? as usize;
                        let n = r.u32()? as usize;
                        if n > r.remaining() / 4 {
                            return Err(FormatError::Truncated {
                                expected: n as u64 * 4,
                                found: r.remaining() as u64,
                            });
                        }
                        let kept = (0..n).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
                        if kept.iter().any(|&c| c >= n_input) || kept.windows(2).any(|w| w[0] >= w[1]) {
                            return Err(FormatError::Corrupt("column map indices".into()));
                        }
                        Some(ColumnMap { n_input, kept })
                    }
                    f => return Err(FormatError::Corrupt(format!("column flag {f}"))),
                };
                let d = r.u32()? as usize;
                let k = r.u32()? as usize;
                let mean = read_vector(&mut r, d)?;
                let comps = read_vector(&mut r, d.checked_mul(k).ok_or_else(|| {
                    FormatError::DimensionOverflow(format!("{k} x {d}"))
                })?)?;
                let explained_variance = read_vector(&mut r, k)?;
                if columns.as_ref().is_some_and(|c| c.kept.len() != d) {
                    return Err(FormatError::Corrupt("column map does not match PCA width".into()));
                }
                Some(PcaModel {
                    mean,
                    components: Matrix::from_vec(k, d, comps).map_err(|e| FormatError::Corrupt(e.to_string()))?,
                    explained_variance,
                    columns,
                })
            }
            f => return Err(FormatError::Corrupt(format!("PCA flag {f}"))),
        };
        let n = r.u32()? as usize;
        let weights = read_vector(&mut r, n)?;
        let logreg = LogRegModel {
            weights,
            bias: r.f64()?,
            l2: r.f64()?,
            converged: r.u8()? != 0,
            iterations: r.u32()? as usize,
            grad_norm: r.f64()?,
        };
        if let Some(p) = &pca {
            if p.n_components() != logreg.weights.len() {
                return Err(FormatError::Corrupt("classifier width does not match PCA components".into()));
            }
        }
        r.finish()?;
        Ok(BaselineModel {
            kind,
            meta,
            pca,
            logreg,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| Error::format(path, e))
    }

    /// Probabilities for raw feature rows (flattened volumes or connectivity vectors).
    pub fn predict(&self, features: &Matrix) -> Result<Vec<f64>> {
        match &self.pca {
            Some(p) => self.logreg.predict(&p.transform(features)?),
            None => self.logreg.predict(features),
        }
    }
}
