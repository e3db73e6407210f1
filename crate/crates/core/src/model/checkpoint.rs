//! VCKP: magic, u16 version, canonical config text, normalizer, then each
//! layer's weight, bias and velocity arrays, then optional training progress.

use std::fs;
use std::path::Path;

use volcore::{LayerParams, Volume};

use super::{CnnConfig, CnnParams, EpochRecord, StopReason, TrainHistory};
use crate::binio::{Reader, Writer};
use crate::datapipe::Normalizer;
use crate::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"VCKP";
pub const VERSION: u16 = 1;

/// State beyond the current parameters that a resumed run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainProgress {
    pub best: CnnParams,
    pub history: TrainHistory,
    pub epochs_since_best: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: CnnConfig,
    pub normalizer: Normalizer,
    pub params: CnnParams,
    pub progress: Option<TrainProgress>,
}

fn write_params(w: &mut Writer, p: &CnnParams) {
    w.u8(p.layers.len() as u8);
    for (l, (vw, vb)) in p.layers.iter().zip(&p.velocity) {
        w.array(&l.weights);
        w.array(&l.bias);
        w.array(vw);
        w.array(vb);
    }
}

fn read_params(r: &mut Reader, config: &CnnConfig) -> Result<CnnParams, FormatError> {
    let n = r.u8()? as usize;
    let mut layers = Vec::with_capacity(n);
    let mut velocity = Vec::with_capacity(n);
    for _ in 0..n {
        let weights = r.array()?;
        let bias = r.array()?;
        velocity.push((r.array()?, r.array()?));
        layers.push(LayerParams::new(weights, bias));
    }
    let params = CnnParams {
        input_shape: config.input_shape,
        pool: config.pool,
        layers,
        velocity,
    };
    params
        .check_matches(config)
        .map_err(|e| FormatError::Corrupt(e.to_string()))?;
    Ok(params)
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(&MAGIC);
        w.u16(VERSION);
        w.str32(&self.config.to_text());
        w.array(&self.normalizer.mean_image);
        w.f64(self.normalizer.max_abs);
        write_params(&mut w, &self.params);
        match &self.progress {
            None => w.u8(0),
            Some(p) => {
                w.u8(1);
                w.u32(p.epochs_since_best as u32);
                w.u32(p.history.best_epoch.map_or(u32::MAX, |e| e as u32));
                w.u8(p.history.stop_reason.map_or(0, StopReason::as_u8));
                w.u32(p.history.epochs.len() as u32);
                for e in &p.history.epochs {
                    w.u32(e.epoch as u32);
                    for v in [e.lr, e.train_loss, e.train_accuracy, e.val_loss, e.val_auc] {
                        w.f64(v);
                    }
                }
                write_params(&mut w, &p.best);
            }
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let config = CnnConfig::from_text(&r.str32()?)
            .map_err(|e| FormatError::Corrupt(format!("config: {e}")))?;
        let mean_image: Volume = r.array()?;
        let normalizer = Normalizer::new(mean_image, r.f64()?)
            .map_err(|e| FormatError::Corrupt(format!("normalizer: {e}")))?;
        let params = read_params(&mut r, &config)?;
        let progress = match r.u8()? {
            0 => None,
            1 => {
                let epochs_since_best = r.u32()? as usize;
                let best_epoch = match r.u32()? {
                    u32::MAX => None,
                    e => Some(e as usize),
                };
                let stop = r.u8()?;
                let stop_reason = match stop {
                    0 => None,
                    s => Some(StopReason::from_u8(s).ok_or_else(|| {
                        FormatError::Corrupt(format!("stop reason {s}"))
                    })?),
                };
                let n = r.u32()? as usize;
                let mut epochs = Vec::with_capacity(n.min(r.remaining() / 44));
                for _ in 0..n {
                    epochs.push(EpochRecord {
                        epoch: r.u32()? as usize,
                        lr: r.f64()?,
                        train_loss: r.f64()?,
                        train_accuracy: r.f64()?,
                        val_loss: r.f64()?,
                        val_auc: r.f64()?,
                    });
                }
                if best_epoch.is_some_and(|b| b >= n) {
                    return Err(FormatError::Corrupt(format!("best epoch beyond {n} recorded epochs")));
                }
                let best = read_params(&mut r, &config)?;
                Some(TrainProgress {
                    best,
                    history: TrainHistory {
                        epochs,
                        best_epoch,
                        stop_reason,
                    },
                    epochs_since_best,
                })
            }
            f => return Err(FormatError::Corrupt(format!("progress flag {f}"))),
        };
        r.finish()?;
        Ok(Checkpoint {
            config,
            normalizer,
            params,
            progress,
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
}

pub fn save_checkpoint(
    params: &CnnParams,
    config: &CnnConfig,
    normalizer: &Normalizer,
    path: impl AsRef<Path>,
) -> Result<()> {
    params.check_matches(config)?;
    Checkpoint {
        config: config.clone(),
        normalizer: normalizer.clone(),
        params: params.clone(),
        progress: None,
    }
    .save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn small() -> Checkpoint {
        let mut config = CnnConfig::default();
        config.input_shape = [12, 12, 12];
        config.conv1.out_channels = 2;
        config.conv2.out_channels = 3;
        let mut params = init_params(&config, 1).unwrap();
        params.velocity[2].0.data_mut()[1] = 0.125;
        Checkpoint {
            normalizer: Normalizer::new(Volume::full(&[12, 12, 12], 0.5), 2.0).unwrap(),
            progress: Some(TrainProgress {
                best: init_params(&config, 2).unwrap(),
                history: TrainHistory {
                    epochs: vec![EpochRecord {
                        epoch: 0,
                        lr: 0.1,
                        train_loss: 0.7,
                        train_accuracy: 0.5,
                        val_loss: 0.69,
                        val_auc: 0.6,
                    }],
                    best_epoch: Some(0),
                    stop_reason: Some(StopReason::EarlyStop),
                },
                epochs_since_best: 0,
            }),
            config,
            params,
        }
    }

    #[test]
    fn round_trip() {
        let c = small();
        assert_eq!(Checkpoint::decode(&c.encode()).unwrap(), c);
        let mut plain = c.clone();
        plain.progress = None;
        assert_eq!(Checkpoint::decode(&plain.encode()).unwrap(), plain);
    }

    #[test]
    fn altered_version_is_rejected() {
        let mut b = small().encode();
        b[4] = 9;
        assert!(matches!(Checkpoint::decode(&b), Err(FormatError::Version { found: 9, .. })));
    }

    #[test]
    fn corrupt_payloads() {
        let b = small().encode();
        assert!(matches!(Checkpoint::decode(&b[..b.len() - 3]), Err(FormatError::Truncated { .. })));
        let mut extra = b.clone();
        extra.push(0);
        assert!(matches!(Checkpoint::decode(&extra), Err(FormatError::TrailingBytes(1))));
        let mut magic = b;
        magic[0] = b'X';
        assert!(matches!(Checkpoint::decode(&magic), Err(FormatError::BadMagic { .. })));
    }
}
