use std::fmt::Write as _;

use volcore::{conv_output_dim, pool_output_dim};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    /// Cubic kernel edge length.
    pub kernel: usize,
}

/// Architecture and optimizer settings for the two-convolution network.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnConfig {
    pub input_shape: [usize; 3],
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub pool: usize,
    pub lr0: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub momentum: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            input_shape: [43, 51, 40],
            conv1: ConvSpec {
                out_channels: 16,
                kernel: 5,
            },
            conv2: ConvSpec {
                out_channels: 32,
                kernel: 3,
            },
            pool: 2,
            lr0: 0.1,
            lr_decay_factor: 0.2,
            lr_decay_every: 7,
            momentum: 0.8,
            lambda: 0.001,
            batch_size: 128,
            max_epochs: 30,
            early_stop_patience: 3,
            seed: 0,
        }
    }
}

/// Activation shapes through the network, channels first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShapes {
    pub input: [usize; 4],
    pub conv1: [usize; 4],
    pub pool1: [usize; 4],
    pub conv2: [usize; 4],
    pub pool2: [usize; 4],
    pub fc_in: usize,
}

impl CnnConfig {
    pub const KEYS: [&'static str; 13] = [
        "input_shape",
        "conv1",
        "conv2",
        "pool",
        "lr0",
        "lr_decay_factor",
        "lr_decay_every",
        "momentum",
        "lambda",
        "batch_size",
        "max_epochs",
        "early_stop_patience",
        "seed",
    ];

    pub fn layer_shapes(&self) -> Result<LayerShapes> {
        let [d, h, w] = self.input_shape;
        let conv = |dims: [usize; 3], k: usize| -> Result<[usize; 3]> {
            let f = |x| {
                conv_output_dim(x, k, 1).ok_or_else(|| {
                    Error::Config(format!("kernel {k} does not fit spatial dims {dims:?}"))
                })
            };
            Ok([f(dims[0])?, f(dims[1])?, f(dims[2])?])
        };
        let pool = |dims: [usize; 3]| -> Result<[usize; 3]> {
            let f = |x| {
                pool_output_dim(x, self.pool).ok_or_else(|| {
                    Error::Config(format!("pool window {} does not fit dims {dims:?}", self.pool))
                })
            };
            Ok([f(dims[0])?, f(dims[1])?, f(dims[2])?])
        };
        if d == 0 || h == 0 || w == 0 {
            return Err(Error::Config(format!("input shape {:?} has a zero axis", self.input_shape)));
        }
        if self.conv1.out_channels == 0 || self.conv2.out_channels == 0 {
            return Err(Error::Config("convolutions need at least one output channel".into()));
        }
        let c1 = conv([d, h, w], self.conv1.kernel)?;
        let p1 = pool(c1)?;
        let c2 = conv(p1, self.conv2.kernel)?;
        let p2 = pool(c2)?;
        let with = |c: usize, s: [usize; 3]| [c, s[0], s[1], s[2]];
        Ok(LayerShapes {
            input: with(1, [d, h, w]),
            conv1: with(self.conv1.out_channels, c1),
            pool1: with(self.conv1.out_channels, p1),
            conv2: with(self.conv2.out_channels, c2),
            pool2: with(self.conv2.out_channels, p2),
            fc_in: self.conv2.out_channels * p2.iter().product::<usize>(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_shapes()?;
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(&format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad(&format!("lr_decay_factor must lie in (0, 1], got {}", self.lr_decay_factor));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(&format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(&format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.lr_decay_every == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return bad("lr_decay_every, batch_size and max_epochs must be at least 1");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be at least 1");
        }
        Ok(())
    }

    /// Sets one key from its text form. Returns `Ok(false)` for keys this config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value.trim();
        match key {
            "input_shape" => self.input_shape = parse_list::<3>(key, v)?,
            "conv1" => self.conv1 = parse_conv(key, v)?,
            "conv2" => self.conv2 = parse_conv(key, v)?,
            "pool" => self.pool = parse(key, v)?,
            "lr0" => self.lr0 = parse(key, v)?,
            "lr_decay_factor" => self.lr_decay_factor = parse(key, v)?,
            "lr_decay_every" => self.lr_decay_every = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "max_epochs" => self.max_epochs = parse(key, v)?,
            "early_stop_patience" => self.early_stop_patience = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Appends one `key = value` line per field in [`Self::KEYS`] order.
    pub fn write_kv(&self, out: &mut String) {
        let [d, h, w] = self.input_shape;
        let _ = writeln!(out, "input_shape = {d},{h},{w}");
        let _ = writeln!(out, "conv1 = {},{}", self.conv1.out_channels, self.conv1.kernel);
        let _ = writeln!(out, "conv2 = {},{}", self.conv2.out_channels, self.conv2.kernel);
        let _ = writeln!(out, "pool = {}", self.pool);
        let _ = writeln!(out, "lr0 = {}", self.lr0);
        let _ = writeln!(out, "lr_decay_factor = {}", self.lr_decay_factor);
        let _ = writeln!(out, "lr_decay_every = {}", self.lr_decay_every);
        let _ = writeln!(out, "momentum = {}", self.momentum);
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "max_epochs = {}", self.max_epochs);
        let _ = writeln!(out, "early_stop_patience = {}", self.early_stop_patience);
        let _ = writeln!(out, "seed = {}", self.seed);
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_kv(&mut s);
        s
    }

    /// Parses `key = value` lines over the defaults; unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = CnnConfig::default();
        for (key, value) in kv_lines(text) {
            let (key, value) = (key?, value);
            if !cfg.set(key, value)? {
                return Err(Error::Config(format!("unknown key {key:?}")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub(crate) fn kv_lines(text: &str) -> impl Iterator<Item = (Result<&str>, &str)> {
    text.lines()
        .map(|l| l.split_once('#').map_or(l, |(a, _)| a).trim())
        .filter(|l| !l.is_empty())
        .map(|l| match l.split_once('=') {
            Some((k, v)) => (Ok(k.trim()), v.trim()),
            None => (Err(Error::Config(format!("expected `key = value`, got {l:?}"))), ""),
        })
}

pub(crate) fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<const N: usize>(key: &str, v: &str) -> Result<[usize; N]> {
    let parts: Vec<usize> = v
        .split(',')
        .map(|p| parse(key, p.trim()))
        .collect::<Result<_>>()?;
    parts
        .try_into()
        .map_err(|_| Error::Config(format!("{key}: expected {N} comma-separated values, got {v:?}")))
}

fn parse_conv(key: &str, v: &str) -> Result<ConvSpec> {
    let [out_channels, kernel] = parse_list::<2>(key, v)?;
    Ok(ConvSpec {
        out_channels,
        kernel,
    })
}

/// `lr0 * factor^floor(epoch / every)`, rounded to 15 significant digits so
/// that decimal settings give the nearest double to the decimal rate
/// (0.1 * 0.2 yields 0.02, not 0.020000000000000004).
pub fn lr_at_epoch(epoch: usize, config: &CnnConfig) -> f64 {
    let k = (epoch / config.lr_decay_every.max(1)) as i32;
    let lr = config.lr0 * config.lr_decay_factor.powi(k);
    format!("{lr:.14e}").parse().unwrap_or(lr)
}
