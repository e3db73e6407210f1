use std::fmt;
use std::str::FromStr;

use volcore::Volume;

use crate::{Error, Result};

/// Binary age-group label: 0 = younger, 1 = older.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    Younger = 0,
    Older = 1,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Younger, Group::Older];

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Group::Younger),
            1 => Ok(Group::Older),
            _ => Err(Error::Invalid(format!("label {v} is not 0 or 1"))),
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl FromStr for Group {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0" => Ok(Group::Younger),
            "1" => Ok(Group::Older),
            other => Err(Error::Invalid(format!("label {other:?} is not 0 or 1"))),
        }
    }
}

/// One subject's run: `T` frames of identical `[D, H, W]` shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Series4D {
    pub subject_id: String,
    pub label: Group,
    pub frames: Vec<Volume>,
}

impl Series4D {
    pub fn new(subject_id: impl Into<String>, label: Group, frames: Vec<Volume>) -> Result<Self> {
        let s = Series4D {
            subject_id: subject_id.into(),
            label,
            frames,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| Error::Invalid(format!("{}: series has no frames", self.subject_id)))?;
        if first.rank() != 3 {
            return Err(Error::Invalid(format!(
                "{}: frames must be [D, H, W], got {:?}",
                self.subject_id,
                first.shape()
            )));
        }
        if let Some((t, f)) = self
            .frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.shape() != first.shape())
        {
            return Err(Error::Invalid(format!(
                "{}: frame {t} has shape {:?}, frame 0 has {:?}",
                self.subject_id,
                f.shape(),
                first.shape()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_shape(&self) -> [usize; 3] {
        let s = self.frames[0].shape();
        [s[0], s[1], s[2]]
    }
}

/// A windowed-mean volume, the unit the classifier sees.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample3D {
    pub subject_id: String,
    pub label: Group,
    pub window_index: usize,
    pub voxels: Volume,
}
