//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! "DPTC" | u32 version | u8 phase | u64 seed | u32 epoch
//! u32 spec length | spec text (UTF-8)
//! u32 tensor count | per tensor, in name order:
//!     u32 name length | name (UTF-8) | u8 rank | u32 extent × rank | f32 data
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::params::Params;
use crate::spec::NetworkSpec;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"DPTC";
pub const FORMAT_VERSION: u32 = 1;

/// What a checkpoint holds. `Encoder` is a phase-1 checkpoint after
/// [`strip_decoder`](super::strip_decoder).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseTag {
    Phase1 = 1,
    Encoder = 2,
    Phase2 = 3,
    Benchmark = 4,
    Vanilla = 5,
}

impl PhaseTag {
    pub const ALL: [PhaseTag; 5] =
        [PhaseTag::Phase1, PhaseTag::Encoder, PhaseTag::Phase2, PhaseTag::Benchmark, PhaseTag::Vanilla];

    pub fn name(self) -> &'static str {
        match self {
            PhaseTag::Phase1 => "phase1",
            PhaseTag::Encoder => "encoder",
            PhaseTag::Phase2 => "phase2",
            PhaseTag::Benchmark => "benchmark",
            PhaseTag::Vanilla => "vanilla",
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }

    pub(crate) fn expect(self, expected: PhaseTag) -> Result<()> {
        if self == expected {
            Ok(())
        } else {
            Err(Error::WrongPhase { expected: expected.name().into(), got: self.name().into() })
        }
    }
}

impl fmt::Display for PhaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhaseTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::BadCheckpoint(format!("unknown phase `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub phase: PhaseTag,
    pub seed: u64,
    /// Epochs actually trained.
    pub epoch: u32,
    pub spec: NetworkSpec,
    pub params: Params,
}

impl Checkpoint {
    pub fn new(phase: PhaseTag, seed: u64, epoch: u32, spec: NetworkSpec, params: Params) -> Result<Self> {
        params.validate(&spec)?;
        Ok(Self { phase, seed, epoch, spec, params })
    }

    /// Hash of the serialized spec.
    pub fn fingerprint(&self) -> String {
        self.spec.fingerprint()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.phase as u8);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        let spec = self.spec.serialize();
        out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::BadCheckpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::BadCheckpoint(format!("unsupported format version {version}")));
        }
        let tag = r.take(1)?[0];
        let phase = PhaseTag::from_byte(tag).ok_or_else(|| Error::BadCheckpoint(format!("unknown phase tag {tag}")))?;
        let seed = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let epoch = r.u32()?;
        let spec_len = r.u32()? as usize;
        let spec_text =
            std::str::from_utf8(r.take(spec_len)?).map_err(|_| Error::BadCheckpoint("spec is not UTF-8".into()))?;
        let spec = NetworkSpec::parse(spec_text)?;
        let count = r.u32()? as usize;
        let mut params = Params::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::BadCheckpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| Error::BadCheckpoint("tensor too large".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            if params.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
                return Err(Error::BadCheckpoint(format!("duplicate tensor `{name}`")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::BadCheckpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Self::new(phase, seed, epoch, spec, params)
    }

    /// Atomic write (temp file, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::BadCheckpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::init_params;
    use crate::pipeline::{build_phase1_model, ReferenceArchitecture};

    fn sample() -> Checkpoint {
        let spec = build_phase1_model(&ReferenceArchitecture::default()).unwrap();
        let mut params = init_params(&spec, 3);
        // Exercise odd bit patterns: negative zero, subnormals, extremes.
        let w = params.get_mut("dec_conv_out.weight").unwrap().data_mut();
        w[0] = -0.0;
        w[1] = f32::MIN_POSITIVE / 3.0;
        w[2] = f32::MAX;
        Checkpoint::new(PhaseTag::Phase1, 0xDEAD_BEEF_0123_4567, 20, spec, params).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"DPTC");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(bytes[8], 1);
        assert_eq!(&bytes[9..17], &0xDEAD_BEEF_0123_4567u64.to_le_bytes());
        assert_eq!(&bytes[17..21], &[20, 0, 0, 0]);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.fingerprint(), ck.fingerprint());
        for (name, t) in ck.params.iter() {
            assert!(t.bit_eq(back.params.get(name).unwrap()), "{name}");
        }
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(Checkpoint::from_bytes(b"").is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p1.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        assert!(matches!(Checkpoint::load(&dir.path().join("none")), Err(Error::MissingFile(_))));
    }
}
