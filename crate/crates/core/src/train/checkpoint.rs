use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::ParameterStore;
use crate::error::{bail, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"UGNN";
pub const SCHEMA_VERSION: u32 = 1;

/// Position of a ChaCha8 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: u64,
    pub opt_step: u64,
    pub best_epoch: u64,
    pub since_best: u64,
    pub best_loss: f64,
}

impl Default for TrainState {
    fn default() -> Self {
        Self {
            epoch: 0,
            opt_step: 0,
            best_epoch: 0,
            since_best: 0,
            best_loss: f64::INFINITY,
        }
    }
}

/// Everything needed to resume training or to sample from a trained model.
///
/// Layout (little-endian): magic `UGNN`, `u32` version, `u32` length and
/// UTF-8 config text, five state words (`u64` epoch, `u64` optimizer step,
/// `u64` best epoch, `u64` epochs since best, `f64` best loss), the RNG
/// (32-byte seed, `u64` stream, `u128` word position), `u32` record count and
/// then records of `u32` name length, name, `u32` ndims, `u64` dims and
/// row-major `f64` payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub state: TrainState,
    pub rng: RngState,
    pub arrays: BTreeMap<String, Array2<f64>>,
}

impl Checkpoint {
    pub fn new(config: String, state: TrainState, rng: RngState) -> Self {
        Self {
            config,
            state,
            rng,
            arrays: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        self.arrays.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Array2<f64>> {
        self.arrays
            .get(name)
            .ok_or_else(|| crate::Error::Data(format!("checkpoint has no record {name}")))
    }

    /// Stores every entry of `store` under `prefix/`.
    pub fn insert_store<T: Scalar>(&mut self, prefix: &str, store: &ParameterStore<T>) {
        for (name, v) in store.iter() {
            self.insert(format!("{prefix}/{name}"), v.mapv(|x| x.to_f64_lossy()));
        }
    }

    pub fn store<T: Scalar>(&self, prefix: &str) -> Result<ParameterStore<T>> {
        let head = format!("{prefix}/");
        let mut out = ParameterStore::new();
        for (name, v) in &self.arrays {
            if let Some(rest) = name.strip_prefix(&head) {
                out.insert(rest, v.mapv(T::of))?;
            }
        }
        if out.is_empty() {
            bail!(Data, "checkpoint has no {prefix}/ records");
        }
        Ok(out)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&SCHEMA_VERSION.to_le_bytes())?;
        write_bytes(&mut w, self.config.as_bytes())?;
        let s = &self.state;
        for word in [s.epoch, s.opt_step, s.best_epoch, s.since_best] {
            w.write_all(&word.to_le_bytes())?;
        }
        w.write_all(&s.best_loss.to_le_bytes())?;
        w.write_all(&self.rng.seed)?;
        w.write_all(&self.rng.stream.to_le_bytes())?;
        w.write_all(&self.rng.word_pos.to_le_bytes())?;
        w.write_all(&len_u32(self.arrays.len())?.to_le_bytes())?;
        for (name, a) in &self.arrays {
            write_bytes(&mut w, name.as_bytes())?;
            w.write_all(&2u32.to_le_bytes())?;
            w.write_all(&(a.nrows() as u64).to_le_bytes())?;
            w.write_all(&(a.ncols() as u64).to_le_bytes())?;
            let mut payload = Vec::with_capacity(a.len() * 8);
            for v in a.iter() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&payload)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            bail!(Data, "not a checkpoint file (bad magic)");
        }
        let version = read_u32(&mut r)?;
        if version != SCHEMA_VERSION {
            bail!(Data, "unsupported checkpoint version {version}");
        }
        let config = String::from_utf8(read_bytes(&mut r)?).map_err(|e| crate::Error::Data(e.to_string()))?;
        let state = TrainState {
            epoch: read_u64(&mut r)?,
            opt_step: read_u64(&mut r)?,
            best_epoch: read_u64(&mut r)?,
            since_best: read_u64(&mut r)?,
            best_loss: f64::from_le_bytes(read_array(&mut r)?),
        };
        let rng = RngState {
            seed: read_array(&mut r)?,
            stream: read_u64(&mut r)?,
            word_pos: u128::from_le_bytes(read_array(&mut r)?),
        };
        let n = read_u32(&mut r)?;
        let mut arrays = BTreeMap::new();
        for _ in 0..n {
            let name = String::from_utf8(read_bytes(&mut r)?).map_err(|e| crate::Error::Data(e.to_string()))?;
            let ndims = read_u32(&mut r)? as usize;
            let dims = (0..ndims).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let shape = match dims.as_slice() {
                [] => (1, 1),
                [c] => (1, *c),
                [r, c] => (*r, *c),
                _ => bail!(Data, "record {name} has {ndims} dimensions"),
            };
            let count = shape.0.checked_mul(shape.1).filter(|c| *c < 1 << 32).ok_or_else(|| crate::Error::Data(format!("record {name} is too large")))?;
            let mut payload = vec![0u8; count * 8];
            r.read_exact(&mut payload).map_err(truncated)?;
            let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            let a = Array2::from_shape_vec(shape, values).map_err(|e| crate::Error::Data(e.to_string()))?;
            if arrays.insert(name.clone(), a).is_some() {
                bail!(Data, "duplicate checkpoint record {name}");
            }
        }
        Ok(Self { config, state, rng, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }
}

fn truncated(e: std::io::Error) -> crate::Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        crate::Error::Data("checkpoint is truncated".into())
    } else {
        e.into()
    }
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| crate::Error::Argument(format!("length {n} does not fit in u32")))
}

fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> Result<()> {
    w.write_all(&len_u32(bytes.len())?.to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let n = read_u32(r)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let _: u64 = rng.random();
        let mut ck = Checkpoint::new(
            "[train]\nseed = 1\n".into(),
            TrainState { epoch: 3, opt_step: 12, best_epoch: 2, since_best: 1, best_loss: 0.5 },
            RngState::capture(&rng),
        );
        ck.insert("param/w", array![[1.0, -2.5e-300], [f64::MAX, 0.0]]);
        ck.insert("kept/1", array![[0.0, 2.0, 3.0]]);
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"UGNN");
        let back = Checkpoint::read(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        let mut restored = back.rng.restore();
        assert_eq!(restored.random::<u64>(), rng.random::<u64>());
        assert!(Checkpoint::read(&buf[..buf.len() - 3]).is_err());
        assert!(Checkpoint::read(&b"XXXX"[..]).is_err());
    }
}
