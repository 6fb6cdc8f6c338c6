//! Versioned little-endian binary checkpoints.
//!
//! Layout: magic `RCKP`, format version (u32), metadata block, policy mean
//! network, policy log std, value network, then the two optimizer states.
//! A network is its layer count (u32) followed by, per layer, rows and
//! cols (u32) and the row-major weights and the bias as f64. Vectors are a
//! length (u64) and f64 values. Strings are a length (u32) and UTF-8 bytes.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::adam::Adam;
use super::mlp::Mlp;
use super::policy::{GaussianPolicy, ValueNet};
use super::NnError;

pub const MAGIC: [u8; 4] = *b"RCKP";
pub const FORMAT_VERSION: u32 = 1;

/// Provenance stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    pub total_steps: u64,
    pub seed: u64,
    pub config_hash: String,
    pub software_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub policy: GaussianPolicy,
    pub value: ValueNet,
    pub policy_opt: Adam,
    pub value_opt: Adam,
}

fn map_eof(e: io::Error) -> NnError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        NnError::Truncated
    } else {
        NnError::Io(e)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn write_vec<W: Write>(w: &mut W, v: &[f64]) -> io::Result<()> {
    w.write_u64::<LE>(v.len() as u64)?;
    v.iter().try_for_each(|x| w.write_f64::<LE>(*x))
}

fn write_mlp<W: Write>(w: &mut W, net: &Mlp) -> io::Result<()> {
    w.write_u32::<LE>(net.num_layers() as u32)?;
    for l in 0..net.num_layers() {
        let (wt, b) = net.layer(l);
        w.write_u32::<LE>(net.sizes()[l + 1] as u32)?;
        w.write_u32::<LE>(net.sizes()[l] as u32)?;
        wt.iter().chain(b).try_for_each(|x| w.write_f64::<LE>(*x))?;
    }
    Ok(())
}

fn write_adam<W: Write>(w: &mut W, a: &Adam) -> io::Result<()> {
    w.write_u64::<LE>(a.t)?;
    for x in [a.lr, a.beta1, a.beta2, a.eps] {
        w.write_f64::<LE>(x)?;
    }
    write_vec(w, &a.m)?;
    write_vec(w, &a.v)
}

/// Refuses lengths that cannot fit in what remains of a sane checkpoint.
const MAX_LEN: u64 = 1 << 28;

fn read_len<R: Read>(r: &mut R, wide: bool) -> Result<usize, NnError> {
    let n = if wide {
        r.read_u64::<LE>().map_err(map_eof)?
    } else {
        r.read_u32::<LE>().map_err(map_eof)? as u64
    };
    if n > MAX_LEN {
        return Err(NnError::Format(format!("implausible length {n}")));
    }
    Ok(n as usize)
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, NnError> {
    let mut v = vec![0.0; n];
    r.read_f64_into::<LE>(&mut v).map_err(map_eof)?;
    Ok(v)
}

fn read_str<R: Read>(r: &mut R) -> Result<String, NnError> {
    let n = read_len(r, false)?;
    let mut buf = vec![0; n];
    r.read_exact(&mut buf).map_err(map_eof)?;
    String::from_utf8(buf).map_err(|_| NnError::Format("metadata string is not UTF-8".into()))
}

fn read_vec<R: Read>(r: &mut R) -> Result<Vec<f64>, NnError> {
    let n = read_len(r, true)?;
    read_f64s(r, n)
}

fn read_mlp<R: Read>(r: &mut R) -> Result<Mlp, NnError> {
    let layers = read_len(r, false)?;
    if layers == 0 {
        return Err(NnError::Format("network without layers".into()));
    }
    let mut sizes = Vec::new();
    let mut params = Vec::new();
    for l in 0..layers {
        let rows = read_len(r, false)?;
        let cols = read_len(r, false)?;
        if rows == 0 || cols == 0 {
            return Err(NnError::Format(format!("layer {l} has an empty dimension")));
        }
        if l == 0 {
            sizes.push(cols);
        } else if *sizes.last().unwrap() != cols {
            return Err(NnError::Shape(format!(
                "layer {l} expects {cols} inputs but the previous layer has {} outputs",
                sizes.last().unwrap()
            )));
        }
        sizes.push(rows);
        params.extend(read_f64s(r, rows * cols + rows)?);
    }
    Mlp::from_params(&sizes, params)
}

fn read_adam<R: Read>(r: &mut R) -> Result<Adam, NnError> {
    let t = r.read_u64::<LE>().map_err(map_eof)?;
    let h = read_f64s(r, 4)?;
    let m = read_vec(r)?;
    let v = read_vec(r)?;
    if m.len() != v.len() {
        return Err(NnError::Shape("optimizer moment lengths differ".into()));
    }
    Ok(Adam {
        lr: h[0],
        beta1: h[1],
        beta2: h[2],
        eps: h[3],
        m,
        v,
        t,
    })
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(&MAGIC)?;
        w.write_u32::<LE>(FORMAT_VERSION)?;
        w.write_u64::<LE>(self.meta.total_steps)?;
        w.write_u64::<LE>(self.meta.seed)?;
        write_str(&mut w, &self.meta.config_hash)?;
        write_str(&mut w, &self.meta.software_version)?;
        write_mlp(&mut w, &self.policy.mean)?;
        write_vec(&mut w, &self.policy.log_std)?;
        write_mlp(&mut w, &self.value.net)?;
        write_adam(&mut w, &self.policy_opt)?;
        write_adam(&mut w, &self.value_opt)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(map_eof)?;
        if magic != MAGIC {
            return Err(NnError::Format(format!("bad magic bytes {magic:?}")));
        }
        let version = r.read_u32::<LE>().map_err(map_eof)?;
        if version != FORMAT_VERSION {
            return Err(NnError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let meta = CheckpointMeta {
            total_steps: r.read_u64::<LE>().map_err(map_eof)?,
            seed: r.read_u64::<LE>().map_err(map_eof)?,
            config_hash: read_str(&mut r)?,
            software_version: read_str(&mut r)?,
        };
        let mean = read_mlp(&mut r)?;
        let log_std = read_vec(&mut r)?;
        if log_std.len() != mean.output_dim() {
            return Err(NnError::Shape(format!(
                "log std of length {} for {} actions",
                log_std.len(),
                mean.output_dim()
            )));
        }
        let value = read_mlp(&mut r)?;
        if value.output_dim() != 1 || value.input_dim() != mean.input_dim() {
            return Err(NnError::Shape("value network does not match the policy".into()));
        }
        let policy_opt = read_adam(&mut r)?;
        let value_opt = read_adam(&mut r)?;
        let policy = GaussianPolicy { mean, log_std };
        let value = ValueNet { net: value };
        if policy_opt.m.len() != policy.num_params() || value_opt.m.len() != value.net.num_params() {
            return Err(NnError::Shape("optimizer state does not match the networks".into()));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(NnError::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Self {
            meta,
            policy,
            value,
            policy_opt,
            value_opt,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let tmp = path.with_extension("tmp");
        self.write_to(BufWriter::new(File::create(&tmp)?))?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Checks the stored networks against the layer widths a caller
    /// expects.
    pub fn expect_shapes(&self, policy_sizes: &[usize], value_sizes: &[usize]) -> Result<(), NnError> {
        if self.policy.mean.sizes() != policy_sizes || self.value.net.sizes() != value_sizes {
            return Err(NnError::Shape(format!(
                "checkpoint networks {:?} / {:?}, expected {policy_sizes:?} / {value_sizes:?}",
                self.policy.mean.sizes(),
                self.value.net.sizes()
            )));
        }
        Ok(())
    }
}
