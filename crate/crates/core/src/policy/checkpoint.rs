//! Versioned binary checkpoints: a fixed header describing the network,
//! its normalisation, then the parameters as little-endian f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::network::{Architecture, Normalization, PolicyNetwork, INPUT_DIM};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"APILNET\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(net: &PolicyNetwork, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    w.write_u32::<LittleEndian>(INPUT_DIM as u32)?;
    for v in [net.arch.layers, net.arch.hidden, net.arch.head_hidden] {
        w.write_u32::<LittleEndian>(v as u32)?;
    }
    w.write_f64::<LittleEndian>(net.dropout)?;
    w.write_f64::<LittleEndian>(net.u_max)?;
    let n = &net.norm;
    for v in n.input_mean.iter().chain(&n.input_std).chain([&n.label_mean, &n.label_std]) {
        w.write_f64::<LittleEndian>(*v)?;
    }
    w.write_u64::<LittleEndian>(net.params.len() as u64)?;
    for p in &net.params {
        w.write_f64::<LittleEndian>(*p)?;
    }
    Ok(())
}

/// Reads a checkpoint; with `expected` set, refuses any other architecture.
pub fn read_checkpoint(mut r: impl Read, expected: Option<&Architecture>) -> Result<PolicyNetwork> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Checkpoint("file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a policy checkpoint".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let input_dim = r.read_u32::<LittleEndian>()? as usize;
    if input_dim != INPUT_DIM {
        return Err(Error::Checkpoint(format!("input width {input_dim}, expected {INPUT_DIM}")));
    }
    let arch = Architecture {
        layers: r.read_u32::<LittleEndian>()? as usize,
        hidden: r.read_u32::<LittleEndian>()? as usize,
        head_hidden: r.read_u32::<LittleEndian>()? as usize,
    };
    if let Some(e) = expected {
        if *e != arch {
            return Err(Error::Checkpoint(format!("architecture mismatch: file has {arch:?}, expected {e:?}")));
        }
    }
    let dropout = r.read_f64::<LittleEndian>()?;
    let u_max = r.read_f64::<LittleEndian>()?;
    let mut f = [0.0; 2 * INPUT_DIM + 2];
    for v in &mut f {
        *v = r.read_f64::<LittleEndian>()?;
    }
    let norm = Normalization {
        input_mean: [f[0], f[1], f[2]],
        input_std: [f[3], f[4], f[5]],
        label_mean: f[6],
        label_std: f[7],
    };
    let n = r.read_u64::<LittleEndian>()? as usize;
    if n != arch.num_params() {
        return Err(Error::Checkpoint(format!("{n} parameters stored, architecture needs {}", arch.num_params())));
    }
    let mut params = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut params)
        .map_err(|_| Error::Checkpoint("truncated parameter block".into()))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    PolicyNetwork::from_parts(arch, dropout, u_max, norm, params)
}

pub fn save_checkpoint(net: &PolicyNetwork, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&Architecture>) -> Result<PolicyNetwork> {
    let path = path.as_ref();
    read_checkpoint(BufReader::new(File::open(path)?), expected)
        .map_err(|e| e.context(format!("loading {}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> PolicyNetwork {
        let arch = Architecture { layers: 2, hidden: 5, head_hidden: 3 };
        let mut n = PolicyNetwork::new(arch, 0.2, 80.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        n.norm.label_mean = 12.5;
        n.norm.input_std = [2.0, 30.0, 4.0];
        n
    }

    #[test]
    fn round_trip_is_exact() {
        let a = net();
        let mut buf = Vec::new();
        write_checkpoint(&a, &mut buf).unwrap();
        let b = read_checkpoint(&buf[..], Some(&a.arch)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn architecture_mismatch_is_refused() {
        let a = net();
        let mut buf = Vec::new();
        write_checkpoint(&a, &mut buf).unwrap();
        let other = Architecture { layers: 2, hidden: 6, head_hidden: 3 };
        assert!(matches!(read_checkpoint(&buf[..], Some(&other)), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn corrupt_files_are_refused() {
        let a = net();
        let mut buf = Vec::new();
        write_checkpoint(&a, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3], None).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad[..], None).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_checkpoint(&long[..], None).is_err());
        let mut v2 = buf;
        v2[8] = 2;
        assert!(read_checkpoint(&v2[..], None).is_err());
    }
}
