//! Model dump files.
//!
//! CSV layout (text, `\n` line endings):
//!
//! ```text
//! # mstml-lda v1
//! k,vocab_size,n_docs,alpha,beta,seed,scope
//! <K>,<V>,<N>,<alpha>,<beta>,<seed>,<global|chunk index>
//! phi
//! <K rows of V comma-separated values>
//! theta
//! <N rows of K comma-separated values>
//! ```
//!
//! Floats are written in shortest round-trip form, so a dump re-reads to the
//! identical bits.
//!
//! Binary layout (little endian): the 8 magic bytes `MSTMLLDA`, `u32` version
//! (1), `u64` K, `u64` V, `u64` N, `f64` alpha, `f64` beta, `u64` seed, `i64`
//! scope (-1 = global), then phi and theta as row-major `f64`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LdaModel, ModelScope};
use crate::dense::Matrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MSTMLLDA";
const CSV_HEADER: &str = "# mstml-lda v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFormat {
    #[default]
    Csv,
    Binary,
}

impl ModelFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ModelFormat::Csv => "csv",
            ModelFormat::Binary => "bin",
        }
    }
}

pub fn encode_model(m: &LdaModel, format: ModelFormat) -> Vec<u8> {
    match format {
        ModelFormat::Csv => encode_csv(m).into_bytes(),
        ModelFormat::Binary => encode_binary(m),
    }
}

/// Detects the format from the leading bytes.
pub fn decode_model(bytes: &[u8]) -> Result<LdaModel> {
    if bytes.starts_with(MAGIC) {
        decode_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::Data("model dump is not UTF-8".into()))?;
        decode_csv(text)
    }
}

pub fn write_model(m: &LdaModel, path: &Path, format: ModelFormat) -> Result<()> {
    std::fs::write(path, encode_model(m, format)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<LdaModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

fn encode_csv(m: &LdaModel) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    s.push_str("k,vocab_size,n_docs,alpha,beta,seed,scope\n");
    let _ = writeln!(
        s,
        "{},{},{},{},{},{},{}",
        m.k,
        m.vocab_size,
        m.num_docs(),
        m.alpha,
        m.beta,
        m.seed,
        m.scope
    );
    for (name, mat) in [("phi", &m.phi), ("theta", &m.theta)] {
        s.push_str(name);
        s.push('\n');
        for r in 0..mat.rows() {
            for (i, x) in mat.row(r).iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{x}");
            }
            s.push('\n');
        }
    }
    s
}

fn decode_csv(text: &str) -> Result<LdaModel> {
    let bad = |what: &str| Error::Data(format!("malformed model dump: {what}"));
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad("missing header"));
    }
    lines.next().ok_or_else(|| bad("missing field names"))?;
    let fields: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("missing parameters"))?
        .split(',')
        .collect();
    if fields.len() != 7 {
        return Err(bad("parameter line"));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|_| bad("integer field"));
    let float = |s: &str| s.parse::<f64>().map_err(|_| bad("float field"));
    let (k, v, n) = (int(fields[0])?, int(fields[1])?, int(fields[2])?);
    let alpha = float(fields[3])?;
    let beta = float(fields[4])?;
    let seed = fields[5].parse::<u64>().map_err(|_| bad("seed"))?;
    let scope: ModelScope = fields[6].parse()?;

    let mut read_matrix = |name: &str, rows: usize, cols: usize| -> Result<Matrix> {
        if lines.next() != Some(name) {
            return Err(bad(&format!("missing `{name}` section")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| bad("truncated matrix"))?;
            let before = data.len();
            for x in line.split(',') {
                data.push(float(x)?);
            }
            if data.len() - before != cols {
                return Err(bad("row length"));
            }
        }
        Ok(Matrix::from_vec(rows, cols, data))
    };
    let phi = read_matrix("phi", k, v)?;
    let theta = read_matrix("theta", n, k)?;
    Ok(LdaModel {
        k,
        vocab_size: v,
        alpha,
        beta,
        seed,
        scope,
        phi,
        theta,
    })
}

fn encode_binary(m: &LdaModel) -> Vec<u8> {
    let mut b = Vec::with_capacity(64 + 8 * (m.phi.as_slice().len() + m.theta.as_slice().len()));
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&1u32.to_le_bytes());
    for x in [m.k, m.vocab_size, m.num_docs()] {
        b.extend_from_slice(&(x as u64).to_le_bytes());
    }
    b.extend_from_slice(&m.alpha.to_le_bytes());
    b.extend_from_slice(&m.beta.to_le_bytes());
    b.extend_from_slice(&m.seed.to_le_bytes());
    let scope: i64 = match m.scope {
        ModelScope::Global => -1,
        ModelScope::Chunk(t) => t as i64,
    };
    b.extend_from_slice(&scope.to_le_bytes());
    for x in m.phi.as_slice().iter().chain(m.theta.as_slice()) {
        b.extend_from_slice(&x.to_le_bytes());
    }
    b
}

fn decode_binary(bytes: &[u8]) -> Result<LdaModel> {
    let bad = || Error::Data("truncated or corrupt binary model dump".into());
    let mut pos = MAGIC.len();
    let take8 = |pos: &mut usize| -> Result<[u8; 8]> {
        let s = bytes.get(*pos..*pos + 8).ok_or_else(bad)?;
        *pos += 8;
        Ok(s.try_into().expect("8 bytes"))
    };
    let version = u32::from_le_bytes(bytes.get(pos..pos + 4).ok_or_else(bad)?.try_into().expect("4 bytes"));
    pos += 4;
    if version != 1 {
        return Err(Error::Data(format!("unsupported model dump version {version}")));
    }
    let k = u64::from_le_bytes(take8(&mut pos)?) as usize;
    let v = u64::from_le_bytes(take8(&mut pos)?) as usize;
    let n = u64::from_le_bytes(take8(&mut pos)?) as usize;
    let alpha = f64::from_le_bytes(take8(&mut pos)?);
    let beta = f64::from_le_bytes(take8(&mut pos)?);
    let seed = u64::from_le_bytes(take8(&mut pos)?);
    let scope = match i64::from_le_bytes(take8(&mut pos)?) {
        -1 => ModelScope::Global,
        t if t >= 0 => ModelScope::Chunk(t as usize),
        _ => return Err(bad()),
    };
    let expected = pos + 8 * (k * v + n * k);
    if bytes.len() != expected {
        return Err(bad());
    }
    let mut floats = bytes[pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let phi = Matrix::from_vec(k, v, floats.by_ref().take(k * v).collect());
    let theta = Matrix::from_vec(n, k, floats.collect());
    Ok(LdaModel {
        k,
        vocab_size: v,
        alpha,
        beta,
        seed,
        scope,
        phi,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(phi: Vec<f64>, theta: Vec<f64>, k: usize, scope: ModelScope) -> LdaModel {
        let v = phi.len() / k;
        let n = theta.len() / k;
        LdaModel {
            k,
            vocab_size: v,
            alpha: 1.0,
            beta: 0.1,
            seed: 99,
            scope,
            phi: Matrix::from_vec(k, v, phi),
            theta: Matrix::from_vec(n, k, theta),
        }
    }

    proptest! {
        #[test]
        fn dumps_roundtrip_bit_exactly(
            phi in prop::collection::vec(0.0f64..1.0, 6),
            theta in prop::collection::vec(1e-300f64..1.0, 4),
            chunk in prop::option::of(0usize..50),
        ) {
            let scope = chunk.map_or(ModelScope::Global, ModelScope::Chunk);
            let m = model(phi, theta, 2, scope);
            for fmt in [ModelFormat::Csv, ModelFormat::Binary] {
                let back = decode_model(&encode_model(&m, fmt)).unwrap();
                prop_assert_eq!(&back, &m);
                let a: Vec<u64> = back.phi.as_slice().iter().map(|x| x.to_bits()).collect();
                let b: Vec<u64> = m.phi.as_slice().iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn corrupt_dumps_are_rejected() {
        let m = model(vec![0.5, 0.5, 0.25, 0.75], vec![0.1, 0.9], 2, ModelScope::Chunk(3));
        let bin = encode_model(&m, ModelFormat::Binary);
        assert!(decode_model(&bin[..bin.len() - 3]).is_err());
        let csv = String::from_utf8(encode_model(&m, ModelFormat::Csv)).unwrap();
        assert!(csv.starts_with("# mstml-lda v1\nk,vocab_size,n_docs,alpha,beta,seed,scope\n2,2,1,1,0.1,99,3\nphi\n"));
        assert!(decode_model(csv.replace("theta", "beta").as_bytes()).is_err());
    }
}
