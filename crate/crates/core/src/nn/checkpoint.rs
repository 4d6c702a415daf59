//! `CFW1` weight checkpoints.
//!
//! Layout: the magic `CFW1`, then one record per parameter tensor until end
//! of file: name length (u64), UTF-8 name, rank (u64), dims (u64 each), raw
//! f32 values. All integers and floats are little-endian.

use std::fs;
use std::io::Read;
use std::path::Path;

use super::network::Network;
use super::tensor::{read_dims, read_f32s, read_u64, write_f32s, write_u64, Tensor};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"CFW1";
const MAX_NAME: u64 = 4096;

pub fn encode_weights(net: &Network<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    for (name, t) in net.params() {
        write_u64(&mut out, name.len() as u64).expect("vec write");
        out.extend_from_slice(name.as_bytes());
        write_u64(&mut out, t.shape().len() as u64).expect("vec write");
        for &d in t.shape() {
            write_u64(&mut out, d as u64).expect("vec write");
        }
        write_f32s(&mut out, t.data()).expect("vec write");
    }
    out
}

fn truncated(what: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Checkpoint(format!("truncated {what}: {e}"))
}

/// Parses every record; nothing is returned unless the whole file is well formed.
pub fn decode_weights(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    if bytes.len() < 4 || &bytes[..4] != WEIGHTS_MAGIC {
        return Err(Error::Checkpoint("missing CFW1 magic".into()));
    }
    let mut r = &bytes[4..];
    let mut out = Vec::new();
    while !r.is_empty() {
        let name_len = read_u64(&mut r).map_err(truncated("name length"))?;
        if name_len > MAX_NAME {
            return Err(Error::Checkpoint(format!("name length {name_len} too large")));
        }
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(&mut name).map_err(truncated("name"))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?;
        let dims = read_dims(&mut r).map_err(|e| match e {
            Error::Io(io) => truncated("dims")(io),
            other => other,
        })?;
        let n = dims.iter().product();
        let data = read_f32s(&mut r, n).map_err(truncated("tensor data"))?;
        out.push((name, Tensor::from_vec(dims, data)?));
    }
    Ok(out)
}

/// Replaces `net`'s parameters with the decoded ones. On any error `net` is untouched.
pub fn apply_weights(net: &mut Network<f32>, records: Vec<(String, Tensor<f32>)>) -> Result<()> {
    let expected: Vec<(String, Vec<usize>)> = net.params().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
    if expected.len() != records.len() {
        return Err(Error::Shape {
            expected: format!("{} tensors", expected.len()),
            found: format!("{} tensors", records.len()),
        });
    }
    for ((ename, eshape), (name, t)) in expected.iter().zip(&records) {
        if ename != name || eshape.as_slice() != t.shape() {
            return Err(Error::Shape {
                expected: format!("{ename} {eshape:?}"),
                found: format!("{name} {:?}", t.shape()),
            });
        }
    }
    net.load_params(records.into_iter().map(|(_, t)| t).collect())
}

pub fn save_weights(net: &Network<f32>, path: &Path) -> Result<()> {
    fs::write(path, encode_weights(net))?;
    Ok(())
}

pub fn load_weights(net: &mut Network<f32>, path: &Path) -> Result<()> {
    let bytes = fs::read(path)?;
    apply_weights(net, decode_weights(&bytes)?)
}
