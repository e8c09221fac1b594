//! Binary forest files.
//!
//! ```text
//! magic          8 bytes  b"SRGFORST"
//! version        u32
//! payload_len    u64
//! payload        payload_len bytes
//! sha256         32 bytes over the payload
//! ```
//!
//! All integers are little-endian. The payload holds the master seed, the
//! hyperparameters, the feature encoding and every tree as a pre-order node
//! list (tag 0 = split {feature u32, threshold f64 bits, right u32},
//! tag 1 = leaf {count0 u32, count1 u32}).

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{EncodedParam, FeatureEncoding, Forest, Hyperparams, Tree, TreeNode};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SRGFORST";
pub const FORMAT_VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::CorruptFile("unexpected end of data".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::CorruptFile("size overflow".into()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::CorruptFile("invalid utf-8".into()))
    }
}

fn encode_payload(forest: &Forest) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.u64(forest.master_seed());
    let hp = forest.hyperparams();
    w.u64(hp.n_trees as u64);
    w.u64(hp.max_depth as u64);
    w.u64(hp.features_per_split.map_or(0, |k| k as u64));
    w.u64(hp.min_samples_leaf as u64);

    let enc = forest.encoding();
    w.u32(enc.params().len() as u32);
    for p in enc.params() {
        match p {
            EncodedParam::Continuous { name, column } => {
                w.u8(0);
                w.str(name);
                w.u32(*column as u32);
            }
            EncodedParam::OneHot {
                name,
                start,
                alternatives,
            } => {
                w.u8(1);
                w.str(name);
                w.u32(*start as u32);
                w.u32(alternatives.len() as u32);
                for a in alternatives {
                    w.str(a);
                }
            }
        }
    }

    w.u32(forest.trees().len() as u32);
    for tree in forest.trees() {
        w.u32(tree.n_nodes() as u32);
        for node in tree.nodes() {
            match *node {
                TreeNode::Split {
                    feature,
                    threshold,
                    right,
                } => {
                    w.u8(0);
                    w.u32(feature);
                    w.f64(threshold);
                    w.u32(right);
                }
                TreeNode::Leaf { counts } => {
                    w.u8(1);
                    w.u32(counts[0]);
                    w.u32(counts[1]);
                }
            }
        }
    }
    w.buf
}

fn decode_payload(payload: &[u8]) -> Result<Forest> {
    let mut r = Reader { buf: payload };
    let master_seed = r.u64()?;
    let n_trees = r.usize()?;
    let max_depth = r.usize()?;
    let features_per_split = match r.usize()? {
        0 => None,
        k => Some(k),
    };
    let min_samples_leaf = r.usize()?;
    let hyperparams = Hyperparams {
        n_trees,
        max_depth,
        features_per_split,
        min_samples_leaf,
    };

    let n_params = r.u32()? as usize;
    let mut params = Vec::with_capacity(n_params.min(1 << 16));
    for _ in 0..n_params {
        params.push(match r.u8()? {
            0 => EncodedParam::Continuous {
                name: r.str()?,
                column: r.u32()? as usize,
            },
            1 => {
                let name = r.str()?;
                let start = r.u32()? as usize;
                let n = r.u32()? as usize;
                let alternatives = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
                EncodedParam::OneHot {
                    name,
                    start,
                    alternatives,
                }
            }
            t => return Err(Error::CorruptFile(format!("unknown parameter tag {t}"))),
        });
    }
    let encoding = FeatureEncoding::from_params(params).map_err(|e| Error::CorruptFile(e.to_string()))?;

    let stored_trees = r.u32()? as usize;
    if stored_trees != n_trees {
        return Err(Error::CorruptFile(format!(
            "header promises {n_trees} trees, found {stored_trees}"
        )));
    }
    let mut trees = Vec::with_capacity(n_trees.min(1 << 20));
    for _ in 0..stored_trees {
        let n_nodes = r.u32()? as usize;
        let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
        for _ in 0..n_nodes {
            nodes.push(match r.u8()? {
                0 => TreeNode::Split {
                    feature: r.u32()?,
                    threshold: r.f64()?,
                    right: r.u32()?,
                },
                1 => TreeNode::Leaf {
                    counts: [r.u32()?, r.u32()?],
                },
                t => return Err(Error::CorruptFile(format!("unknown node tag {t}"))),
            });
        }
        let tree = Tree::from_nodes(nodes)?;
        if tree.depth() > max_depth {
            return Err(Error::CorruptFile("tree deeper than max_depth".into()));
        }
        trees.push(tree);
    }
    if !r.buf.is_empty() {
        return Err(Error::CorruptFile("trailing payload bytes".into()));
    }
    Forest::from_parts(trees, hyperparams, master_seed, encoding)
}

pub fn write_forest(forest: &Forest) -> Vec<u8> {
    let payload = encode_payload(forest);
    let mut out = Vec::with_capacity(payload.len() + 52);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(Sha256::digest(&payload).as_slice());
    out
}

pub fn read_forest(bytes: &[u8]) -> Result<Forest> {
    let mut r = Reader { buf: bytes };
    if r.take(8).map_err(|_| Error::CorruptFile("missing header".into()))? != MAGIC {
        return Err(Error::CorruptFile("not a forest file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let len = r.usize()?;
    let payload = r.take(len)?;
    let digest = r.take(32)?;
    if !r.buf.is_empty() {
        return Err(Error::CorruptFile("trailing bytes".into()));
    }
    if Sha256::digest(payload).as_slice() != digest {
        return Err(Error::CorruptFile("checksum mismatch".into()));
    }
    decode_payload(payload)
}

pub fn save_forest(forest: &Forest, path: &Path) -> Result<()> {
    fs::write(path, write_forest(forest)).map_err(|e| Error::io(path, e))
}

pub fn load_forest(path: &Path) -> Result<Forest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_forest(&bytes)
}
