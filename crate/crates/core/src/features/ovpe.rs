//! Prompt-embedding files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "OVPE"  magic
//! u16     version (1)
//! u32     D
//! u32     n
//! n ×     u32 byte length + UTF-8 label
//! n·D ×   f32, row-major
//! ```

use std::fs;
use std::path::Path;

use super::{PromptList, PromptRole};
use crate::error::{Error, Result};
use crate::io::bytes::{Reader, Writer};

pub const MAGIC: &[u8; 4] = b"OVPE";
pub const VERSION: u16 = 1;
/// Rows produced by external exporters are accepted within this norm tolerance.
pub const ROW_NORM_TOL: f64 = 1e-3;

pub fn encode(list: &PromptList) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u32(list.dim() as u32);
    w.u32(list.len() as u32);
    for l in list.labels() {
        w.u32(l.len() as u32);
        w.bytes(l.as_bytes());
    }
    for &x in list.embeddings() {
        w.f32(x);
    }
    w.into_inner()
}

pub fn decode(bytes: &[u8], role: PromptRole, path: &Path) -> Result<PromptList> {
    let bad = |reason: String| Error::format(path, "prompt-embedding", reason);
    let mut r = Reader::new(bytes);
    let magic = r.take(4).map_err(|e| bad(e.into()))?;
    if magic != MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let version = r.u16().map_err(|e| bad(e.into()))?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dim = r.u32().map_err(|e| bad(e.into()))? as usize;
    let n = r.u32().map_err(|e| bad(e.into()))? as usize;
    let mut labels = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let len = r.u32().map_err(|e| bad(e.into()))? as usize;
        let raw = r.take(len).map_err(|e| bad(e.into()))?;
        labels.push(String::from_utf8(raw.to_vec()).map_err(|e| bad(format!("label is not UTF-8: {e}")))?);
    }
    let count = n.checked_mul(dim).ok_or_else(|| bad("size overflow".into()))?;
    let mut emb = Vec::with_capacity(count.min(1 << 28));
    for _ in 0..count {
        emb.push(r.f32().map_err(|e| bad(e.into()))?);
    }
    if !r.is_empty() {
        return Err(bad(format!("{} trailing bytes", r.remaining())));
    }
    PromptList::with_tolerance(labels, dim, emb, role, ROW_NORM_TOL).map_err(|e| match e {
        Error::InvalidArgument(m) => bad(m),
        other => other,
    })
}

pub fn write(list: &PromptList, path: &Path) -> Result<()> {
    fs::write(path, encode(list)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path, role: PromptRole) -> Result<PromptList> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, role, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_prompt_list, ConceptTable, MockEmbedder, DEFAULT_TEMPLATE};
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let list = PromptList::new(vec!["ab".into()], 2, vec![0.6, 0.8], PromptRole::Evaluation).unwrap();
        let b = encode(&list);
        assert_eq!(&b[..4], b"OVPE");
        assert_eq!(&b[4..6], &1u16.to_le_bytes());
        assert_eq!(&b[6..10], &2u32.to_le_bytes());
        assert_eq!(&b[10..14], &1u32.to_le_bytes());
        assert_eq!(&b[14..18], &2u32.to_le_bytes());
        assert_eq!(&b[18..20], b"ab");
        assert_eq!(&b[20..24], &0.6f32.to_le_bytes());
        assert_eq!(b.len(), 28);
    }

    #[test]
    fn rejects_corruption() {
        let p = Path::new("x.ovpe");
        let list = PromptList::new(vec!["a".into()], 1, vec![1.0], PromptRole::Entropy).unwrap();
        let mut b = encode(&list);
        assert!(decode(&b[..b.len() - 1], PromptRole::Entropy, p).is_err());
        b[0] = b'X';
        assert!(decode(&b, PromptRole::Entropy, p).is_err());
        let mut b = encode(&list);
        let last = b.len() - 4;
        b[last..].copy_from_slice(&0.5f32.to_le_bytes());
        assert!(decode(&b, PromptRole::Entropy, p).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(labels in prop::collection::hash_set("[a-z]{1,8}( [a-z]{1,5})?", 1..20), seed in 0u64..1000) {
            let mut labels: Vec<String> = labels.into_iter().map(|l| format!("x{l}")).collect();
            labels.sort();
            labels.dedup_by(|a, b| crate::features::fold_label(a) == crate::features::fold_label(b));
            let m = MockEmbedder::new(seed, 16, ConceptTable::default());
            let list = build_prompt_list(&labels, &m, PromptRole::Evaluation, DEFAULT_TEMPLATE).unwrap();
            let back = decode(&encode(&list), PromptRole::Evaluation, Path::new("mem")).unwrap();
            prop_assert_eq!(back, list);
        }
    }
}
