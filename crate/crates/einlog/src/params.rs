//! The trainable-parameter store: ground tensor-atom keys mapped to dense
//! tensors, validated against the program's declarations and index ranges.
//!
//! Initialization draws each entry from Normal(0, 1/sqrt(last-axis size)).
//! Every key gets its own generator stream derived from the run seed and a
//! stable hash of the key, so stores are bit-identical across runs and
//! independent of the order keys are first touched.
//!
//! Checkpoint container: a directory holding `manifest.json` (name, index
//! symbols, shape, dtype "f32", byte offset/length per entry, plus the
//! global seed and format version "1") and `weights.bin` (concatenated
//! little-endian f32 blobs, row-major). Entries are written sorted by key
//! so save-load-save is byte-identical.

use crate::error::{CheckpointError, RuntimeError};
use crate::explain::TensorRef;
use crate::parse::{pattern_matches, IndexDeclaration};
use crate::tensor::DenseTensor;
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub tensor: DenseTensor,
    pub trainable: bool,
}

#[derive(Debug, Clone)]
pub struct ParamStore {
    entries: IndexMap<TensorRef, ParamEntry>,
    pub decls: Vec<IndexDeclaration>,
    pub ranges: IndexMap<String, usize>,
    pub seed: u64,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Canonical text of a key: `name|ix1,ix2`.
pub fn key_name(key: &TensorRef) -> String {
    format!("{}|{}", key.key, key.indices.join(","))
}

impl ParamStore {
    pub fn new(
        decls: Vec<IndexDeclaration>,
        ranges: IndexMap<String, usize>,
        seed: u64,
    ) -> ParamStore {
        ParamStore { entries: IndexMap::new(), decls, ranges, seed }
    }

    /// Shape of a key from its index ranges, after checking the key against
    /// the declarations.
    pub fn key_shape(&self, key: &TensorRef) -> Result<Vec<usize>, RuntimeError> {
        let declared = self.decls.iter().any(|d| {
            pattern_matches(&d.pattern, &key.key) && d.index_lists.iter().any(|l| l == &key.indices)
        });
        if !declared {
            return Err(RuntimeError::UndeclaredKey { key: key_name(key) });
        }
        key.indices
            .iter()
            .map(|s| {
                self.ranges
                    .get(s)
                    .copied()
                    .ok_or_else(|| RuntimeError::MissingExtent { index: s.clone() })
            })
            .collect()
    }

    fn init_tensor(&self, key: &TensorRef, shape: &[usize]) -> DenseTensor {
        let last = shape.last().copied().unwrap_or(1).max(1);
        let std = 1.0 / (last as f64).sqrt();
        let mix = splitmix64(self.seed ^ fnv1a64(key_name(key).as_bytes()));
        let mut rng = ChaCha8Rng::seed_from_u64(mix);
        let normal = Normal::new(0.0, std).expect("valid std");
        let mut t = DenseTensor::zeros(shape);
        for v in &mut t.data {
            *v = normal.sample(&mut rng);
        }
        t
    }

    /// Fetch a key's tensor, initializing it if absent.
    pub fn get_or_init(&mut self, key: &TensorRef) -> Result<&DenseTensor, RuntimeError> {
        if !self.entries.contains_key(key) {
            let shape = self.key_shape(key)?;
            let tensor = self.init_tensor(key, &shape);
            self.entries.insert(key.clone(), ParamEntry { tensor, trainable: true });
        }
        Ok(&self.entries[key].tensor)
    }

    /// Initialize every key in the list (no-op for keys already present).
    pub fn materialize(&mut self, keys: &[TensorRef]) -> Result<(), RuntimeError> {
        for k in keys {
            self.get_or_init(k)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &TensorRef) -> Option<&DenseTensor> {
        self.entries.get(key).map(|e| &e.tensor)
    }

    pub fn set(&mut self, key: TensorRef, tensor: DenseTensor) {
        self.entries.insert(key, ParamEntry { tensor, trainable: true });
    }

    pub fn set_trainable(&mut self, key: &TensorRef, trainable: bool) {
        if let Some(e) = self.entries.get_mut(key) {
            e.trainable = trainable;
        }
    }

    pub fn is_trainable(&self, key: &TensorRef) -> bool {
        self.entries.get(key).is_some_and(|e| e.trainable)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TensorRef, &ParamEntry)> {
        self.entries.iter()
    }

    pub fn get_mut(&mut self, key: &TensorRef) -> Option<&mut DenseTensor> {
        self.entries.get_mut(key).map(|e| &mut e.tensor)
    }

    /// Keys sorted by canonical name; the checkpoint entry order.
    fn sorted_keys(&self) -> Vec<TensorRef> {
        let mut keys: Vec<TensorRef> = self.entries.keys().cloned().collect();
        keys.sort_by_key(key_name);
        keys
    }

    // -- checkpoint container ------------------------------------------------

    pub fn save_checkpoint(&self, dir: &Path) -> Result<(), CheckpointError> {
        let io = |source: std::io::Error, p: &Path| CheckpointError::Io {
            path: p.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
        let mut blob: Vec<u8> = Vec::new();
        let mut entries = Vec::new();
        for key in self.sorted_keys() {
            let entry = &self.entries[&key];
            let offset = blob.len() as u64;
            for &v in &entry.tensor.data {
                blob.extend_from_slice(&(v as f32).to_le_bytes());
            }
            entries.push(ManifestEntry {
                name: key.key.to_string(),
                indices: key.indices.clone(),
                shape: entry.tensor.shape.clone(),
                dtype: "f32".to_string(),
                offset,
                length: blob.len() as u64 - offset,
            });
        }
        let manifest = Manifest {
            format_version: CHECKPOINT_FORMAT_VERSION.to_string(),
            seed: self.seed,
            entries,
        };
        let manifest_path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CheckpointError::CorruptManifest(e.to_string()))?;
        let mut f = std::fs::File::create(&manifest_path).map_err(|e| io(e, &manifest_path))?;
        f.write_all(text.as_bytes()).map_err(|e| io(e, &manifest_path))?;
        let weights_path = dir.join("weights.bin");
        let mut f = std::fs::File::create(&weights_path).map_err(|e| io(e, &weights_path))?;
        f.write_all(&blob).map_err(|e| io(e, &weights_path))?;
        Ok(())
    }

    /// Load a checkpoint against the current program's declarations and
    /// ranges. Entry shapes must match what the ranges require now.
    pub fn load_checkpoint(
        dir: &Path,
        decls: Vec<IndexDeclaration>,
        ranges: IndexMap<String, usize>,
    ) -> Result<ParamStore, crate::error::Error> {
        let io = |source: std::io::Error, p: &Path| CheckpointError::Io {
            path: p.display().to_string(),
            source,
        };
        let manifest_path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| io(e, &manifest_path))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CheckpointError::CorruptManifest(e.to_string()))?;
        if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(CheckpointError::BadVersion(manifest.format_version).into());
        }
        let weights_path = dir.join("weights.bin");
        let mut blob = Vec::new();
        std::fs::File::open(&weights_path)
            .map_err(|e| io(e, &weights_path))?
            .read_to_end(&mut blob)
            .map_err(|e| io(e, &weights_path))?;
        let expected: u64 = manifest.entries.iter().map(|e| e.offset + e.length).max().unwrap_or(0);
        if blob.len() as u64 != expected {
            return Err(CheckpointError::BlobLength { expected, found: blob.len() as u64 }.into());
        }

        let mut store = ParamStore::new(decls, ranges, manifest.seed);
        for e in &manifest.entries {
            if e.dtype != "f32" {
                return Err(CheckpointError::CorruptManifest(format!("unsupported dtype {:?}", e.dtype)).into());
            }
            let key = TensorRef { key: crate::compile::parse_key_term(&e.name)?, indices: e.indices.clone() };
            let required = store.key_shape(&key).map_err(|_| CheckpointError::RangeMismatch {
                name: e.name.clone(),
                stored: e.shape.clone(),
                required: vec![],
            })?;
            if required != e.shape {
                return Err(CheckpointError::RangeMismatch {
                    name: e.name.clone(),
                    stored: e.shape.clone(),
                    required,
                }
                .into());
            }
            let count: usize = e.shape.iter().product();
            if e.length as usize != count * 4 {
                return Err(CheckpointError::BlobLength {
                    expected: (count * 4) as u64,
                    found: e.length,
                }
                .into());
            }
            let start = e.offset as usize;
            let mut data = Vec::with_capacity(count);
            for k in 0..count {
                let b = &blob[start + 4 * k..start + 4 * k + 4];
                data.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64);
            }
            store.set(key, DenseTensor::from_vec(e.shape.clone(), data));
        }
        Ok(store)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    indices: Vec<String>,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
    length: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: String,
    seed: u64,
    entries: Vec<ManifestEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::Term;
    use crate::parse::parse_program;

    fn store_for(src: &str, seed: u64) -> ParamStore {
        let p = parse_program(src).unwrap();
        ParamStore::new(p.index_decls.clone(), p.ranges(), seed)
    }

    fn vkey(name: &str) -> TensorRef {
        TensorRef {
            key: Term::compound("v", vec![Term::constant(name)]),
            indices: vec!["i".to_string()],
        }
    }

    const DECLS: &str = "index_list(v(_),[[i]]). :-set_index_range(i,20).";

    #[test]
    fn seeded_init_is_bit_identical_and_order_independent() {
        let mut s1 = store_for(DECLS, 7);
        let mut s2 = store_for(DECLS, 7);
        s1.get_or_init(&vkey("a")).unwrap();
        s1.get_or_init(&vkey("b")).unwrap();
        // opposite touch order
        s2.get_or_init(&vkey("b")).unwrap();
        s2.get_or_init(&vkey("a")).unwrap();
        assert_eq!(s1.get(&vkey("a")), s2.get(&vkey("a")));
        assert_eq!(s1.get(&vkey("b")), s2.get(&vkey("b")));
        let mut s3 = store_for(DECLS, 8);
        s3.get_or_init(&vkey("a")).unwrap();
        assert_ne!(s1.get(&vkey("a")), s3.get(&vkey("a")));
    }

    #[test]
    fn three_keys_three_vectors() {
        let mut s = store_for(DECLS, 1);
        for name in ["e1", "e2", "e3"] {
            let t = s.get_or_init(&vkey(name)).unwrap();
            assert_eq!(t.shape, vec![20]);
        }
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn empty_declarations_empty_store() {
        let s = ParamStore::new(vec![], IndexMap::new(), 0);
        assert!(s.is_empty());
        let mut s = s;
        let err = s.get_or_init(&vkey("a")).unwrap_err();
        assert!(matches!(err, RuntimeError::UndeclaredKey { .. }));
    }

    #[test]
    fn checkpoint_round_trip_and_idempotence() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = store_for(DECLS, 42);
        s.get_or_init(&vkey("a")).unwrap();
        s.get_or_init(&vkey("b")).unwrap();
        let c1 = dir.path().join("c1");
        s.save_checkpoint(&c1).unwrap();
        let p = parse_program(DECLS).unwrap();
        let loaded = ParamStore::load_checkpoint(&c1, p.index_decls.clone(), p.ranges()).unwrap();
        // round trip reproduces tensors to f32 precision
        for (key, entry) in s.iter() {
            let got = loaded.get(key).unwrap();
            for (a, b) in entry.tensor.data.iter().zip(&got.data) {
                assert_eq!(*a as f32, *b as f32);
            }
        }
        // save-load-save is byte-identical
        let c2 = dir.path().join("c2");
        loaded.save_checkpoint(&c2).unwrap();
        let m1 = std::fs::read(c1.join("manifest.json")).unwrap();
        let m2 = std::fs::read(c2.join("manifest.json")).unwrap();
        let w1 = std::fs::read(c1.join("weights.bin")).unwrap();
        let w2 = std::fs::read(c2.join("weights.bin")).unwrap();
        // first save stores f64-rounded-to-f32; second save must be equal
        let reload = ParamStore::load_checkpoint(&c2, p.index_decls.clone(), p.ranges()).unwrap();
        let c3 = dir.path().join("c3");
        reload.save_checkpoint(&c3).unwrap();
        assert_eq!(std::fs::read(c3.join("manifest.json")).unwrap(), m2);
        assert_eq!(std::fs::read(c3.join("weights.bin")).unwrap(), w2);
        assert_eq!(m1, m2);
        assert_eq!(w1, w2);
    }

    #[test]
    fn truncated_blob_reports_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = store_for(DECLS, 3);
        s.get_or_init(&vkey("a")).unwrap();
        let c = dir.path().join("c");
        s.save_checkpoint(&c).unwrap();
        let w = c.join("weights.bin");
        let bytes = std::fs::read(&w).unwrap();
        std::fs::write(&w, &bytes[..bytes.len() - 4]).unwrap();
        let p = parse_program(DECLS).unwrap();
        let err = ParamStore::load_checkpoint(&c, p.index_decls.clone(), p.ranges()).unwrap_err();
        assert!(err.to_string().contains("blob length mismatch"));
    }

    #[test]
    fn changed_range_reports_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = store_for(DECLS, 3);
        s.get_or_init(&vkey("a")).unwrap();
        let c = dir.path().join("c");
        s.save_checkpoint(&c).unwrap();
        let changed = parse_program("index_list(v(_),[[i]]). :-set_index_range(i,16).").unwrap();
        let err =
            ParamStore::load_checkpoint(&c, changed.index_decls.clone(), changed.ranges()).unwrap_err();
        assert!(err.to_string().contains("range mismatch"));
    }

    #[test]
    fn init_scale_tracks_last_axis() {
        // mean of squares should approximate 1/last for a wide tensor
        let src = "index_list(m,[[o,i]]). :-set_index_range(o,40). :-set_index_range(i,100).";
        let mut s = store_for(src, 5);
        let key = TensorRef {
            key: Term::constant("m"),
            indices: vec!["o".to_string(), "i".to_string()],
        };
        let t = s.get_or_init(&key).unwrap();
        let ms: f64 = t.data.iter().map(|x| x * x).sum::<f64>() / t.data.len() as f64;
        assert!((ms - 0.01).abs() < 0.002, "mean square {ms}");
    }
}
