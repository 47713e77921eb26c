//! Binary cache of teacher summaries.
//!
//! ```text
//! magic       8 bytes  "DSALMTCH"
//! version     u32
//! hidden      u64      teacher summary size M
//! vocab       u64      |Σ|
//! vocab_hash  str
//! fingerprint str      hash of the treebank the records were built from
//! W_x         |Σ|·M f64, row-major
//! b_x         |Σ| f64
//! n_records   u64, then per record: index u64, length u64, (length + 1)·M f64
//! ```

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::teacher::{teacher_next_word_dist, teacher_states, word_distribution};
use super::MODULE;
use crate::autodiff::Tensor;
use crate::corpus::{print_bracketed, Tree};
use crate::error::{Error, Result};
use crate::fsutil::{self, put_f64s, put_str, put_u32, put_u64, ByteReader};
use crate::rnng::Rnng;

const MAGIC: &[u8; 8] = b"DSALMTCH";
pub const CACHE_VERSION: u32 = 1;
/// Largest tolerated gap between cached and direct teacher probabilities.
const RECONSTRUCTION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CacheRecord {
    pub index: usize,
    /// `len + 1` teacher summaries, the last one before `GEN(<eos>)`.
    pub states: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeacherCache {
    pub hidden: usize,
    pub vocab_hash: String,
    pub fingerprint: String,
    pub word_w: Tensor,
    pub word_b: Tensor,
    pub records: Vec<CacheRecord>,
}

/// SHA-256 over the bracketed treebank, one tree per line.
pub fn corpus_fingerprint(trees: &[Tree]) -> String {
    let mut h = Sha256::new();
    for t in trees {
        h.update(print_bracketed(t).as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

impl TeacherCache {
    pub fn vocab_size(&self) -> usize {
        self.word_b.len()
    }

    /// Teacher distributions for record `i`, rebuilt as `softmax(W_x·h + b_x)`.
    pub fn distributions(&self, i: usize) -> Result<Vec<Vec<f64>>> {
        let rec = self
            .records
            .get(i)
            .ok_or_else(|| Error::module(MODULE, format!("cache has no record {i}")))?;
        rec.states
            .iter()
            .map(|h| word_distribution(&self.word_w, &self.word_b, h))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, CACHE_VERSION);
        put_u64(&mut out, self.hidden as u64);
        put_u64(&mut out, self.vocab_size() as u64);
        put_str(&mut out, &self.vocab_hash);
        put_str(&mut out, &self.fingerprint);
        put_f64s(&mut out, self.word_w.data());
        put_f64s(&mut out, self.word_b.data());
        put_u64(&mut out, self.records.len() as u64);
        for r in &self.records {
            put_u64(&mut out, r.index as u64);
            put_u64(&mut out, (r.states.len() - 1) as u64);
            for h in &r.states {
                put_f64s(&mut out, h);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "teacher cache");
        if r.take(8)? != MAGIC {
            return Err(Error::module(MODULE, "bad magic; not a teacher cache"));
        }
        let version = r.u32()?;
        if version != CACHE_VERSION {
            return Err(Error::module(MODULE, format!("unsupported cache version {version}")));
        }
        let hidden = r.u64()? as usize;
        let vocab = r.u64()? as usize;
        let vocab_hash = r.string()?;
        let fingerprint = r.string()?;
        let word_w = Tensor::matrix(vocab, hidden, r.f64s(vocab * hidden)?)?;
        let word_b = Tensor::vector(r.f64s(vocab)?);
        let n = r.u64()? as usize;
        let mut records = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let index = r.u64()? as usize;
            let len = r.u64()? as usize;
            let mut states = Vec::with_capacity(len + 1);
            for _ in 0..=len {
                states.push(r.f64s(hidden)?);
            }
            records.push(CacheRecord { index, states });
        }
        if !r.finished() {
            return Err(Error::module(MODULE, "trailing bytes after the last record"));
        }
        Ok(Self {
            hidden,
            vocab_hash,
            fingerprint,
            word_w,
            word_b,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_bytes())
    }

    /// Loads a cache and insists it was built over `vocab_hash`.
    pub fn load(path: &Path, vocab_hash: &str) -> Result<Self> {
        let cache = Self::from_bytes(&fsutil::read(path)?)?;
        cache.require_vocab(vocab_hash)?;
        Ok(cache)
    }

    pub fn require_vocab(&self, vocab_hash: &str) -> Result<()> {
        if self.vocab_hash != vocab_hash {
            return Err(Error::module(
                MODULE,
                format!("vocabulary mismatch: cache {} vs {}", self.vocab_hash, vocab_hash),
            ));
        }
        Ok(())
    }

    pub fn require_corpus(&self, trees: &[Tree]) -> Result<()> {
        let fp = corpus_fingerprint(trees);
        if self.fingerprint != fp || self.records.len() != trees.len() {
            return Err(Error::module(
                MODULE,
                format!("cache was built for corpus {}, not {fp}", self.fingerprint),
            ));
        }
        Ok(())
    }

    /// Compares `positions` cached distributions, drawn with `seed`, against
    /// the teacher run directly; returns the largest absolute difference.
    pub fn verify(&self, teacher: &Rnng, trees: &[Tree], positions: usize, seed: u64) -> Result<f64> {
        let flat: Vec<(usize, usize)> = self
            .records
            .iter()
            .enumerate()
            .flat_map(|(i, r)| (0..r.states.len()).map(move |j| (i, j)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for k in sample(&mut rng, flat.len(), positions.min(flat.len())) {
            let (i, j) = flat[k];
            let tree = &trees[self.records[i].index];
            let direct = teacher_next_word_dist(teacher, &tree.sentence(), tree, j + 1)?;
            let cached = word_distribution(&self.word_w, &self.word_b, &self.records[i].states[j])?;
            for (a, b) in direct.iter().zip(&cached) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }
}

/// Runs the teacher over every tree (on `jobs` threads) and re-checks 1% of
/// the positions against direct computation before returning.
pub fn build_cache(teacher: &Rnng, trees: &[Tree], jobs: usize) -> Result<TeacherCache> {
    if teacher.eos().is_none() {
        return Err(Error::module(MODULE, "the teacher must generate <eos>"));
    }
    let jobs = jobs.max(1).min(trees.len().max(1));
    let chunk = trees.len().div_ceil(jobs).max(1);
    let results: Vec<Result<Vec<Vec<Vec<f64>>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = trees
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|t| teacher_states(teacher, &t.sentence(), t))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("cache worker panicked"))
            .collect()
    });
    let mut records = Vec::with_capacity(trees.len());
    for part in results {
        for states in part? {
            records.push(CacheRecord {
                index: records.len(),
                states,
            });
        }
    }
    let (w, b) = teacher.word_projection();
    let cache = TeacherCache {
        hidden: teacher.hidden(),
        vocab_hash: teacher.vocab.content_hash(),
        fingerprint: corpus_fingerprint(trees),
        word_w: teacher.store.value(w).clone(),
        word_b: teacher.store.value(b).clone(),
        records,
    };
    let total: usize = cache.records.iter().map(|r| r.states.len()).sum();
    let worst = cache.verify(teacher, trees, total.div_ceil(100), 0)?;
    if worst > RECONSTRUCTION_TOLERANCE {
        return Err(Error::module(
            MODULE,
            format!("cached distributions differ from the teacher by {worst:e}"),
        ));
    }
    log::info!(
        "teacher cache: {} sentences, {total} positions, max reconstruction error {worst:e}",
        trees.len()
    );
    Ok(cache)
}
