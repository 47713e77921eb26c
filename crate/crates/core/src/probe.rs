//! Linear probes for the grandparent constituent of each token, read off
//! frozen LSTM features `[h_t; h_{t+1}]` from the top layer.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::softmax;
use crate::corpus::Tree;
use crate::error::{Error, Result};
use crate::lstm::LstmLm;

const MODULE: &str = "probe";
/// Label for tokens without an ancestor two levels up.
pub const PAD_LABEL: &str = "<root>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::module(MODULE, format!("unknown split `{s}`"))),
        }
    }
}

/// Label of each leaf's ancestor two levels up, or [`PAD_LABEL`].
pub fn grandparent_labels(tree: &Tree) -> Vec<String> {
    fn walk<'a>(t: &'a Tree, path: &mut Vec<&'a str>, out: &mut Vec<String>) {
        match t {
            Tree::Leaf(_) => {
                let gp = path.len().checked_sub(2).map_or(PAD_LABEL, |i| path[i]);
                out.push(gp.to_string());
            }
            Tree::Node { label, children } => {
                path.push(label);
                for c in children {
                    walk(c, path, out);
                }
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(tree, &mut Vec::new(), &mut out);
    out
}

/// `[h_t; h_{t+1}]` for every token; the last token pairs with the state after `<eos>`.
pub fn extract_features(model: &LstmLm, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
    if model.config.dropout > 0.0 {
        log::debug!("probe features ignore dropout; the model is evaluated deterministically");
    }
    let hs = model.hidden_states(ids)?;
    Ok(hs
        .windows(2)
        .map(|w| w[0].iter().chain(&w[1]).copied().collect())
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub split: Split,
    pub label: usize,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeDataset {
    pub labels: Vec<String>,
    pub dim: usize,
    pub examples: Vec<Example>,
}

impl ProbeDataset {
    /// Features from `model` for every token of every tree, on `jobs` threads.
    pub fn build(model: &LstmLm, trees: &[(Split, Tree)], jobs: usize) -> Result<Self> {
        let labels: Vec<String> = trees
            .iter()
            .flat_map(|(_, t)| grandparent_labels(t))
            .chain(std::iter::once(PAD_LABEL.to_string()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let chunk = trees.len().div_ceil(jobs.max(1)).max(1);
        let feats: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
            let handles: Vec<_> = trees
                .chunks(chunk)
                .map(|part| {
                    s.spawn(move || {
                        part.iter()
                            .map(|(_, t)| extract_features(model, &model.vocab.encode_sentence(&t.leaves())))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("feature worker panicked"))
                .collect()
        });
        let mut examples = Vec::new();
        for ((split, tree), f) in trees.iter().zip(feats) {
            for (gp, features) in grandparent_labels(tree).iter().zip(f?) {
                examples.push(Example {
                    split: *split,
                    label: labels.binary_search(gp).expect("label collected above"),
                    features,
                });
            }
        }
        Ok(Self {
            labels,
            dim: 2 * model.hidden(),
            examples,
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Example> {
        self.examples.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Labels permuted within each split; the control for probe selectivity.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for split in [Split::Train, Split::Valid, Split::Test] {
            let idx: Vec<usize> = (0..out.examples.len())
                .filter(|&i| out.examples[i].split == split)
                .collect();
            let mut labels: Vec<usize> = idx.iter().map(|&i| out.examples[i].label).collect();
            labels.shuffle(&mut rng);
            for (&i, l) in idx.iter().zip(labels) {
                out.examples[i].label = l;
            }
        }
        out
    }

    /// Most frequent training label and its share of `split`.
    pub fn majority_baseline(&self, split: Split) -> (usize, f64) {
        let mut counts = vec![0usize; self.labels.len()];
        for e in self.split(Split::Train) {
            counts[e.label] += 1;
        }
        let major = (0..counts.len())
            .max_by_key(|&i| (counts[i], std::cmp::Reverse(i)))
            .unwrap_or(0);
        let n = self.count(split);
        let hits = self.split(split).filter(|e| e.label == major).count();
        (major, hits as f64 / n.max(1) as f64)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            let _ = write!(out, "{}\t{}", e.split, self.labels[e.label]);
            for v in &e.features {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub l2: f64,
    pub lr: f64,
    pub max_iters: usize,
    /// Stop once the training loss changes by less than this.
    pub tolerance: f64,
    pub eval_every: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            lr: 1.0,
            max_iters: 3000,
            tolerance: 1e-7,
            eval_every: 10,
        }
    }
}

/// Multinomial logistic regression, `C × D` weights row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub classes: usize,
    pub dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Probe {
    fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                self.b[c]
                    + self.w[c * self.dim..(c + 1) * self.dim]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let l = self.logits(x);
        // first maximum wins, for determinism
        (0..l.len()).fold(0, |best, c| if l[c] > l[best] { c } else { best })
    }
}

#[derive(Clone, Debug)]
pub struct ProbeFit {
    pub probe: Probe,
    pub iterations: usize,
    pub converged: bool,
    pub best_valid: f64,
}

/// Fraction of `split` tokens whose argmax label is correct.
pub fn probe_accuracy(probe: &Probe, data: &ProbeDataset, split: Split) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for e in data.split(split) {
        hit += usize::from(probe.predict(&e.features) == e.label);
        n += 1;
    }
    hit as f64 / n.max(1) as f64
}

/// Full-batch gradient descent on the L2-penalised mean cross-entropy; the
/// snapshot with the best validation accuracy is returned.
pub fn train_probe(data: &ProbeDataset, cfg: &ProbeConfig) -> Result<ProbeFit> {
    let train: Vec<&Example> = data.split(Split::Train).collect();
    if train.is_empty() || data.count(Split::Valid) == 0 {
        return Err(Error::module(MODULE, "train and valid splits must be non-empty"));
    }
    let present: BTreeSet<usize> = train.iter().map(|e| e.label).collect();
    if present.len() < 2 {
        return Err(Error::module(MODULE, "training split has a single class"));
    }
    if let Some(e) = data.examples.iter().find(|e| e.features.len() != data.dim) {
        return Err(Error::module(
            MODULE,
            format!("feature of size {} in a {}-dim dataset", e.features.len(), data.dim),
        ));
    }
    let (c, d) = (data.labels.len(), data.dim);
    let mut probe = Probe {
        classes: c,
        dim: d,
        w: vec![0.0; c * d],
        b: vec![0.0; c],
    };
    let n = train.len() as f64;
    let mut best = (probe_accuracy(&probe, data, Split::Valid), probe.clone());
    let mut prev = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut gw = vec![0.0; c * d];
    let mut gb = vec![0.0; c];
    while iterations < cfg.max_iters {
        gw.iter_mut().for_each(|g| *g = 0.0);
        gb.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for e in &train {
            let mut p = softmax(&probe.logits(&e.features));
            loss -= p[e.label].ln();
            p[e.label] -= 1.0;
            for (k, g) in p.iter().enumerate() {
                gb[k] += g;
                for (acc, x) in gw[k * d..(k + 1) * d].iter_mut().zip(&e.features) {
                    *acc += g * x;
                }
            }
        }
        loss = loss / n + 0.5 * cfg.l2 * probe.w.iter().map(|w| w * w).sum::<f64>();
        if !loss.is_finite() {
            return Err(Error::module(
                MODULE,
                format!("non-finite probe loss at iteration {iterations}"),
            ));
        }
        for (w, g) in probe.w.iter_mut().zip(&gw) {
            *w -= cfg.lr * (g / n + cfg.l2 * *w);
        }
        for (b, g) in probe.b.iter_mut().zip(&gb) {
            *b -= cfg.lr * g / n;
        }
        iterations += 1;
        let done = (prev - loss).abs() < cfg.tolerance;
        if done || iterations % cfg.eval_every.max(1) == 0 || iterations == cfg.max_iters {
            let acc = probe_accuracy(&probe, data, Split::Valid);
            if acc > best.0 {
                best = (acc, probe.clone());
            }
        }
        if done {
            converged = true;
            break;
        }
        prev = loss;
    }
    if !converged {
        log::warn!("probe stopped after {iterations} iterations without converging");
    }
    Ok(ProbeFit {
        probe: best.1,
        iterations,
        converged,
        best_valid: best.0,
    })
}
