//! Two-layer LSTM language model: the baseline, the student and the
//! born-again teacher.
//!
//! A sentence `x_1..x_n` is read as `<eos> x_1 .. x_n` and predicts
//! `x_1 .. x_n <eos>`, so every sentence contributes `n + 1` predictions.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Eager, Graph, ParamId, ParameterStore, Tape, Tensor};
use crate::checkpoint::Checkpoint;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::nn::{DropoutMasks, StackedLstm, INIT_SCALE};
use crate::train::{self, Outcome, Schedule, Trainable};

const MODULE: &str = "lstm-lm";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub embed: usize,
    pub layers: usize,
    pub lr: f64,
    pub decay: f64,
    pub decay_start: usize,
    pub dropout: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            embed: 128,
            layers: 2,
            lr: 0.45,
            decay: 0.9,
            decay_start: 10,
            dropout: 0.2,
            batch: 20,
            epochs: 40,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::module(MODULE, m.to_string()));
        if self.hidden == 0 || self.embed == 0 || self.layers == 0 {
            return bad("sizes must be positive");
        }
        if !(self.lr > 0.0 && self.lr <= 1.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("learning rate and decay must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.batch == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            lr: self.lr,
            decay: self.decay,
            decay_start: self.decay_start,
            batch: self.batch,
            epochs: self.epochs,
            seed: self.seed,
        }
    }

    pub fn to_hyper(&self) -> BTreeMap<String, String> {
        [
            ("hidden", self.hidden.to_string()),
            ("embed", self.embed.to_string()),
            ("layers", self.layers.to_string()),
            ("lr", self.lr.to_string()),
            ("decay", self.decay.to_string()),
            ("decay_start", self.decay_start.to_string()),
            ("dropout", self.dropout.to_string()),
            ("batch", self.batch.to_string()),
            ("epochs", self.epochs.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

#[derive(Clone, Debug)]
pub struct LstmLm {
    pub store: ParameterStore,
    pub vocab: Vocabulary,
    pub config: TrainConfig,
    embed: ParamId,
    rnn: StackedLstm,
    out_w: ParamId,
    out_b: ParamId,
}

impl Trainable for LstmLm {
    fn store(&self) -> &ParameterStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }
}

impl LstmLm {
    /// Fresh model with uniform(−0.1, 0.1) parameters drawn from `config.seed`.
    pub fn new(vocab: Vocabulary, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let v = vocab.len();
        let mut store = ParameterStore::new();
        let embed = store.add_uniform("lm.embed", vec![v, config.embed], INIT_SCALE, &mut rng)?;
        let rnn = StackedLstm::new(
            &mut store,
            "lm.rnn",
            config.embed,
            config.hidden,
            config.layers,
            &mut rng,
        )?;
        let out_w = store.add_uniform("lm.out.w", vec![v, config.hidden], INIT_SCALE, &mut rng)?;
        let out_b = store.add_uniform("lm.out.b", vec![v], INIT_SCALE, &mut rng)?;
        Ok(Self {
            store,
            vocab,
            config,
            embed,
            rnn,
            out_w,
            out_b,
        })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    /// Zeroes the output projection, making every next-word distribution uniform.
    pub fn zero_output(&mut self) {
        self.store.value_mut(self.out_w).fill(0.0);
        self.store.value_mut(self.out_b).fill(0.0);
    }

    /// Log-probability vectors for the `n + 1` predictions of a sentence.
    pub fn forward<G: Graph>(&self, g: &mut G, ids: &[usize], masks: Option<&DropoutMasks>) -> Result<Vec<G::Var>> {
        let mut states = self.rnn.zero_state(g);
        let mut out = Vec::with_capacity(ids.len() + 1);
        for &input in std::iter::once(&self.vocab.eos()).chain(ids) {
            let x = g.lookup(self.embed, input)?;
            states = self.rnn.step(g, &x, &states, masks)?;
            let h = self.rnn.output(g, &states, masks)?;
            let logits = g.affine(self.out_w, self.out_b, &h)?;
            out.push(g.log_softmax(&logits)?);
        }
        Ok(out)
    }

    pub fn sample_masks(&self, rng: &mut ChaCha8Rng) -> Option<DropoutMasks> {
        (self.config.dropout > 0.0).then(|| self.rnn.sample_masks(self.config.dropout, rng))
    }

    pub(crate) fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&i| i >= self.vocab.len()) {
            Some(i) => Err(Error::module(MODULE, format!("token id {i} outside the vocabulary"))),
            None => Ok(()),
        }
    }

    /// `log q(· | prefix)` over the whole vocabulary.
    pub fn next_word_logprobs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        self.check_ids(prefix)?;
        let mut g = Eager::new(&self.store);
        let mut states = self.rnn.zero_state(&mut g);
        for &input in std::iter::once(&self.vocab.eos()).chain(prefix) {
            let x = g.lookup(self.embed, input)?;
            states = self.rnn.step(&mut g, &x, &states, None)?;
        }
        let h = self.rnn.output(&mut g, &states, None)?;
        let logits = g.affine(self.out_w, self.out_b, &h)?;
        Ok(g.log_softmax(&logits)?.into_data())
    }

    /// Next-word distributions at every position, including the final `<eos>`.
    pub fn position_logprobs(&self, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
        self.check_ids(ids)?;
        let mut g = Eager::new(&self.store);
        Ok(self
            .forward(&mut g, ids, None)?
            .into_iter()
            .map(Tensor::into_data)
            .collect())
    }

    /// `−Σ_j log q(x_j | x_<j)` including the `<eos>` target.
    pub fn sentence_nll(&self, ids: &[usize]) -> Result<f64> {
        let lps = self.position_logprobs(ids)?;
        let eos = self.vocab.eos();
        let targets = ids.iter().chain(std::iter::once(&eos));
        Ok(-lps.iter().zip(targets).map(|(lp, &t)| lp[t]).sum::<f64>())
    }

    /// Token-level sentence NLL for raw words (out-of-vocabulary words score as `<unk>`).
    pub fn sentence_nll_words<S: AsRef<str>>(&self, words: &[S]) -> Result<f64> {
        self.sentence_nll(&self.vocab.encode_sentence(words))
    }

    /// Top-layer hidden state after consuming each of `x_1..x_n` and then `<eos>`.
    pub fn hidden_states(&self, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
        self.check_ids(ids)?;
        let mut g = Eager::new(&self.store);
        let mut states = self.rnn.zero_state(&mut g);
        let eos = self.vocab.eos();
        // the leading <eos> only primes the state
        let x = g.lookup(self.embed, eos)?;
        states = self.rnn.step(&mut g, &x, &states, None)?;
        let mut out = Vec::with_capacity(ids.len() + 1);
        for &input in ids.iter().chain(std::iter::once(&eos)) {
            let x = g.lookup(self.embed, input)?;
            states = self.rnn.step(&mut g, &x, &states, None)?;
            out.push(self.rnn.output(&mut g, &states, None)?.into_data());
        }
        Ok(out)
    }

    /// Summed per-sentence loss on a tape. With `soft = Some((α, t))` each
    /// position contributes `(1−α)·(−log q(x_j)) + α·(−Σ_w t_j(w) log q(w))`;
    /// without it the loss is the plain NLL.
    pub fn sentence_loss(
        &self,
        tape: &mut Tape,
        ids: &[usize],
        masks: Option<&DropoutMasks>,
        soft: Option<(f64, &[Vec<f64>])>,
    ) -> Result<crate::autodiff::NodeId> {
        let lps = self.forward(tape, ids, masks)?;
        let targets: Vec<usize> = ids.iter().copied().chain(std::iter::once(self.vocab.eos())).collect();
        let mut terms = Vec::with_capacity(lps.len());
        for (j, (lp, &t)) in lps.iter().zip(&targets).enumerate() {
            let picked = tape.pick(lp, t)?;
            let term = match soft {
                None => tape.scale(&picked, -1.0)?,
                Some((alpha, teacher)) => {
                    let nll = tape.scale(&picked, -(1.0 - alpha))?;
                    let cross = tape.weighted_sum(lp, &teacher[j])?;
                    let kd = tape.scale(&cross, -alpha)?;
                    tape.add(&nll, &kd)?
                }
            };
            terms.push(term);
        }
        Ok(tape.add_n(&terms)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut hyper = self.config.to_hyper();
        hyper.insert("model".into(), "lstm".into());
        hyper.insert("vocab".into(), self.vocab.to_tsv());
        Checkpoint::from_store(&self.store, self.config.seed, hyper, &self.vocab.content_hash())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.hyper("model")? != "lstm" {
            return Err(Error::module(MODULE, "checkpoint does not hold an LSTM LM"));
        }
        let vocab = Vocabulary::from_tsv(ck.hyper("vocab")?)?;
        ck.require_vocab(&vocab.content_hash())?;
        let config = TrainConfig {
            hidden: ck.hyper_parse("hidden")?,
            embed: ck.hyper_parse("embed")?,
            layers: ck.hyper_parse("layers")?,
            lr: ck.hyper_parse("lr")?,
            decay: ck.hyper_parse("decay")?,
            decay_start: ck.hyper_parse("decay_start")?,
            dropout: ck.hyper_parse("dropout")?,
            batch: ck.hyper_parse("batch")?,
            epochs: ck.hyper_parse("epochs")?,
            seed: ck.seed,
        };
        let mut model = Self::new(vocab, config)?;
        model.store.load_named(&ck.tensors)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// `exp(total NLL / total predictions)` over a corpus of id sequences.
pub fn perplexity(model: &LstmLm, corpus: &[Vec<usize>]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::module(MODULE, "perplexity of an empty corpus"));
    }
    let mut nll = 0.0;
    let mut n = 0usize;
    for s in corpus {
        nll += model.sentence_nll(s)?;
        n += s.len() + 1;
    }
    Ok((nll / n as f64).exp())
}

/// Per-sentence soft targets for distillation: `len + 1` distributions.
pub type TeacherFn<'a> = dyn FnMut(usize, &[usize]) -> Result<Vec<Vec<f64>>> + 'a;

/// Trains a fresh LM. With `soft = Some((α, teacher))` the objective is the
/// interpolated distillation loss; otherwise plain NLL.
pub fn train_with(
    config: &TrainConfig,
    vocab: &Vocabulary,
    train: &[Vec<usize>],
    valid: &[Vec<usize>],
    mut soft: Option<(f64, &mut TeacherFn<'_>)>,
) -> Result<Outcome<LstmLm>> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::module(
            MODULE,
            "training and validation corpora must be non-empty",
        ));
    }
    let model = LstmLm::new(vocab.clone(), config.clone())?;
    for s in train.iter().chain(valid) {
        model.check_ids(s)?;
    }
    train::run(
        MODULE,
        model,
        train.len(),
        &config.schedule(),
        |m, tape, i, rng| {
            let masks = m.sample_masks(rng);
            let ids = &train[i];
            let loss = match soft.as_mut() {
                None => m.sentence_loss(tape, ids, masks.as_ref(), None)?,
                Some((alpha, teacher)) => {
                    let t = teacher(i, ids)?;
                    if t.len() != ids.len() + 1 {
                        return Err(Error::module(
                            "distill",
                            format!("teacher gave {} distributions for {} targets", t.len(), ids.len() + 1),
                        ));
                    }
                    m.sentence_loss(tape, ids, masks.as_ref(), Some((*alpha, &t)))?
                }
            };
            Ok((loss, ids.len() + 1))
        },
        |m| perplexity(m, valid),
    )
}

/// Plain LM training; returns the best-validation-perplexity model and the epoch log.
pub fn train_lm(
    config: &TrainConfig,
    vocab: &Vocabulary,
    train: &[Vec<usize>],
    valid: &[Vec<usize>],
) -> Result<Outcome<LstmLm>> {
    train_with(config, vocab, train, valid, None)
}
