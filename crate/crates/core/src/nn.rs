//! LSTM cells shared by the sequential LM, the RNNG stack encoder and the
//! RNNG composition function.

use std::rc::Rc;

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParameterStore, Tensor, TensorError};

/// Scale of the uniform initialiser for embeddings, projections and biases.
pub const INIT_SCALE: f64 = 0.1;

/// Uniform scale for an LSTM weight matrix with `fan_in` inputs per gate.
/// A flat 0.1 shrinks the signal by roughly an order of magnitude per cell at
/// small widths, which starves nested compositions of gradient.
pub fn lstm_weight_scale(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

#[derive(Clone, Debug)]
pub struct LstmState<V> {
    pub h: V,
    pub c: V,
}

/// One LSTM layer; gates are computed by a single affine map over `[x; h]`
/// and laid out as input, forget, output, candidate.
#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmLayer {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let w = store.add_uniform(
            &format!("{prefix}.w"),
            vec![4 * hidden, input + hidden],
            lstm_weight_scale(input + hidden),
            rng,
        )?;
        let b = store.add_uniform(&format!("{prefix}.b"), vec![4 * hidden], INIT_SCALE, rng)?;
        Ok(Self { w, b, input, hidden })
    }

    /// Looks up an existing layer by prefix (used when rebuilding from a checkpoint).
    pub fn find(store: &ParameterStore, prefix: &str) -> Option<Self> {
        let w = store.id(&format!("{prefix}.w"))?;
        let b = store.id(&format!("{prefix}.b"))?;
        let shape = store.value(w).shape();
        let hidden = shape[0] / 4;
        Some(Self {
            w,
            b,
            input: shape[1] - hidden,
            hidden,
        })
    }

    pub fn zero_state<G: Graph>(&self, g: &mut G) -> LstmState<G::Var> {
        LstmState {
            h: g.constant(Tensor::vector(vec![0.0; self.hidden])),
            c: g.constant(Tensor::vector(vec![0.0; self.hidden])),
        }
    }

    pub fn step<G: Graph>(
        &self,
        g: &mut G,
        x: &G::Var,
        prev: &LstmState<G::Var>,
    ) -> Result<LstmState<G::Var>, TensorError> {
        let n = self.hidden;
        let xh = g.concat(&[x.clone(), prev.h.clone()])?;
        let z = g.affine(self.w, self.b, &xh)?;
        let i = g.slice(&z, 0, n)?;
        let f = g.slice(&z, n, n)?;
        let o = g.slice(&z, 2 * n, n)?;
        let u = g.slice(&z, 3 * n, n)?;
        let i = g.sigmoid(&i)?;
        let f = g.sigmoid(&f)?;
        let o = g.sigmoid(&o)?;
        let u = g.tanh(&u)?;
        let keep = g.mul(&f, &prev.c)?;
        let write = g.mul(&i, &u)?;
        let c = g.add(&keep, &write)?;
        let tc = g.tanh(&c)?;
        let h = g.mul(&o, &tc)?;
        Ok(LstmState { h, c })
    }
}

/// Variational dropout masks for a stacked LSTM: one input mask and one
/// recurrent mask per layer, plus one on the top-layer output, all held
/// fixed for a whole sequence.
#[derive(Clone, Debug)]
pub struct LayerMasks {
    pub input: Rc<[f64]>,
    pub recurrent: Rc<[f64]>,
}

#[derive(Clone, Debug)]
pub struct DropoutMasks {
    pub layers: Vec<LayerMasks>,
    pub output: Rc<[f64]>,
}

/// Inverted-dropout Bernoulli mask: kept units are scaled by `1 / (1 - rate)`.
pub fn bernoulli_mask<R: Rng>(len: usize, rate: f64, rng: &mut R) -> Rc<[f64]> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect::<Vec<_>>()
        .into()
}

/// A stack of LSTM layers where layer `l + 1` consumes layer `l`'s output.
#[derive(Clone, Debug)]
pub struct StackedLstm {
    pub layers: Vec<LstmLayer>,
}

impl StackedLstm {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let inp = if l == 0 { input } else { hidden };
            layers.push(LstmLayer::new(store, &format!("{prefix}.l{l}"), inp, hidden, rng)?);
        }
        Ok(Self { layers })
    }

    pub fn find(store: &ParameterStore, prefix: &str, depth: usize) -> Option<Self> {
        let layers = (0..depth)
            .map(|l| LstmLayer::find(store, &format!("{prefix}.l{l}")))
            .collect::<Option<Vec<_>>>()?;
        Some(Self { layers })
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn zero_state<G: Graph>(&self, g: &mut G) -> Vec<LstmState<G::Var>> {
        self.layers.iter().map(|l| l.zero_state(g)).collect()
    }

    pub fn sample_masks<R: Rng>(&self, rate: f64, rng: &mut R) -> DropoutMasks {
        DropoutMasks {
            layers: self
                .layers
                .iter()
                .map(|l| LayerMasks {
                    input: bernoulli_mask(l.input, rate, rng),
                    recurrent: bernoulli_mask(l.hidden, rate, rng),
                })
                .collect(),
            output: bernoulli_mask(self.hidden(), rate, rng),
        }
    }

    /// Advances every layer by one input; returns the new per-layer states.
    pub fn step<G: Graph>(
        &self,
        g: &mut G,
        x: &G::Var,
        prev: &[LstmState<G::Var>],
        masks: Option<&DropoutMasks>,
    ) -> Result<Vec<LstmState<G::Var>>, TensorError> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut input = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let state = match masks {
                Some(m) => {
                    let xi = g.dropout(&input, &m.layers[l].input)?;
                    let hr = g.dropout(&prev[l].h, &m.layers[l].recurrent)?;
                    let dropped = LstmState {
                        h: hr,
                        c: prev[l].c.clone(),
                    };
                    layer.step(g, &xi, &dropped)?
                }
                None => layer.step(g, &input, &prev[l])?,
            };
            input = state.h.clone();
            out.push(state);
        }
        Ok(out)
    }

    /// Top-layer output, with the output mask applied when training.
    pub fn output<G: Graph>(
        &self,
        g: &mut G,
        states: &[LstmState<G::Var>],
        masks: Option<&DropoutMasks>,
    ) -> Result<G::Var, TensorError> {
        let top = &states.last().expect("non-empty stack").h;
        match masks {
            Some(m) => g.dropout(top, &m.output),
            None => Ok(top.clone()),
        }
    }
}
