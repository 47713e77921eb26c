use std::rc::Rc;

use super::kernels;
use super::{ParamId, ParameterStore, Tensor, TensorError};

/// Differentiable primitive set that every network in the crate is written
/// against. [`Eager`] evaluates values only; [`super::Tape`] also records the
/// computation for reverse-mode differentiation.
pub trait Graph {
    type Var: Clone;

    fn store(&self) -> &ParameterStore;
    fn data<'a>(&'a self, v: &'a Self::Var) -> &'a [f64];

    fn constant(&mut self, t: Tensor) -> Self::Var;
    fn param(&mut self, id: ParamId) -> Self::Var;
    /// Row `row` of a 2-D parameter, as a vector.
    fn lookup(&mut self, table: ParamId, row: usize) -> Result<Self::Var, TensorError>;
    fn matvec(&mut self, m: &Self::Var, x: &Self::Var) -> Result<Self::Var, TensorError>;
    /// `w · x + b` for parameters `w` (rows × cols) and `b` (rows).
    fn affine(&mut self, w: ParamId, b: ParamId, x: &Self::Var) -> Result<Self::Var, TensorError>;
    fn add(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var, TensorError>;
    fn mul(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var, TensorError>;
    fn sigmoid(&mut self, a: &Self::Var) -> Result<Self::Var, TensorError>;
    fn tanh(&mut self, a: &Self::Var) -> Result<Self::Var, TensorError>;
    fn concat(&mut self, parts: &[Self::Var]) -> Result<Self::Var, TensorError>;
    fn slice(&mut self, a: &Self::Var, start: usize, len: usize) -> Result<Self::Var, TensorError>;
    fn log_softmax(&mut self, a: &Self::Var) -> Result<Self::Var, TensorError>;
    fn pick(&mut self, a: &Self::Var, index: usize) -> Result<Self::Var, TensorError>;
    fn gather(&mut self, a: &Self::Var, indices: &[usize]) -> Result<Self::Var, TensorError>;
    /// Scalar `Σ_i weights[i] · a[i]` with constant weights.
    fn weighted_sum(&mut self, a: &Self::Var, weights: &[f64]) -> Result<Self::Var, TensorError>;
    fn sum(&mut self, a: &Self::Var) -> Result<Self::Var, TensorError>;
    fn scale(&mut self, a: &Self::Var, c: f64) -> Result<Self::Var, TensorError>;
    /// Elementwise product with an externally sampled (already rescaled) mask.
    fn dropout(&mut self, a: &Self::Var, mask: &Rc<[f64]>) -> Result<Self::Var, TensorError>;
    /// Sum of equally shaped inputs.
    fn add_n(&mut self, parts: &[Self::Var]) -> Result<Self::Var, TensorError>;

    fn scalar(&self, v: &Self::Var) -> f64 {
        self.data(v)[0]
    }
}

pub(crate) fn check_finite(op: &'static str, v: &[f64]) -> Result<(), TensorError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

pub(crate) fn same_len(op: &'static str, a: &[usize], b: &[usize]) -> Result<(), TensorError> {
    if a == b {
        Ok(())
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            left: a.to_vec(),
            right: b.to_vec(),
        })
    }
}

/// Value-only evaluation against a read-only parameter snapshot.
pub struct Eager<'s> {
    store: &'s ParameterStore,
}

impl<'s> Eager<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Self { store }
    }

    fn out(op: &'static str, data: Vec<f64>) -> Result<Tensor, TensorError> {
        check_finite(op, &data)?;
        Ok(Tensor::vector(data))
    }
}

impl Graph for Eager<'_> {
    type Var = Tensor;

    fn store(&self) -> &ParameterStore {
        self.store
    }

    fn data<'a>(&'a self, v: &'a Tensor) -> &'a [f64] {
        v.data()
    }

    fn constant(&mut self, t: Tensor) -> Tensor {
        t
    }

    fn param(&mut self, id: ParamId) -> Tensor {
        self.store.value(id).clone()
    }

    fn lookup(&mut self, table: ParamId, row: usize) -> Result<Tensor, TensorError> {
        let t = self.store.value(table);
        if t.shape().len() != 2 || row >= t.rows() {
            return Err(TensorError::IndexOutOfRange {
                op: "lookup",
                index: row,
                len: t.rows(),
            });
        }
        Ok(Tensor::vector(t.row(row).to_vec()))
    }

    fn matvec(&mut self, m: &Tensor, x: &Tensor) -> Result<Tensor, TensorError> {
        if m.shape().len() != 2 || x.shape() != [m.cols()] {
            return Err(TensorError::ShapeMismatch {
                op: "matvec",
                left: m.shape().to_vec(),
                right: x.shape().to_vec(),
            });
        }
        Self::out("matvec", kernels::matvec(m.data(), m.rows(), m.cols(), x.data()))
    }

    fn affine(&mut self, w: ParamId, b: ParamId, x: &Tensor) -> Result<Tensor, TensorError> {
        let (wt, bt) = (self.store.value(w), self.store.value(b));
        if wt.shape().len() != 2 || x.shape() != [wt.cols()] || bt.shape() != [wt.rows()] {
            return Err(TensorError::ShapeMismatch {
                op: "affine",
                left: wt.shape().to_vec(),
                right: x.shape().to_vec(),
            });
        }
        Self::out(
            "affine",
            kernels::affine(wt.data(), wt.rows(), wt.cols(), bt.data(), x.data()),
        )
    }

    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        same_len("add", a.shape(), b.shape())?;
        Self::out("add", kernels::zip_map(a.data(), b.data(), |x, y| x + y))
    }

    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        same_len("mul", a.shape(), b.shape())?;
        Self::out("mul", kernels::zip_map(a.data(), b.data(), |x, y| x * y))
    }

    fn sigmoid(&mut self, a: &Tensor) -> Result<Tensor, TensorError> {
        Self::out("sigmoid", kernels::sigmoid_vec(a.data()))
    }

    fn tanh(&mut self, a: &Tensor) -> Result<Tensor, TensorError> {
        Self::out("tanh", kernels::tanh_vec(a.data()))
    }

    fn concat(&mut self, parts: &[Tensor]) -> Result<Tensor, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Empty("concat"));
        }
        let mut out = Vec::with_capacity(parts.iter().map(Tensor::len).sum());
        for p in parts {
            out.extend_from_slice(p.data());
        }
        Ok(Tensor::vector(out))
    }

    fn slice(&mut self, a: &Tensor, start: usize, len: usize) -> Result<Tensor, TensorError> {
        if len == 0 || start + len > a.len() {
            return Err(TensorError::IndexOutOfRange {
                op: "slice",
                index: start + len,
                len: a.len(),
            });
        }
        Ok(Tensor::vector(a.data()[start..start + len].to_vec()))
    }

    fn log_softmax(&mut self, a: &Tensor) -> Result<Tensor, TensorError> {
        Self::out("log_softmax", kernels::log_softmax(a.data()))
    }

    fn pick(&mut self, a: &Tensor, index: usize) -> Result<Tensor, TensorError> {
        let v = a.data().get(index).ok_or(TensorError::IndexOutOfRange {
            op: "pick",
            index,
            len: a.len(),
        })?;
        Ok(Tensor::scalar(*v))
    }

    fn gather(&mut self, a: &Tensor, indices: &[usize]) -> Result<Tensor, TensorError> {
        if indices.is_empty() {
            return Err(TensorError::Empty("gather"));
        }
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            out.push(*a.data().get(i).ok_or(TensorError::IndexOutOfRange {
                op: "gather",
                index: i,
                len: a.len(),
            })?);
        }
        Ok(Tensor::vector(out))
    }

    fn weighted_sum(&mut self, a: &Tensor, weights: &[f64]) -> Result<Tensor, TensorError> {
        same_len("weighted_sum", a.shape(), &[weights.len()])?;
        let v = kernels::weighted_sum(a.data(), weights);
        check_finite("weighted_sum", &[v])?;
        Ok(Tensor::scalar(v))
    }

    fn sum(&mut self, a: &Tensor) -> Result<Tensor, TensorError> {
        let v = kernels::sum(a.data());
        check_finite("sum", &[v])?;
        Ok(Tensor::scalar(v))
    }

    fn scale(&mut self, a: &Tensor, c: f64) -> Result<Tensor, TensorError> {
        Self::out("scale", a.data().iter().map(|x| x * c).collect())
    }

    fn dropout(&mut self, a: &Tensor, mask: &Rc<[f64]>) -> Result<Tensor, TensorError> {
        same_len("dropout", a.shape(), &[mask.len()])?;
        Self::out("dropout", kernels::zip_map(a.data(), mask, |x, m| x * m))
    }

    fn add_n(&mut self, parts: &[Tensor]) -> Result<Tensor, TensorError> {
        let first = parts.first().ok_or(TensorError::Empty("add_n"))?;
        let mut out = first.data().to_vec();
        for p in &parts[1..] {
            same_len("add_n", first.shape(), p.shape())?;
            for (o, v) in out.iter_mut().zip(p.data()) {
                *o += v;
            }
        }
        check_finite("add_n", &out)?;
        Tensor::new(first.shape().to_vec(), out)
    }
}
