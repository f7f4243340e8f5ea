use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{shape_err, NumericError};

/// Negative-side slope of every LeakyReLU in the network.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Row-major dense tensor of 64-bit reals.
///
/// Storage is reference counted so that parameters can be placed on a tape
/// without copying; mutation goes through [`Tensor::data_mut`], which copies on
/// write when the buffer is shared.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumericError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(shape_err(
                "tensor",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![0.0; n]),
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data: Arc::new(data),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::vector(vec![value])
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericError> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor {
            shape: vec![n, n],
            data: Arc::new(data),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<f64> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_vector(&self) -> bool {
        self.shape.len() == 1
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Some((*r, *c)),
            _ => None,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn get(&self, i: usize) -> f64 {
        self.data[i]
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}{:?}", self.shape, self.data.as_slice())
    }
}

fn expect_vector(op: &'static str, t: &Tensor) -> Result<(), NumericError> {
    if t.is_vector() {
        Ok(())
    } else {
        Err(shape_err(op, format!("expected a vector, got shape {:?}", t.shape())))
    }
}

/// `W·x (+ b)` for `W` of shape `[out, in]`.
pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor, NumericError> {
    expect_vector("linear", x)?;
    let (rows, cols) = w
        .dims2()
        .ok_or_else(|| shape_err("linear", format!("weight must be rank 2, got {:?}", w.shape())))?;
    if cols != x.len() {
        return Err(shape_err(
            "linear",
            format!("weight {rows}x{cols} against input of length {}", x.len()),
        ));
    }
    let mut out = matvec_raw(w.data(), rows, cols, x.data());
    if let Some(b) = b {
        if b.len() != rows || !b.is_vector() {
            return Err(shape_err(
                "linear",
                format!("bias shape {:?}, want [{rows}]", b.shape()),
            ));
        }
        for (o, bi) in out.iter_mut().zip(b.data()) {
            *o += bi;
        }
    }
    Ok(Tensor::vector(out))
}

pub(crate) fn matvec_raw(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    w.chunks_exact(cols).take(rows).map(|row| dot_raw(row, x)).collect()
}

#[inline]
pub(crate) fn dot_raw(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorise the reduction
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn concat(xs: &[&Tensor]) -> Result<Tensor, NumericError> {
    let mut out = Vec::with_capacity(xs.iter().map(|x| x.len()).sum());
    for x in xs {
        expect_vector("concat", x)?;
        out.extend_from_slice(x.data());
    }
    Ok(Tensor::vector(out))
}

pub fn weighted_sum(xs: &[&Tensor], weights: &[f64]) -> Result<Tensor, NumericError> {
    if xs.len() != weights.len() {
        return Err(shape_err(
            "weighted_sum",
            format!("{} inputs against {} weights", xs.len(), weights.len()),
        ));
    }
    let first = xs.first().ok_or_else(|| shape_err("weighted_sum", "no inputs"))?;
    let n = first.len();
    let mut out = vec![0.0; n];
    for (x, w) in xs.iter().zip(weights) {
        expect_vector("weighted_sum", x)?;
        if x.len() != n {
            return Err(shape_err("weighted_sum", format!("lengths {n} and {}", x.len())));
        }
        for (o, v) in out.iter_mut().zip(x.data()) {
            *o += w * v;
        }
    }
    Ok(Tensor::vector(out))
}

pub fn dot(x: &Tensor, y: &Tensor) -> Result<f64, NumericError> {
    if x.len() != y.len() {
        return Err(shape_err("dot", format!("lengths {} and {}", x.len(), y.len())));
    }
    Ok(dot_raw(x.data(), y.data()))
}

pub fn leaky_relu_scalar(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: Arc::new(x.data().iter().map(|&v| leaky_relu_scalar(v, slope)).collect()),
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Max-shifted exponential normalisation.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-log softmax(scores)[target]`.
pub fn softmax_nll(scores: &Tensor, target: usize) -> Result<f64, NumericError> {
    if target >= scores.len() {
        return Err(NumericError::IndexOutOfRange {
            index: target,
            len: scores.len(),
        });
    }
    Ok(log_sum_exp(scores.data()) - scores.data()[target])
}
