//! Nonlinear operator registry: each operator carries a forward function,
//! a vector-Jacobian product for the backward sweep, and a shape rule
//! (all built-ins are shape-preserving).

use crate::error::CompileError;
use crate::tensor::DenseTensor;
use indexmap::IndexMap;
use std::sync::Arc;

type ForwardFn = dyn Fn(&DenseTensor) -> DenseTensor + Send + Sync;
/// vjp(input, output, upstream) -> gradient w.r.t. input
type VjpFn = dyn Fn(&DenseTensor, &DenseTensor, &DenseTensor) -> DenseTensor + Send + Sync;

#[derive(Clone)]
pub struct OperatorDef {
    pub name: String,
    pub forward: Arc<ForwardFn>,
    pub vjp: Arc<VjpFn>,
}

impl OperatorDef {
    /// All built-ins preserve the input signature.
    pub fn output_shape(&self, input: &[usize]) -> Vec<usize> {
        input.to_vec()
    }
}

impl std::fmt::Debug for OperatorDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "OperatorDef({})", self.name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct OperatorRegistry {
    ops: IndexMap<String, OperatorDef>,
}

impl OperatorRegistry {
    pub fn empty() -> OperatorRegistry {
        OperatorRegistry::default()
    }

    pub fn register(
        &mut self,
        name: &str,
        forward: impl Fn(&DenseTensor) -> DenseTensor + Send + Sync + 'static,
        vjp: impl Fn(&DenseTensor, &DenseTensor, &DenseTensor) -> DenseTensor + Send + Sync + 'static,
    ) {
        self.ops.insert(
            name.to_string(),
            OperatorDef { name: name.to_string(), forward: Arc::new(forward), vjp: Arc::new(vjp) },
        );
    }

    pub fn get(&self, name: &str) -> Option<&OperatorDef> {
        self.ops.get(name)
    }

    /// Lookup that fails compilation with the offending literal named.
    pub fn resolve(&self, name: &str) -> Result<&OperatorDef, CompileError> {
        self.get(name).ok_or_else(|| CompileError::UnknownOperator { name: name.to_string() })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.ops.keys().map(String::as_str)
    }
}

fn elementwise(
    reg: &mut OperatorRegistry,
    name: &str,
    f: impl Fn(f64) -> f64 + Send + Sync + Copy + 'static,
    // derivative written in terms of (input x, output y)
    df: impl Fn(f64, f64) -> f64 + Send + Sync + Copy + 'static,
) {
    reg.register(
        name,
        move |x| x.map(f),
        move |x, y, up| {
            let mut out = DenseTensor::zeros(&x.shape);
            for k in 0..x.data.len() {
                out.data[k] = up.data[k] * df(x.data[k], y.data[k]);
            }
            out
        },
    );
}

/// Softmax over the last axis (a scalar maps to 1).
fn softmax_forward(x: &DenseTensor) -> DenseTensor {
    let last = x.shape.last().copied().unwrap_or(1).max(1);
    let mut out = x.clone();
    for chunk in out.data.chunks_mut(last) {
        let max = chunk.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for v in chunk.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in chunk.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn softmax_vjp(x: &DenseTensor, y: &DenseTensor, up: &DenseTensor) -> DenseTensor {
    let last = x.shape.last().copied().unwrap_or(1).max(1);
    let mut out = DenseTensor::zeros(&x.shape);
    for ((ychunk, upchunk), ochunk) in y
        .data
        .chunks(last)
        .zip(up.data.chunks(last))
        .zip(out.data.chunks_mut(last))
    {
        let dot: f64 = ychunk.iter().zip(upchunk).map(|(a, b)| a * b).sum();
        for k in 0..ychunk.len() {
            ochunk[k] = ychunk[k] * (upchunk[k] - dot);
        }
    }
    out
}

/// The built-in operator set: sigmoid, tanh, relu, softmax (last axis),
/// log, exp, negative. All shape-preserving.
pub fn builtin_operators() -> OperatorRegistry {
    let mut reg = OperatorRegistry::empty();
    elementwise(&mut reg, "sigmoid", |x| 1.0 / (1.0 + (-x).exp()), |_, y| y * (1.0 - y));
    elementwise(&mut reg, "tanh", f64::tanh, |_, y| 1.0 - y * y);
    elementwise(&mut reg, "relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 });
    elementwise(&mut reg, "log", f64::ln, |x, _| 1.0 / x);
    elementwise(&mut reg, "exp", f64::exp, |_, y| y);
    elementwise(&mut reg, "negative", |x| -x, |_, _| -1.0);
    reg.register("softmax", softmax_forward, softmax_vjp);
    reg
}
