//! Dense tensors and the generalized einsum evaluator.
//!
//! The contraction rule is the generalized one: the output holds the
//! indices listed in the spec, every other index is summed over. Indices
//! may repeat within one operand (diagonal), appear in two or more operands
//! (contraction), or appear three or more times in total — classical
//! Einstein notation pairs dummies exactly twice, but a triple-repeated
//! index is required here (a trilinear score is a sum over one shared
//! index), so repetition counts are unrestricted.
//!
//! Evaluation contracts operands pairwise left to right, keeping every
//! index still needed by the output or by a later operand. The evaluator
//! also accepts specs produced by differentiation, where an output index
//! may repeat (scatter into a diagonal) or not occur in any operand
//! (broadcast); forward specs produced by the compiler never need either.

use crate::error::RuntimeError;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// Row-major multi-dimensional array of f64. The empty shape is a scalar
/// with one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(shape: &[usize]) -> DenseTensor {
        let len = shape.iter().product();
        DenseTensor { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn scalar(value: f64) -> DenseTensor {
        DenseTensor { shape: vec![], data: vec![value] }
    }

    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> DenseTensor {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data length mismatch");
        DenseTensor { shape, data }
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn as_scalar(&self) -> Option<f64> {
        if self.is_scalar() {
            Some(self.data[0])
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major strides, one per axis.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for k in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.shape[k + 1];
        }
        strides
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseTensor {
        DenseTensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> DenseTensor {
        assert_eq!(self.shape, other.shape, "shape mismatch in zip_map");
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &DenseTensor) {
        assert_eq!(self.shape, other.shape, "shape mismatch in add_assign");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &DenseTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// An einsum contraction pattern over named index symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EinsumSpec {
    /// One index-symbol list per operand.
    pub operand_indices: Vec<Vec<String>>,
    /// Indices of the output, in order.
    pub output_indices: Vec<String>,
}

impl EinsumSpec {
    pub fn new(operand_indices: Vec<Vec<String>>, output_indices: Vec<String>) -> EinsumSpec {
        EinsumSpec { operand_indices, output_indices }
    }

    /// Compact one-letter rendering like `"ab,bc->ac"` plus the
    /// symbol-to-letter table, letters assigned in first-use order.
    pub fn compact(&self) -> Result<(String, IndexMap<String, char>), crate::error::CompileError> {
        const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
        let mut table: IndexMap<String, char> = IndexMap::new();
        let assign = |sym: &String, table: &mut IndexMap<String, char>| {
            if !table.contains_key(sym) {
                if table.len() >= LETTERS.len() {
                    return Err(crate::error::CompileError::TooManyIndices);
                }
                let c = LETTERS[table.len()] as char;
                table.insert(sym.clone(), c);
            }
            Ok(())
        };
        let mut spec = String::new();
        for (k, ops) in self.operand_indices.iter().enumerate() {
            if k > 0 {
                spec.push(',');
            }
            for sym in ops {
                assign(sym, &mut table)?;
                spec.push(table[sym]);
            }
        }
        spec.push_str("->");
        for sym in &self.output_indices {
            assign(sym, &mut table)?;
            spec.push(table[sym]);
        }
        Ok((spec, table))
    }
}

/// An intermediate tensor labelled with distinct index symbols.
struct Labelled {
    syms: Vec<String>,
    tensor: DenseTensor,
}

impl Labelled {
    fn stride_of(&self, sym: &str) -> Option<(usize, usize)> {
        // (stride, extent) summed over repeats; syms are distinct here so
        // each symbol has exactly one axis.
        let strides = self.tensor.strides();
        self.syms
            .iter()
            .position(|s| s == sym)
            .map(|k| (strides[k], self.tensor.shape[k]))
    }
}

/// Odometer iteration over extents, row-major (last position fastest).
/// Calls `f` with the flat offsets precomputed by the caller via strides.
fn for_each_assignment(extents: &[usize], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; extents.len()];
    if extents.iter().any(|&e| e == 0) {
        return;
    }
    loop {
        f(&idx);
        let mut k = extents.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < extents[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Reduce an operand with possibly repeated index symbols to one labelled
/// by distinct symbols (diagonal extraction).
fn diagonalize(
    syms: &[String],
    tensor: &DenseTensor,
    operand_pos: usize,
) -> Result<Labelled, RuntimeError> {
    if syms.len() != tensor.shape.len() {
        return Err(RuntimeError::ShapeMismatch {
            operand: operand_pos,
            axis: syms.len().min(tensor.shape.len()),
            index: syms.join(","),
            expected: syms.len(),
            found: tensor.shape.len(),
        });
    }
    let mut distinct: Vec<String> = Vec::new();
    for s in syms {
        if !distinct.contains(s) {
            distinct.push(s.clone());
        }
    }
    // consistent extents across repeats
    let mut extent: IndexMap<&str, usize> = IndexMap::new();
    for (axis, s) in syms.iter().enumerate() {
        let size = tensor.shape[axis];
        match extent.get(s.as_str()) {
            Some(&prev) if prev != size => {
                return Err(RuntimeError::ShapeMismatch {
                    operand: operand_pos,
                    axis,
                    index: s.clone(),
                    expected: prev,
                    found: size,
                });
            }
            _ => {
                extent.insert(s, size);
            }
        }
    }
    if distinct.len() == syms.len() {
        return Ok(Labelled { syms: distinct, tensor: tensor.clone() });
    }
    let strides = tensor.strides();
    // combined stride per distinct symbol walks all repeated axes at once
    let mut combined: Vec<usize> = vec![0; distinct.len()];
    for (axis, s) in syms.iter().enumerate() {
        let k = distinct.iter().position(|d| d == s).unwrap();
        combined[k] += strides[axis];
    }
    let shape: Vec<usize> = distinct.iter().map(|s| extent[s.as_str()]).collect();
    let mut out = DenseTensor::zeros(&shape);
    let out_strides = out.strides();
    for_each_assignment(&shape, |idx| {
        let src: usize = idx.iter().zip(&combined).map(|(i, s)| i * s).sum();
        let dst: usize = idx.iter().zip(&out_strides).map(|(i, s)| i * s).sum();
        out.data[dst] = tensor.data[src];
    });
    Ok(Labelled { syms: distinct, tensor: out })
}

/// Contract two labelled tensors, keeping only the symbols in `keep`
/// (ordered: left operand's kept symbols first, then the right's).
fn contract_pair(left: &Labelled, right: &Labelled, keep: &[String]) -> Labelled {
    let mut kept: Vec<String> = Vec::new();
    for s in left.syms.iter().chain(&right.syms) {
        if keep.contains(s) && !kept.contains(s) {
            kept.push(s.clone());
        }
    }
    let mut summed: Vec<String> = Vec::new();
    for s in left.syms.iter().chain(&right.syms) {
        if !kept.contains(s) && !summed.contains(s) {
            summed.push(s.clone());
        }
    }
    let sym_extent = |s: &String| -> usize {
        left.stride_of(s).or_else(|| right.stride_of(s)).map(|(_, e)| e).unwrap()
    };
    let kept_extents: Vec<usize> = kept.iter().map(sym_extent).collect();
    let summed_extents: Vec<usize> = summed.iter().map(sym_extent).collect();
    let shape = kept_extents.clone();
    let mut out = DenseTensor::zeros(&shape);
    let out_strides = out.strides();

    let left_k: Vec<usize> = kept.iter().map(|s| left.stride_of(s).map_or(0, |x| x.0)).collect();
    let right_k: Vec<usize> = kept.iter().map(|s| right.stride_of(s).map_or(0, |x| x.0)).collect();
    let left_s: Vec<usize> = summed.iter().map(|s| left.stride_of(s).map_or(0, |x| x.0)).collect();
    let right_s: Vec<usize> = summed.iter().map(|s| right.stride_of(s).map_or(0, |x| x.0)).collect();

    for_each_assignment(&kept_extents, |kidx| {
        let dst: usize = kidx.iter().zip(&out_strides).map(|(i, s)| i * s).sum();
        let lbase: usize = kidx.iter().zip(&left_k).map(|(i, s)| i * s).sum();
        let rbase: usize = kidx.iter().zip(&right_k).map(|(i, s)| i * s).sum();
        let mut acc = 0.0;
        for_each_assignment(&summed_extents, |sidx| {
            let l: usize = lbase + sidx.iter().zip(&left_s).map(|(i, s)| i * s).sum::<usize>();
            let r: usize = rbase + sidx.iter().zip(&right_s).map(|(i, s)| i * s).sum::<usize>();
            acc += left.tensor.data[l] * right.tensor.data[r];
        });
        out.data[dst] += acc;
    });
    Labelled { syms: kept, tensor: out }
}

/// Evaluate a generalized einsum. `extra_extents` supplies sizes for output
/// indices that occur in no operand (broadcast); indices present in operands
/// take their sizes from the operand shapes.
pub fn einsum(
    spec: &EinsumSpec,
    operands: &[&DenseTensor],
    extra_extents: &IndexMap<String, usize>,
) -> Result<DenseTensor, RuntimeError> {
    if spec.operand_indices.len() != operands.len() {
        return Err(RuntimeError::OperandCountMismatch {
            spec: spec.operand_indices.len(),
            got: operands.len(),
        });
    }

    // cross-operand extent consistency
    let mut extent: IndexMap<String, usize> = IndexMap::new();
    for (k, (syms, op)) in spec.operand_indices.iter().zip(operands).enumerate() {
        if syms.len() != op.shape.len() {
            return Err(RuntimeError::ShapeMismatch {
                operand: k,
                axis: syms.len().min(op.shape.len()),
                index: syms.join(","),
                expected: syms.len(),
                found: op.shape.len(),
            });
        }
        for (axis, s) in syms.iter().enumerate() {
            let size = op.shape[axis];
            match extent.get(s) {
                Some(&prev) if prev != size => {
                    return Err(RuntimeError::ShapeMismatch {
                        operand: k,
                        axis,
                        index: s.clone(),
                        expected: prev,
                        found: size,
                    });
                }
                _ => {
                    extent.insert(s.clone(), size);
                }
            }
        }
    }
    for s in &spec.output_indices {
        if !extent.contains_key(s) {
            let Some(&size) = extra_extents.get(s) else {
                return Err(RuntimeError::MissingExtent { index: s.clone() });
            };
            extent.insert(s.clone(), size);
        }
    }

    // pairwise left-to-right contraction
    let mut acc: Option<Labelled> = None;
    for (k, (syms, op)) in spec.operand_indices.iter().zip(operands).enumerate() {
        let labelled = diagonalize(syms, op, k)?;
        acc = Some(match acc {
            None => labelled,
            Some(prev) => {
                // keep anything the output or a later operand still needs
                let mut keep: Vec<String> = spec.output_indices.clone();
                for later in &spec.operand_indices[k + 1..] {
                    for s in later {
                        if !keep.contains(s) {
                            keep.push(s.clone());
                        }
                    }
                }
                contract_pair(&prev, &labelled, &keep)
            }
        });
    }
    let acc = match acc {
        Some(a) => a,
        None => Labelled { syms: vec![], tensor: DenseTensor::scalar(1.0) },
    };

    // sum indices that are not part of the output (single-operand case or
    // leftovers the pairwise loop could not drop)
    let acc = {
        let keep: Vec<String> = acc
            .syms
            .iter()
            .filter(|s| spec.output_indices.contains(s))
            .cloned()
            .collect();
        if keep.len() == acc.syms.len() {
            acc
        } else {
            let unit = Labelled { syms: vec![], tensor: DenseTensor::scalar(1.0) };
            contract_pair(&acc, &unit, &keep)
        }
    };

    // final layout: permute to output order, broadcast missing symbols,
    // scatter repeated output symbols onto the diagonal
    let mut distinct_out: Vec<String> = Vec::new();
    for s in &spec.output_indices {
        if !distinct_out.contains(s) {
            distinct_out.push(s.clone());
        }
    }
    let out_shape: Vec<usize> = spec.output_indices.iter().map(|s| extent[s]).collect();
    if distinct_out == acc.syms && distinct_out.len() == spec.output_indices.len() {
        return Ok(acc.tensor);
    }
    let mut out = DenseTensor::zeros(&out_shape);
    let out_strides = out.strides();
    // stride of each distinct output symbol in the final tensor: sum over
    // the (possibly repeated) positions it occupies
    let mut dst_strides: Vec<usize> = vec![0; distinct_out.len()];
    for (pos, s) in spec.output_indices.iter().enumerate() {
        let k = distinct_out.iter().position(|d| d == s).unwrap();
        dst_strides[k] += out_strides[pos];
    }
    let src_strides: Vec<usize> =
        distinct_out.iter().map(|s| acc.stride_of(s).map_or(0, |x| x.0)).collect();
    let distinct_extents: Vec<usize> = distinct_out.iter().map(|s| extent[s]).collect();
    for_each_assignment(&distinct_extents, |idx| {
        let src: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        let dst: usize = idx.iter().zip(&dst_strides).map(|(i, s)| i * s).sum();
        out.data[dst] = acc.tensor.data[src];
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(ops: &[&[&str]], out: &[&str]) -> EinsumSpec {
        EinsumSpec::new(
            ops.iter().map(|l| l.iter().map(|s| s.to_string()).collect()).collect(),
            out.iter().map(|s| s.to_string()).collect(),
        )
    }

    fn no_extra() -> IndexMap<String, usize> {
        IndexMap::new()
    }

    #[test]
    fn identity_matmul() {
        let a = DenseTensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let id = DenseTensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let spec = sp(&[&["i", "j"], &["j", "k"]], &["i", "k"]);
        let out = einsum(&spec, &[&a, &id], &no_extra()).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn triple_index_scalar() {
        // i,i,i-> with s=[1,2], r=[1,1], o=[3,1]: 1*1*3 + 2*1*1 = 5
        let s = DenseTensor::from_vec(vec![2], vec![1.0, 2.0]);
        let r = DenseTensor::from_vec(vec![2], vec![1.0, 1.0]);
        let o = DenseTensor::from_vec(vec![2], vec![3.0, 1.0]);
        let spec = sp(&[&["i"], &["i"], &["i"]], &[]);
        let out = einsum(&spec, &[&s, &r, &o], &no_extra()).unwrap();
        assert_eq!(out.as_scalar(), Some(5.0));
    }

    #[test]
    fn all_entity_scoring() {
        // i,oi,i->o with s=[1,0], V=[[2,3],[4,5]], r=[1,1]: row k -> V[k,0]
        let s = DenseTensor::from_vec(vec![2], vec![1.0, 0.0]);
        let v = DenseTensor::from_vec(vec![2, 2], vec![2.0, 3.0, 4.0, 5.0]);
        let r = DenseTensor::from_vec(vec![2], vec![1.0, 1.0]);
        let spec = sp(&[&["i"], &["o", "i"], &["i"]], &["o"]);
        let out = einsum(&spec, &[&s, &v, &r], &no_extra()).unwrap();
        assert_eq!(out, DenseTensor::from_vec(vec![2], vec![2.0, 4.0]));
    }

    #[test]
    fn trace() {
        let a = DenseTensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let spec = sp(&[&["i", "i"]], &[]);
        let out = einsum(&spec, &[&a], &no_extra()).unwrap();
        assert_eq!(out.as_scalar(), Some(5.0));
    }

    #[test]
    fn zero_operands_is_one() {
        let spec = sp(&[], &[]);
        let out = einsum(&spec, &[], &no_extra()).unwrap();
        assert_eq!(out.as_scalar(), Some(1.0));
    }

    #[test]
    fn broadcast_output_symbol() {
        // gradient-style spec: scalar upstream broadcast over i
        let g = DenseTensor::scalar(2.0);
        let spec = sp(&[&[]], &["i"]);
        let mut extra = IndexMap::new();
        extra.insert("i".to_string(), 3);
        let out = einsum(&spec, &[&g], &extra).unwrap();
        assert_eq!(out, DenseTensor::from_vec(vec![3], vec![2.0, 2.0, 2.0]));
    }

    #[test]
    fn scatter_repeated_output() {
        // trace gradient: ->ii from a scalar produces g on the diagonal
        let g = DenseTensor::scalar(3.0);
        let spec = sp(&[&[]], &["i", "i"]);
        let mut extra = IndexMap::new();
        extra.insert("i".to_string(), 2);
        let out = einsum(&spec, &[&g], &extra).unwrap();
        assert_eq!(out, DenseTensor::from_vec(vec![2, 2], vec![3.0, 0.0, 0.0, 3.0]));
    }

    #[test]
    fn permuted_output() {
        let a = DenseTensor::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let spec = sp(&[&["i", "j"]], &["j", "i"]);
        let out = einsum(&spec, &[&a], &no_extra()).unwrap();
        assert_eq!(out, DenseTensor::from_vec(vec![3, 2], vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]));
    }

    #[test]
    fn shape_mismatch_reported() {
        let a = DenseTensor::from_vec(vec![2], vec![1.0, 2.0]);
        let b = DenseTensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]);
        let spec = sp(&[&["i"], &["i"]], &[]);
        let err = einsum(&spec, &[&a, &b], &no_extra()).unwrap_err();
        assert!(matches!(err, RuntimeError::ShapeMismatch { .. }));
        let spec = sp(&[&["i"]], &[]);
        let err = einsum(&spec, &[&a, &b], &no_extra()).unwrap_err();
        assert!(matches!(err, RuntimeError::OperandCountMismatch { .. }));
    }

    #[test]
    fn compact_rendering() {
        let spec = sp(&[&["i", "j"], &["j", "k"]], &["i", "k"]);
        let (text, table) = spec.compact().unwrap();
        assert_eq!(text, "ab,bc->ac");
        assert_eq!(table.get_index(0), Some((&"i".to_string(), &'a')));
        let spec = sp(&[&["i"], &["o", "i"], &["i"]], &["o"]);
        let (text, _) = spec.compact().unwrap();
        assert_eq!(text, "a,ba,a->b");
    }
}
