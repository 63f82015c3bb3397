//! Forward evaluation and reverse-mode differentiation of equation sets.
//!
//! Acyclic components are evaluated once in dependency order. Cyclic
//! components are solved by Jacobi fixpoint iteration from all-zeros:
//! q(t+1) = RHS(q(t)) until the max-abs change drops to the tolerance or
//! the iteration cap is hit. Differentiation is restricted to acyclic sets;
//! the backward sweep replays the recorded trace in reverse, turning each
//! einsum into the einsum with the upstream gradient swapped into the
//! differentiated slot and each operator into its vector-Jacobian product.

use crate::compile::{EquationSet, EquationTerm, OperandRef};
use crate::error::RuntimeError;
use crate::explain::TensorRef;
use crate::logic::Atom;
use crate::ops::OperatorRegistry;
use crate::params::ParamStore;
use crate::tensor::{einsum, DenseTensor, EinsumSpec};
use indexmap::IndexMap;

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub fixpoint_tol: f64,
    pub max_fixpoint_iters: usize,
    /// Record per-iteration values of cyclic components (for diagnostics
    /// and the monotonicity checks).
    pub record_fixpoint_history: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { fixpoint_tol: 1e-8, max_fixpoint_iters: 10_000, record_fixpoint_history: false }
    }
}

/// Forward values of one equation term: the einsum result, then the value
/// after each operator application (innermost first).
#[derive(Debug, Clone)]
pub struct TermTrace {
    pub einsum_out: DenseTensor,
    pub op_values: Vec<DenseTensor>,
}

#[derive(Debug, Clone)]
pub struct FixpointInfo {
    pub iterations: usize,
    pub residual: f64,
    /// Iterates (including the all-zeros start) when history recording is on.
    pub history: Vec<IndexMap<Atom, DenseTensor>>,
}

/// Everything the backward sweep needs: per-goal values, per-term
/// intermediates, the goal order of the forward pass.
#[derive(Debug, Clone)]
pub struct EvalTrace {
    pub values: IndexMap<Atom, DenseTensor>,
    pub term_traces: IndexMap<Atom, Vec<TermTrace>>,
    pub order: Vec<Atom>,
    pub fixpoints: Vec<FixpointInfo>,
}

impl EvalTrace {
    pub fn value(&self, goal: &Atom) -> Result<&DenseTensor, RuntimeError> {
        self.values.get(goal).ok_or_else(|| RuntimeError::MissingValue { goal: goal.to_string() })
    }

    pub fn total_fixpoint_iterations(&self) -> usize {
        self.fixpoints.iter().map(|f| f.iterations).sum()
    }
}

fn operand_value<'a>(
    op: &OperandRef,
    params: &'a ParamStore,
    values: &'a IndexMap<Atom, DenseTensor>,
    one: &'a DenseTensor,
) -> Result<&'a DenseTensor, RuntimeError> {
    match op {
        OperandRef::Tensor(t) => params
            .get(t)
            .ok_or_else(|| RuntimeError::MissingValue { goal: crate::params::key_name(t) }),
        OperandRef::Subgoal(g) => values
            .get(g)
            .ok_or_else(|| RuntimeError::MissingValue { goal: g.to_string() }),
        OperandRef::One => Ok(one),
    }
}

fn eval_term(
    term: &EquationTerm,
    params: &ParamStore,
    values: &IndexMap<Atom, DenseTensor>,
    registry: &OperatorRegistry,
    ranges: &IndexMap<String, usize>,
) -> Result<TermTrace, RuntimeError> {
    let one = DenseTensor::scalar(1.0);
    let operands: Vec<&DenseTensor> = term
        .operands
        .iter()
        .map(|o| operand_value(o, params, values, &one))
        .collect::<Result<_, _>>()?;
    let einsum_out = einsum(&term.einsum, &operands, ranges)?;
    // chain is outermost-first: apply in reverse list order
    let mut op_values = Vec::with_capacity(term.operator_chain.len());
    let mut current = einsum_out.clone();
    for name in term.operator_chain.iter().rev() {
        let def = registry
            .get(name)
            .ok_or_else(|| RuntimeError::MissingValue { goal: format!("operator({name})") })?;
        current = (def.forward)(&current);
        op_values.push(current.clone());
    }
    Ok(TermTrace { einsum_out, op_values })
}

fn term_value(trace: &TermTrace) -> &DenseTensor {
    trace.op_values.last().unwrap_or(&trace.einsum_out)
}

fn eval_goal(
    eqs: &EquationSet,
    goal: &Atom,
    params: &ParamStore,
    values: &IndexMap<Atom, DenseTensor>,
    registry: &OperatorRegistry,
) -> Result<(DenseTensor, Vec<TermTrace>), RuntimeError> {
    let eq = &eqs.equations[goal];
    let shape = eqs.signatures[goal].shape().to_vec();
    let mut total = DenseTensor::zeros(&shape);
    let mut traces = Vec::with_capacity(eq.terms.len());
    for term in &eq.terms {
        let trace = eval_term(term, params, values, registry, &eqs.ranges)?;
        total.add_assign(term_value(&trace));
        traces.push(trace);
    }
    if !total.all_finite() {
        return Err(RuntimeError::NonFinite { goal: goal.to_string() });
    }
    Ok((total, traces))
}

/// Evaluate every goal of the set. Parameters referenced by the equations
/// are materialized (seeded init) if absent.
pub fn forward(
    eqs: &EquationSet,
    params: &mut ParamStore,
    registry: &OperatorRegistry,
    options: &EvalOptions,
) -> Result<EvalTrace, RuntimeError> {
    params.materialize(&eqs.tensor_keys())?;
    let params: &ParamStore = params;

    let mut values: IndexMap<Atom, DenseTensor> = IndexMap::new();
    let mut term_traces: IndexMap<Atom, Vec<TermTrace>> = IndexMap::new();
    let mut fixpoints = Vec::new();

    for scc in &eqs.sccs {
        if !scc.cyclic {
            let goal = &scc.members[0];
            let (v, traces) = eval_goal(eqs, goal, params, &values, registry)?;
            values.insert(goal.clone(), v);
            term_traces.insert(goal.clone(), traces);
        } else {
            // Jacobi iteration from all-zeros
            for goal in &scc.members {
                values.insert(goal.clone(), DenseTensor::zeros(eqs.signatures[goal].shape()));
            }
            let mut info = FixpointInfo { iterations: 0, residual: f64::INFINITY, history: Vec::new() };
            if options.record_fixpoint_history {
                info.history.push(snapshot(&scc.members, &values));
            }
            let mut converged = false;
            for _ in 0..options.max_fixpoint_iters {
                let mut next: IndexMap<Atom, DenseTensor> = IndexMap::new();
                let mut next_traces: IndexMap<Atom, Vec<TermTrace>> = IndexMap::new();
                for goal in &scc.members {
                    let (v, traces) = eval_goal(eqs, goal, params, &values, registry)?;
                    next.insert(goal.clone(), v);
                    next_traces.insert(goal.clone(), traces);
                }
                let mut residual: f64 = 0.0;
                for goal in &scc.members {
                    residual = residual.max(values[goal].max_abs_diff(&next[goal]));
                }
                for (goal, v) in next {
                    values.insert(goal, v);
                }
                for (goal, t) in next_traces {
                    term_traces.insert(goal, t);
                }
                info.iterations += 1;
                info.residual = residual;
                if options.record_fixpoint_history {
                    info.history.push(snapshot(&scc.members, &values));
                }
                if residual <= options.fixpoint_tol {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(RuntimeError::NonConvergence {
                    iterations: info.iterations,
                    residual: info.residual,
                });
            }
            fixpoints.push(info);
        }
    }

    Ok(EvalTrace { values, term_traces, order: eqs.evaluation_order(), fixpoints })
}

fn snapshot(members: &[Atom], values: &IndexMap<Atom, DenseTensor>) -> IndexMap<Atom, DenseTensor> {
    members.iter().map(|g| (g.clone(), values[g].clone())).collect()
}

/// Reverse-mode sweep. `loss_grads` holds the gradient of the loss in the
/// goals it touches; the result maps every trainable tensor-atom key to its
/// gradient (zero-gradient keys are absent).
pub fn backward(
    eqs: &EquationSet,
    trace: &EvalTrace,
    params: &ParamStore,
    registry: &OperatorRegistry,
    loss_grads: &IndexMap<Atom, DenseTensor>,
) -> Result<IndexMap<TensorRef, DenseTensor>, RuntimeError> {
    if let Some(scc) = eqs.sccs.iter().find(|s| s.cyclic) {
        return Err(RuntimeError::CyclicBackward { goal: scc.members[0].to_string() });
    }

    let mut goal_grads: IndexMap<Atom, DenseTensor> = loss_grads.clone();
    let mut param_grads: IndexMap<TensorRef, DenseTensor> = IndexMap::new();
    let one = DenseTensor::scalar(1.0);

    for goal in trace.order.iter().rev() {
        let Some(upstream_goal) = goal_grads.get(goal).cloned() else {
            continue;
        };
        let eq = &eqs.equations[goal];
        let traces = &trace.term_traces[goal];
        for (term, ttrace) in eq.terms.iter().zip(traces) {
            // operators backward: chain[0] is outermost (applied last),
            // so walk the chain front to back
            let mut upstream = upstream_goal.clone();
            let applied = term.operator_chain.len();
            for (chain_pos, name) in term.operator_chain.iter().enumerate() {
                let def = registry
                    .get(name)
                    .ok_or_else(|| RuntimeError::MissingValue { goal: format!("operator({name})") })?;
                // value index of this op's output in op_values
                let out_idx = applied - 1 - chain_pos;
                let input = if out_idx == 0 { &ttrace.einsum_out } else { &ttrace.op_values[out_idx - 1] };
                let output = &ttrace.op_values[out_idx];
                upstream = (def.vjp)(input, output, &upstream);
            }
            // einsum backward: one einsum per differentiable operand
            let operand_values: Vec<&DenseTensor> = term
                .operands
                .iter()
                .map(|o| operand_value(o, params, &trace.values, &one))
                .collect::<Result<_, _>>()?;
            for (m, opref) in term.operands.iter().enumerate() {
                let needs_grad = match opref {
                    OperandRef::One => false,
                    OperandRef::Tensor(t) => params.is_trainable(t),
                    OperandRef::Subgoal(_) => true,
                };
                if !needs_grad {
                    continue;
                }
                let mut g_ops: Vec<Vec<String>> = vec![term.einsum.output_indices.clone()];
                let mut g_vals: Vec<&DenseTensor> = vec![&upstream];
                for (k, v) in operand_values.iter().enumerate() {
                    if k != m {
                        g_ops.push(term.einsum.operand_indices[k].clone());
                        g_vals.push(v);
                    }
                }
                let g_spec = EinsumSpec::new(g_ops, term.einsum.operand_indices[m].clone());
                let grad = einsum(&g_spec, &g_vals, &eqs.ranges)?;
                match opref {
                    OperandRef::Tensor(t) => {
                        match param_grads.get_mut(t) {
                            Some(acc) => acc.add_assign(&grad),
                            None => {
                                param_grads.insert(t.clone(), grad);
                            }
                        }
                    }
                    OperandRef::Subgoal(sub) => {
                        match goal_grads.get_mut(sub) {
                            Some(acc) => acc.add_assign(&grad),
                            None => {
                                goal_grads.insert(sub.clone(), grad);
                            }
                        }
                    }
                    OperandRef::One => unreachable!(),
                }
            }
        }
    }
    Ok(param_grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::compile;
    use crate::explain::{build_explanation_graph, ExplainOptions};
    use crate::ops::builtin_operators;
    use crate::parse::{parse_atom_str, parse_program};
    use crate::params::ParamStore;
    use crate::tensor::DenseTensor;

    fn setup(src: &str, goal: &str) -> (EquationSet, ParamStore, Atom) {
        let p = parse_program(src).unwrap();
        crate::parse::validate(&p).unwrap();
        let g = parse_atom_str(goal).unwrap();
        let graph = build_explanation_graph(&p, &g, &ExplainOptions::default()).unwrap();
        let eqs = compile(&graph, &p.ranges(), &builtin_operators()).unwrap();
        let store = ParamStore::new(p.index_decls.clone(), p.ranges(), 0);
        (eqs, store, g)
    }

    fn key(term: &str, indices: &[&str]) -> TensorRef {
        TensorRef {
            key: crate::compile::parse_key_term(term).unwrap(),
            indices: indices.iter().map(|s| s.to_string()).collect(),
        }
    }

    const TOY: &str = "\
index_list(v(_),[[i]]).
index_list(r(_),[[i]]).
:-set_index_range(i,2).
rel(S,R,O):- tensor(v(S),[i]), tensor(v(O),[i]), tensor(r(R),[i]).
";

    fn toy_params(store: &mut ParamStore) {
        store.set(key("v(s)", &["i"]), DenseTensor::from_vec(vec![2], vec![1.0, 2.0]));
        store.set(key("v(o)", &["i"]), DenseTensor::from_vec(vec![2], vec![3.0, 1.0]));
        store.set(key("r(r)", &["i"]), DenseTensor::from_vec(vec![2], vec![1.0, 1.0]));
    }

    #[test]
    fn distmult_forward_value() {
        let (eqs, mut store, goal) = setup(TOY, "rel(s,r,o)");
        toy_params(&mut store);
        let trace = forward(&eqs, &mut store, &builtin_operators(), &EvalOptions::default()).unwrap();
        assert_eq!(trace.value(&goal).unwrap().as_scalar(), Some(5.0));
    }

    #[test]
    fn fact_program_evaluates_to_one() {
        let (eqs, mut store, goal) = setup("a.", "a");
        let trace = forward(&eqs, &mut store, &builtin_operators(), &EvalOptions::default()).unwrap();
        assert_eq!(trace.value(&goal).unwrap().as_scalar(), Some(1.0));
    }

    #[test]
    fn disjunction_of_facts_sums() {
        let (eqs, mut store, goal) = setup("p:-q. p:-r. q. r.", "p");
        let trace = forward(&eqs, &mut store, &builtin_operators(), &EvalOptions::default()).unwrap();
        assert_eq!(trace.value(&goal).unwrap().as_scalar(), Some(2.0));
    }

    #[test]
    fn geometric_fixpoint_converges_monotonically() {
        let src = "\
index_list(half,[[]]).
p :- tensor(half,[]).
p :- tensor(half,[]), p.
";
        let (eqs, mut store, goal) = setup(src, "p");
        store.set(key("half", &[]), DenseTensor::scalar(0.5));
        let opts = EvalOptions { record_fixpoint_history: true, ..Default::default() };
        let trace = forward(&eqs, &mut store, &builtin_operators(), &opts).unwrap();
        let v = trace.value(&goal).unwrap().as_scalar().unwrap();
        assert!((v - 1.0).abs() <= 1e-8, "fixpoint value {v}");
        let info = &trace.fixpoints[0];
        assert!(info.iterations < 100, "took {} iterations", info.iterations);
        // iterates entrywise non-decreasing
        for w in info.history.windows(2) {
            let a = w[0][&goal].as_scalar().unwrap();
            let b = w[1][&goal].as_scalar().unwrap();
            assert!(b >= a, "iterates decreased: {a} -> {b}");
        }
    }

    #[test]
    fn operator_chain_order_matters() {
        let src = "\
index_list(x,[[]]).
b :- operator(relu), operator(negative), tensor(x,[]).
c :- operator(negative), operator(relu), tensor(x,[]).
";
        let p = parse_program(src).unwrap();
        let registry = builtin_operators();
        let mut store = ParamStore::new(p.index_decls.clone(), p.ranges(), 0);
        store.set(key("x", &[]), DenseTensor::scalar(2.0));
        for (goal_text, expected) in [("b", 0.0), ("c", -2.0)] {
            let g = parse_atom_str(goal_text).unwrap();
            let graph = build_explanation_graph(&p, &g, &ExplainOptions::default()).unwrap();
            let eqs = compile(&graph, &p.ranges(), &registry).unwrap();
            let trace = forward(&eqs, &mut store, &registry, &EvalOptions::default()).unwrap();
            assert_eq!(trace.value(&g).unwrap().as_scalar(), Some(expected), "goal {goal_text}");
        }
    }

    #[test]
    fn distmult_gradient_by_hand() {
        // q = sum_i s_i r_i o_i, dq/ds = r .* o = [3, 1]
        let (eqs, mut store, goal) = setup(TOY, "rel(s,r,o)");
        toy_params(&mut store);
        let registry = builtin_operators();
        let trace = forward(&eqs, &mut store, &registry, &EvalOptions::default()).unwrap();
        let mut loss = IndexMap::new();
        loss.insert(goal.clone(), DenseTensor::scalar(1.0));
        let grads = backward(&eqs, &trace, &store, &registry, &loss).unwrap();
        assert_eq!(grads[&key("v(s)", &["i"])], DenseTensor::from_vec(vec![2], vec![3.0, 1.0]));
        assert_eq!(grads[&key("v(o)", &["i"])], DenseTensor::from_vec(vec![2], vec![1.0, 2.0]));
        assert_eq!(grads[&key("r(r)", &["i"])], DenseTensor::from_vec(vec![2], vec![3.0, 2.0]));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let (eqs, mut store, goal) = setup(TOY, "rel(s,r,o)");
        toy_params(&mut store);
        let registry = builtin_operators();
        let trace = forward(&eqs, &mut store, &registry, &EvalOptions::default()).unwrap();
        let mut loss = IndexMap::new();
        loss.insert(goal, DenseTensor::scalar(0.0));
        let grads = backward(&eqs, &trace, &store, &registry, &loss).unwrap();
        for (_, g) in grads.iter() {
            assert!(g.data.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn cyclic_backward_refused() {
        let src = "\
index_list(half,[[]]).
p :- tensor(half,[]).
p :- tensor(half,[]), p.
";
        let (eqs, mut store, goal) = setup(src, "p");
        store.set(key("half", &[]), DenseTensor::scalar(0.5));
        let registry = builtin_operators();
        let trace = forward(&eqs, &mut store, &registry, &EvalOptions::default()).unwrap();
        let mut loss = IndexMap::new();
        loss.insert(goal, DenseTensor::scalar(1.0));
        let err = backward(&eqs, &trace, &store, &registry, &loss).unwrap_err();
        assert!(matches!(err, RuntimeError::CyclicBackward { .. }));
    }

    #[test]
    fn gradient_flows_through_subgoals_and_operators() {
        // b = sigmoid(q(a)); q(a) = s . s (dot with itself)
        let src = "\
index_list(s,[[i]]).
:-set_index_range(i,2).
a :- tensor(s,[i]), tensor(s,[i]).
b :- operator(sigmoid), a.
";
        let (eqs, mut store, goal) = setup(src, "b");
        store.set(key("s", &["i"]), DenseTensor::from_vec(vec![2], vec![0.3, -0.4]));
        let registry = builtin_operators();
        let trace = forward(&eqs, &mut store, &registry, &EvalOptions::default()).unwrap();
        let q_a = 0.3f64 * 0.3 + 0.4 * 0.4;
        let sig = 1.0 / (1.0 + (-q_a).exp());
        let got = trace.value(&goal).unwrap().as_scalar().unwrap();
        assert!((got - sig).abs() < 1e-12);
        let mut loss = IndexMap::new();
        loss.insert(goal, DenseTensor::scalar(1.0));
        let grads = backward(&eqs, &trace, &store, &registry, &loss).unwrap();
        // d sigmoid(s.s) / ds = sigmoid' * 2 s; the repeated operand
        // accumulates both slots
        let expect = sig * (1.0 - sig) * 2.0;
        let g = &grads[&key("s", &["i"])];
        assert!((g.data[0] - expect * 0.3).abs() < 1e-12);
        assert!((g.data[1] - expect * -0.4).abs() < 1e-12);
    }

    #[test]
    fn non_finite_detection_names_the_goal() {
        let src = "\
index_list(x,[[]]).
b :- operator(log), tensor(x,[]).
";
        let (eqs, mut store, _goal) = setup(src, "b");
        store.set(key("x", &[]), DenseTensor::scalar(-1.0));
        let err = forward(&eqs, &mut store, &builtin_operators(), &EvalOptions::default()).unwrap_err();
        match err {
            RuntimeError::NonFinite { goal } => assert_eq!(goal, "b"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let (eqs, mut store, goal) = setup(TOY, "rel(s,r,o)");
        let registry = builtin_operators();
        let t1 = forward(&eqs, &mut store, &registry, &EvalOptions::default()).unwrap();
        let t2 = forward(&eqs, &mut store, &registry, &EvalOptions::default()).unwrap();
        assert_eq!(t1.values[&goal], t2.values[&goal]);
    }
}
