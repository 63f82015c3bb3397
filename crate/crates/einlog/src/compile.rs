//! Lower an explanation graph to tensor equations.
//!
//! Per goal: one equation whose terms correspond to the goal's disjuncts.
//! A term contracts its operands (tensor atoms, subgoal values, scalar
//! ones) with the generalized einsum rule — the output keeps the indices
//! occurring exactly once across all operands, in first-occurrence order;
//! every other index is summed — and then applies its operator chain,
//! first element outermost. Disjunction adds same-shaped terms, so all
//! disjuncts of one goal must infer the identical output signature.
//!
//! Signatures are propagated in SCC order. Inside a cyclic component the
//! assignment is iterated: a member's signature is taken from the first
//! disjunct whose operands are all known, and the loop runs until the
//! assignment is fixed (at most |SCC| rounds), failing otherwise.

use crate::error::CompileError;
use crate::explain::{ExplanationGraph, Node, Scc, TensorRef};
use crate::logic::Atom;
use crate::ops::OperatorRegistry;
use crate::tensor::EinsumSpec;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// Ordered free indices of a goal's value with their sizes. Empty means
/// scalar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSignature {
    pub free_indices: Vec<String>,
    pub dims: Vec<usize>,
}

impl IndexSignature {
    pub fn scalar() -> IndexSignature {
        IndexSignature { free_indices: vec![], dims: vec![] }
    }

    pub fn is_scalar(&self) -> bool {
        self.free_indices.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        &self.dims
    }
}

impl std::fmt::Display for IndexSignature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.free_indices.join(","))
    }
}

/// What a term multiplies together.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OperandRef {
    /// An embedded tensor, keyed by ground atom and index list.
    Tensor(TensorRef),
    /// The value of another goal.
    Subgoal(Atom),
    /// Scalar one (a true fact).
    One,
}

/// One einsum term of an equation: contraction plus an operator chain
/// applied outermost-first (the chain `[f, g]` computes `f(g(·))`).
#[derive(Debug, Clone, PartialEq)]
pub struct EquationTerm {
    pub einsum: EinsumSpec,
    pub operands: Vec<OperandRef>,
    pub operator_chain: Vec<String>,
}

/// `q(goal) = term_1 + term_2 + ... + term_L`
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEquation {
    pub lhs_goal: Atom,
    pub terms: Vec<EquationTerm>,
}

/// The compiled form of a graph: equations, signatures, SCC evaluation
/// order, index ranges.
#[derive(Debug, Clone)]
pub struct EquationSet {
    pub equations: IndexMap<Atom, TensorEquation>,
    pub signatures: IndexMap<Atom, IndexSignature>,
    /// Dependencies first; cyclic components are solved by fixpoint
    /// iteration.
    pub sccs: Vec<Scc>,
    pub ranges: IndexMap<String, usize>,
}

impl EquationSet {
    /// Goals in evaluation order (SCC order, flattened).
    pub fn evaluation_order(&self) -> Vec<Atom> {
        self.sccs.iter().flat_map(|s| s.members.iter().cloned()).collect()
    }

    /// Every tensor-atom key referenced by any equation, in first-use order.
    pub fn tensor_keys(&self) -> Vec<TensorRef> {
        let mut keys: Vec<TensorRef> = Vec::new();
        for eq in self.equations.values() {
            for term in &eq.terms {
                for op in &term.operands {
                    if let OperandRef::Tensor(t) = op {
                        if !keys.contains(t) {
                            keys.push(t.clone());
                        }
                    }
                }
            }
        }
        keys
    }

    pub fn is_cyclic(&self) -> bool {
        self.sccs.iter().any(|s| s.cyclic)
    }
}

/// Output signature of a conjunction: indices occurring exactly once across
/// all operand index lists, in first-occurrence order; everything else is
/// summed.
pub fn infer_output_indices(operand_indices: &[Vec<String>]) -> Vec<String> {
    let mut counts: IndexMap<&String, usize> = IndexMap::new();
    for list in operand_indices {
        for s in list {
            *counts.entry(s).or_insert(0) += 1;
        }
    }
    counts
        .iter()
        .filter(|(_, &c)| c == 1)
        .map(|(s, _)| (*s).clone())
        .collect()
}

fn node_is_pure_fact(node: &Node) -> bool {
    node.disjuncts.iter().all(|d| {
        d.tensor_refs.is_empty() && d.operator_refs.is_empty() && d.subgoal_refs.is_empty()
    })
}

/// Operand index lists for a disjunct, given the signatures known so far.
/// Returns None when some subgoal's signature is not yet known (possible
/// only inside a cyclic SCC).
fn disjunct_operand_indices(
    graph: &ExplanationGraph,
    disjunct: &crate::explain::Disjunct,
    signatures: &IndexMap<Atom, IndexSignature>,
) -> Option<Vec<Vec<String>>> {
    let mut lists: Vec<Vec<String>> = Vec::new();
    for t in &disjunct.tensor_refs {
        lists.push(t.indices.clone());
    }
    for sub in &disjunct.subgoal_refs {
        if node_is_pure_fact(&graph.nodes[sub]) {
            lists.push(vec![]);
        } else {
            lists.push(signatures.get(sub)?.free_indices.clone());
        }
    }
    if lists.is_empty() {
        lists.push(vec![]); // the scalar-one operand of a pure fact body
    }
    Some(lists)
}

fn signature_from_indices(
    indices: Vec<String>,
    ranges: &IndexMap<String, usize>,
) -> IndexSignature {
    let dims = indices.iter().map(|s| ranges[s]).collect();
    IndexSignature { free_indices: indices, dims }
}

/// Compile a graph into an equation set. Operator names are resolved
/// against `registry` now so an unknown literal fails compilation.
pub fn compile(
    graph: &ExplanationGraph,
    ranges: &IndexMap<String, usize>,
    registry: &OperatorRegistry,
) -> Result<EquationSet, CompileError> {
    let mut signatures: IndexMap<Atom, IndexSignature> = IndexMap::new();

    // signature inference in SCC order
    for scc in &graph.sccs {
        if !scc.cyclic {
            let goal = &scc.members[0];
            let node = &graph.nodes[goal];
            let sig = infer_node_signature(graph, node, &signatures, ranges, None)?;
            signatures.insert(goal.clone(), sig);
        } else {
            // iterate to a fixed assignment
            for _round in 0..=scc.members.len() {
                let mut progressed = false;
                for goal in &scc.members {
                    if signatures.contains_key(goal) {
                        continue;
                    }
                    let node = &graph.nodes[goal];
                    if let Some(sig) = try_infer_partial(graph, node, &signatures, ranges) {
                        signatures.insert(goal.clone(), sig);
                        progressed = true;
                    }
                }
                if !progressed {
                    break;
                }
            }
            for goal in &scc.members {
                if !signatures.contains_key(goal) {
                    return Err(CompileError::UnresolvableRecursiveSignature {
                        goal: goal.to_string(),
                    });
                }
            }
            // with the assignment fixed, every disjunct must now agree
            for goal in &scc.members {
                let node = &graph.nodes[goal];
                let expected = signatures[goal].clone();
                infer_node_signature(graph, node, &signatures, ranges, Some(&expected))?;
            }
        }
    }

    // lower disjuncts to equation terms
    let mut equations: IndexMap<Atom, TensorEquation> = IndexMap::new();
    for scc in &graph.sccs {
        for goal in &scc.members {
            let node = &graph.nodes[goal];
            let out_indices = signatures[goal].free_indices.clone();
            let mut terms = Vec::new();
            for d in &node.disjuncts {
                let mut operands: Vec<OperandRef> = Vec::new();
                let mut operand_indices: Vec<Vec<String>> = Vec::new();
                for t in &d.tensor_refs {
                    operands.push(OperandRef::Tensor(t.clone()));
                    operand_indices.push(t.indices.clone());
                }
                for sub in &d.subgoal_refs {
                    if node_is_pure_fact(&graph.nodes[sub]) {
                        operands.push(OperandRef::One);
                        operand_indices.push(vec![]);
                    } else {
                        operands.push(OperandRef::Subgoal(sub.clone()));
                        operand_indices.push(signatures[sub].free_indices.clone());
                    }
                }
                if operands.is_empty() {
                    if !d.operator_refs.is_empty() {
                        return Err(CompileError::OperatorWithoutOperand { goal: goal.to_string() });
                    }
                    operands.push(OperandRef::One);
                    operand_indices.push(vec![]);
                }
                for op in &d.operator_refs {
                    registry.resolve(op)?;
                }
                terms.push(EquationTerm {
                    einsum: EinsumSpec::new(operand_indices, out_indices.clone()),
                    operands,
                    operator_chain: d.operator_refs.clone(),
                });
            }
            equations.insert(
                goal.clone(),
                TensorEquation { lhs_goal: goal.clone(), terms },
            );
        }
    }

    Ok(EquationSet { equations, signatures, sccs: graph.sccs.clone(), ranges: ranges.clone() })
}

/// Infer a node's signature, requiring every disjunct to agree. With
/// `expected` given, disjuncts are checked against it (used to re-validate
/// cyclic components after the assignment fixes).
fn infer_node_signature(
    graph: &ExplanationGraph,
    node: &Node,
    signatures: &IndexMap<Atom, IndexSignature>,
    ranges: &IndexMap<String, usize>,
    expected: Option<&IndexSignature>,
) -> Result<IndexSignature, CompileError> {
    let mut agreed: Option<IndexSignature> = expected.cloned();
    for (k, d) in node.disjuncts.iter().enumerate() {
        let Some(lists) = disjunct_operand_indices(graph, d, signatures) else {
            return Err(CompileError::UnresolvableRecursiveSignature {
                goal: node.goal.to_string(),
            });
        };
        let out = infer_output_indices(&lists);
        let sig = signature_from_indices(out, ranges);
        match &agreed {
            None => agreed = Some(sig),
            Some(prev) => {
                if prev != &sig {
                    return Err(CompileError::SignatureConflict {
                        goal: node.goal.to_string(),
                        disjunct: k,
                        found: sig.to_string(),
                        expected: prev.to_string(),
                    });
                }
            }
        }
    }
    Ok(agreed.expect("node has at least one disjunct"))
}

/// Signature from the first disjunct whose operands are all known; None if
/// no disjunct is derivable yet.
fn try_infer_partial(
    graph: &ExplanationGraph,
    node: &Node,
    signatures: &IndexMap<Atom, IndexSignature>,
    ranges: &IndexMap<String, usize>,
) -> Option<IndexSignature> {
    for d in &node.disjuncts {
        if let Some(lists) = disjunct_operand_indices(graph, d, signatures) {
            let out = infer_output_indices(&lists);
            return Some(signature_from_indices(out, ranges));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Shape checking
// ---------------------------------------------------------------------------

/// Per-goal signature listing produced by a successful shape check.
#[derive(Debug, Clone, Serialize)]
pub struct ShapeReport {
    pub goals: Vec<(String, IndexSignature)>,
}

/// Re-verify a compiled set against the ranges: every operand index must
/// have a range, every term must produce the goal's signature, and the
/// signature's dims must match the ranges. Useful on equation sets loaded
/// from JSON.
pub fn check_shapes(eqs: &EquationSet) -> Result<ShapeReport, CompileError> {
    for (goal, eq) in &eqs.equations {
        let sig = &eqs.signatures[goal];
        for (k, term) in eq.terms.iter().enumerate() {
            for (oi, indices) in term.einsum.operand_indices.iter().enumerate() {
                for (axis, sym) in indices.iter().enumerate() {
                    if !eqs.ranges.contains_key(sym) {
                        return Err(CompileError::DimMismatch {
                            goal: goal.to_string(),
                            disjunct: k,
                            operand: oi,
                            axis,
                            expected: 0,
                            found: 0,
                        });
                    }
                }
            }
            let out = infer_output_indices(&term.einsum.operand_indices);
            if out != term.einsum.output_indices || out != sig.free_indices {
                return Err(CompileError::SignatureConflict {
                    goal: goal.to_string(),
                    disjunct: k,
                    found: term.einsum.output_indices.join(","),
                    expected: sig.to_string(),
                });
            }
            for (pos, sym) in sig.free_indices.iter().enumerate() {
                if eqs.ranges.get(sym) != Some(&sig.dims[pos]) {
                    return Err(CompileError::DimMismatch {
                        goal: goal.to_string(),
                        disjunct: k,
                        operand: 0,
                        axis: pos,
                        expected: eqs.ranges.get(sym).copied().unwrap_or(0),
                        found: sig.dims[pos],
                    });
                }
            }
        }
    }
    Ok(ShapeReport {
        goals: eqs
            .signatures
            .iter()
            .map(|(g, s)| (g.to_string(), s.clone()))
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// JSON emission and loading
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OperandJson {
    Tensor { atom: String, indices: Vec<String> },
    Goal { goal: String },
    One,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermJson {
    pub operands: Vec<OperandJson>,
    /// Compact einsum like "ab,bc->ac"; letters assigned in first-use order.
    pub einsum: String,
    /// Index-symbol to letter table for `einsum`.
    pub index_map: IndexMap<String, String>,
    pub operators: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquationJson {
    pub goal: String,
    pub signature: IndexSignature,
    pub terms: Vec<TermJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquationSetJson {
    pub equations: Vec<EquationJson>,
    pub ranges: IndexMap<String, usize>,
    pub evaluation_order: Vec<String>,
    pub sccs: Vec<crate::explain::SccJson>,
}

impl EquationSet {
    pub fn to_json(&self) -> Result<EquationSetJson, CompileError> {
        let mut equations = Vec::new();
        for goal in self.evaluation_order() {
            let eq = &self.equations[&goal];
            let mut terms = Vec::new();
            for term in &eq.terms {
                let (spec, table) = term.einsum.compact()?;
                terms.push(TermJson {
                    operands: term
                        .operands
                        .iter()
                        .map(|o| match o {
                            OperandRef::Tensor(t) => OperandJson::Tensor {
                                atom: t.key.to_string(),
                                indices: t.indices.clone(),
                            },
                            OperandRef::Subgoal(a) => OperandJson::Goal { goal: a.to_string() },
                            OperandRef::One => OperandJson::One,
                        })
                        .collect(),
                    einsum: spec,
                    index_map: table.iter().map(|(k, &v)| (k.clone(), v.to_string())).collect(),
                    operators: term.operator_chain.clone(),
                });
            }
            equations.push(EquationJson {
                goal: goal.to_string(),
                signature: self.signatures[&goal].clone(),
                terms,
            });
        }
        Ok(EquationSetJson {
            equations,
            ranges: self.ranges.clone(),
            evaluation_order: self.evaluation_order().iter().map(|g| g.to_string()).collect(),
            sccs: self
                .sccs
                .iter()
                .map(|s| crate::explain::SccJson {
                    members: s.members.iter().map(|a| a.to_string()).collect(),
                    cyclic: s.cyclic,
                })
                .collect(),
        })
    }

    /// Rebuild an equation set from its JSON form. The compact einsum spec
    /// plus the index table are authoritative for each term's contraction.
    pub fn from_json(json: &EquationSetJson) -> crate::error::Result<EquationSet> {
        use crate::error::ParseError;
        let letter_to_sym = |table: &IndexMap<String, String>| -> IndexMap<char, String> {
            table
                .iter()
                .filter_map(|(sym, l)| l.chars().next().map(|c| (c, sym.clone())))
                .collect()
        };
        let mut equations = IndexMap::new();
        let mut signatures = IndexMap::new();
        for eq in &json.equations {
            let goal = crate::parse::parse_atom_str(&eq.goal)?;
            let mut terms = Vec::new();
            for t in &eq.terms {
                let inv = letter_to_sym(&t.index_map);
                let Some((ins, outs)) = t.einsum.split_once("->") else {
                    return Err(
                        ParseError::new(0, 0, format!("bad einsum spec {:?}", t.einsum)).into()
                    );
                };
                let decode = |s: &str| -> crate::error::Result<Vec<String>> {
                    s.chars()
                        .map(|c| {
                            inv.get(&c).cloned().ok_or_else(|| {
                                ParseError::new(
                                    0,
                                    0,
                                    format!("einsum letter {c:?} missing from index_map"),
                                )
                                .into()
                            })
                        })
                        .collect()
                };
                let operand_indices: Vec<Vec<String>> = ins
                    .split(',')
                    .map(decode)
                    .collect::<crate::error::Result<_>>()?;
                let output_indices = decode(outs)?;
                let mut operands = Vec::new();
                for o in &t.operands {
                    operands.push(match o {
                        OperandJson::Tensor { atom, indices } => OperandRef::Tensor(TensorRef {
                            key: parse_key_term(atom)?,
                            indices: indices.clone(),
                        }),
                        OperandJson::Goal { goal } => {
                            OperandRef::Subgoal(crate::parse::parse_atom_str(goal)?)
                        }
                        OperandJson::One => OperandRef::One,
                    });
                }
                terms.push(EquationTerm {
                    einsum: EinsumSpec::new(operand_indices, output_indices),
                    operands,
                    operator_chain: t.operators.clone(),
                });
            }
            signatures.insert(goal.clone(), eq.signature.clone());
            equations.insert(goal.clone(), TensorEquation { lhs_goal: goal, terms });
        }
        let mut sccs = Vec::new();
        for s in &json.sccs {
            let members = s
                .members
                .iter()
                .map(|m| crate::parse::parse_atom_str(m))
                .collect::<Result<Vec<_>, _>>()?;
            sccs.push(Scc { members, cyclic: s.cyclic });
        }
        Ok(EquationSet { equations, signatures, sccs, ranges: json.ranges.clone() })
    }
}

/// Parse a tensor-atom key rendered by `Term::to_string` back into a term.
pub fn parse_key_term(text: &str) -> Result<crate::logic::Term, crate::error::ParseError> {
    let atom = crate::parse::parse_atom_str(text)?;
    Ok(if atom.args.is_empty() {
        crate::logic::Term::Constant(atom.predicate)
    } else {
        crate::logic::Term::Compound(atom.predicate, atom.args)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::{build_explanation_graph, ExplainOptions};
    use crate::ops::builtin_operators;
    use crate::parse::{parse_atom_str, parse_program};

    fn compile_src(src: &str, goal: &str) -> Result<EquationSet, CompileError> {
        let p = parse_program(src).unwrap();
        crate::parse::validate(&p).unwrap();
        let g =
            build_explanation_graph(&p, &parse_atom_str(goal).unwrap(), &ExplainOptions::default())
                .unwrap();
        compile(&g, &p.ranges(), &builtin_operators())
    }

    #[test]
    fn infer_matmul_and_distmult_rules() {
        let to = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        // (i,j),(j,k) -> (i,k): matrix multiplication
        assert_eq!(infer_output_indices(&[to(&["i", "j"]), to(&["j", "k"])]), to(&["i", "k"]));
        // (i),(i),(i) -> (): trilinear scalar score
        assert_eq!(infer_output_indices(&[to(&["i"]), to(&["i"]), to(&["i"])]), to(&[]));
        // (i),(o,i),(i) -> (o): all-entity scoring
        assert_eq!(
            infer_output_indices(&[to(&["i"]), to(&["o", "i"]), to(&["i"])]),
            to(&["o"])
        );
    }

    const FIG1: &str = "\
index_list(v(_),[[i]]).
index_list(r(_),[[i]]).
:-set_index_range(i,20).
rel(S,R,O):- tensor(v(S),[i]), tensor(v(O),[i]), tensor(r(R),[i]).
";

    const FIG2: &str = "\
index_list(v(_),[[i]]).
index_list(v,[[o,i]]).
index_list(r(_),[[i]]).
:-set_index_range(i,256).
:-set_index_range(o,14951).
rel(S,R,O):- tensor(v(S),[i]), tensor(v,[o,i]), tensor(r(R),[i]).
";

    #[test]
    fn distmult_scalar_equation() {
        let eqs = compile_src(FIG1, "rel(s,r,o)").unwrap();
        let goal = parse_atom_str("rel(s,r,o)").unwrap();
        assert!(eqs.signatures[&goal].is_scalar());
        let eq = &eqs.equations[&goal];
        assert_eq!(eq.terms.len(), 1);
        let term = &eq.terms[0];
        assert_eq!(term.operands.len(), 3);
        assert!(term.operator_chain.is_empty());
        let (spec, _) = term.einsum.compact().unwrap();
        assert_eq!(spec, "a,a,a->");
    }

    #[test]
    fn distmult_entity_axis_equation() {
        let eqs = compile_src(FIG2, "rel(s,r,o)").unwrap();
        let goal = parse_atom_str("rel(s,r,o)").unwrap();
        let sig = &eqs.signatures[&goal];
        assert_eq!(sig.free_indices, vec!["o"]);
        assert_eq!(sig.dims, vec![14951]);
        check_shapes(&eqs).unwrap();
    }

    #[test]
    fn operator_chain_preserves_source_order() {
        let src = "\
index_list(x,[[]]).
b :- operator(relu), operator(negative), tensor(x,[]).
";
        let eqs = compile_src(src, "b").unwrap();
        let goal = parse_atom_str("b").unwrap();
        let term = &eqs.equations[&goal].terms[0];
        assert_eq!(term.operator_chain, vec!["relu", "negative"]);
    }

    #[test]
    fn disjunction_of_scalar_goals() {
        let eqs = compile_src("p:-q. p:-r. q. r.", "p").unwrap();
        let goal = parse_atom_str("p").unwrap();
        let eq = &eqs.equations[&goal];
        assert_eq!(eq.terms.len(), 2);
        // fact subgoals become scalar-one operands
        for term in &eq.terms {
            assert_eq!(term.operands, vec![OperandRef::One]);
        }
        assert!(eqs.signatures[&goal].is_scalar());
    }

    #[test]
    fn signature_conflict_reported() {
        let src = "\
index_list(a,[[i]]).
index_list(b,[[j]]).
:-set_index_range(i,2).
:-set_index_range(j,3).
p :- tensor(a,[i]).
p :- tensor(b,[j]).
";
        let err = compile_src(src, "p").unwrap_err();
        assert!(matches!(err, CompileError::SignatureConflict { .. }));
    }

    #[test]
    fn scalar_vs_vector_conflict() {
        let src = "\
index_list(a,[[i]]).
:-set_index_range(i,2).
p :- tensor(a,[i]).
p :- q.
q.
";
        let err = compile_src(src, "p").unwrap_err();
        assert!(matches!(err, CompileError::SignatureConflict { .. }));
    }

    #[test]
    fn recursive_scalar_signature_resolves() {
        let src = "\
index_list(half,[[]]).
p :- tensor(half,[]).
p :- tensor(half,[]), p.
";
        let eqs = compile_src(src, "p").unwrap();
        let goal = parse_atom_str("p").unwrap();
        assert!(eqs.signatures[&goal].is_scalar());
        assert!(eqs.is_cyclic());
        assert_eq!(eqs.equations[&goal].terms.len(), 2);
    }

    #[test]
    fn unknown_operator_names_the_literal() {
        let src = "\
index_list(x,[[]]).
b :- operator(misspelled), tensor(x,[]).
";
        let err = compile_src(src, "b").unwrap_err();
        assert_eq!(err.to_string(), "unknown operator: operator(misspelled)");
    }

    #[test]
    fn operator_without_operand_rejected() {
        let err = compile_src("b :- operator(relu).", "b").unwrap_err();
        assert!(matches!(err, CompileError::OperatorWithoutOperand { .. }));
    }

    #[test]
    fn json_round_trip() {
        let eqs = compile_src(FIG1, "rel(s,r,o)").unwrap();
        let json = eqs.to_json().unwrap();
        let text = serde_json::to_string_pretty(&json).unwrap();
        let parsed: EquationSetJson = serde_json::from_str(&text).unwrap();
        let rebuilt = EquationSet::from_json(&parsed).unwrap();
        let goal = parse_atom_str("rel(s,r,o)").unwrap();
        assert_eq!(rebuilt.signatures[&goal], eqs.signatures[&goal]);
        assert_eq!(rebuilt.equations[&goal].terms, eqs.equations[&goal].terms);
        assert_eq!(rebuilt.ranges, eqs.ranges);
        check_shapes(&rebuilt).unwrap();
    }

    #[test]
    fn compilation_is_deterministic() {
        let p = parse_program(FIG2).unwrap();
        let g = build_explanation_graph(
            &p,
            &parse_atom_str("rel(a,b,c)").unwrap(),
            &ExplainOptions::default(),
        )
        .unwrap();
        let e1 = compile(&g, &p.ranges(), &builtin_operators()).unwrap();
        let e2 = compile(&g, &p.ranges(), &builtin_operators()).unwrap();
        let j1 = serde_json::to_string(&e1.to_json().unwrap()).unwrap();
        let j2 = serde_json::to_string(&e2.to_json().unwrap()).unwrap();
        assert_eq!(j1, j2);
    }
}
