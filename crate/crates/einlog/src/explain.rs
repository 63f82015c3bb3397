//! Tabled exhaustive proof search. From a validated program and a ground
//! top goal, builds the explanation graph: for every goal reached, the
//! disjunction of conjunctive bodies (tensor refs, operator refs, subgoal
//! refs, absorbed facts) that hold in the least model.
//!
//! The search runs in two passes sharing one table:
//!   1. truth: a tabled SLD search decides which ground atoms relevant to
//!      the goal are true. In-progress calls (cycles) contribute nothing to
//!      the branch that re-entered them; failures are only cached when they
//!      did not lean on an in-progress ancestor.
//!   2. graph: for every true atom reachable from the root, enumerate the
//!      ground clause instances whose body atoms are all true; these become
//!      the node's disjuncts. Because truth is already tabled, this pass
//!      also captures bodies that re-enter the goal under construction
//!      (the self-referential disjuncts of recursive programs).

use crate::error::ExplainError;
use crate::logic::{rename_apart, unify_atoms_with, Atom, Clause, FreshNames, Substitution, Term};
use crate::parse::{tensor_literal_indices, SourceProgram};
use indexmap::{IndexMap, IndexSet};
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// A tensor-atom occurrence collected from a clause body: ground key term
/// plus its index symbols.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorRef {
    pub key: Term,
    pub indices: Vec<String>,
}

/// One conjunctive body of a goal. Operator order is source order
/// (operator composition is non-commutative); subgoal order is source
/// order of the logic literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Disjunct {
    pub tensor_refs: Vec<TensorRef>,
    pub operator_refs: Vec<String>,
    pub subgoal_refs: Vec<Atom>,
    pub fact_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub goal: Atom,
    pub disjuncts: Vec<Disjunct>,
}

/// A strongly connected component of the goal-to-subgoal graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scc {
    pub members: Vec<Atom>,
    pub cyclic: bool,
}

#[derive(Debug, Clone)]
pub struct ExplanationGraph {
    pub nodes: IndexMap<Atom, Node>,
    pub root: Atom,
    /// SCCs of the condensation, dependencies first.
    pub sccs: Vec<Scc>,
}

#[derive(Debug, Clone)]
pub struct ExplainOptions {
    /// Upper bound on search work (table entries plus resolution steps).
    pub node_budget: usize,
    /// Upper bound on recursion depth during search.
    pub max_depth: usize,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        ExplainOptions { node_budget: 1_000_000, max_depth: 2000 }
    }
}

/// Truth status plus search bookkeeping, shared by both passes.
struct Searcher<'p> {
    clauses: &'p [Clause],
    by_pred: HashMap<(String, usize), Vec<usize>>,
    table: HashMap<Atom, bool>,
    in_progress: IndexMap<Atom, usize>,
    fresh: FreshNames,
    steps: usize,
    budget: usize,
    max_depth: usize,
}

const NO_CYCLE: usize = usize::MAX;

impl<'p> Searcher<'p> {
    fn new(program: &'p SourceProgram, options: &ExplainOptions) -> Self {
        let mut by_pred: HashMap<(String, usize), Vec<usize>> = HashMap::new();
        for (i, c) in program.clauses.iter().enumerate() {
            by_pred
                .entry((c.head.predicate.clone(), c.head.arity()))
                .or_default()
                .push(i);
        }
        Searcher {
            clauses: &program.clauses,
            by_pred,
            table: HashMap::new(),
            in_progress: IndexMap::new(),
            fresh: FreshNames::new(),
            steps: 0,
            budget: options.node_budget,
            max_depth: options.max_depth,
        }
    }

    fn tick(&mut self) -> Result<(), ExplainError> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(ExplainError::BudgetExceeded { steps: self.steps, budget: self.budget });
        }
        Ok(())
    }

    /// All ground provable instances of `lit`, together with the shallowest
    /// in-progress ancestor the search leaned on (NO_CYCLE when none).
    fn answers(&mut self, lit: &Atom, depth: usize) -> Result<(IndexSet<Atom>, usize), ExplainError> {
        self.tick()?;
        if depth > self.max_depth {
            return Err(ExplainError::BudgetExceeded { steps: self.steps, budget: self.budget });
        }
        let ground = lit.is_ground();
        let mut my_depth = NO_CYCLE;
        if ground {
            if let Some(&truth) = self.table.get(lit) {
                let mut set = IndexSet::new();
                if truth {
                    set.insert(lit.clone());
                }
                return Ok((set, NO_CYCLE));
            }
            if let Some(&d) = self.in_progress.get(lit) {
                return Ok((IndexSet::new(), d));
            }
            my_depth = self.in_progress.len();
            self.in_progress.insert(lit.clone(), my_depth);
        }

        let mut results: IndexSet<Atom> = IndexSet::new();
        let mut low = NO_CYCLE;
        let clause_ids = self
            .by_pred
            .get(&(lit.predicate.clone(), lit.arity()))
            .cloned()
            .unwrap_or_default();
        for ci in clause_ids {
            self.tick()?;
            let clause = rename_apart(&self.clauses[ci], &mut self.fresh);
            let mut s = Substitution::new();
            if !unify_atoms_with(&mut s, &clause.head, lit) {
                continue;
            }
            let logic_lits: Vec<Atom> = clause
                .body
                .iter()
                .filter(|a| !a.is_tensor() && !a.is_operator())
                .cloned()
                .collect();
            let body_low = self.each_body_solution(&logic_lits, s, depth, &mut |sol| {
                let head = sol.apply_atom(&clause.head);
                if !head.is_ground() {
                    return Err(ExplainError::NonGroundAnswer {
                        goal: lit.to_string(),
                        answer: head.to_string(),
                    });
                }
                results.insert(head);
                Ok(())
            })?;
            low = low.min(body_low);
        }

        if ground {
            self.in_progress.pop();
            if !results.is_empty() {
                self.table.insert(lit.clone(), true);
            } else if low >= my_depth {
                // the failure did not lean on any ancestor above this goal
                self.table.insert(lit.clone(), false);
            }
            if low >= my_depth {
                low = NO_CYCLE;
            }
        }
        Ok((results, low))
    }

    /// Depth-first enumeration of body solutions, left to right. Invokes
    /// `on_solution` once per complete solution substitution. Returns the
    /// shallowest in-progress ancestor any branch leaned on.
    fn each_body_solution(
        &mut self,
        lits: &[Atom],
        s: Substitution,
        depth: usize,
        on_solution: &mut dyn FnMut(&Substitution) -> Result<(), ExplainError>,
    ) -> Result<usize, ExplainError> {
        let Some((first, rest)) = lits.split_first() else {
            on_solution(&s)?;
            return Ok(NO_CYCLE);
        };
        let inst = s.apply_atom(first);
        let (answers, mut low) = self.answers(&inst, depth + 1)?;
        for a in answers {
            let mut s2 = s.clone();
            if !unify_atoms_with(&mut s2, &inst, &a) {
                continue; // cannot happen: a is a ground instance of inst
            }
            let tail_low = self.each_body_solution(rest, s2, depth, on_solution)?;
            low = low.min(tail_low);
        }
        Ok(low)
    }
}

/// Build the explanation graph for a ground goal over a validated program.
pub fn build_explanation_graph(
    program: &SourceProgram,
    goal: &Atom,
    options: &ExplainOptions,
) -> Result<ExplanationGraph, ExplainError> {
    if !goal.is_ground() {
        return Err(ExplainError::NonGroundGoal { goal: goal.to_string() });
    }
    let mut searcher = Searcher::new(program, options);

    // pass 1: truth
    let (answers, _) = searcher.answers(goal, 0)?;
    if answers.is_empty() {
        return Err(ExplainError::Unprovable { goal: goal.to_string() });
    }

    // pass 2: disjunct enumeration over the completed table
    let mut nodes: IndexMap<Atom, Node> = IndexMap::new();
    let mut worklist: Vec<Atom> = vec![goal.clone()];
    while let Some(current) = worklist.pop() {
        if nodes.contains_key(&current) {
            continue;
        }
        let disjuncts = enumerate_disjuncts(&mut searcher, &current)?;
        for d in &disjuncts {
            for sub in &d.subgoal_refs {
                if !nodes.contains_key(sub) {
                    worklist.push(sub.clone());
                }
            }
        }
        nodes.insert(current.clone(), Node { goal: current, disjuncts });
    }

    let mut graph = ExplanationGraph { nodes, root: goal.clone(), sccs: Vec::new() };
    graph.sccs = condense_sccs(&graph);
    Ok(graph)
}

fn enumerate_disjuncts(
    searcher: &mut Searcher<'_>,
    goal: &Atom,
) -> Result<Vec<Disjunct>, ExplainError> {
    let mut out: IndexSet<Disjunct> = IndexSet::new();
    let clause_ids = searcher
        .by_pred
        .get(&(goal.predicate.clone(), goal.arity()))
        .cloned()
        .unwrap_or_default();
    for ci in clause_ids {
        searcher.tick()?;
        let clause = rename_apart(&searcher.clauses[ci], &mut searcher.fresh);
        let mut s = Substitution::new();
        if !unify_atoms_with(&mut s, &clause.head, goal) {
            continue;
        }
        let logic_lits: Vec<Atom> = clause
            .body
            .iter()
            .filter(|a| !a.is_tensor() && !a.is_operator())
            .cloned()
            .collect();
        let body = clause.body.clone();
        let is_fact_body = body.is_empty();
        let mut solutions: Vec<Substitution> = Vec::new();
        searcher.each_body_solution(&logic_lits, s, 0, &mut |sol| {
            solutions.push(sol.clone());
            Ok(())
        })?;
        for sol in solutions {
            let mut d = Disjunct::default();
            if is_fact_body {
                d.fact_count = 1;
            }
            for lit in &body {
                if lit.is_tensor() {
                    let inst = sol.apply_atom(lit);
                    let key = inst.args[0].clone();
                    if !key.is_ground() {
                        return Err(ExplainError::NonGroundTensorKey {
                            goal: goal.to_string(),
                            key: key.to_string(),
                        });
                    }
                    let Some(indices) = tensor_literal_indices(&inst) else {
                        return Err(ExplainError::BadIndexList {
                            goal: goal.to_string(),
                            list: inst.args[1].to_string(),
                        });
                    };
                    d.tensor_refs.push(TensorRef { key, indices });
                } else if lit.is_operator() {
                    match &sol.apply(&lit.args[0]) {
                        Term::Constant(name) => d.operator_refs.push(name.clone()),
                        other => {
                            return Err(ExplainError::BadOperatorArg {
                                goal: goal.to_string(),
                                arg: other.to_string(),
                            });
                        }
                    }
                } else {
                    d.subgoal_refs.push(sol.apply_atom(lit));
                }
            }
            out.insert(d);
        }
    }
    Ok(out.into_iter().collect())
}

/// SCCs of the goal-to-subgoal dependency graph in topological order,
/// dependencies first, each marked cyclic or acyclic.
pub fn condense_sccs(graph: &ExplanationGraph) -> Vec<Scc> {
    let mut pg: DiGraph<Atom, ()> = DiGraph::new();
    let mut index: IndexMap<&Atom, NodeIndex> = IndexMap::new();
    for goal in graph.nodes.keys() {
        index.insert(goal, pg.add_node(goal.clone()));
    }
    for (goal, node) in &graph.nodes {
        let from = index[goal];
        for d in &node.disjuncts {
            for sub in &d.subgoal_refs {
                if let Some(&to) = index.get(sub) {
                    pg.update_edge(from, to, ());
                }
            }
        }
    }
    // tarjan_scc returns components in reverse topological order w.r.t. the
    // condensation of `pg`; since edges point from goal to dependency, that
    // already lists dependencies first.
    let comps = petgraph::algo::tarjan_scc(&pg);
    comps
        .into_iter()
        .map(|members| {
            let cyclic = members.len() > 1
                || members
                    .iter()
                    .any(|&m| pg.find_edge(m, m).is_some());
            Scc {
                members: members.into_iter().map(|m| pg[m].clone()).collect(),
                cyclic,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// JSON emission
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorRefJson {
    pub atom: String,
    pub indices: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisjunctJson {
    pub tensors: Vec<TensorRefJson>,
    pub operators: Vec<String>,
    pub subgoals: Vec<String>,
    pub fact_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeJson {
    pub goal: String,
    pub disjuncts: Vec<DisjunctJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SccJson {
    pub members: Vec<String>,
    pub cyclic: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphJson {
    pub root: String,
    pub nodes: Vec<NodeJson>,
    pub sccs: Vec<SccJson>,
}

impl From<&ExplanationGraph> for GraphJson {
    fn from(g: &ExplanationGraph) -> Self {
        GraphJson {
            root: g.root.to_string(),
            nodes: g
                .nodes
                .values()
                .map(|n| NodeJson {
                    goal: n.goal.to_string(),
                    disjuncts: n
                        .disjuncts
                        .iter()
                        .map(|d| DisjunctJson {
                            tensors: d
                                .tensor_refs
                                .iter()
                                .map(|t| TensorRefJson {
                                    atom: t.key.to_string(),
                                    indices: t.indices.clone(),
                                })
                                .collect(),
                            operators: d.operator_refs.clone(),
                            subgoals: d.subgoal_refs.iter().map(|a| a.to_string()).collect(),
                            fact_count: d.fact_count,
                        })
                        .collect(),
                })
                .collect(),
            sccs: g
                .sccs
                .iter()
                .map(|s| SccJson {
                    members: s.members.iter().map(|a| a.to_string()).collect(),
                    cyclic: s.cyclic,
                })
                .collect(),
        }
    }
}
