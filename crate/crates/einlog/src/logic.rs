//! Terms, atoms, clauses, substitutions and unification: the symbolic
//! substrate that program representation and proof search are built on.
//!
//! Everything here is immutable after construction. The only mutable piece
//! of state is [`FreshNames`], the counter used to standardize clauses apart.

use std::collections::BTreeMap;
use std::fmt;

/// A first-order term. Zero-arity compounds are represented as `Constant`;
/// integers are first-class constants compared by value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Constant(String),
    Int(i64),
    Variable(String),
    Compound(String, Vec<Term>),
    List(Vec<Term>),
}

impl Term {
    pub fn constant(name: impl Into<String>) -> Term {
        Term::Constant(name.into())
    }

    pub fn variable(name: impl Into<String>) -> Term {
        Term::Variable(name.into())
    }

    pub fn compound(functor: impl Into<String>, args: Vec<Term>) -> Term {
        let functor = functor.into();
        if args.is_empty() {
            Term::Constant(functor)
        } else {
            Term::Compound(functor, args)
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Constant(_) | Term::Int(_) => true,
            Term::Variable(_) => false,
            Term::Compound(_, args) | Term::List(args) => args.iter().all(Term::is_ground),
        }
    }

    /// Whether `var` occurs anywhere inside this term.
    pub fn contains_var(&self, var: &str) -> bool {
        match self {
            Term::Variable(v) => v == var,
            Term::Compound(_, args) | Term::List(args) => {
                args.iter().any(|t| t.contains_var(var))
            }
            _ => false,
        }
    }

    pub fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Term::Variable(v) => f(v),
            Term::Compound(_, args) | Term::List(args) => {
                for t in args {
                    t.visit_vars(f);
                }
            }
            _ => {}
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Constant(name) => write!(f, "{}", quote_constant(name)),
            Term::Int(v) => write!(f, "{v}"),
            // anonymous variables are numbered internally ("_#n") but print
            // back as the surface form
            Term::Variable(name) if name.starts_with("_#") => write!(f, "_"),
            Term::Variable(name) => write!(f, "{name}"),
            Term::Compound(functor, args) => {
                write!(f, "{}(", quote_constant(functor))?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Term::List(items) => {
                write!(f, "[")?;
                for (i, a) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Print a constant name, single-quoting it when it is not a plain
/// lowercase identifier (so that `Display` output re-parses to the same term).
pub fn quote_constant(name: &str) -> String {
    let mut chars = name.chars();
    let plain = match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {
            chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        }
        _ => false,
    };
    if plain {
        name.to_string()
    } else {
        let mut out = String::with_capacity(name.len() + 2);
        out.push('\'');
        for c in name.chars() {
            match c {
                '\'' => out.push_str("\\'"),
                '\\' => out.push_str("\\\\"),
                '\n' => out.push_str("\\n"),
                '\t' => out.push_str("\\t"),
                _ => out.push(c),
            }
        }
        out.push('\'');
        out
    }
}

/// An atom: predicate applied to terms. `tensor/2` and `operator/1` are
/// reserved and may only appear in clause bodies.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Atom {
        Atom { predicate: predicate.into(), args }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn is_tensor(&self) -> bool {
        self.predicate == "tensor" && self.args.len() == 2
    }

    pub fn is_operator(&self) -> bool {
        self.predicate == "operator" && self.args.len() == 1
    }

    pub fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        for t in &self.args {
            t.visit_vars(f);
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            write!(f, "{}", quote_constant(&self.predicate))
        } else {
            write!(f, "{}(", quote_constant(&self.predicate))?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")
        }
    }
}

/// A definite clause `head :- body` (empty body for facts).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Clause {
    pub head: Atom,
    pub body: Vec<Atom>,
}

impl Clause {
    pub fn fact(head: Atom) -> Clause {
        Clause { head, body: Vec::new() }
    }

    pub fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        self.head.visit_vars(f);
        for b in &self.body {
            b.visit_vars(f);
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            write!(f, " :- ")?;
            for (i, b) in self.body.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{b}")?;
            }
        }
        write!(f, ".")
    }
}

/// An idempotent variable binding map. No binding maps a variable to a term
/// containing that variable (the occurs check holds at construction).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Substitution {
    bindings: BTreeMap<String, Term>,
}

impl Substitution {
    pub fn new() -> Substitution {
        Substitution::default()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.bindings.get(var)
    }

    /// Follow variable bindings until a non-variable or an unbound variable.
    fn walk<'a>(&'a self, mut t: &'a Term) -> &'a Term {
        while let Term::Variable(v) = t {
            match self.bindings.get(v) {
                Some(next) => t = next,
                None => break,
            }
        }
        t
    }

    /// Apply the substitution to a term, replacing every bound variable.
    pub fn apply(&self, t: &Term) -> Term {
        match self.walk(t) {
            Term::Compound(functor, args) => {
                Term::Compound(functor.clone(), args.iter().map(|a| self.apply(a)).collect())
            }
            Term::List(items) => Term::List(items.iter().map(|a| self.apply(a)).collect()),
            other => other.clone(),
        }
    }

    pub fn apply_atom(&self, a: &Atom) -> Atom {
        Atom {
            predicate: a.predicate.clone(),
            args: a.args.iter().map(|t| self.apply(t)).collect(),
        }
    }

    /// Bind `var` to `t` after the occurs check. Returns false (and leaves
    /// the substitution unchanged) when the binding would be cyclic.
    fn bind(&mut self, var: &str, t: &Term) -> bool {
        let resolved = self.apply(t);
        if let Term::Variable(v) = &resolved {
            if v == var {
                return true; // X = X, nothing to record
            }
        }
        if resolved.contains_var(var) {
            return false;
        }
        self.bindings.insert(var.to_string(), resolved);
        true
    }

    /// Extend the substitution so that `a` and `b` unify. Returns false on
    /// failure; the substitution may then hold partial bindings and must be
    /// discarded by the caller.
    pub fn unify_terms(&mut self, a: &Term, b: &Term) -> bool {
        let ta = self.walk(a).clone();
        let tb = self.walk(b).clone();
        match (&ta, &tb) {
            (Term::Variable(v), _) => self.bind(v, &tb),
            (_, Term::Variable(v)) => self.bind(v, &ta),
            (Term::Constant(x), Term::Constant(y)) => x == y,
            (Term::Int(x), Term::Int(y)) => x == y,
            (Term::Compound(f, xs), Term::Compound(g, ys)) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.unify_terms(x, y))
            }
            (Term::List(xs), Term::List(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.unify_terms(x, y))
            }
            _ => false,
        }
    }
}

/// Most general unifier of two terms, or `None` when no unifier exists.
/// The occurs check is always on.
pub fn unify(a: &Term, b: &Term) -> Option<Substitution> {
    let mut s = Substitution::new();
    if s.unify_terms(a, b) {
        Some(s)
    } else {
        None
    }
}

/// Unify two atoms (predicate, arity, then argument-wise).
pub fn unify_atoms(a: &Atom, b: &Atom) -> Option<Substitution> {
    if a.predicate != b.predicate || a.args.len() != b.args.len() {
        return None;
    }
    let mut s = Substitution::new();
    for (x, y) in a.args.iter().zip(&b.args) {
        if !s.unify_terms(x, y) {
            return None;
        }
    }
    Some(s)
}

/// Extend an existing substitution so that both atoms unify under it.
pub fn unify_atoms_with(s: &mut Substitution, a: &Atom, b: &Atom) -> bool {
    if a.predicate != b.predicate || a.args.len() != b.args.len() {
        return false;
    }
    a.args.iter().zip(&b.args).all(|(x, y)| s.unify_terms(x, y))
}

/// Source of globally fresh variable names. Generated names contain `#`,
/// which the surface syntax cannot produce, so renamed clauses can never
/// capture user variables.
#[derive(Debug, Default)]
pub struct FreshNames {
    counter: u64,
}

impl FreshNames {
    pub fn new() -> FreshNames {
        FreshNames::default()
    }

    pub fn next_suffix(&mut self) -> u64 {
        self.counter += 1;
        self.counter
    }
}

/// Return a variant of `c` whose variables are disjoint from every clause
/// previously renamed through the same counter. Ground clauses come back
/// unchanged.
pub fn rename_apart(c: &Clause, fresh: &mut FreshNames) -> Clause {
    let mut vars: Vec<&str> = Vec::new();
    c.visit_vars(&mut |v| {
        if !vars.contains(&v) {
            vars.push(v);
        }
    });
    if vars.is_empty() {
        return c.clone();
    }
    let suffix = fresh.next_suffix();
    let mut s = Substitution::new();
    for v in vars {
        s.bindings.insert(v.to_string(), Term::Variable(format!("{v}#{suffix}")));
    }
    Clause {
        head: s.apply_atom(&c.head),
        body: c.body.iter().map(|b| s.apply_atom(b)).collect(),
    }
}
