//! Frontend: lex and parse `.tpr` program text into clauses and
//! declarations, then validate the result against the declaration rules.
//!
//! Grammar (the supported subset):
//!   program      ::= (clause | directive)*
//!   clause       ::= atom ( ":-" atom ("," atom)* )? "."
//!   directive    ::= ":-" "set_index_range" "(" constant "," integer ")" "."
//!   atom         ::= name | name "(" term ("," term)* ")"
//!   term         ::= constant | integer | variable | compound | list
//!   list         ::= "[" (term ("," term)*)? "]"
//!
//! `%` starts a line comment. Variables start with an uppercase letter or
//! `_`; a bare `_` is anonymous (each occurrence is a fresh variable).
//! Constants start lowercase, are integers, or are single-quoted.

use crate::error::{ParseError, ValidateError};
use crate::logic::{Atom, Clause, Term};
use indexmap::IndexMap;
use std::fmt;

/// Predicates with built-in meaning. `tensor/2` and `operator/1` may occur
/// only in clause bodies; the other two are top-level declarations.
pub const RESERVED_BODY: [(&str, usize); 2] = [("tensor", 2), ("operator", 1)];
pub const RESERVED_DECL: [(&str, usize); 2] = [("index_list", 2), ("set_index_range", 2)];

fn is_reserved_body(pred: &str, arity: usize) -> bool {
    RESERVED_BODY.contains(&(pred, arity))
}

fn is_reserved_decl(pred: &str, arity: usize) -> bool {
    RESERVED_DECL.contains(&(pred, arity))
}

/// Declares the index lists a tensor-atom pattern may be used with.
/// Each (pattern, index list) pair names a distinct embedded tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexDeclaration {
    pub pattern: Term,
    pub index_lists: Vec<Vec<String>>,
}

/// `:- set_index_range(index, size).`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeDeclaration {
    pub index: String,
    pub size: usize,
}

/// A parsed program: clauses plus the declaration tables.
#[derive(Debug, Clone, Default)]
pub struct SourceProgram {
    pub clauses: Vec<Clause>,
    pub index_decls: Vec<IndexDeclaration>,
    pub range_decls: Vec<RangeDeclaration>,
}

impl SourceProgram {
    /// Index ranges as a lookup map (one entry per index symbol).
    pub fn ranges(&self) -> IndexMap<String, usize> {
        self.range_decls
            .iter()
            .map(|r| (r.index.clone(), r.size))
            .collect()
    }
}

impl fmt::Display for SourceProgram {
    /// Canonical pretty-printed form; parsing this text again yields an
    /// equivalent program.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.index_decls {
            write!(f, "index_list({},[", d.pattern)?;
            for (i, list) in d.index_lists.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "[{}]", list.join(","))?;
            }
            writeln!(f, "]).")?;
        }
        for r in &self.range_decls {
            writeln!(f, ":- set_index_range({},{}).", r.index, r.size)?;
        }
        for c in &self.clauses {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Name(String),     // lowercase identifier or quoted constant
    Var(String),      // uppercase/underscore identifier
    Int(i64),
    Punct(char),      // ( ) [ ] , .
    Neck,             // :-
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.col, message)
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(b) if b.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'%') => {
                    while let Some(b) = self.peek() {
                        if b == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
    }

    fn next_token(&mut self) -> Result<Spanned, ParseError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let spanned = |tok| Spanned { tok, line, col };
        let Some(b) = self.peek() else {
            return Ok(spanned(Tok::Eof));
        };
        match b {
            b'(' | b')' | b'[' | b']' | b',' | b'.' => {
                self.bump();
                Ok(spanned(Tok::Punct(b as char)))
            }
            b':' => {
                self.bump();
                if self.peek() == Some(b'-') {
                    self.bump();
                    Ok(spanned(Tok::Neck))
                } else {
                    Err(ParseError::new(line, col, "expected ':-'"))
                }
            }
            b'\'' => {
                self.bump();
                let mut out = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.error("unterminated quoted constant")),
                        Some(b'\'') => break,
                        Some(b'\\') => match self.bump() {
                            Some(b'\'') => out.push('\''),
                            Some(b'\\') => out.push('\\'),
                            Some(b'n') => out.push('\n'),
                            Some(b't') => out.push('\t'),
                            _ => return Err(self.error("bad escape in quoted constant")),
                        },
                        Some(c) => out.push(c as char),
                    }
                }
                Ok(spanned(Tok::Name(out)))
            }
            b'-' => {
                self.bump();
                if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    let n = self.lex_integer(line, col)?;
                    Ok(spanned(Tok::Int(-n)))
                } else {
                    Err(ParseError::new(line, col, "unexpected '-'"))
                }
            }
            b'0'..=b'9' => {
                let n = self.lex_integer(line, col)?;
                Ok(spanned(Tok::Int(n)))
            }
            b'a'..=b'z' => {
                let word = self.lex_word();
                Ok(spanned(Tok::Name(word)))
            }
            b'A'..=b'Z' | b'_' => {
                let word = self.lex_word();
                Ok(spanned(Tok::Var(word)))
            }
            other => Err(ParseError::new(
                line,
                col,
                format!("unexpected character {:?}", other as char),
            )),
        }
    }

    fn lex_integer(&mut self, line: usize, col: usize) -> Result<i64, ParseError> {
        let mut digits = String::new();
        while let Some(b) = self.peek() {
            if b.is_ascii_digit() {
                digits.push(b as char);
                self.bump();
            } else {
                break;
            }
        }
        digits
            .parse()
            .map_err(|_| ParseError::new(line, col, "integer literal out of range"))
    }

    fn lex_word(&mut self) -> String {
        let mut word = String::new();
        while let Some(b) = self.peek() {
            if b.is_ascii_alphanumeric() || b == b'_' {
                word.push(b as char);
                self.bump();
            } else {
                break;
            }
        }
        word
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    lexer: Lexer<'a>,
    lookahead: Spanned,
    anon_counter: u64,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer::new(src);
        let lookahead = lexer.next_token()?;
        Ok(Parser { lexer, lookahead, anon_counter: 0 })
    }

    fn advance(&mut self) -> Result<Spanned, ParseError> {
        let next = self.lexer.next_token()?;
        Ok(std::mem::replace(&mut self.lookahead, next))
    }

    fn expect_punct(&mut self, c: char) -> Result<(), ParseError> {
        let t = self.advance()?;
        if t.tok == Tok::Punct(c) {
            Ok(())
        } else {
            Err(ParseError::new(t.line, t.col, format!("expected '{c}'")))
        }
    }

    fn fresh_anon(&mut self) -> Term {
        self.anon_counter += 1;
        Term::Variable(format!("_#{}", self.anon_counter))
    }

    fn parse_term(&mut self) -> Result<Term, ParseError> {
        let t = self.advance()?;
        match t.tok {
            Tok::Int(v) => Ok(Term::Int(v)),
            Tok::Var(name) => {
                if name == "_" {
                    Ok(self.fresh_anon())
                } else {
                    Ok(Term::Variable(name))
                }
            }
            Tok::Name(name) => {
                if self.lookahead.tok == Tok::Punct('(') {
                    self.advance()?;
                    let mut args = vec![self.parse_term()?];
                    while self.lookahead.tok == Tok::Punct(',') {
                        self.advance()?;
                        args.push(self.parse_term()?);
                    }
                    self.expect_punct(')')?;
                    Ok(Term::Compound(name, args))
                } else {
                    Ok(Term::Constant(name))
                }
            }
            Tok::Punct('[') => {
                let mut items = Vec::new();
                if self.lookahead.tok != Tok::Punct(']') {
                    items.push(self.parse_term()?);
                    while self.lookahead.tok == Tok::Punct(',') {
                        self.advance()?;
                        items.push(self.parse_term()?);
                    }
                }
                self.expect_punct(']')?;
                Ok(Term::List(items))
            }
            _ => Err(ParseError::new(t.line, t.col, "expected a term")),
        }
    }

    fn parse_atom(&mut self) -> Result<(Atom, usize, usize), ParseError> {
        let (line, col) = (self.lookahead.line, self.lookahead.col);
        let term = self.parse_term()?;
        match term {
            Term::Constant(name) => Ok((Atom::new(name, vec![]), line, col)),
            Term::Compound(functor, args) => Ok((Atom::new(functor, args), line, col)),
            _ => Err(ParseError::new(line, col, "expected an atom")),
        }
    }
}

/// Parse a single ground-or-not atom from text, e.g. a goal given on the
/// command line (`rel(s0,r0,o0)` with an optional trailing dot).
pub fn parse_atom_str(src: &str) -> Result<Atom, ParseError> {
    let mut p = Parser::new(src)?;
    let (atom, ..) = p.parse_atom()?;
    if p.lookahead.tok == Tok::Punct('.') {
        p.advance()?;
    }
    let t = p.lookahead.clone();
    if t.tok != Tok::Eof {
        return Err(ParseError::new(t.line, t.col, "trailing input after atom"));
    }
    Ok(atom)
}

/// Parse a goal dataset file: one ground atom per line in program syntax,
/// `.`-terminated, `%` comments allowed.
pub fn parse_goal_file(src: &str) -> Result<Vec<Atom>, ParseError> {
    let mut p = Parser::new(src)?;
    let mut goals = Vec::new();
    while p.lookahead.tok != Tok::Eof {
        let (atom, line, col) = p.parse_atom()?;
        p.expect_punct('.')?;
        if !atom.is_ground() {
            return Err(ParseError::new(line, col, format!("goal is not ground: {atom}")));
        }
        goals.push(atom);
    }
    Ok(goals)
}

/// Parse program text into clauses and declarations.
pub fn parse_program(src: &str) -> Result<SourceProgram, ParseError> {
    let mut p = Parser::new(src)?;
    let mut out = SourceProgram::default();
    let mut range_seen: IndexMap<String, usize> = IndexMap::new();

    while p.lookahead.tok != Tok::Eof {
        if p.lookahead.tok == Tok::Neck {
            // directive
            let neck = p.advance()?;
            let (atom, line, col) = p.parse_atom()?;
            p.expect_punct('.')?;
            if atom.predicate != "set_index_range" || atom.arity() != 2 {
                return Err(ParseError::new(
                    neck.line,
                    neck.col,
                    format!("unsupported directive: {atom}"),
                ));
            }
            let decl = range_decl_from_atom(&atom, line, col)?;
            if let Some(&prev) = range_seen.get(&decl.index) {
                if prev != decl.size {
                    return Err(ParseError::new(
                        line,
                        col,
                        format!(
                            "duplicate range declaration for index {} with a different size ({prev} vs {})",
                            decl.index, decl.size
                        ),
                    ));
                }
                continue; // identical duplicate is harmless
            }
            range_seen.insert(decl.index.clone(), decl.size);
            out.range_decls.push(decl);
            continue;
        }

        let (head, line, col) = p.parse_atom()?;
        let mut body = Vec::new();
        let has_body = p.lookahead.tok == Tok::Neck;
        if has_body {
            p.advance()?;
            loop {
                let (atom, bline, bcol) = p.parse_atom()?;
                if is_reserved_decl(&atom.predicate, atom.arity()) {
                    return Err(ParseError::new(
                        bline,
                        bcol,
                        format!("declaration predicate {} may not occur in a clause body", atom.predicate),
                    ));
                }
                body.push(atom);
                if p.lookahead.tok == Tok::Punct(',') {
                    p.advance()?;
                } else {
                    break;
                }
            }
        }
        p.expect_punct('.')?;

        if is_reserved_body(&head.predicate, head.arity()) {
            return Err(ParseError::new(
                line,
                col,
                format!("reserved predicate {}/{} may not occur in a head position", head.predicate, head.arity()),
            ));
        }
        if is_reserved_decl(&head.predicate, head.arity()) {
            if has_body {
                return Err(ParseError::new(line, col, format!("declaration {} cannot have a body", head.predicate)));
            }
            if head.predicate == "index_list" {
                out.index_decls.push(index_decl_from_atom(&head, line, col)?);
            } else {
                // set_index_range as a plain fact: accept it like the directive form
                let decl = range_decl_from_atom(&head, line, col)?;
                if let Some(&prev) = range_seen.get(&decl.index) {
                    if prev != decl.size {
                        return Err(ParseError::new(
                            line,
                            col,
                            format!(
                                "duplicate range declaration for index {} with a different size ({prev} vs {})",
                                decl.index, decl.size
                            ),
                        ));
                    }
                    continue;
                }
                range_seen.insert(decl.index.clone(), decl.size);
                out.range_decls.push(decl);
            }
            continue;
        }

        out.clauses.push(Clause { head, body });
    }
    Ok(out)
}

fn range_decl_from_atom(atom: &Atom, line: usize, col: usize) -> Result<RangeDeclaration, ParseError> {
    let index = match &atom.args[0] {
        Term::Constant(name) => name.clone(),
        other => {
            return Err(ParseError::new(line, col, format!("index must be a constant, got {other}")));
        }
    };
    let size = match &atom.args[1] {
        Term::Int(v) if *v >= 1 => *v as usize,
        other => {
            return Err(ParseError::new(line, col, format!("index range must be a positive integer, got {other}")));
        }
    };
    Ok(RangeDeclaration { index, size })
}

fn index_decl_from_atom(atom: &Atom, line: usize, col: usize) -> Result<IndexDeclaration, ParseError> {
    let pattern = atom.args[0].clone();
    match &pattern {
        Term::Constant(_) | Term::Compound(..) => {}
        other => {
            return Err(ParseError::new(line, col, format!("tensor-atom pattern must be a constant or compound, got {other}")));
        }
    }
    let Term::List(lists) = &atom.args[1] else {
        return Err(ParseError::new(line, col, "index_list second argument must be a list of index lists"));
    };
    let mut index_lists = Vec::new();
    for l in lists {
        let Term::List(items) = l else {
            return Err(ParseError::new(line, col, format!("expected an index list, got {l}")));
        };
        let mut syms = Vec::new();
        for item in items {
            match item {
                Term::Constant(name) => {
                    if syms.contains(name) {
                        return Err(ParseError::new(line, col, format!("repeated index symbol {name} in one index list")));
                    }
                    syms.push(name.clone());
                }
                other => {
                    return Err(ParseError::new(line, col, format!("index symbols must be constants, got {other}")));
                }
            }
        }
        index_lists.push(syms);
    }
    if index_lists.is_empty() {
        return Err(ParseError::new(line, col, "index_list must declare at least one index list"));
    }
    Ok(IndexDeclaration { pattern, index_lists })
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Outcome of static validation: collected warnings (the errors are returned
/// as `Err`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub warnings: Vec<String>,
}

/// One-way match of a declaration pattern against a tensor-atom term.
/// Variables in the pattern match anything; variables in the candidate match
/// only pattern variables (a body-side `v(S)` matches the pattern `v(_)`).
pub fn pattern_matches(pattern: &Term, candidate: &Term) -> bool {
    match (pattern, candidate) {
        (Term::Variable(_), _) => true,
        (_, Term::Variable(_)) => false,
        (Term::Constant(a), Term::Constant(b)) => a == b,
        (Term::Int(a), Term::Int(b)) => a == b,
        (Term::Compound(f, xs), Term::Compound(g, ys)) => {
            f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| pattern_matches(x, y))
        }
        (Term::List(xs), Term::List(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| pattern_matches(x, y))
        }
        _ => false,
    }
}

/// Extract the (key term, index symbols) of a `tensor/2` literal whose index
/// list is syntactically ground. Returns None when the second argument is
/// not a list of constant symbols.
pub fn tensor_literal_indices(atom: &Atom) -> Option<Vec<String>> {
    let Term::List(items) = &atom.args[1] else {
        return None;
    };
    let mut syms = Vec::new();
    for item in items {
        match item {
            Term::Constant(name) => syms.push(name.clone()),
            _ => return None,
        }
    }
    Some(syms)
}

/// Check declaration coverage for every `tensor/2` literal, range coverage
/// for every index symbol, and operator argument form. Unused declarations
/// come back as warnings.
pub fn validate(program: &SourceProgram) -> Result<ValidationReport, ValidateError> {
    let ranges = program.ranges();
    let mut used_decl = vec![false; program.index_decls.len()];

    // every declared index symbol needs a range
    for d in &program.index_decls {
        for list in &d.index_lists {
            for sym in list {
                if !ranges.contains_key(sym) {
                    return Err(ValidateError::MissingRange { index: sym.clone() });
                }
            }
        }
    }

    for clause in &program.clauses {
        for atom in &clause.body {
            if atom.is_tensor() {
                let key = &atom.args[0];
                let Some(indices) = tensor_literal_indices(atom) else {
                    return Err(ValidateError::UndeclaredTensorAtom {
                        atom: key.to_string(),
                        indices: atom.args[1].to_string(),
                    });
                };
                let mut pattern_matched = false;
                let mut list_matched = false;
                for (i, d) in program.index_decls.iter().enumerate() {
                    if pattern_matches(&d.pattern, key) {
                        pattern_matched = true;
                        if d.index_lists.iter().any(|l| l == &indices) {
                            list_matched = true;
                            used_decl[i] = true;
                        }
                    }
                }
                if !pattern_matched {
                    return Err(ValidateError::UndeclaredTensorAtom {
                        atom: key.to_string(),
                        indices: format!("[{}]", indices.join(",")),
                    });
                }
                if !list_matched {
                    return Err(ValidateError::IndexListMismatch {
                        atom: key.to_string(),
                        indices: format!("[{}]", indices.join(",")),
                    });
                }
                for sym in &indices {
                    if !ranges.contains_key(sym) {
                        return Err(ValidateError::MissingRange { index: sym.clone() });
                    }
                }
            } else if atom.is_operator() {
                match &atom.args[0] {
                    Term::Constant(_) => {}
                    other => {
                        return Err(ValidateError::OperatorArgNotConstant { arg: other.to_string() });
                    }
                }
            }
        }
    }

    let mut report = ValidationReport::default();
    for (i, d) in program.index_decls.iter().enumerate() {
        if !used_decl[i] {
            report
                .warnings
                .push(format!("unused declaration: index_list({}, ...)", d.pattern));
        }
    }
    let mut used_ranges: Vec<&str> = Vec::new();
    for d in &program.index_decls {
        for list in &d.index_lists {
            for sym in list {
                if !used_ranges.contains(&sym.as_str()) {
                    used_ranges.push(sym);
                }
            }
        }
    }
    for r in &program.range_decls {
        if !used_ranges.contains(&r.index.as_str()) {
            report
                .warnings
                .push(format!("unused range: set_index_range({}, {})", r.index, r.size));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::Term;

    pub const FIG1: &str = "\
index_list(v(_),[[i]]).
index_list(r(_),[[i]]).
:-set_index_range(i,20).

rel(S,R,O):-
  tensor(v(S),[i]),
  tensor(v(O),[i]),
  tensor(r(R),[i]).
";

    pub const FIG2: &str = "\
index_list(v(_),[[i]]).
index_list(v,[[o,i]]).
index_list(r(_),[[i]]).
:-set_index_range(i,256).
:-set_index_range(o,14951).

rel(S,R,O):-
  tensor(v(S),[i]),
  tensor(v,[o,i]),
  tensor(r(R),[i]).
";

    #[test]
    fn parses_small_distmult() {
        let p = parse_program(FIG1).unwrap();
        assert_eq!(p.index_decls.len(), 2);
        assert_eq!(p.range_decls.len(), 1);
        assert_eq!(p.range_decls[0], RangeDeclaration { index: "i".into(), size: 20 });
        assert_eq!(p.clauses.len(), 1);
        let clause = &p.clauses[0];
        assert_eq!(clause.head.predicate, "rel");
        assert_eq!(clause.head.arity(), 3);
        assert_eq!(clause.body.len(), 3);
        assert!(clause.body.iter().all(|a| a.is_tensor()));
        assert!(validate(&p).unwrap().warnings.is_empty());
    }

    #[test]
    fn parses_large_distmult() {
        let p = parse_program(FIG2).unwrap();
        assert_eq!(p.index_decls.len(), 3);
        assert_eq!(p.range_decls.len(), 2);
        assert_eq!(p.range_decls[1], RangeDeclaration { index: "o".into(), size: 14951 });
        assert_eq!(p.clauses.len(), 1);
        assert!(validate(&p).unwrap().warnings.is_empty());
    }

    #[test]
    fn plain_clause_no_decls() {
        let p = parse_program("p(X) :- q(X), r(X).").unwrap();
        assert_eq!(p.clauses.len(), 1);
        assert!(p.index_decls.is_empty());
        assert!(p.range_decls.is_empty());
    }

    #[test]
    fn missing_range_is_an_error() {
        let src = "\
index_list(v(_),[[i]]).
index_list(r(_),[[i]]).
rel(S,R,O):- tensor(v(S),[i]), tensor(v(O),[i]), tensor(r(R),[i]).
";
        let p = parse_program(src).unwrap();
        let err = validate(&p).unwrap_err();
        assert_eq!(err, ValidateError::MissingRange { index: "i".into() });
        assert!(err.to_string().contains("index i has no range"));
    }

    #[test]
    fn undeclared_tensor_atom_is_an_error() {
        let src = "\
:-set_index_range(j,3).
p :- tensor(w(a),[j]).
";
        let p = parse_program(src).unwrap();
        let err = validate(&p).unwrap_err();
        assert!(matches!(err, ValidateError::UndeclaredTensorAtom { .. }));
        assert!(err.to_string().contains("undeclared tensor atom"));
    }

    #[test]
    fn index_list_mismatch_is_distinguished() {
        let src = "\
index_list(v(_),[[i]]).
:-set_index_range(i,3).
:-set_index_range(j,3).
p :- tensor(v(a),[i,j]).
";
        let p = parse_program(src).unwrap();
        let err = validate(&p).unwrap_err();
        assert!(matches!(err, ValidateError::IndexListMismatch { .. }));
    }

    #[test]
    fn duplicate_range_conflict() {
        let err = parse_program(":-set_index_range(i,3).\n:-set_index_range(i,4).\n").unwrap_err();
        assert!(err.message.contains("duplicate range declaration"));
        // identical duplicate is fine
        parse_program(":-set_index_range(i,3).\n:-set_index_range(i,3).\n").unwrap();
    }

    #[test]
    fn reserved_head_rejected() {
        let err = parse_program("tensor(a,[i]).").unwrap_err();
        assert!(err.message.contains("reserved predicate"));
        let err = parse_program("operator(f) :- p.").unwrap_err();
        assert!(err.message.contains("reserved predicate"));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_program("p :- q\nr.").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_program("p ::").unwrap_err();
        assert!(err.line >= 1 && err.column >= 1);
    }

    #[test]
    fn anonymous_vars_are_fresh() {
        let p = parse_program("p(_, _).").unwrap();
        let args = &p.clauses[0].head.args;
        assert_ne!(args[0], args[1]);
        assert!(matches!(args[0], Term::Variable(_)));
    }

    #[test]
    fn quoted_constants_round_trip() {
        let p = parse_program("rel('/m/012qdp', r0, 'Hello world').").unwrap();
        let printed = p.to_string();
        let p2 = parse_program(&printed).unwrap();
        assert_eq!(p.clauses, p2.clauses);
    }

    #[test]
    fn pretty_print_parse_fixpoint() {
        for src in [FIG1, FIG2] {
            let p1 = parse_program(src).unwrap();
            let printed1 = p1.to_string();
            let p2 = parse_program(&printed1).unwrap();
            let printed2 = p2.to_string();
            assert_eq!(printed1, printed2);
            assert_eq!(p1.clauses, p2.clauses);
            assert_eq!(p1.index_decls, p2.index_decls);
            assert_eq!(p1.range_decls, p2.range_decls);
        }
    }

    #[test]
    fn scalar_index_list_allowed() {
        let src = "\
index_list(half,[[]]).
p :- tensor(half,[]).
";
        let p = parse_program(src).unwrap();
        assert_eq!(p.index_decls[0].index_lists, vec![Vec::<String>::new()]);
        validate(&p).unwrap();
    }

    #[test]
    fn goal_file_rejects_non_ground() {
        assert!(parse_goal_file("rel(a,b,c).\nrel(d,e,f).\n").is_ok());
        assert!(parse_goal_file("rel(a,B,c).\n").is_err());
    }

    #[test]
    fn validate_order_independent() {
        let src = "\
index_list(v(_),[[i]]).
:-set_index_range(i,4).
p :- tensor(v(a),[i]), tensor(v(b),[i]).
q :- tensor(v(c),[i]).
";
        let p1 = parse_program(src).unwrap();
        let mut p2 = p1.clone();
        p2.clauses.reverse();
        assert_eq!(validate(&p1).unwrap(), validate(&p2).unwrap());
    }
}
