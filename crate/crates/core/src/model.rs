//! Line-oriented text format for models.
//!
//! ```text
//! # three boxes
//! dim 3
//! state [1, 1, 1] normalize
//! evolution zero
//! ket phi [1, 1, -1]
//! slot 1
//! proj A = basis 0
//! proj B = basis 1
//! proj C = basis 2
//! slot 2
//! proj Phi = ket phi
//! proj notPhi = complement Phi
//! partition AvsRest slot 0 [[0], [1, 2]]
//! ```
//!
//! Other statements: `evolution hamiltonian <matrix>`, `evolution unitary <t> <matrix>`
//! (one per slot time), `proj NAME = matrix <matrix>`, `partition NAME <classes>`
//! over flat history indices, `fine <t> standard | columns <matrix>` and
//! `factor <path>` for composites. Complex literals take the form `a+bi`.
//! Bracketed literals may span lines. `#` starts a comment.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::coarsegrain::{slot_partition, Partition};
use crate::composite::{CompositeSystem, Factor};
use crate::error::{Error, ParseDiagnostic, Result};
use crate::finegrained::FineGrainedSpec;
use crate::histories::HistorySet;
use crate::hilbert::{CMatrix, CVector, EvolutionSpec, HermitianOperator, Projector, ProjectorSet, StateVector};

const STATEMENTS: [&str; 9] = [
    "dim",
    "state",
    "evolution",
    "ket",
    "slot",
    "proj",
    "partition",
    "fine",
    "factor",
];
const MAX_FACTOR_DEPTH: usize = 8;

pub type MatrixLiteral = Vec<Vec<Complex64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct KetLiteral {
    pub values: Vec<Complex64>,
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvolutionDecl {
    Zero,
    Hamiltonian(MatrixLiteral),
    Unitaries(Vec<(f64, MatrixLiteral)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProjSource {
    Basis(Vec<usize>),
    Ket(String),
    Matrix(MatrixLiteral),
    Complement(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjDecl {
    pub name: String,
    pub source: ProjSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecl {
    pub time: f64,
    pub projectors: Vec<ProjDecl>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionDecl {
    pub name: String,
    /// `Some(k)`: classes group the alternatives of slot `k`.
    pub slot: Option<usize>,
    pub classes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FineBasis {
    Standard,
    /// Basis vectors as matrix columns.
    Columns(MatrixLiteral),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineDecl {
    pub time: f64,
    pub basis: FineBasis,
}

/// Parsed model text, before any physical validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDocument {
    pub dim: usize,
    pub state: Option<KetLiteral>,
    pub evolution: EvolutionDecl,
    pub kets: Vec<(String, KetLiteral)>,
    pub slots: Vec<SlotDecl>,
    pub partitions: Vec<PartitionDecl>,
    pub fine: Vec<FineDecl>,
    pub factors: Vec<String>,
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Num(Complex64),
    LBracket,
    RBracket,
    Comma,
    Equals,
    Newline,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn diag(line: usize, column: usize, message: impl Into<String>, expected: &[&str]) -> Error {
    Error::Parse(ParseDiagnostic {
        line,
        column,
        message: message.into(),
        expected: expected.iter().map(|s| s.to_string()).collect(),
    })
}

fn parse_real(s: &str) -> Option<f64> {
    if s.is_empty() || s.contains(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E') {
        return None;
    }
    let v: f64 = s.parse().ok()?;
    v.is_finite().then_some(v)
}

/// `3`, `-0.5`, `2i`, `-i`, `1+2i`, `1e-3-4.5e2i`.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let Some(body) = s.strip_suffix('i') else {
        return parse_real(s).map(|re| Complex64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |t: &str| match t {
        "" | "+" => Some(1.0),
        "-" => Some(-1.0),
        _ => parse_real(t),
    };
    match split {
        Some(k) => Some(Complex64::new(parse_real(&body[..k])?, imag(&body[k..])?)),
        None => Some(Complex64::new(0.0, imag(body)?)),
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line, column });
            match c {
                '#' => break,
                _ if c.is_whitespace() => i += 1,
                '[' => {
                    depth += 1;
                    push(&mut out, Tok::LBracket);
                    i += 1;
                }
                ']' => {
                    if depth == 0 {
                        return Err(diag(line, column, "unbalanced `]`", &[]));
                    }
                    depth -= 1;
                    push(&mut out, Tok::RBracket);
                    i += 1;
                }
                ',' => {
                    push(&mut out, Tok::Comma);
                    i += 1;
                }
                '=' => {
                    push(&mut out, Tok::Equals);
                    i += 1;
                }
                _ => {
                    let start = i;
                    while i < chars.len() && !chars[i].is_whitespace() && !"[],=#".contains(chars[i]) {
                        i += 1;
                    }
                    let word: String = chars[start..i].iter().collect();
                    if depth > 0 {
                        let z = parse_complex(&word).ok_or_else(|| {
                            diag(line, column, format!("invalid complex literal `{word}`"), &["a+bi"])
                        })?;
                        push(&mut out, Tok::Num(z));
                    } else {
                        push(&mut out, Tok::Word(word));
                    }
                }
            }
        }
        if depth == 0 {
            out.push(Token {
                tok: Tok::Newline,
                line,
                column: chars.len() + 1,
            });
        }
    }
    if depth > 0 {
        let line = text.lines().count().max(1);
        return Err(diag(line, 1, "unterminated `[`", &["]"]));
    }
    let line = text.lines().count() + 1;
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: 1,
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// parser

#[derive(Debug, Clone)]
enum Lit {
    Num(Complex64, usize, usize),
    List(Vec<Lit>, usize, usize),
}

impl Lit {
    fn pos(&self) -> (usize, usize) {
        match self {
            Lit::Num(_, l, c) | Lit::List(_, l, c) => (*l, *c),
        }
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    dim: Option<usize>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>, expected: &[&str]) -> Error {
        let t = self.peek();
        diag(t.line, t.column, message, expected)
    }

    fn unexpected(&self, expected: &[&str]) -> Error {
        let found = match &self.peek().tok {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Num(_) => "number".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Equals => "`=`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of file".into(),
        };
        self.error_here(format!("unexpected {found}"), expected)
    }

    fn word(&mut self, expected: &[&str]) -> Result<(String, usize, usize)> {
        match &self.peek().tok {
            Tok::Word(w) => {
                let w = w.clone();
                let t = self.next();
                Ok((w, t.line, t.column))
            }
            _ => Err(self.unexpected(expected)),
        }
    }

    fn keyword(&mut self, options: &[&str]) -> Result<String> {
        match &self.peek().tok {
            Tok::Word(w) if options.contains(&w.as_str()) => Ok(self.word(options)?.0),
            _ => Err(self.unexpected(options)),
        }
    }

    fn name(&mut self) -> Result<String> {
        let (w, line, column) = self.word(&["name"])?;
        let ok = w.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
            && w.chars().all(|c| c.is_alphanumeric() || "_'.-".contains(c));
        if !ok {
            return Err(diag(line, column, format!("invalid name `{w}`"), &["name"]));
        }
        Ok(w)
    }

    fn real(&mut self, what: &str) -> Result<f64> {
        let (w, line, column) = self.word(&[what])?;
        parse_real(&w).ok_or_else(|| diag(line, column, format!("invalid number `{w}`"), &[what]))
    }

    fn index(&mut self, what: &str) -> Result<usize> {
        let (w, line, column) = self.word(&[what])?;
        w.parse()
            .map_err(|_| diag(line, column, format!("invalid index `{w}`"), &[what]))
    }

    fn end_of_statement(&mut self) -> Result<()> {
        match self.peek().tok {
            Tok::Newline | Tok::Eof => {
                self.next();
                Ok(())
            }
            _ => Err(self.unexpected(&["end of line"])),
        }
    }

    fn literal(&mut self) -> Result<Lit> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(z) => {
                self.next();
                Ok(Lit::Num(z, t.line, t.column))
            }
            Tok::LBracket => {
                self.next();
                let mut items = Vec::new();
                if self.peek().tok == Tok::RBracket {
                    self.next();
                    return Ok(Lit::List(items, t.line, t.column));
                }
                loop {
                    items.push(self.literal()?);
                    match self.peek().tok {
                        Tok::Comma => {
                            self.next();
                        }
                        Tok::RBracket => {
                            self.next();
                            return Ok(Lit::List(items, t.line, t.column));
                        }
                        _ => return Err(self.unexpected(&[",", "]"])),
                    }
                }
            }
            _ => Err(self.unexpected(&["[", "a+bi"])),
        }
    }

    fn dim_or_missing(&self) -> Result<usize> {
        self.dim.ok_or_else(|| self.error_here("missing dim section", &["dim"]))
    }

    fn vector(&mut self) -> Result<Vec<Complex64>> {
        let dim = self.dim_or_missing()?;
        let lit = self.literal()?;
        let (line, column) = lit.pos();
        let Lit::List(items, ..) = lit else {
            return Err(diag(line, column, "expected a vector literal", &["["]));
        };
        let values = items
            .iter()
            .map(|x| match x {
                Lit::Num(z, ..) => Ok(*z),
                Lit::List(_, l, c) => Err(diag(*l, *c, "nested list in vector literal", &["a+bi"])),
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != dim {
            return Err(diag(
                line,
                column,
                format!("dimension inconsistency: expected {dim} entries, found {}", values.len()),
                &[],
            ));
        }
        Ok(values)
    }

    fn rows(&mut self) -> Result<(Vec<Vec<Lit>>, usize, usize)> {
        let lit = self.literal()?;
        let (line, column) = lit.pos();
        let Lit::List(rows, ..) = lit else {
            return Err(diag(line, column, "expected a bracketed list of rows", &["["]));
        };
        let rows = rows
            .into_iter()
            .map(|r| match r {
                Lit::List(items, ..) => Ok(items),
                Lit::Num(_, l, c) => Err(diag(l, c, "expected a row literal", &["["])),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((rows, line, column))
    }

    fn matrix(&mut self) -> Result<MatrixLiteral> {
        let dim = self.dim_or_missing()?;
        let (rows, line, column) = self.rows()?;
        if rows.len() != dim {
            return Err(diag(
                line,
                column,
                format!("dimension inconsistency: expected {dim} rows, found {}", rows.len()),
                &[],
            ));
        }
        rows.into_iter()
            .map(|row| {
                if row.len() != dim {
                    let (l, c) = row.first().map(Lit::pos).unwrap_or((line, column));
                    return Err(diag(
                        l,
                        c,
                        format!("dimension inconsistency: expected {dim} columns, found {}", row.len()),
                        &[],
                    ));
                }
                row.into_iter()
                    .map(|x| match x {
                        Lit::Num(z, ..) => Ok(z),
                        Lit::List(_, l, c) => Err(diag(l, c, "nested list in matrix row", &["a+bi"])),
                    })
                    .collect()
            })
            .collect()
    }

    fn classes(&mut self) -> Result<Vec<Vec<usize>>> {
        let (rows, ..) = self.rows()?;
        rows.into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|x| match x {
                        Lit::Num(z, l, c) => {
                            if z.im == 0.0 && z.re >= 0.0 && z.re.fract() == 0.0 {
                                Ok(z.re as usize)
                            } else {
                                Err(diag(l, c, "class members must be non-negative integers", &["index"]))
                            }
                        }
                        Lit::List(_, l, c) => Err(diag(l, c, "nested list in class", &["index"])),
                    })
                    .collect()
            })
            .collect()
    }

    fn normalize_flag(&mut self) -> Result<bool> {
        if matches!(&self.peek().tok, Tok::Word(w) if w == "normalize") {
            self.next();
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

/// Parses model text. Errors carry line, column and the expected tokens.
pub fn parse_model(text: &str) -> Result<ModelDocument> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        dim: None,
    };
    let mut state = None;
    let mut evolution: Option<EvolutionDecl> = None;
    let mut kets: Vec<(String, KetLiteral)> = Vec::new();
    let mut slots: Vec<SlotDecl> = Vec::new();
    let mut partitions: Vec<PartitionDecl> = Vec::new();
    let mut fine: Vec<FineDecl> = Vec::new();
    let mut factors = Vec::new();

    loop {
        match &p.peek().tok {
            Tok::Eof => break,
            Tok::Newline => {
                p.next();
                continue;
            }
            _ => {}
        }
        let start = p.peek().clone();
        let kw = p.keyword(&STATEMENTS)?;
        if kw != "dim" && p.dim.is_none() {
            return Err(diag(start.line, start.column, "missing dim section", &["dim"]));
        }
        match kw.as_str() {
            "dim" => {
                if p.dim.is_some() {
                    return Err(diag(start.line, start.column, "duplicate dim section", &[]));
                }
                let t = p.peek().clone();
                let d = p.index("dimension")?;
                if d == 0 {
                    return Err(diag(t.line, t.column, "dimension must be positive", &["dimension"]));
                }
                p.dim = Some(d);
            }
            "state" => {
                if state.is_some() {
                    return Err(diag(start.line, start.column, "duplicate state", &[]));
                }
                let values = p.vector()?;
                state = Some(KetLiteral {
                    values,
                    normalize: p.normalize_flag()?,
                });
            }
            "evolution" => {
                let form = p.keyword(&["zero", "hamiltonian", "unitary"])?;
                let clash = |ok: bool| {
                    if ok {
                        Ok(())
                    } else {
                        Err(diag(start.line, start.column, "conflicting evolution declarations", &[]))
                    }
                };
                match form.as_str() {
                    "zero" => {
                        clash(evolution.is_none())?;
                        evolution = Some(EvolutionDecl::Zero);
                    }
                    "hamiltonian" => {
                        clash(evolution.is_none())?;
                        evolution = Some(EvolutionDecl::Hamiltonian(p.matrix()?));
                    }
                    _ => {
                        let t = p.real("time")?;
                        let m = p.matrix()?;
                        match &mut evolution {
                            None => evolution = Some(EvolutionDecl::Unitaries(vec![(t, m)])),
                            Some(EvolutionDecl::Unitaries(list)) => list.push((t, m)),
                            Some(_) => clash(false)?,
                        }
                    }
                }
            }
            "ket" => {
                let t = p.peek().clone();
                let name = p.name()?;
                if kets.iter().any(|(n, _)| *n == name) {
                    return Err(diag(t.line, t.column, format!("duplicate ket `{name}`"), &[]));
                }
                let values = p.vector()?;
                let normalize = p.normalize_flag()?;
                kets.push((name, KetLiteral { values, normalize }));
            }
            "slot" => {
                let t = p.peek().clone();
                let time = p.real("time")?;
                if slots.last().is_some_and(|s| s.time >= time) {
                    return Err(diag(t.line, t.column, "slot times must be strictly increasing", &[]));
                }
                slots.push(SlotDecl {
                    time,
                    projectors: Vec::new(),
                });
            }
            "proj" => {
                let Some(slot) = slots.last_mut() else {
                    return Err(diag(start.line, start.column, "projector outside a slot", &["slot"]));
                };
                let t = p.peek().clone();
                let name = p.name()?;
                if slot.projectors.iter().any(|q| q.name == name) {
                    return Err(diag(t.line, t.column, format!("duplicate projector `{name}`"), &[]));
                }
                if p.peek().tok != Tok::Equals {
                    return Err(p.unexpected(&["="]));
                }
                p.next();
                let source = match p.keyword(&["basis", "ket", "matrix", "complement"])?.as_str() {
                    "basis" => {
                        let dim = p.dim_or_missing()?;
                        let mut idx = Vec::new();
                        loop {
                            let t = p.peek().clone();
                            let i = p.index("basis index")?;
                            if i >= dim {
                                return Err(diag(
                                    t.line,
                                    t.column,
                                    format!("basis index {i} out of range for dim {dim}"),
                                    &[],
                                ));
                            }
                            idx.push(i);
                            if p.peek().tok != Tok::Comma {
                                break;
                            }
                            p.next();
                        }
                        ProjSource::Basis(idx)
                    }
                    "ket" => {
                        let t = p.peek().clone();
                        let k = p.name()?;
                        if !kets.iter().any(|(n, _)| *n == k) {
                            return Err(diag(t.line, t.column, format!("unknown ket `{k}`"), &["ket name"]));
                        }
                        ProjSource::Ket(k)
                    }
                    "matrix" => ProjSource::Matrix(p.matrix()?),
                    _ => {
                        let t = p.peek().clone();
                        let k = p.name()?;
                        if !slot.projectors.iter().any(|q| q.name == k) {
                            return Err(diag(
                                t.line,
                                t.column,
                                format!("unknown projector `{k}` in this slot"),
                                &["projector name"],
                            ));
                        }
                        ProjSource::Complement(k)
                    }
                };
                slot.projectors.push(ProjDecl { name, source });
            }
            "partition" => {
                let t = p.peek().clone();
                let name = p.name()?;
                if partitions.iter().any(|q| q.name == name) {
                    return Err(diag(t.line, t.column, format!("duplicate partition `{name}`"), &[]));
                }
                let slot = if matches!(&p.peek().tok, Tok::Word(w) if w == "slot") {
                    p.next();
                    Some(p.index("slot index")?)
                } else {
                    None
                };
                let classes = p.classes()?;
                partitions.push(PartitionDecl { name, slot, classes });
            }
            "fine" => {
                let t = p.peek().clone();
                let time = p.real("time")?;
                if fine.last().is_some_and(|f| f.time >= time) {
                    return Err(diag(t.line, t.column, "fine times must be strictly increasing", &[]));
                }
                let basis = match p.keyword(&["standard", "columns"])?.as_str() {
                    "standard" => FineBasis::Standard,
                    _ => FineBasis::Columns(p.matrix()?),
                };
                fine.push(FineDecl { time, basis });
            }
            _ => {
                let (path, ..) = p.word(&["path"])?;
                factors.push(path);
            }
        }
        p.end_of_statement()?;
    }

    let dim = p.dim.ok_or_else(|| diag(1, 1, "missing dim section", &["dim"]))?;
    Ok(ModelDocument {
        dim,
        state,
        evolution: evolution.unwrap_or(EvolutionDecl::Zero),
        kets,
        slots,
        partitions,
        fine,
        factors,
    })
}

/// Parses a standalone class literal such as `[[0],[1,2]]`.
pub fn parse_partition_literal(text: &str) -> Result<Vec<Vec<usize>>> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        dim: None,
    };
    let classes = p.classes()?;
    p.end_of_statement()?;
    match p.peek().tok {
        Tok::Eof => Ok(classes),
        _ => Err(p.unexpected(&["end of input"])),
    }
}

// ---------------------------------------------------------------------------
// serializer

/// Shortest decimal that parses back to the same value.
pub fn format_real(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x}")
}

pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        return format_real(z.re);
    }
    let im = match z.im {
        v if v == 1.0 => String::new(),
        v if v == -1.0 => "-".into(),
        v => format_real(v),
    };
    if z.re == 0.0 {
        format!("{im}i")
    } else if z.im < 0.0 {
        format!("{}{im}i", format_real(z.re))
    } else {
        format!("{}+{im}i", format_real(z.re))
    }
}

fn write_vector(out: &mut String, v: &[Complex64]) {
    out.push('[');
    for (i, z) in v.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format_complex(*z));
    }
    out.push(']');
}

fn write_matrix(out: &mut String, m: &MatrixLiteral) {
    out.push('[');
    for (i, row) in m.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_vector(out, row);
    }
    out.push(']');
}

fn write_classes(out: &mut String, classes: &[Vec<usize>]) {
    let parts: Vec<String> = classes
        .iter()
        .map(|c| format!("[{}]", c.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")))
        .collect();
    let _ = write!(out, "[{}]", parts.join(", "));
}

impl fmt::Display for ModelDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let _ = writeln!(out, "dim {}", self.dim);
        if let Some(s) = &self.state {
            out.push_str("state ");
            write_vector(&mut out, &s.values);
            out.push_str(if s.normalize { " normalize\n" } else { "\n" });
        }
        match &self.evolution {
            EvolutionDecl::Zero => out.push_str("evolution zero\n"),
            EvolutionDecl::Hamiltonian(h) => {
                out.push_str("evolution hamiltonian ");
                write_matrix(&mut out, h);
                out.push('\n');
            }
            EvolutionDecl::Unitaries(list) => {
                for (t, u) in list {
                    let _ = write!(out, "evolution unitary {} ", format_real(*t));
                    write_matrix(&mut out, u);
                    out.push('\n');
                }
            }
        }
        for (name, k) in &self.kets {
            let _ = write!(out, "ket {name} ");
            write_vector(&mut out, &k.values);
            out.push_str(if k.normalize { " normalize\n" } else { "\n" });
        }
        for slot in &self.slots {
            let _ = writeln!(out, "slot {}", format_real(slot.time));
            for q in &slot.projectors {
                let _ = write!(out, "proj {} = ", q.name);
                match &q.source {
                    ProjSource::Basis(idx) => {
                        let list: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
                        let _ = write!(out, "basis {}", list.join(","));
                    }
                    ProjSource::Ket(k) => {
                        let _ = write!(out, "ket {k}");
                    }
                    ProjSource::Matrix(m) => {
                        out.push_str("matrix ");
                        write_matrix(&mut out, m);
                    }
                    ProjSource::Complement(k) => {
                        let _ = write!(out, "complement {k}");
                    }
                }
                out.push('\n');
            }
        }
        for part in &self.partitions {
            let _ = write!(out, "partition {} ", part.name);
            if let Some(k) = part.slot {
                let _ = write!(out, "slot {k} ");
            }
            write_classes(&mut out, &part.classes);
            out.push('\n');
        }
        for fd in &self.fine {
            let _ = write!(out, "fine {} ", format_real(fd.time));
            match &fd.basis {
                FineBasis::Standard => out.push_str("standard"),
                FineBasis::Columns(m) => {
                    out.push_str("columns ");
                    write_matrix(&mut out, m);
                }
            }
            out.push('\n');
        }
        for path in &self.factors {
            let _ = writeln!(out, "factor {path}");
        }
        f.write_str(&out)
    }
}

// ---------------------------------------------------------------------------
// build

#[derive(Debug, Clone)]
pub struct NamedPartition {
    pub name: String,
    pub slot: Option<usize>,
    /// Grouping of the slot's alternatives when `slot` is set, otherwise equal to `flat`.
    pub groups: Partition,
    /// The same partition over flat history indices.
    pub flat: Partition,
}

/// Validated domain objects described by a [`ModelDocument`].
#[derive(Debug, Clone)]
pub struct Model {
    pub dim: usize,
    pub psi: Option<StateVector>,
    pub evolution: EvolutionSpec,
    /// Heisenberg-picture history set built from the slots.
    pub histories: Option<HistorySet>,
    pub partitions: Vec<NamedPartition>,
    pub fine: Option<FineGrainedSpec>,
    pub composite: Option<CompositeSystem>,
}

impl Model {
    pub fn require_state(&self) -> Result<&StateVector> {
        self.psi
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("model declares no state".into()))
    }

    pub fn require_histories(&self) -> Result<&HistorySet> {
        self.histories
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("model declares no slots".into()))
    }

    pub fn partition(&self, name: &str) -> Result<&NamedPartition> {
        self.partitions
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown partition `{name}`")))
    }
}

fn to_matrix(m: &MatrixLiteral) -> CMatrix {
    let n = m.len();
    CMatrix::from_fn(n, n, |i, j| m[i][j])
}

fn to_state(k: &KetLiteral) -> Result<StateVector> {
    let v = CVector::from_vec(k.values.clone());
    if k.normalize {
        StateVector::normalized(v)
    } else {
        StateVector::new(v)
    }
}

/// Validates a document into domain objects. Factor paths resolve against `base`.
pub fn build_model(doc: &ModelDocument, base: Option<&Path>) -> Result<Model> {
    build_at_depth(doc, base, 0)
}

fn build_at_depth(doc: &ModelDocument, base: Option<&Path>, depth: usize) -> Result<Model> {
    let dim = doc.dim;
    let psi = doc.state.as_ref().map(to_state).transpose()?;
    let evolution = match &doc.evolution {
        EvolutionDecl::Zero => EvolutionSpec::zero(dim),
        EvolutionDecl::Hamiltonian(h) => EvolutionSpec::Hamiltonian(HermitianOperator::new(to_matrix(h))?),
        EvolutionDecl::Unitaries(list) => {
            EvolutionSpec::unitaries(list.iter().map(|(t, u)| (*t, to_matrix(u))).collect())?
        }
    };

    let mut sets = Vec::with_capacity(doc.slots.len());
    for slot in &doc.slots {
        let mut members: Vec<Projector> = Vec::with_capacity(slot.projectors.len());
        for q in &slot.projectors {
            let p = match &q.source {
                ProjSource::Basis(idx) => Projector::basis_subset(dim, idx, q.name.clone())?,
                ProjSource::Ket(k) => {
                    let (_, ket) = doc
                        .kets
                        .iter()
                        .find(|(n, _)| n == k)
                        .ok_or_else(|| Error::InvalidConfig(format!("unknown ket `{k}`")))?;
                    Projector::onto(&CVector::from_vec(ket.values.clone()), q.name.clone())?
                }
                ProjSource::Matrix(m) => Projector::new(to_matrix(m), q.name.clone())?,
                ProjSource::Complement(k) => members
                    .iter()
                    .find(|p| p.label() == k)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown projector `{k}`")))?
                    .complement(q.name.clone()),
            };
            members.push(p);
        }
        sets.push(ProjectorSet::new(members, slot.time)?);
    }
    let histories = if sets.is_empty() {
        None
    } else {
        Some(HistorySet::from_schrodinger(sets, &evolution)?)
    };

    let mut partitions = Vec::with_capacity(doc.partitions.len());
    for decl in &doc.partitions {
        let hs = histories
            .as_ref()
            .ok_or_else(|| Error::InvalidPartition(format!("partition `{}` needs slots", decl.name)))?;
        let (groups, flat) = match decl.slot {
            Some(k) => {
                let size = hs
                    .slots()
                    .get(k)
                    .ok_or_else(|| Error::InvalidPartition(format!("no slot {k}")))?
                    .len();
                let groups = Partition::new(size, decl.classes.clone())?;
                let flat = slot_partition(hs, k, &groups)?;
                (groups, flat)
            }
            None => {
                let flat = Partition::new(hs.len(), decl.classes.clone())?;
                (flat.clone(), flat)
            }
        };
        partitions.push(NamedPartition {
            name: decl.name.clone(),
            slot: decl.slot,
            groups,
            flat,
        });
    }

    let fine = if doc.fine.is_empty() {
        None
    } else {
        let psi = psi
            .clone()
            .ok_or_else(|| Error::InvalidConfig("fine-grained section needs a state".into()))?;
        let bases = doc
            .fine
            .iter()
            .map(|fd| {
                let m = match &fd.basis {
                    FineBasis::Standard => CMatrix::identity(dim, dim),
                    FineBasis::Columns(m) => to_matrix(m),
                };
                let members = (0..dim)
                    .map(|j| Projector::onto(&m.column(j).into_owned(), format!("{j}")))
                    .collect::<Result<Vec<_>>>()?;
                ProjectorSet::new(members, fd.time)?.heisenberg(&evolution)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(FineGrainedSpec::new(psi, bases)?)
    };

    let composite = if doc.factors.is_empty() {
        None
    } else {
        if depth >= MAX_FACTOR_DEPTH {
            return Err(Error::InvalidConfig("factor nesting too deep".into()));
        }
        if psi.is_some() || histories.is_some() {
            return Err(Error::InvalidConfig(
                "a composite model takes its state and slots from its factors".into(),
            ));
        }
        let mut factors = Vec::with_capacity(doc.factors.len());
        for path in &doc.factors {
            let full = base.map(|b| b.join(path)).unwrap_or_else(|| PathBuf::from(path));
            let (fdoc, fbase) = read_document(&full)?;
            let m = build_at_depth(&fdoc, Some(&fbase), depth + 1)?;
            let fpsi = m.require_state()?.clone();
            let fhs = m.require_histories()?.clone();
            factors.push(Factor::new(fpsi, fhs)?);
        }
        let cs = CompositeSystem::new(factors)?;
        if cs.joint_state().dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: cs.joint_state().dim(),
            });
        }
        Some(cs)
    };

    Ok(Model {
        dim,
        psi,
        evolution,
        histories,
        partitions,
        fine,
        composite,
    })
}

fn read_document(path: &Path) -> Result<(ModelDocument, PathBuf)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let doc = parse_model(&text).map_err(|e| match e {
        Error::Parse(mut d) => {
            d.message = format!("{}: {}", path.display(), d.message);
            Error::Parse(d)
        }
        other => other,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((doc, base))
}

/// Reads, parses and builds a model file.
pub fn load_model(path: &Path) -> Result<(ModelDocument, Model)> {
    let (doc, base) = read_document(path)?;
    let model = build_model(&doc, Some(&base))?;
    Ok((doc, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_BOX: &str = "\
# three boxes
dim 3
state [1, 1, 1] normalize
evolution zero
ket phi [1, 1, -1]
slot 1
proj A = basis 0
proj B = basis 1
proj C = basis 2
slot 2
proj Phi = ket phi
proj notPhi = complement Phi
partition AvsRest slot 0 [[0], [1, 2]]
partition phiOnly [[0, 1, 2], [3, 4, 5]]
";

    fn parse_err(text: &str) -> ParseDiagnostic {
        match parse_model(text).unwrap_err() {
            Error::Parse(d) => d,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn complex_literals() {
        let cases = [
            ("3", (3.0, 0.0)),
            ("-0.5", (-0.5, 0.0)),
            ("2i", (0.0, 2.0)),
            ("-i", (0.0, -1.0)),
            ("i", (0.0, 1.0)),
            ("1+2i", (1.0, 2.0)),
            ("1-i", (1.0, -1.0)),
            ("1e-3-4.5e2i", (1e-3, -450.0)),
            ("-2.5E+1+1e-1i", (-25.0, 0.1)),
        ];
        for (s, (re, im)) in cases {
            assert_eq!(parse_complex(s), Some(Complex64::new(re, im)), "{s}");
        }
        for bad in ["", "1+", "abc", "1ii", "inf", "nan", "1+2j"] {
            assert_eq!(parse_complex(bad), None, "{bad}");
        }
    }

    #[test]
    fn complex_format_round_trips() {
        for z in [
            Complex64::new(0.0, 0.0),
            Complex64::new(-0.0, 1.0),
            Complex64::new(1.0 / 3.0, -1.0),
            Complex64::new(1e-300, 2.5e17),
            Complex64::new(-7.0, -0.1),
        ] {
            assert_eq!(parse_complex(&format_complex(z)), Some(z + Complex64::new(0.0, 0.0)));
        }
    }

    #[test]
    fn three_box_text_builds() {
        let doc = parse_model(THREE_BOX).unwrap();
        assert_eq!(doc.dim, 3);
        assert_eq!(doc.slots.len(), 2);
        let m = build_model(&doc, None).unwrap();
        let hs = m.require_histories().unwrap();
        assert_eq!(hs.len(), 6);
        let p = crate::histories::extended_probabilities(hs, m.require_state().unwrap()).unwrap();
        for (got, want) in p[..3].iter().zip([1.0 / 9.0, 1.0 / 9.0, -1.0 / 9.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        let part = m.partition("AvsRest").unwrap();
        assert_eq!(part.flat.classes(), &[vec![0], vec![1, 2], vec![3], vec![4, 5]]);
    }

    #[test]
    fn round_trip() {
        let text = "dim 2\nstate [0.6, 0.8i]\nevolution unitary 1 [[0, 1], [1, 0]]\n\
                    evolution unitary 2 [[1, 0],\n [0, -1]]\nslot 1\nproj up = matrix [[1, 0], [0, 0]]\n\
                    proj down = complement up\nslot 2\nproj x = basis 0,1\nfine 1 standard\n\
                    fine 2 columns [[0.7071067811865476, 0.7071067811865476], [0.7071067811865476, -0.7071067811865476]]\n";
        let doc = parse_model(text).unwrap();
        let again = parse_model(&doc.to_string()).unwrap();
        assert_eq!(doc, again);
        assert_eq!(doc.to_string(), again.to_string());
        build_model(&doc, None).unwrap();
    }

    #[test]
    fn empty_file() {
        let d = parse_err("");
        assert_eq!(d.message, "missing dim section");
        assert_eq!(d.expected, vec!["dim"]);
        let d = parse_err("# only a comment\n\nstate [1]\n");
        assert_eq!((d.line, d.message.as_str()), (3, "missing dim section"));
    }

    #[test]
    fn diagnostics_have_positions() {
        let d = parse_err("dim 2\nstate [1, 2, 3]\n");
        assert_eq!((d.line, d.column), (2, 7));
        assert!(d.message.contains("dimension inconsistency"));

        let d = parse_err("dim 2\nbogus 1\n");
        assert_eq!((d.line, d.column), (2, 1));
        assert!(d.expected.contains(&"slot".to_string()));

        let d = parse_err("dim 2\nstate [1, 2x]\n");
        assert_eq!((d.line, d.column), (2, 11));
        assert_eq!(d.expected, vec!["a+bi"]);

        let d = parse_err("dim 2\nslot 1\nproj A basis 0\n");
        assert_eq!((d.line, d.column, d.expected.clone()), (3, 8, vec!["=".to_string()]));

        let d = parse_err("dim 2\nevolution hamiltonian [[1, 0], [0, 1]\n");
        assert!(d.message.contains("unterminated"));

        let d = parse_err("dim 2\nslot 2\nslot 1\n");
        assert_eq!(d.line, 3);

        let d = parse_err("dim 2\nproj A = basis 0\n");
        assert_eq!(d.expected, vec!["slot"]);

        let d = parse_err("dim 2\nslot 1\nproj A = basis 2\n");
        assert!(d.message.contains("out of range"));
    }

    #[test]
    fn partition_literal() {
        assert_eq!(parse_partition_literal("[[0],[1, 2]]").unwrap(), vec![vec![0], vec![1, 2]]);
        assert!(parse_partition_literal("[[0],[1.5]]").is_err());
        assert!(parse_partition_literal("[[0]] x").is_err());
    }

    #[test]
    fn completeness_defect_is_reported() {
        // second projector is rank-1 onto a direction tilted by ~1e-3 from |1>
        let s2 = 1e-6_f64;
        let c2 = 1.0 - s2;
        let sc = (s2 * c2).sqrt();
        let text = format!(
            "dim 2\nstate [1, 0]\nslot 1\nproj A = basis 0\nproj B = matrix [[{}, {}], [{}, {}]]\n",
            format_real(s2),
            format_real(sc),
            format_real(sc),
            format_real(c2)
        );
        let doc = parse_model(&text).unwrap();
        match build_model(&doc, None).unwrap_err() {
            Error::InvariantViolation { invariant, magnitude } => {
                assert_eq!(invariant, "completeness");
                assert!((magnitude - 1e-3).abs() < 1e-6, "{magnitude}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hamiltonian_evolution_reaches_heisenberg_picture() {
        // H = sigma_x, t = pi/2 swaps |0> and |1> up to phase
        let text = format!(
            "dim 2\nstate [1, 0]\nevolution hamiltonian [[0, 1], [1, 0]]\nslot {}\nproj zero = basis 0\nproj one = basis 1\n",
            format_real(std::f64::consts::FRAC_PI_2)
        );
        let m = build_model(&parse_model(&text).unwrap(), None).unwrap();
        let p = crate::histories::extended_probabilities(m.require_histories().unwrap(), m.require_state().unwrap())
            .unwrap();
        assert!(p[0].abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
    }
}
