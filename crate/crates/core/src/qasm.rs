//! Reader and writer for a compact OpenQASM 3 subset.
//!
//! Accepted statements: an optional `OPENQASM 3.x;` header, an ignored
//! `include "stdgates.inc";`, one `qubit[n] ID;` and one `bit[m] ID;`
//! declaration, gate calls over {h, x, y, z, s, sdg, t, tdg, p, rx, ry, rz,
//! swap, cx, cz, ccx, gphase} with `ctrl @` / `negctrl @` modifiers,
//! `ID[j] = measure ID[i];`, `reset ID[i];`, single-bit `if` guards
//! (`c[j]`, `c[j] == 1`, `c[j] == 0`, `!c[j]`, with nesting for multiple
//! guards), and `barrier …;` which is dropped with a warning. `//` comments
//! run to end of line. Everything else is rejected with a source span.
//!
//! A bare `gphase(θ);` (no controls, no guards) folds into the circuit-level
//! phase accumulator instead of the body, so writing a circuit that carries
//! such an instruction in its body does not read back instruction-exact;
//! the rewrite passes only ever produce the accumulator form.

use crate::circuit::{Circuit, Ctrl, GateKind, Instruction, Polarity};
use std::fmt;
use thiserror::Error;

/// Half-open byte range with the line/column of its start (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Error)]
pub enum QasmError {
    #[error("syntax error at {span}: {message}")]
    Syntax { message: String, span: SourceSpan },
    #[error("unsupported construct at {span}: {construct}")]
    Unsupported { construct: String, span: SourceSpan },
    #[error("index out of range at {span}: {name}[{index}], size {size}")]
    IndexOutOfRange { name: String, index: usize, size: usize, span: SourceSpan },
}

impl QasmError {
    pub fn span(&self) -> SourceSpan {
        match self {
            QasmError::Syntax { span, .. }
            | QasmError::Unsupported { span, .. }
            | QasmError::IndexOutOfRange { span, .. } => *span,
        }
    }
}

/// Non-fatal note produced while parsing (currently only barrier removal).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Warning {
    pub message: String,
    pub span: SourceSpan,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "warning at {}: {}", self.span, self.message)
    }
}

/// Result of a successful parse.
#[derive(Clone, Debug)]
pub struct ParseOutput {
    pub circuit: Circuit,
    pub warnings: Vec<Warning>,
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Semi,
    Assign,
    Bang,
    At,
    Star,
    Slash,
    Plus,
    Minus,
    EqEq,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Number(v) => format!("number {v}"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Semi => "';'".into(),
            Tok::Assign => "'='".into(),
            Tok::Bang => "'!'".into(),
            Tok::At => "'@'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::EqEq => "'=='".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

fn lex(src: &str) -> Result<Vec<Token>, QasmError> {
    let mut toks = Vec::new();
    let mut chars = src.char_indices().peekable();
    let mut line = 1usize;
    let mut column = 1usize;

    macro_rules! span_at {
        ($start:expr, $end:expr, $line:expr, $col:expr) => {
            SourceSpan { start: $start, end: $end, line: $line, column: $col }
        };
    }

    while let Some(&(i, ch)) = chars.peek() {
        let (tline, tcol) = (line, column);
        let advance = |chars: &mut std::iter::Peekable<std::str::CharIndices>,
                       line: &mut usize,
                       column: &mut usize| {
            let (_, c) = chars.next().unwrap();
            if c == '\n' {
                *line += 1;
                *column = 1;
            } else {
                *column += 1;
            }
            c
        };

        if ch.is_whitespace() {
            advance(&mut chars, &mut line, &mut column);
            continue;
        }
        if ch == '/' {
            // comment or division
            let mut ahead = chars.clone();
            ahead.next();
            if matches!(ahead.peek(), Some((_, '/'))) {
                while let Some(&(_, c)) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    advance(&mut chars, &mut line, &mut column);
                }
                continue;
            }
            advance(&mut chars, &mut line, &mut column);
            toks.push(Token { tok: Tok::Slash, span: span_at!(i, i + 1, tline, tcol) });
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            let mut end = i;
            let mut text = String::new();
            while let Some(&(j, c)) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    text.push(c);
                    end = j + c.len_utf8();
                    advance(&mut chars, &mut line, &mut column);
                } else {
                    break;
                }
            }
            toks.push(Token { tok: Tok::Ident(text), span: span_at!(start, end, tline, tcol) });
            continue;
        }
        if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            let mut end = i;
            let mut text = String::new();
            let mut saw_digit = false;
            let mut saw_dot = false;
            while let Some(&(j, c)) = chars.peek() {
                if c.is_ascii_digit() {
                    saw_digit = true;
                } else if c == '.' && !saw_dot {
                    saw_dot = true;
                } else {
                    break;
                }
                text.push(c);
                end = j + 1;
                advance(&mut chars, &mut line, &mut column);
            }
            // optional exponent
            if let Some(&(_, c)) = chars.peek() {
                if saw_digit && (c == 'e' || c == 'E') {
                    let mut ahead = chars.clone();
                    ahead.next();
                    let mut exp = String::new();
                    if let Some(&(_, s)) = ahead.peek() {
                        if s == '+' || s == '-' {
                            exp.push(s);
                            ahead.next();
                        }
                    }
                    let mut exp_digits = false;
                    while let Some(&(_, d)) = ahead.peek() {
                        if d.is_ascii_digit() {
                            exp.push(d);
                            exp_digits = true;
                            ahead.next();
                        } else {
                            break;
                        }
                    }
                    if exp_digits {
                        text.push(c);
                        advance(&mut chars, &mut line, &mut column);
                        for _ in 0..exp.len() {
                            let d = advance(&mut chars, &mut line, &mut column);
                            end += d.len_utf8();
                        }
                        text.push_str(&exp);
                        end += 1;
                    }
                }
            }
            let span = span_at!(start, end, tline, tcol);
            if !saw_digit {
                return Err(QasmError::Syntax { message: "malformed number".into(), span });
            }
            let value: f64 = text.parse().map_err(|_| QasmError::Syntax {
                message: format!("malformed number '{text}'"),
                span,
            })?;
            toks.push(Token { tok: Tok::Number(value), span });
            continue;
        }
        if ch == '"' {
            let start = i;
            advance(&mut chars, &mut line, &mut column);
            let mut text = String::new();
            let mut closed = false;
            let mut end = i + 1;
            while let Some(&(j, c)) = chars.peek() {
                advance(&mut chars, &mut line, &mut column);
                end = j + c.len_utf8();
                if c == '"' {
                    closed = true;
                    break;
                }
                text.push(c);
            }
            let span = span_at!(start, end, tline, tcol);
            if !closed {
                return Err(QasmError::Syntax { message: "unterminated string".into(), span });
            }
            toks.push(Token { tok: Tok::Str(text), span });
            continue;
        }
        let simple = match ch {
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            ';' => Some(Tok::Semi),
            '!' => Some(Tok::Bang),
            '@' => Some(Tok::At),
            '*' => Some(Tok::Star),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            _ => None,
        };
        if let Some(tok) = simple {
            advance(&mut chars, &mut line, &mut column);
            toks.push(Token { tok, span: span_at!(i, i + ch.len_utf8(), tline, tcol) });
            continue;
        }
        if ch == '=' {
            advance(&mut chars, &mut line, &mut column);
            if matches!(chars.peek(), Some((_, '='))) {
                advance(&mut chars, &mut line, &mut column);
                toks.push(Token { tok: Tok::EqEq, span: span_at!(i, i + 2, tline, tcol) });
            } else {
                toks.push(Token { tok: Tok::Assign, span: span_at!(i, i + 1, tline, tcol) });
            }
            continue;
        }
        return Err(QasmError::Syntax {
            message: format!("unexpected character '{ch}'"),
            span: span_at!(i, i + ch.len_utf8(), tline, tcol),
        });
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// parser

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    eof: SourceSpan,
    qubit_decl: Option<(String, usize)>,
    bit_decl: Option<(String, usize)>,
    body: Vec<Instruction>,
    global_phase: f64,
    warnings: Vec<Warning>,
}

impl Parser {
    fn new(src: &str) -> Result<Parser, QasmError> {
        let toks = lex(src)?;
        let lines = src.lines().count().max(1);
        let eof = SourceSpan {
            start: src.len(),
            end: src.len(),
            line: lines,
            column: src.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1),
        };
        Ok(Parser {
            toks,
            pos: 0,
            eof,
            qubit_decl: None,
            bit_decl: None,
            body: Vec::new(),
            global_phase: 0.0,
            warnings: Vec::new(),
        })
    }

    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> SourceSpan {
        self.peek().map(|t| t.span).unwrap_or(self.eof)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, message: impl Into<String>, span: SourceSpan) -> Result<T, QasmError> {
        Err(QasmError::Syntax { message: message.into(), span })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<SourceSpan, QasmError> {
        match self.bump() {
            Some(t) if t.tok == want => Ok(t.span),
            Some(t) => self.syntax(format!("expected {what}, found {}", t.tok.describe()), t.span),
            None => self.syntax(format!("expected {what}, found end of input"), self.eof),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, SourceSpan), QasmError> {
        match self.bump() {
            Some(Token { tok: Tok::Ident(s), span }) => Ok((s, span)),
            Some(t) => self.syntax(format!("expected {what}, found {}", t.tok.describe()), t.span),
            None => self.syntax(format!("expected {what}, found end of input"), self.eof),
        }
    }

    fn expect_usize(&mut self, what: &str) -> Result<(usize, SourceSpan), QasmError> {
        match self.bump() {
            Some(Token { tok: Tok::Number(v), span }) => {
                if v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64 {
                    Ok((v as usize, span))
                } else {
                    self.syntax(format!("expected {what}, found non-integer {v}"), span)
                }
            }
            Some(t) => self.syntax(format!("expected {what}, found {}", t.tok.describe()), t.span),
            None => self.syntax(format!("expected {what}, found end of input"), self.eof),
        }
    }

    fn peek_ident(&self) -> Option<&str> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), .. }) => Some(s.as_str()),
            _ => None,
        }
    }

    fn run(mut self) -> Result<ParseOutput, QasmError> {
        while self.peek().is_some() {
            self.statement()?;
        }
        let n = self.qubit_decl.map(|(_, n)| n).unwrap_or(0);
        let m = self.bit_decl.map(|(_, m)| m).unwrap_or(0);
        let mut circuit = Circuit::new(n, m);
        circuit.body = self.body;
        circuit.global_phase = self.global_phase;
        Ok(ParseOutput { circuit, warnings: self.warnings })
    }

    fn statement(&mut self) -> Result<(), QasmError> {
        let span = self.here();
        let Some(name) = self.peek_ident().map(str::to_owned) else {
            let tok = self.peek().unwrap().tok.describe();
            return self.syntax(format!("expected a statement, found {tok}"), span);
        };
        match name.as_str() {
            "OPENQASM" => self.header(),
            "include" => self.include(),
            "qubit" => self.declaration(true),
            "bit" => self.declaration(false),
            "barrier" => self.barrier(),
            "reset" => self.reset(),
            "if" => {
                let guards = self.guard_chain()?;
                self.gate_call(guards)
            }
            "ctrl" | "negctrl" => self.gate_call(Vec::new()),
            _ => {
                if self.bit_decl.as_ref().is_some_and(|(bname, _)| *bname == name) {
                    self.measurement()
                } else if gate_signature(&name).is_some() {
                    self.gate_call(Vec::new())
                } else {
                    Err(QasmError::Unsupported {
                        construct: format!("unknown gate or statement '{name}'"),
                        span,
                    })
                }
            }
        }
    }

    fn header(&mut self) -> Result<(), QasmError> {
        self.bump();
        let (version, span) = match self.bump() {
            Some(Token { tok: Tok::Number(v), span }) => (v, span),
            Some(t) => {
                return self.syntax(format!("expected version number, found {}", t.tok.describe()), t.span)
            }
            None => return self.syntax("expected version number, found end of input", self.eof),
        };
        if !(3.0..4.0).contains(&version) {
            return Err(QasmError::Unsupported {
                construct: format!("OPENQASM version {version}; only 3.x is supported"),
                span,
            });
        }
        self.expect(Tok::Semi, "';'")?;
        Ok(())
    }

    fn include(&mut self) -> Result<(), QasmError> {
        self.bump();
        let (file, span) = match self.bump() {
            Some(Token { tok: Tok::Str(s), span }) => (s, span),
            Some(t) => {
                return self.syntax(format!("expected include path, found {}", t.tok.describe()), t.span)
            }
            None => return self.syntax("expected include path, found end of input", self.eof),
        };
        if file != "stdgates.inc" {
            return Err(QasmError::Unsupported {
                construct: format!("include \"{file}\"; only \"stdgates.inc\" is recognized"),
                span,
            });
        }
        self.expect(Tok::Semi, "';'")?;
        Ok(())
    }

    fn declaration(&mut self, is_qubit: bool) -> Result<(), QasmError> {
        let kw = self.bump().unwrap();
        self.expect(Tok::LBracket, "'['")?;
        let (size, _) = self.expect_usize("register size")?;
        self.expect(Tok::RBracket, "']'")?;
        let (name, _) = self.expect_ident("register name")?;
        self.expect(Tok::Semi, "';'")?;
        let slot = if is_qubit { &mut self.qubit_decl } else { &mut self.bit_decl };
        if slot.is_some() {
            let kind = if is_qubit { "qubit" } else { "bit" };
            return self.syntax(format!("duplicate {kind} declaration"), kw.span);
        }
        *slot = Some((name, size));
        Ok(())
    }

    fn barrier(&mut self) -> Result<(), QasmError> {
        let kw = self.bump().unwrap();
        while let Some(t) = self.bump() {
            if t.tok == Tok::Semi {
                self.warnings.push(Warning {
                    message: "barrier removed; it has no effect on optimization".into(),
                    span: kw.span,
                });
                return Ok(());
            }
        }
        self.syntax("unterminated barrier statement", kw.span)
    }

    fn qubit_operand(&mut self) -> Result<(usize, SourceSpan), QasmError> {
        let (name, span) = self.expect_ident("qubit operand")?;
        let Some((qname, n)) = self.qubit_decl.clone() else {
            return self.syntax("qubit register used before declaration", span);
        };
        if name != qname {
            return self.syntax(format!("unknown qubit register '{name}' (declared '{qname}')"), span);
        }
        self.expect(Tok::LBracket, "'['")?;
        let (idx, ispan) = self.expect_usize("qubit index")?;
        self.expect(Tok::RBracket, "']'")?;
        if idx >= n {
            return Err(QasmError::IndexOutOfRange { name: qname, index: idx, size: n, span: ispan });
        }
        Ok((idx, span))
    }

    fn bit_operand(&mut self) -> Result<usize, QasmError> {
        let (name, span) = self.expect_ident("bit operand")?;
        self.bit_index_after_name(&name, span)
    }

    fn bit_index_after_name(&mut self, name: &str, span: SourceSpan) -> Result<usize, QasmError> {
        let Some((cname, m)) = self.bit_decl.clone() else {
            return self.syntax("bit register used before declaration", span);
        };
        if name != cname {
            return self.syntax(format!("unknown bit register '{name}' (declared '{cname}')"), span);
        }
        self.expect(Tok::LBracket, "'['")?;
        let (idx, ispan) = self.expect_usize("bit index")?;
        self.expect(Tok::RBracket, "']'")?;
        if idx >= m {
            return Err(QasmError::IndexOutOfRange { name: cname, index: idx, size: m, span: ispan });
        }
        Ok(idx)
    }

    fn measurement(&mut self) -> Result<(), QasmError> {
        let register = self.bit_operand()?;
        self.expect(Tok::Assign, "'='")?;
        let (kw, kspan) = self.expect_ident("'measure'")?;
        if kw != "measure" {
            return self.syntax(format!("expected 'measure', found '{kw}'"), kspan);
        }
        let (qubit, _) = self.qubit_operand()?;
        self.expect(Tok::Semi, "';'")?;
        self.body.push(Instruction::Measure { qubit, register });
        Ok(())
    }

    fn reset(&mut self) -> Result<(), QasmError> {
        self.bump();
        let (qubit, _) = self.qubit_operand()?;
        self.expect(Tok::Semi, "';'")?;
        self.body.push(Instruction::Reset { qubit });
        Ok(())
    }

    /// One or more `if (cond)` prefixes; conditions are single-bit tests.
    fn guard_chain(&mut self) -> Result<Vec<Ctrl>, QasmError> {
        let mut guards = Vec::new();
        while self.peek_ident() == Some("if") {
            self.bump();
            self.expect(Tok::LParen, "'('")?;
            let negated_prefix = if matches!(self.peek(), Some(Token { tok: Tok::Bang, .. })) {
                self.bump();
                true
            } else {
                false
            };
            let index = self.bit_operand()?;
            let mut pol = if negated_prefix { Polarity::Neg } else { Polarity::Pos };
            if matches!(self.peek(), Some(Token { tok: Tok::EqEq, .. })) {
                if negated_prefix {
                    let span = self.here();
                    return self.syntax("cannot combine '!' with '=='", span);
                }
                self.bump();
                let (value, vspan) = self.expect_usize("0 or 1")?;
                pol = match value {
                    1 => Polarity::Pos,
                    0 => Polarity::Neg,
                    _ => return self.syntax(format!("guard compares to {value}; only 0 or 1"), vspan),
                };
            }
            self.expect(Tok::RParen, "')'")?;
            guards.push(Ctrl { index, pol });
        }
        Ok(guards)
    }

    fn gate_call(&mut self, guards: Vec<Ctrl>) -> Result<(), QasmError> {
        // modifier prefix, outermost first
        let mut modifiers: Vec<Polarity> = Vec::new();
        loop {
            match self.peek_ident() {
                Some("ctrl") => {
                    self.bump();
                    self.expect(Tok::At, "'@'")?;
                    modifiers.push(Polarity::Pos);
                }
                Some("negctrl") => {
                    self.bump();
                    self.expect(Tok::At, "'@'")?;
                    modifiers.push(Polarity::Neg);
                }
                _ => break,
            }
        }
        let (name, nspan) = self.expect_ident("gate name")?;
        if matches!(name.as_str(), "measure" | "reset" | "barrier" | "if")
            || self.bit_decl.as_ref().is_some_and(|(b, _)| *b == name)
        {
            return self.syntax("only gate calls may carry guards or control modifiers", nspan);
        }
        let Some(sig) = gate_signature(&name) else {
            return Err(QasmError::Unsupported {
                construct: format!("unknown gate '{name}'"),
                span: nspan,
            });
        };
        let angle = if sig.has_angle {
            self.expect(Tok::LParen, "'('")?;
            let a = self.angle()?;
            self.expect(Tok::RParen, "')'")?;
            Some(a)
        } else {
            None
        };

        let expected = modifiers.len() + sig.implicit_controls + sig.arity;
        let mut operands: Vec<(usize, SourceSpan)> = Vec::new();
        if expected > 0 {
            loop {
                operands.push(self.qubit_operand()?);
                if matches!(self.peek(), Some(Token { tok: Tok::Comma, .. })) {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::Semi, "';'")?;
        if operands.len() != expected {
            return self.syntax(
                format!("'{name}' with {} modifier(s) needs {expected} operand(s), found {}",
                    modifiers.len(), operands.len()),
                nspan,
            );
        }
        for (k, (q, qspan)) in operands.iter().enumerate() {
            if operands[..k].iter().any(|(other, _)| other == q) {
                return self.syntax(format!("duplicate qubit operand q[{q}]"), *qspan);
            }
        }

        let gate = make_gate(&name, angle);
        let mut controls: Vec<Ctrl> = Vec::new();
        let mut rest = operands.into_iter().map(|(q, _)| q);
        for pol in modifiers {
            controls.push(Ctrl { index: rest.next().unwrap(), pol });
        }
        for _ in 0..sig.implicit_controls {
            controls.push(Ctrl::pos(rest.next().unwrap()));
        }
        let targets: Vec<usize> = rest.collect();

        if matches!(gate, GateKind::GlobalPhase(_)) && controls.is_empty() && guards.is_empty() {
            // unobservable overall phase: fold into the accumulator
            self.global_phase += angle.unwrap();
            return Ok(());
        }
        self.body.push(Instruction::Apply { gate, targets, controls, guards });
        Ok(())
    }

    /// `sign? factor (('*'|'/') factor)*` with factor = number | pi.
    fn angle(&mut self) -> Result<f64, QasmError> {
        let sign = match self.peek() {
            Some(Token { tok: Tok::Minus, .. }) => {
                self.bump();
                -1.0
            }
            Some(Token { tok: Tok::Plus, .. }) => {
                self.bump();
                1.0
            }
            _ => 1.0,
        };
        let mut value = self.angle_factor()?;
        loop {
            match self.peek() {
                Some(Token { tok: Tok::Star, .. }) => {
                    self.bump();
                    value *= self.angle_factor()?;
                }
                Some(Token { tok: Tok::Slash, .. }) => {
                    self.bump();
                    let span = self.here();
                    let d = self.angle_factor()?;
                    if d == 0.0 {
                        return self.syntax("division by zero in angle", span);
                    }
                    value /= d;
                }
                _ => break,
            }
        }
        Ok(sign * value)
    }

    fn angle_factor(&mut self) -> Result<f64, QasmError> {
        match self.bump() {
            Some(Token { tok: Tok::Number(v), .. }) => Ok(v),
            Some(Token { tok: Tok::Ident(s), span }) => {
                if s == "pi" {
                    Ok(std::f64::consts::PI)
                } else {
                    self.syntax(format!("expected number or 'pi', found '{s}'"), span)
                }
            }
            Some(t) => {
                self.syntax(format!("expected number or 'pi', found {}", t.tok.describe()), t.span)
            }
            None => self.syntax("expected number or 'pi', found end of input", self.eof),
        }
    }
}

struct GateSig {
    has_angle: bool,
    arity: usize,
    implicit_controls: usize,
}

fn gate_signature(name: &str) -> Option<GateSig> {
    let (has_angle, arity, implicit_controls) = match name {
        "h" | "x" | "y" | "z" | "s" | "sdg" | "t" | "tdg" => (false, 1, 0),
        "p" | "rx" | "ry" | "rz" => (true, 1, 0),
        "swap" => (false, 2, 0),
        "cx" | "cz" => (false, 1, 1),
        "ccx" => (false, 1, 2),
        "gphase" => (true, 0, 0),
        _ => return None,
    };
    Some(GateSig { has_angle, arity, implicit_controls })
}

fn make_gate(name: &str, angle: Option<f64>) -> GateKind {
    match name {
        "h" => GateKind::H,
        "x" | "cx" | "ccx" => GateKind::X,
        "y" => GateKind::Y,
        "z" | "cz" => GateKind::Z,
        "s" => GateKind::S,
        "sdg" => GateKind::Sdg,
        "t" => GateKind::T,
        "tdg" => GateKind::Tdg,
        "p" => GateKind::Phase(angle.unwrap()),
        "rx" => GateKind::Rx(angle.unwrap()),
        "ry" => GateKind::Ry(angle.unwrap()),
        "rz" => GateKind::Rz(angle.unwrap()),
        "swap" => GateKind::Swap,
        "gphase" => GateKind::GlobalPhase(angle.unwrap()),
        _ => unreachable!("gate_signature admitted '{name}'"),
    }
}

/// Parses a program in the accepted subset.
pub fn parse(src: &str) -> Result<ParseOutput, QasmError> {
    Parser::new(src)?.run()
}

// ---------------------------------------------------------------------------
// emitter

/// Formats an angle, preferring exact multiples of pi over decimal literals.
/// A form `k*pi/d` is used only when re-evaluating it reproduces the exact
/// same floating-point value.
pub fn angle_string(theta: f64) -> String {
    if theta == 0.0 {
        return "0".into();
    }
    for d in [1i64, 2, 4, 8, 16] {
        let step = std::f64::consts::PI / d as f64;
        let k = (theta / step).round();
        if k == 0.0 || k.abs() > 64.0 {
            continue;
        }
        let candidate = k * std::f64::consts::PI / d as f64;
        if candidate == theta {
            let k = k as i64;
            let numerator = match k {
                1 => "pi".to_string(),
                -1 => "-pi".to_string(),
                _ => format!("{k}*pi"),
            };
            return if d == 1 { numerator } else { format!("{numerator}/{d}") };
        }
    }
    format!("{theta}")
}

fn gate_call_text(gate: &GateKind) -> String {
    match gate {
        GateKind::Phase(t) => format!("p({})", angle_string(*t)),
        GateKind::Rx(t) => format!("rx({})", angle_string(*t)),
        GateKind::Ry(t) => format!("ry({})", angle_string(*t)),
        GateKind::Rz(t) => format!("rz({})", angle_string(*t)),
        GateKind::GlobalPhase(t) => format!("gphase({})", angle_string(*t)),
        other => other.name().to_string(),
    }
}

/// Renders one instruction as a statement (no trailing newline).
pub fn emit_instruction(instr: &Instruction) -> String {
    match instr {
        Instruction::Measure { qubit, register } => {
            format!("c[{register}] = measure q[{qubit}];")
        }
        Instruction::Reset { qubit } => format!("reset q[{qubit}];"),
        Instruction::Apply { gate, targets, controls, guards } => {
            let mut s = String::new();
            for g in guards {
                match g.pol {
                    Polarity::Pos => s.push_str(&format!("if (c[{}]) ", g.index)),
                    Polarity::Neg => s.push_str(&format!("if (!c[{}]) ", g.index)),
                }
            }
            let all_pos = controls.iter().all(|c| c.pol == Polarity::Pos);
            let shorthand = match (gate, controls.len()) {
                (GateKind::X, 1) if all_pos => {
                    Some(format!("cx q[{}], q[{}];", controls[0].index, targets[0]))
                }
                (GateKind::X, 2) if all_pos => Some(format!(
                    "ccx q[{}], q[{}], q[{}];",
                    controls[0].index, controls[1].index, targets[0]
                )),
                (GateKind::Z, 1) if all_pos => {
                    Some(format!("cz q[{}], q[{}];", controls[0].index, targets[0]))
                }
                _ => None,
            };
            if let Some(short) = shorthand {
                s.push_str(&short);
            } else {
                for c in controls {
                    s.push_str(match c.pol {
                        Polarity::Pos => "ctrl @ ",
                        Polarity::Neg => "negctrl @ ",
                    });
                }
                s.push_str(&gate_call_text(gate));
                let operands: Vec<String> = controls
                    .iter()
                    .map(|c| c.index)
                    .chain(targets.iter().copied())
                    .map(|q| format!("q[{q}]"))
                    .collect();
                if !operands.is_empty() {
                    s.push(' ');
                    s.push_str(&operands.join(", "));
                }
                s.push(';');
            }
            s
        }
    }
}

/// Writes a circuit back out in the accepted subset. The result re-parses to
/// the same circuit (see the module note on bare global-phase instructions).
pub fn emit(circuit: &Circuit) -> String {
    let mut out = String::new();
    out.push_str("OPENQASM 3.0;\n");
    out.push_str("include \"stdgates.inc\";\n");
    out.push_str(&format!("qubit[{}] q;\n", circuit.n));
    out.push_str(&format!("bit[{}] c;\n", circuit.m));
    for instr in &circuit.body {
        out.push_str(&emit_instruction(instr));
        out.push('\n');
    }
    if circuit.global_phase != 0.0 {
        out.push_str(&format!("gphase({});\n", angle_string(circuit.global_phase)));
    }
    out
}
