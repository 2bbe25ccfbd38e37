//! Reader and canonical writer for the OpenQASM 2 subset used as input and
//! output: one `qreg`, the gates `h x y z s sdg t tdg cx rz u1`, and angle
//! expressions built from numbers, `pi`, `+ - * /` and parentheses.
//!
//! `rz` angles become optimizable parameters in order of appearance; `u1`
//! denotes a rotation frozen at its angle.

use std::f64::consts::PI;
use std::fmt;

use crate::circuit::{Circuit, Gate, GateKind, ParamVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceDiagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub severity: Severity,
}

impl fmt::Display for SourceDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {}: {}", self.line, self.column, sev, self.message)
    }
}

struct Statement<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

/// Splits source into `;`-terminated statements, dropping `//` comments.
fn statements(src: &str) -> (Vec<Statement<'_>>, Option<SourceDiagnostic>) {
    let mut out = Vec::new();
    for (ln, raw) in src.lines().enumerate() {
        let line = raw.find("//").map_or(raw, |i| &raw[..i]);
        let mut start = 0;
        for (i, ch) in line.char_indices() {
            if ch == ';' {
                push_stmt(&mut out, line, start, i, ln + 1);
                start = i + 1;
            }
        }
        if !line[start..].trim().is_empty() {
            let col = start + (line[start..].len() - line[start..].trim_start().len()) + 1;
            return (
                out,
                Some(SourceDiagnostic {
                    line: ln + 1,
                    column: col,
                    message: "statement is missing a terminating ';'".into(),
                    severity: Severity::Error,
                }),
            );
        }
    }
    (out, None)
}

fn push_stmt<'a>(out: &mut Vec<Statement<'a>>, line: &'a str, start: usize, end: usize, ln: usize) {
    let piece = &line[start..end];
    let trimmed = piece.trim();
    if trimmed.is_empty() {
        return;
    }
    let lead = piece.len() - piece.trim_start().len();
    out.push(Statement { text: trimmed, line: ln, column: start + lead + 1 });
}

/// Recursive-descent evaluator for angle expressions.
struct ExprParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> ExprParser<'a> {
    fn new(s: &'a str) -> Self {
        ExprParser { src: s.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn parse(mut self) -> std::result::Result<f64, (usize, String)> {
        let v = self.sum()?;
        if let Some(c) = self.peek() {
            return Err((self.pos, format!("unexpected '{}' in expression", c as char)));
        }
        if !v.is_finite() {
            return Err((0, "expression is not finite".into()));
        }
        Ok(v)
    }

    fn sum(&mut self) -> std::result::Result<f64, (usize, String)> {
        let mut v = self.product()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.product()?;
            v = if op == b'+' { v + rhs } else { v - rhs };
        }
        Ok(v)
    }

    fn product(&mut self) -> std::result::Result<f64, (usize, String)> {
        let mut v = self.unary()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            v = if op == b'*' { v * rhs } else { v / rhs };
        }
        Ok(v)
    }

    fn unary(&mut self) -> std::result::Result<f64, (usize, String)> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> std::result::Result<f64, (usize, String)> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let v = self.sum()?;
                if self.peek() != Some(b')') {
                    return Err((self.pos, "expected ')'".into()));
                }
                self.pos += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                if word == "pi" {
                    Ok(PI)
                } else {
                    Err((start, format!("unknown identifier '{word}' in expression")))
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len() {
                    let c = self.src[self.pos];
                    let exp_sign = (c == b'-' || c == b'+')
                        && self.pos > start
                        && matches!(self.src[self.pos - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                text.parse::<f64>().map_err(|_| (start, format!("malformed number '{text}'")))
            }
            Some(c) => Err((self.pos, format!("unexpected '{}' in expression", c as char))),
            None => Err((self.pos, "empty expression".into())),
        }
    }
}

/// Byte offset of the `)` closing the `(` at offset 0.
fn matching_paren(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses `name[index]`.
fn parse_indexed(s: &str) -> Option<(&str, usize)> {
    let s = s.trim();
    let open = s.find('[')?;
    if !s.ends_with(']') {
        return None;
    }
    let name = s[..open].trim();
    let idx = s[open + 1..s.len() - 1].trim().parse().ok()?;
    is_ident(name).then_some((name, idx))
}

struct Parser {
    diags: Vec<SourceDiagnostic>,
    reg: Option<(String, usize)>,
    gates: Vec<Gate>,
    params: ParamVector,
}

impl Parser {
    fn error(&mut self, line: usize, column: usize, message: impl Into<String>) {
        self.diags.push(SourceDiagnostic { line, column, message: message.into(), severity: Severity::Error });
    }

    fn statement(&mut self, st: &Statement<'_>) {
        let text = st.text;
        let head_end = text.find(|c: char| c.is_whitespace() || c == '(').unwrap_or(text.len());
        let head = &text[..head_end];
        let rest = &text[head_end..];
        match head {
            "OPENQASM" => {
                if rest.trim() != "2.0" {
                    self.error(st.line, st.column, format!("unsupported version '{}'", rest.trim()));
                }
            }
            "include" => {}
            "qreg" => self.qreg(st, rest),
            "creg" | "measure" | "barrier" | "reset" | "gate" | "opaque" | "if" => {
                self.error(st.line, st.column, format!("'{head}' is not supported"));
            }
            _ => self.gate(st, head, rest),
        }
    }

    fn qreg(&mut self, st: &Statement<'_>, rest: &str) {
        if self.reg.is_some() {
            self.error(st.line, st.column, "only one qreg declaration is supported");
            return;
        }
        match parse_indexed(rest) {
            Some((name, n)) if n >= 1 => self.reg = Some((name.to_string(), n)),
            _ => self.error(st.line, st.column, "malformed qreg declaration"),
        }
    }

    fn gate(&mut self, st: &Statement<'_>, head: &str, rest: &str) {
        let col = st.column;
        let kind_arity = match head {
            "h" => Some((GateKind::H, 1)),
            "x" => Some((GateKind::X, 1)),
            "y" => Some((GateKind::Y, 1)),
            "z" => Some((GateKind::Z, 1)),
            "s" => Some((GateKind::S, 1)),
            "sdg" => Some((GateKind::Sdg, 1)),
            "t" => Some((GateKind::T, 1)),
            "tdg" => Some((GateKind::Tdg, 1)),
            "cx" | "CX" => Some((GateKind::CX, 2)),
            "rz" | "u1" => None,
            _ => {
                self.error(st.line, col, format!("unknown gate '{head}'"));
                return;
            }
        };
        let (angle, operands, operand_col) = if kind_arity.is_none() {
            let rest_trim = rest.trim_start();
            let offset = head.len() + (rest.len() - rest_trim.len());
            if !rest_trim.starts_with('(') {
                self.error(st.line, col + offset, format!("'{head}' needs an angle argument"));
                return;
            }
            let Some(close) = matching_paren(rest_trim) else {
                self.error(st.line, col + offset, "missing ')'");
                return;
            };
            let expr = &rest_trim[1..close];
            match ExprParser::new(expr).parse() {
                Ok(v) => (Some(v), &rest_trim[close + 1..], col + offset + close + 1),
                Err((pos, msg)) => {
                    self.error(st.line, col + offset + 1 + pos, msg);
                    return;
                }
            }
        } else {
            if rest.trim_start().starts_with('(') {
                self.error(st.line, col + head.len(), format!("'{head}' takes no arguments"));
                return;
            }
            (None, rest, col + head.len())
        };
        let Some((reg_name, size)) = self.reg.clone() else {
            self.error(st.line, col, "gate used before qreg declaration");
            return;
        };
        let mut qubits = Vec::new();
        for op in operands.split(',') {
            match parse_indexed(op) {
                Some((name, idx)) if name == reg_name => {
                    if idx >= size {
                        self.error(st.line, operand_col, format!("qubit index {idx} out of range for {name}[{size}]"));
                        return;
                    }
                    qubits.push(idx);
                }
                Some((name, _)) => {
                    self.error(st.line, operand_col, format!("unknown register '{name}'"));
                    return;
                }
                None => {
                    self.error(st.line, operand_col, format!("malformed operand '{}'", op.trim()));
                    return;
                }
            }
        }
        let (kind, arity) = match (head, angle) {
            ("rz", Some(_)) => (GateKind::Rz(self.params.len()), 1),
            ("u1", Some(a)) => (GateKind::FixedRz(a), 1),
            (_, _) => kind_arity.expect("fixed gate"),
        };
        if qubits.len() != arity {
            self.error(st.line, col, format!("'{head}' expects {arity} qubit(s), got {}", qubits.len()));
            return;
        }
        if arity == 2 && qubits[0] == qubits[1] {
            self.error(st.line, col, "two-qubit gate needs distinct qubits");
            return;
        }
        if let (GateKind::Rz(_), Some(a)) = (kind, angle) {
            self.params.push(a);
        }
        self.gates.push(Gate { kind, qubits });
    }
}

/// Parses source text into a circuit and its initial rotation angles.
pub fn parse(src: &str) -> Result<(Circuit, ParamVector)> {
    let (stmts, tail) = statements(src);
    let mut p = Parser { diags: Vec::new(), reg: None, gates: Vec::new(), params: Vec::new() };
    for st in &stmts {
        p.statement(st);
    }
    if let Some(d) = tail {
        p.diags.push(d);
    }
    if p.reg.is_none() && p.diags.is_empty() {
        p.error(1, 1, "missing qreg declaration");
    }
    if !p.diags.is_empty() {
        return Err(Error::Parse(p.diags));
    }
    let (_, n) = p.reg.expect("checked above");
    let circuit = Circuit::from_gates(n, p.gates)?;
    Ok((circuit, p.params))
}

/// `k·π/2^m` (m ≤ 4) as an exact expression when `value` is within 1e−12.
fn rational_pi(value: f64) -> Option<String> {
    let k = (value * 16.0 / PI).round();
    if k.abs() > 1e9 || (value - k * PI / 16.0).abs() > 1e-12 {
        return None;
    }
    let mut num = k as i64;
    let mut den = 16i64;
    while den > 1 && num % 2 == 0 {
        num /= 2;
        den /= 2;
    }
    if num == 0 {
        return Some("0".into());
    }
    let sign = if num < 0 { "-" } else { "" };
    let mag = num.unsigned_abs();
    let head = if mag == 1 { format!("{sign}pi") } else { format!("{sign}{mag}*pi") };
    Some(if den == 1 { head } else { format!("{head}/{den}") })
}

/// 17 significant digits, positional where the exponent is moderate.
fn decimal17(value: f64) -> String {
    if value == 0.0 {
        return "0.0".into();
    }
    let exp = value.abs().log10().floor() as i32;
    if (-5..17).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, value)
    } else {
        format!("{value:.16e}")
    }
}

pub fn format_angle(value: f64) -> String {
    rational_pi(value).unwrap_or_else(|| decimal17(value))
}

/// Canonical text: fixed header, one gate per line.
pub fn emit(circuit: &Circuit, params: &[f64]) -> String {
    let mut out = String::new();
    out.push_str("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    out.push_str(&format!("qreg q[{}];\n", circuit.num_qubits()));
    for g in circuit.gates() {
        let name = match g.kind {
            GateKind::H => "h".to_string(),
            GateKind::X => "x".into(),
            GateKind::Y => "y".into(),
            GateKind::Z => "z".into(),
            GateKind::S => "s".into(),
            GateKind::Sdg => "sdg".into(),
            GateKind::T => "t".into(),
            GateKind::Tdg => "tdg".into(),
            GateKind::CX => "cx".into(),
            GateKind::Rz(p) => format!("rz({})", format_angle(params[p])),
            GateKind::FixedRz(a) => format!("u1({})", format_angle(a)),
        };
        let ops: Vec<String> = g.qubits.iter().map(|q| format!("q[{q}]")).collect();
        out.push_str(&format!("{name} {};\n", ops.join(",")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_minimal_programs() {
        let (c, p) = parse("qreg q[1]; t q[0];").unwrap();
        assert_eq!(c.num_qubits(), 1);
        assert_eq!(c.t_count(), 1);
        assert_eq!(c.num_params(), 0);
        assert!(p.is_empty());

        let (c, p) = parse("qreg q[2]; cx q[0],q[1]; rz(pi/4) q[1];").unwrap();
        assert_eq!(c.num_params(), 1);
        assert_eq!(p, vec![PI / 4.0]);
        assert_eq!(c.gates()[0], Gate::new(GateKind::CX, &[0, 1]));
    }

    #[test]
    fn parses_expressions() {
        let src = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\n// comment\n\nqreg a[3];\nrz(3*pi/8) a[0]; rz(-pi/2) a[1];\nrz(0.125) a[2]; // trailing\nrz(-1.5e-3) a[0];\nrz((pi+pi)/4) a[1];\n";
        let (c, p) = parse(src).unwrap();
        assert_eq!(c.num_params(), 5);
        assert_eq!(p, vec![3.0 * PI / 8.0, -PI / 2.0, 0.125, -1.5e-3, PI / 2.0]);
    }

    fn diag_of(src: &str) -> Vec<SourceDiagnostic> {
        match parse(src) {
            Err(Error::Parse(d)) => d,
            other => panic!("expected diagnostics, got {other:?}"),
        }
    }

    #[test]
    fn reports_located_diagnostics() {
        let d = diag_of("qreg q[2];\nfoo q[0];\n");
        assert_eq!((d[0].line, d[0].column), (2, 1));
        assert!(d[0].message.contains("unknown gate"));

        let d = diag_of("qreg q[2];\ncx q[0];\n");
        assert!(d[0].message.contains("expects 2"));

        let d = diag_of("qreg q[2];\n  rz(pi/) q[0];\n");
        assert_eq!(d[0].line, 2);
        assert!(d[0].column > 3);

        let d = diag_of("qreg q[2];\nh q[5];\n");
        assert!(d[0].message.contains("out of range"));

        let d = diag_of("qreg q[2];\nh q[0]\n");
        assert!(d[0].message.contains("';'"));

        let d = diag_of("h q[0];");
        assert!(d[0].message.contains("before qreg"));

        let d = diag_of("qreg q[1];\ncreg c[1];\nrz(foo) q[0];\n");
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].line, 3);

        assert!(!diag_of("").is_empty());
    }

    #[test]
    fn emits_canonical_text() {
        let c = Circuit::new(2);
        assert_eq!(emit(&c, &[]), "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\n");

        let mut c = Circuit::new(2);
        c.push(GateKind::T, &[1]);
        c.cx(0, 1);
        c.rz(0);
        c.rz(1);
        c.push(GateKind::FixedRz(PI / 8.0), &[0]);
        let text = emit(&c, &[-3.0 * PI / 4.0, 0.1]);
        assert!(text.contains("t q[1];\n"));
        assert!(text.contains("cx q[0],q[1];\n"));
        assert!(text.contains("rz(-3*pi/4) q[0];\n"));
        assert!(text.contains("rz(0.10000000000000001) q[1];\n"));
        assert!(text.contains("u1(pi/8) q[0];\n"));
    }

    #[test]
    fn angle_formats() {
        assert_eq!(format_angle(0.0), "0");
        assert_eq!(format_angle(PI), "pi");
        assert_eq!(format_angle(2.0 * PI), "2*pi");
        assert_eq!(format_angle(-PI / 16.0), "-pi/16");
        assert_eq!(format_angle(5.0 * PI / 16.0), "5*pi/16");
        assert_eq!(format_angle(1e-3), "0.0010000000000000000");
        assert_eq!(format_angle(1e-7), "9.9999999999999995e-8");
        assert_eq!(format_angle(12345.5), "12345.500000000000");
        assert_eq!(format_angle(3e-9).parse::<f64>().unwrap(), 3e-9);
    }

    fn arb_circuit() -> impl Strategy<Value = (Circuit, Vec<f64>)> {
        (1usize..=4, prop::collection::vec((0u8..12, 0usize..4, 0usize..4, -10.0f64..10.0, 0i32..40), 0..30))
            .prop_map(|(n, raw)| {
                let mut c = Circuit::new(n);
                let mut params = Vec::new();
                for (kind, a, b, angle, k) in raw {
                    let (a, b) = (a % n, b % n);
                    match kind {
                        0 => {
                            c.h(a);
                        }
                        1 => {
                            c.push(GateKind::T, &[a]);
                        }
                        2 => {
                            c.push(GateKind::Sdg, &[a]);
                        }
                        3 => {
                            c.push(GateKind::Y, &[a]);
                        }
                        4 if a != b => {
                            c.cx(a, b);
                        }
                        5 => {
                            c.push(GateKind::FixedRz(k as f64 * PI / 8.0), &[a]);
                        }
                        6 | 7 => {
                            c.rz(a);
                            params.push((k - 20) as f64 * PI / 16.0);
                        }
                        _ => {
                            c.rz(a);
                            params.push(angle);
                        }
                    }
                }
                (c, params)
            })
    }

    proptest! {
        #[test]
        fn emit_parse_round_trip((c, params) in arb_circuit()) {
            let text = emit(&c, &params);
            let (back, back_params) = parse(&text).unwrap();
            prop_assert_eq!(back.gates(), c.gates());
            prop_assert_eq!(back.num_qubits(), c.num_qubits());
            prop_assert_eq!(&back_params, &params);
            prop_assert_eq!(emit(&back, &back_params), text);
        }
    }
}
