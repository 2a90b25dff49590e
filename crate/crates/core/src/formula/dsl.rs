//! Text form of formulae, e.g.
//!
//! ```text
//! s(Temp, bs=cr, k=10) + smooth(Temp, alpha=0.95, bs=cr, k=10) + cat(Day)
//!   + te(Temp, cat(Day, days=[6,7]), bs=(cr,cat), k=(5,7)) | Q=[1e-6, 1e-6, 1e-5, 1e-4]
//! ```
//!
//! The grammar is documented in `docs/formula-dsl.md`. [`write_model`] emits
//! the canonical spelling, which [`parse_model`] reads back to an equal value.

use std::fmt;

use thiserror::Error;

use super::{
    AdaptiveModel, BasisSpec, Effect, EngineeredCovariate, FeatureEngineering, Formula, Marginal,
    MarginalFamily,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at line {line}, column {column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eq,
    Plus,
    Pipe,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Number(s) => write!(f, "`{s}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Pipe => f.write_str("`|`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut column) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column };
        if c == '\n' {
            i += 1;
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            column += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Eq),
            '+' => Some(Tok::Plus),
            '|' => Some(Tok::Pipe),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, pos));
            i += 1;
            column += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
        } else if c.is_ascii_digit() || c == '.' || (c == '-' && i + 1 < chars.len()) {
            if c == '-' {
                i += 1;
            }
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '-' || chars[i] == '+') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            out.push((Tok::Number(chars[start..i].iter().collect()), pos));
        } else {
            return Err(ParseError {
                line,
                column,
                expected: "a token".into(),
                found: format!("`{c}`"),
            });
        }
        column += i - start;
    }
    out.push((Tok::Eof, Pos { line, column }));
    Ok(out)
}

#[derive(Debug, Clone)]
enum Value {
    Ident(String, Pos),
    Number(String, Pos),
    Call(Call),
    List(Vec<Value>, Pos),
    Tuple(Vec<Value>, Pos),
}

impl Value {
    fn pos(&self) -> Pos {
        match self {
            Value::Ident(_, p) | Value::Number(_, p) | Value::List(_, p) | Value::Tuple(_, p) => *p,
            Value::Call(c) => c.pos,
        }
    }

    fn describe(&self) -> String {
        match self {
            Value::Ident(s, _) | Value::Number(s, _) => format!("`{s}`"),
            Value::Call(c) => format!("`{}(...)`", c.head),
            Value::List(..) => "a list".into(),
            Value::Tuple(..) => "a tuple".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Call {
    head: String,
    pos: Pos,
    positional: Vec<Value>,
    keywords: Vec<(String, Pos, Value)>,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
}

fn err(pos: Pos, expected: impl Into<String>, found: impl Into<String>) -> ParseError {
    ParseError {
        line: pos.line,
        column: pos.column,
        expected: expected.into(),
        found: found.into(),
    }
}

impl Parser {
    fn peek(&self) -> &(Tok, Pos) {
        &self.toks[self.i]
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Pos, ParseError> {
        let (t, p) = self.next();
        if t == want {
            Ok(p)
        } else {
            Err(err(p, what, t.to_string()))
        }
    }

    fn call(&mut self) -> Result<Call, ParseError> {
        let (t, pos) = self.next();
        let head = match t {
            Tok::Ident(s) => s,
            other => return Err(err(pos, "a term such as `s(...)`", other.to_string())),
        };
        self.expect(Tok::LParen, "`(`")?;
        let mut call = Call {
            head,
            pos,
            positional: Vec::new(),
            keywords: Vec::new(),
        };
        if self.peek().0 == Tok::RParen {
            self.next();
            return Ok(call);
        }
        loop {
            let (t, p) = self.peek().clone();
            let is_keyword = matches!(t, Tok::Ident(_)) && self.toks[self.i + 1].0 == Tok::Eq;
            if is_keyword {
                let Tok::Ident(name) = t else { unreachable!() };
                self.next();
                self.next();
                let v = self.value()?;
                call.keywords.push((name, p, v));
            } else {
                if !call.keywords.is_empty() {
                    return Err(err(p, "a keyword argument `name=value`", t.to_string()));
                }
                call.positional.push(self.value()?);
            }
            let (t, p) = self.next();
            match t {
                Tok::Comma => continue,
                Tok::RParen => break,
                other => return Err(err(p, "`,` or `)`", other.to_string())),
            }
        }
        Ok(call)
    }

    fn value(&mut self) -> Result<Value, ParseError> {
        let (t, p) = self.peek().clone();
        match t {
            Tok::Ident(s) => {
                if self.toks[self.i + 1].0 == Tok::LParen {
                    Ok(Value::Call(self.call()?))
                } else {
                    self.next();
                    Ok(Value::Ident(s, p))
                }
            }
            Tok::Number(s) => {
                self.next();
                Ok(Value::Number(s, p))
            }
            Tok::LBracket | Tok::LParen => {
                let close = if t == Tok::LBracket {
                    Tok::RBracket
                } else {
                    Tok::RParen
                };
                self.next();
                let mut items = Vec::new();
                if self.peek().0 != close {
                    loop {
                        items.push(self.value()?);
                        let (t, q) = self.next();
                        if t == Tok::Comma {
                            continue;
                        }
                        if t == close {
                            break;
                        }
                        return Err(err(q, format!("`,` or {close}"), t.to_string()));
                    }
                } else {
                    self.next();
                }
                Ok(if close == Tok::RBracket {
                    Value::List(items, p)
                } else {
                    Value::Tuple(items, p)
                })
            }
            other => Err(err(p, "a value", other.to_string())),
        }
    }
}

/// Parses a model (formula with optional `| Q=[...]` suffix).
pub fn parse_model(text: &str) -> Result<AdaptiveModel, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        i: 0,
    };
    let mut effects = Vec::new();
    loop {
        let call = p.call()?;
        effects.push(effect_from_call(&call)?);
        match p.peek().0 {
            Tok::Plus => {
                p.next();
            }
            _ => break,
        }
    }
    let mut q_diag = None;
    if p.peek().0 == Tok::Pipe {
        p.next();
        let (t, pos) = p.next();
        if t != Tok::Ident("Q".into()) {
            return Err(err(pos, "`Q`", t.to_string()));
        }
        p.expect(Tok::Eq, "`=`")?;
        let v = p.value()?;
        let Value::List(items, _) = v else {
            return Err(err(v.pos(), "a list `[q1, ...]`", v.describe()));
        };
        q_diag = Some(items.iter().map(number).collect::<Result<Vec<f64>, _>>()?);
    }
    let (t, pos) = p.next();
    if t != Tok::Eof {
        return Err(err(pos, "`+`, `|` or end of input", t.to_string()));
    }
    Ok(AdaptiveModel {
        formula: Formula { effects },
        q_diag,
    })
}

fn number(v: &Value) -> Result<f64, ParseError> {
    match v {
        Value::Number(s, p) => s
            .parse::<f64>()
            .map_err(|_| err(*p, "a number", format!("`{s}`"))),
        other => Err(err(other.pos(), "a number", other.describe())),
    }
}

fn integer(v: &Value) -> Result<usize, ParseError> {
    match v {
        Value::Number(s, p) => s
            .parse::<usize>()
            .map_err(|_| err(*p, "a non-negative integer", format!("`{s}`"))),
        other => Err(err(other.pos(), "a non-negative integer", other.describe())),
    }
}

fn name(v: &Value) -> Result<String, ParseError> {
    match v {
        Value::Ident(s, _) => Ok(s.clone()),
        other => Err(err(other.pos(), "a covariate name", other.describe())),
    }
}

fn int_list(v: &Value) -> Result<Vec<usize>, ParseError> {
    match v {
        Value::List(items, _) => items.iter().map(integer).collect(),
        other => Err(err(other.pos(), "a list `[i, ...]`", other.describe())),
    }
}

fn bits(v: &Value) -> Result<Vec<bool>, ParseError> {
    match v {
        Value::Number(s, _) if s.chars().all(|c| c == '0' || c == '1') => {
            Ok(s.chars().map(|c| c == '1').collect())
        }
        other => Err(err(
            other.pos(),
            "a bit string such as `0110`",
            other.describe(),
        )),
    }
}

fn family_name(v: &Value) -> Result<(String, Pos), ParseError> {
    match v {
        Value::Ident(s, p) if ["lin", "cr", "cc", "cat"].contains(&s.as_str()) => {
            Ok((s.clone(), *p))
        }
        other => Err(err(
            other.pos(),
            "one of `lin`, `cr`, `cc`, `cat`",
            other.describe(),
        )),
    }
}

/// Keyword arguments of one call, consumed as they are interpreted.
struct Kwargs<'a> {
    call: &'a Call,
    used: Vec<bool>,
}

impl<'a> Kwargs<'a> {
    fn new(call: &'a Call) -> Self {
        Kwargs {
            call,
            used: vec![false; call.keywords.len()],
        }
    }

    fn take(&mut self, key: &str) -> Result<Option<&'a Value>, ParseError> {
        let mut found = None;
        for (i, (k, p, v)) in self.call.keywords.iter().enumerate() {
            if k == key {
                if found.is_some() {
                    return Err(err(
                        *p,
                        format!("a single `{key}=`"),
                        format!("repeated `{key}`"),
                    ));
                }
                self.used[i] = true;
                found = Some(v);
            }
        }
        Ok(found)
    }

    fn engineering(&mut self) -> Result<FeatureEngineering, ParseError> {
        let mut eng = FeatureEngineering::Identity;
        let set = |e: FeatureEngineering, pos: Pos, eng: &mut FeatureEngineering| {
            if *eng != FeatureEngineering::Identity {
                return Err(err(pos, "at most one engineering argument", "a second one"));
            }
            *eng = e;
            Ok(())
        };
        if let Some(v) = self.take("alpha")? {
            set(
                FeatureEngineering::ExpSmooth { alpha: number(v)? },
                v.pos(),
                &mut eng,
            )?;
        }
        if let Some(v) = self.take("select")? {
            set(
                FeatureEngineering::CategorySelect { select: bits(v)? },
                v.pos(),
                &mut eng,
            )?;
        }
        if let Some(v) = self.take("days")? {
            let days = int_list(v)?.into_iter().map(|d| d as u32).collect();
            set(FeatureEngineering::DaySet { days }, v.pos(), &mut eng)?;
        }
        if let Some(v) = self.take("offsets")? {
            set(
                FeatureEngineering::LagSet {
                    offsets: int_list(v)?,
                },
                v.pos(),
                &mut eng,
            )?;
        }
        Ok(eng)
    }

    fn finish(self) -> Result<(), ParseError> {
        for (i, (k, p, _)) in self.call.keywords.iter().enumerate() {
            if !self.used[i] {
                return Err(err(
                    *p,
                    format!("a keyword accepted by `{}`", self.call.head),
                    format!("`{k}`"),
                ));
            }
        }
        Ok(())
    }
}

fn single_positional(call: &Call) -> Result<String, ParseError> {
    match call.positional.as_slice() {
        [v] => name(v),
        [] => Err(err(
            call.pos,
            format!("a covariate in `{}(...)`", call.head),
            "none",
        )),
        [_, extra, ..] => Err(err(extra.pos(), "a keyword argument", extra.describe())),
    }
}

fn effect_from_call(call: &Call) -> Result<Effect, ParseError> {
    if call.head == "te" {
        return tensor_from_call(call);
    }
    let covariate = single_positional(call)?;
    let mut kw = Kwargs::new(call);
    let engineering = kw.engineering()?;
    let required = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(err(
                call.pos,
                format!("`{what}=` in `{}(...)`", call.head),
                "nothing",
            ))
        }
    };
    let basis = match call.head.as_str() {
        "lin" => BasisSpec::Linear,
        "cat" => BasisSpec::Categorical,
        "s" | "smooth" | "lag" => {
            match call.head.as_str() {
                "smooth" => required(
                    matches!(engineering, FeatureEngineering::ExpSmooth { .. }),
                    "alpha",
                )?,
                "lag" => required(
                    matches!(engineering, FeatureEngineering::LagSet { .. }),
                    "offsets",
                )?,
                _ => {}
            }
            let family = kw.take("bs")?.map(family_name).transpose()?;
            let k = kw.take("k")?.map(integer).transpose()?;
            let fam = family.as_ref().map(|(f, _)| f.as_str()).unwrap_or("cr");
            match (fam, k) {
                ("lin", None) => BasisSpec::Linear,
                ("cat", None) => BasisSpec::Categorical,
                ("lin" | "cat", Some(_)) => {
                    let p = family.map(|f| f.1).unwrap_or(call.pos);
                    return Err(err(p, "no `k=` for this basis", "`k`"));
                }
                ("cr", Some(k)) => BasisSpec::CubicSpline { k },
                ("cc", Some(k)) => BasisSpec::CyclicSpline { k },
                (_, None) => {
                    return Err(err(
                        call.pos,
                        format!("`k=` in `{}(...)`", call.head),
                        "nothing",
                    ))
                }
                _ => unreachable!(),
            }
        }
        other => {
            return Err(err(
                call.pos,
                "one of `lin`, `s`, `cat`, `smooth`, `lag`, `te`",
                format!("`{other}`"),
            ))
        }
    };
    kw.finish()?;
    Ok(Effect {
        covariates: vec![EngineeredCovariate::new(covariate, engineering)],
        basis,
    })
}

fn tensor_argument(v: &Value) -> Result<(EngineeredCovariate, MarginalFamily), ParseError> {
    match v {
        Value::Ident(s, _) => Ok((
            EngineeredCovariate::identity(s.clone()),
            MarginalFamily::Cubic,
        )),
        Value::Call(c) if ["smooth", "cat", "lag"].contains(&c.head.as_str()) => {
            let covariate = single_positional(c)?;
            let mut kw = Kwargs::new(c);
            let engineering = kw.engineering()?;
            kw.finish()?;
            let family = if c.head == "cat" {
                MarginalFamily::Categorical
            } else {
                MarginalFamily::Cubic
            };
            Ok((EngineeredCovariate::new(covariate, engineering), family))
        }
        other => Err(err(
            other.pos(),
            "a covariate, `smooth(...)`, `lag(...)` or `cat(...)`",
            other.describe(),
        )),
    }
}

fn tensor_from_call(call: &Call) -> Result<Effect, ParseError> {
    let (a, b) = match call.positional.as_slice() {
        [a, b] => (a, b),
        [] | [_] => return Err(err(call.pos, "two covariates in `te(...)`", "fewer")),
        [_, _, extra, ..] => return Err(err(extra.pos(), "a keyword argument", extra.describe())),
    };
    let (ca, mut fa) = tensor_argument(a)?;
    let (cb, mut fb) = tensor_argument(b)?;
    let mut kw = Kwargs::new(call);
    if let Some(v) = kw.take("bs")? {
        let Value::Tuple(items, p) = v else {
            return Err(err(v.pos(), "a pair `(cr,cr)`", v.describe()));
        };
        if items.len() != 2 {
            return Err(err(
                *p,
                "a pair `(cr,cr)`",
                format!("{} entries", items.len()),
            ));
        }
        let pick = |v: &Value| -> Result<MarginalFamily, ParseError> {
            match family_name(v)?.0.as_str() {
                "cr" => Ok(MarginalFamily::Cubic),
                "cc" => Ok(MarginalFamily::Cyclic),
                "cat" => Ok(MarginalFamily::Categorical),
                _ => Err(err(v.pos(), "one of `cr`, `cc`, `cat`", v.describe())),
            }
        };
        fa = pick(&items[0])?;
        fb = pick(&items[1])?;
    }
    let Some(k) = kw.take("k")? else {
        return Err(err(call.pos, "`k=(k1,k2)` in `te(...)`", "nothing"));
    };
    let Value::Tuple(sizes, p) = k else {
        return Err(err(k.pos(), "a pair `(k1,k2)`", k.describe()));
    };
    if sizes.len() != 2 {
        return Err(err(
            *p,
            "a pair `(k1,k2)`",
            format!("{} entries", sizes.len()),
        ));
    }
    kw.finish()?;
    Ok(Effect::tensor(
        ca,
        cb,
        (
            Marginal {
                family: fa,
                size: integer(&sizes[0])?,
            },
            Marginal {
                family: fb,
                size: integer(&sizes[1])?,
            },
        ),
    ))
}

fn engineering_kwarg(e: &FeatureEngineering) -> Option<String> {
    match e {
        FeatureEngineering::Identity => None,
        FeatureEngineering::ExpSmooth { alpha } => Some(format!("alpha={alpha}")),
        FeatureEngineering::CategorySelect { select } => Some(format!(
            "select={}",
            select
                .iter()
                .map(|&b| if b { '1' } else { '0' })
                .collect::<String>()
        )),
        FeatureEngineering::DaySet { days } => Some(format!("days={}", list(days))),
        FeatureEngineering::LagSet { offsets } => Some(format!("offsets={}", list(offsets))),
    }
}

fn list<T: fmt::Display>(v: &[T]) -> String {
    format!(
        "[{}]",
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",")
    )
}

fn family_token(b: &BasisSpec) -> &'static str {
    match b {
        BasisSpec::Linear => "lin",
        BasisSpec::CubicSpline { .. } => "cr",
        BasisSpec::CyclicSpline { .. } => "cc",
        BasisSpec::Categorical => "cat",
        BasisSpec::TensorProduct { .. } => "te",
    }
}

fn write_effect(e: &Effect) -> String {
    if let BasisSpec::TensorProduct { first, second } = &e.basis {
        let arg = |c: &EngineeredCovariate, m: &Marginal| -> String {
            match (&c.engineering, m.family) {
                (FeatureEngineering::Identity, MarginalFamily::Categorical) => {
                    format!("cat({})", c.name)
                }
                (FeatureEngineering::Identity, _) => c.name.clone(),
                (eng @ FeatureEngineering::ExpSmooth { .. }, _) => {
                    format!("smooth({}, {})", c.name, engineering_kwarg(eng).unwrap())
                }
                (eng @ FeatureEngineering::LagSet { .. }, _) => {
                    format!("lag({}, {})", c.name, engineering_kwarg(eng).unwrap())
                }
                (eng, _) => format!("cat({}, {})", c.name, engineering_kwarg(eng).unwrap()),
            }
        };
        let fam = |m: &Marginal| match m.family {
            MarginalFamily::Cubic => "cr",
            MarginalFamily::Cyclic => "cc",
            MarginalFamily::Categorical => "cat",
        };
        let names: Vec<String> = match e.covariates.as_slice() {
            [a, b] => vec![arg(a, first), arg(b, second)],
            other => other.iter().map(|c| c.name.clone()).collect(),
        };
        return format!(
            "te({}, bs=({},{}), k=({},{}))",
            names.join(", "),
            fam(first),
            fam(second),
            first.size,
            second.size
        );
    }

    let names: Vec<&str> = e.covariates.iter().map(|c| c.name.as_str()).collect();
    let Some(c) = e.covariates.first() else {
        return "lin()".to_string();
    };
    let subject = names.join(", ");
    let eng = engineering_kwarg(&c.engineering);
    let size = match &e.basis {
        BasisSpec::CubicSpline { k } | BasisSpec::CyclicSpline { k } => Some(*k),
        _ => None,
    };
    let head = match (&c.engineering, &e.basis) {
        (
            FeatureEngineering::ExpSmooth { .. },
            BasisSpec::Linear | BasisSpec::CubicSpline { .. } | BasisSpec::CyclicSpline { .. },
        ) => "smooth",
        (
            FeatureEngineering::LagSet { .. },
            BasisSpec::Linear | BasisSpec::CubicSpline { .. } | BasisSpec::CyclicSpline { .. },
        ) => "lag",
        (_, BasisSpec::Linear) => "lin",
        (_, BasisSpec::Categorical) => "cat",
        _ => "s",
    };
    let mut parts = vec![subject];
    parts.extend(eng);
    let explicit_basis = matches!(head, "s" | "smooth" | "lag");
    if explicit_basis {
        parts.push(format!("bs={}", family_token(&e.basis)));
        if let Some(k) = size {
            parts.push(format!("k={k}"));
        }
    }
    format!("{head}({})", parts.join(", "))
}

pub fn write_formula(f: &Formula) -> String {
    f.effects
        .iter()
        .map(write_effect)
        .collect::<Vec<_>>()
        .join(" + ")
}

pub fn write_model(m: &AdaptiveModel) -> String {
    let mut s = write_formula(&m.formula);
    if let Some(q) = &m.q_diag {
        let entries: Vec<String> = q.iter().map(|x| format!("{x:e}")).collect();
        s.push_str(&format!(" | Q=[{}]", entries.join(", ")));
    }
    s
}
