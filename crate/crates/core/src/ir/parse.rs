use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use super::{is_special, Arg, AssociateTarget, Calc, IntermediateCall, Op, PlaceholderRef, Value, Verb};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownVerb(String),
    DuplicateKey(String),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: ", self.line, self.column)?;
        match &self.kind {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::UnknownVerb(v) => write!(
                f,
                "unknown verb `{v}` (expected CREATE, SEARCH, UPDATE, DELETE or ASSOCIATE)"
            ),
            ParseErrorKind::DuplicateKey(k) => write!(f, "duplicate key `{k}`"),
        }
    }
}

/// Parses a single call. Surrounding whitespace is ignored.
pub fn parse(text: &str) -> Result<IntermediateCall, ParseError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((n, line)) = lines.next() else {
        return Err(ParseError { kind: ParseErrorKind::Syntax("empty input".into()), line: 1, column: 1 });
    };
    if let Some((m, _)) = lines.next() {
        return Err(ParseError {
            kind: ParseErrorKind::Syntax("expected a single call".into()),
            line: m + 1,
            column: 1,
        });
    }
    Parser::new(line, n + 1).call()
}

/// Parses one call per non-empty line. Lines starting with `#` and code
/// fence markers are skipped.
pub fn parse_lines(text: &str) -> Result<Vec<IntermediateCall>, ParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("```") {
            continue;
        }
        out.push(Parser::new(line, i + 1).call()?);
    }
    Ok(out)
}

/// Parses a standalone value, e.g. the inside of a placeholder sentinel.
pub fn parse_value(text: &str) -> Result<Value, ParseError> {
    let mut p = Parser::new(text, 1);
    p.skip_ws();
    let v = p.value()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.err("trailing input after value"));
    }
    Ok(v)
}

pub(crate) enum NumLit {
    Int(i64),
    Float(f64),
    Overflow,
}

/// Recognizes `-?\d+(\.\d+)?([eE][+-]?\d+)?`.
pub(crate) fn number_literal(s: &str) -> Option<NumLit> {
    let b = s.as_bytes();
    let mut i = 0;
    if b.first() == Some(&b'-') {
        i += 1;
    }
    let digits = |i: &mut usize| {
        let start = *i;
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
        *i > start
    };
    if !digits(&mut i) {
        return None;
    }
    let mut float = false;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        if !digits(&mut i) {
            return None;
        }
        float = true;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        if !digits(&mut i) {
            return None;
        }
        float = true;
    }
    if i != b.len() {
        return None;
    }
    if float {
        s.parse::<f64>().ok().filter(|f| f.is_finite()).map(NumLit::Float).or(Some(NumLit::Overflow))
    } else {
        Some(s.parse::<i64>().map_or(NumLit::Overflow, NumLit::Int))
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_key_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

impl Parser {
    fn new(text: &str, line: usize) -> Self {
        Parser { chars: text.chars().collect(), pos: 0, line }
    }

    fn err_kind(&self, kind: ParseErrorKind, at: usize) -> ParseError {
        ParseError { kind, line: self.line, column: at + 1 }
    }

    fn err(&self, msg: &str) -> ParseError {
        self.err_kind(ParseErrorKind::Syntax(msg.to_string()), self.pos)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn skip_ws(&mut self) -> bool {
        let start = self.pos;
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
        self.pos > start
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{c}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        if !self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
            return Err(self.err(&format!("expected {what}")));
        }
        Ok(self.take_while(|c| c.is_ascii_alphanumeric() || c == '_'))
    }

    fn item_end(&mut self) -> Result<(), ParseError> {
        if self.at_end() || self.peek().is_some_and(char::is_whitespace) {
            Ok(())
        } else {
            Err(self.err("expected whitespace between items"))
        }
    }

    fn call(&mut self) -> Result<IntermediateCall, ParseError> {
        self.skip_ws();
        let verb_at = self.pos;
        let word = self.take_while(|c| !c.is_whitespace());
        if word.is_empty() {
            return Err(self.err("empty call"));
        }
        let verb = Verb::parse(&word)
            .ok_or_else(|| self.err_kind(ParseErrorKind::UnknownVerb(word.clone()), verb_at))?;
        if !self.skip_ws() {
            return Err(self.err("expected object type"));
        }
        let object_type = self.ident("object type")?;
        self.item_end()?;
        let mut call = IntermediateCall::new(verb, &object_type);
        let mut include_seen = false;
        loop {
            self.skip_ws();
            if self.at_end() {
                break;
            }
            let item_at = self.pos;
            if self.peek() == Some('-') && self.peek_at(1) == Some('>') {
                self.pos += 2;
                if call.target.is_some() {
                    return Err(self.err_kind(ParseErrorKind::Syntax("duplicate `->` target".into()), item_at));
                }
                if !self.skip_ws() {
                    return Err(self.err("expected target object type"));
                }
                let object_type = self.ident("target object type")?;
                if !self.skip_ws() {
                    return Err(self.err("expected target id"));
                }
                let id = self.value()?;
                self.item_end()?;
                call.target = Some(AssociateTarget { object_type, id });
                continue;
            }
            if let Some((key, op)) = self.try_key()? {
                let value_at = self.pos;
                let value = self.value()?;
                self.item_end()?;
                if key == "include" {
                    if op != Op::Eq {
                        return Err(self.err_kind(ParseErrorKind::Syntax("include takes `=`".into()), item_at));
                    }
                    if include_seen {
                        return Err(self.err_kind(ParseErrorKind::DuplicateKey(key), item_at));
                    }
                    include_seen = true;
                    call.include = include_list(value).ok_or_else(|| {
                        self.err_kind(
                            ParseErrorKind::Syntax("include expects a list of property names".into()),
                            value_at,
                        )
                    })?;
                    continue;
                }
                // A SEARCH may bound one property from both sides.
                let dup = call.args.iter().any(|a| a.key == key && (verb != Verb::Search || a.op == op))
                    || (key == "id" && verb != Verb::Search && call.id.is_some());
                if dup {
                    return Err(self.err_kind(ParseErrorKind::DuplicateKey(key), item_at));
                }
                call.args.push(Arg { key, op, value });
                continue;
            }
            let positional_ok = call.id.is_none()
                && call.args.is_empty()
                && call.target.is_none()
                && !include_seen;
            if !positional_ok {
                return Err(self.err("unexpected value; expected key=value"));
            }
            call.id = Some(self.value()?);
            self.item_end()?;
        }
        call.normalize();
        Ok(call)
    }

    /// Reads `key<op>` if present; otherwise leaves the position untouched.
    fn try_key(&mut self) -> Result<Option<(String, Op)>, ParseError> {
        if !self.peek().is_some_and(is_ident_start) {
            return Ok(None);
        }
        let start = self.pos;
        let key = self.take_while(is_key_char);
        let op = match (self.peek(), self.peek_at(1)) {
            (Some('!'), Some('=')) => Some((Op::Neq, 2)),
            (Some('>'), Some('=')) => Some((Op::Gte, 2)),
            (Some('<'), Some('=')) => Some((Op::Lte, 2)),
            (Some('='), _) => Some((Op::Eq, 1)),
            (Some('>'), _) => Some((Op::Gt, 1)),
            (Some('<'), _) => Some((Op::Lt, 1)),
            (Some('~'), _) => Some((Op::Contains, 1)),
            _ => None,
        };
        match op {
            Some((op, len)) => {
                if key.ends_with('.') || key.contains("..") {
                    return Err(self.err_kind(ParseErrorKind::Syntax(format!("malformed key `{key}`")), start));
                }
                self.pos += len;
                Ok(Some((key, op)))
            }
            None => {
                self.pos = start;
                Ok(None)
            }
        }
    }

    fn value(&mut self) -> Result<Value, ParseError> {
        match self.peek() {
            None => Err(self.err("expected value")),
            Some('"') => Ok(Value::Str(self.quoted()?)),
            Some('[') => self.list(),
            Some('$') => self.reference(),
            Some(_) => {
                let start = self.pos;
                let word = self.take_while(|c| !is_special(c));
                if word.is_empty() {
                    return Err(self.err("expected value"));
                }
                if word == "calc" && self.peek() == Some('(') {
                    return self.calc();
                }
                match number_literal(&word) {
                    Some(NumLit::Int(i)) => return Ok(Value::Int(i)),
                    Some(NumLit::Float(f)) => return Ok(Value::Float(f)),
                    Some(NumLit::Overflow) => {
                        return Err(self.err_kind(
                            ParseErrorKind::Syntax(format!("number out of range: {word}")),
                            start,
                        ))
                    }
                    None => {}
                }
                Ok(match word.as_str() {
                    "true" => Value::Bool(true),
                    "false" => Value::Bool(false),
                    _ => Value::Str(word),
                })
            }
        }
    }

    fn quoted(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        self.expect('"')?;
        let mut s = String::new();
        loop {
            match self.peek() {
                None => {
                    return Err(self.err_kind(ParseErrorKind::Syntax("unterminated string".into()), start))
                }
                Some('"') => {
                    self.pos += 1;
                    return Ok(s);
                }
                Some('\\') => {
                    let esc = match self.peek_at(1) {
                        Some('"') => '"',
                        Some('\\') => '\\',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('t') => '\t',
                        _ => return Err(self.err("invalid escape")),
                    };
                    s.push(esc);
                    self.pos += 2;
                }
                Some(c) => {
                    s.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn list(&mut self) -> Result<Value, ParseError> {
        self.expect('[')?;
        let mut items = Vec::new();
        self.skip_ws();
        if self.peek() == Some(']') {
            self.pos += 1;
            return Ok(Value::List(items));
        }
        loop {
            self.skip_ws();
            items.push(self.value()?);
            self.skip_ws();
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(']') => {
                    self.pos += 1;
                    return Ok(Value::List(items));
                }
                _ => return Err(self.err("expected `,` or `]`")),
            }
        }
    }

    fn reference(&mut self) -> Result<Value, ParseError> {
        let start = self.pos;
        self.expect('$')?;
        let digits = self.take_while(|c| c.is_ascii_digit());
        let step: u32 = digits
            .parse()
            .map_err(|_| self.err_kind(ParseErrorKind::Syntax("expected step number after `$`".into()), start))?;
        if step == 0 {
            return Err(self.err_kind(ParseErrorKind::Syntax("step index must be at least 1".into()), start));
        }
        let mut path = Vec::new();
        while self.peek() == Some('.') {
            self.pos += 1;
            let seg = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
            if seg.is_empty() {
                return Err(self.err("expected path segment"));
            }
            path.push(seg);
        }
        if path.is_empty() {
            return Err(self.err_kind(
                ParseErrorKind::Syntax("placeholder needs a field path, e.g. `$1.id`".into()),
                start,
            ));
        }
        Ok(Value::Ref(PlaceholderRef { step, path }))
    }

    fn calc(&mut self) -> Result<Value, ParseError> {
        self.expect('(')?;
        self.skip_ws();
        if self.peek() != Some('"') {
            return Err(self.err("calc expects a quoted instruction"));
        }
        let instruction = self.quoted()?;
        self.skip_ws();
        let operand = if self.peek() == Some(',') {
            self.pos += 1;
            self.skip_ws();
            let v = self.value()?;
            self.skip_ws();
            Some(Box::new(v))
        } else {
            None
        };
        self.expect(')')?;
        Ok(Value::Calc(Calc { instruction, operand }))
    }
}

fn include_list(v: Value) -> Option<Vec<String>> {
    match v {
        Value::Str(s) => Some(alloc::vec![s]),
        Value::List(items) => items
            .into_iter()
            .map(|i| match i {
                Value::Str(s) => Some(s),
                _ => None,
            })
            .collect(),
        _ => None,
    }
}
