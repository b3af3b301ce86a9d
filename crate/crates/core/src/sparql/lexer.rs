//! Tokenizer for the SPARQL query subset checked by the validator.

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    IriRef(String),
    /// Prefixed name; `local` is empty for a bare `prefix:`.
    PName {
        prefix: String,
        local: String,
    },
    BlankLabel(String),
    Var(String),
    Str(String),
    LangTag(String),
    Integer(String),
    Decimal(String),
    Double(String),
    /// Bare word: keyword, function name, `a`, `true`, `false`.
    Name(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Dot,
    Comma,
    Semicolon,
    Star,
    Slash,
    Pipe,
    Caret,
    DoubleCaret,
    Bang,
    QMark,
    Plus,
    Minus,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    And,
    Or,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::IriRef(i) => format!("<{i}>"),
            Tok::PName { prefix, local } => format!("{prefix}:{local}"),
            Tok::BlankLabel(l) => format!("_:{l}"),
            Tok::Var(v) => format!("?{v}"),
            Tok::Str(_) => "string literal".into(),
            Tok::LangTag(t) => format!("@{t}"),
            Tok::Integer(n) | Tok::Decimal(n) | Tok::Double(n) => n.clone(),
            Tok::Name(n) => n.clone(),
            Tok::Eof => "end of query".into(),
            other => format!("'{}'", other.punct()),
        }
    }

    fn punct(&self) -> &'static str {
        match self {
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Dot => ".",
            Tok::Comma => ",",
            Tok::Semicolon => ";",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Pipe => "|",
            Tok::Caret => "^",
            Tok::DoubleCaret => "^^",
            Tok::Bang => "!",
            Tok::QMark => "?",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::And => "&&",
            Tok::Or => "||",
            _ => "",
        }
    }

    /// Case-insensitive keyword test for [`Tok::Name`].
    pub fn is_kw(&self, kw: &str) -> bool {
        matches!(self, Tok::Name(n) if n.eq_ignore_ascii_case(kw))
    }
}

#[derive(Debug, Clone)]
pub struct Spanned {
    pub tok: Tok,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexError {
    pub offset: usize,
    pub message: String,
}

pub fn tokenize(src: &str) -> Result<Vec<Spanned>, LexError> {
    let mut lexer = Lexer {
        src,
        bytes: src.as_bytes(),
        pos: 0,
    };
    let mut out = Vec::new();
    loop {
        lexer.skip_trivia();
        let offset = lexer.pos;
        let tok = lexer.next_token()?;
        let done = tok == Tok::Eof;
        out.push(Spanned { tok, offset });
        if done {
            return Ok(out);
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

fn is_name_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

impl<'a> Lexer<'a> {
    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn char_at(&self, pos: usize) -> Option<char> {
        self.src.get(pos..).and_then(|s| s.chars().next())
    }

    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, LexError> {
        Err(LexError {
            offset,
            message: message.into(),
        })
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek_char() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else if c == '#' {
                while let Some(c) = self.peek_char() {
                    self.pos += c.len_utf8();
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self) -> Result<Tok, LexError> {
        let start = self.pos;
        let Some(c) = self.peek_char() else {
            return Ok(Tok::Eof);
        };
        let next = self.char_at(start + c.len_utf8());
        let single = |lexer: &mut Self, tok: Tok| {
            lexer.pos += 1;
            Ok(tok)
        };
        match c {
            '{' => single(self, Tok::LBrace),
            '}' => single(self, Tok::RBrace),
            '(' => single(self, Tok::LParen),
            ')' => single(self, Tok::RParen),
            '[' => single(self, Tok::LBracket),
            ']' => single(self, Tok::RBracket),
            ',' => single(self, Tok::Comma),
            ';' => single(self, Tok::Semicolon),
            '*' => single(self, Tok::Star),
            '/' => single(self, Tok::Slash),
            '+' => single(self, Tok::Plus),
            '-' => single(self, Tok::Minus),
            '=' => single(self, Tok::Eq),
            '.' if !next.is_some_and(|n| n.is_ascii_digit()) => single(self, Tok::Dot),
            '.' => self.number(),
            '0'..='9' => self.number(),
            '^' if next == Some('^') => {
                self.pos += 2;
                Ok(Tok::DoubleCaret)
            }
            '^' => single(self, Tok::Caret),
            '|' if next == Some('|') => {
                self.pos += 2;
                Ok(Tok::Or)
            }
            '|' => single(self, Tok::Pipe),
            '&' if next == Some('&') => {
                self.pos += 2;
                Ok(Tok::And)
            }
            '!' if next == Some('=') => {
                self.pos += 2;
                Ok(Tok::Ne)
            }
            '!' => single(self, Tok::Bang),
            '>' if next == Some('=') => {
                self.pos += 2;
                Ok(Tok::Ge)
            }
            '>' => single(self, Tok::Gt),
            '<' => self.iri_or_lt(),
            '?' | '$' => {
                self.pos += 1;
                let name = self.take_while(|c| c.is_alphanumeric() || c == '_');
                if name.is_empty() {
                    if c == '?' {
                        Ok(Tok::QMark)
                    } else {
                        self.err(start, "'$' must be followed by a variable name")
                    }
                } else {
                    Ok(Tok::Var(name))
                }
            }
            '"' | '\'' => self.string(c),
            '@' => {
                self.pos += 1;
                let tag = self.take_while(|c| c.is_ascii_alphanumeric() || c == '-');
                if tag.is_empty() {
                    self.err(start, "empty language tag")
                } else {
                    Ok(Tok::LangTag(tag))
                }
            }
            '_' if next == Some(':') => {
                self.pos += 2;
                let label = self.take_local();
                if label.is_empty() {
                    self.err(start, "empty blank node label")
                } else {
                    Ok(Tok::BlankLabel(label))
                }
            }
            ':' => {
                self.pos += 1;
                Ok(Tok::PName {
                    prefix: String::new(),
                    local: self.take_local(),
                })
            }
            c if is_name_start(c) => {
                let word = self.take_while(|c| is_name_char(c) || c == '.');
                // trailing dots belong to the pattern, not the name
                let trimmed = word.trim_end_matches('.');
                self.pos -= word.len() - trimmed.len();
                let word = trimmed.to_string();
                if self.peek_char() == Some(':') {
                    self.pos += 1;
                    Ok(Tok::PName {
                        prefix: word,
                        local: self.take_local(),
                    })
                } else if word.contains('.') {
                    self.err(start, format!("unexpected '.' in name '{word}'"))
                } else {
                    Ok(Tok::Name(word))
                }
            }
            other => self.err(start, format!("unexpected character '{other}'")),
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let start = self.pos;
        while let Some(c) = self.peek_char() {
            if !pred(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
        self.src[start..self.pos].to_string()
    }

    /// Local part of a prefixed name; may not end in '.'.
    fn take_local(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek_char() {
            if is_name_char(c) || c == '.' || c == ':' {
                self.pos += c.len_utf8();
            } else if c == '%'
                && self.bytes.get(self.pos + 1).is_some_and(u8::is_ascii_hexdigit)
                && self.bytes.get(self.pos + 2).is_some_and(u8::is_ascii_hexdigit)
            {
                self.pos += 3;
            } else if c == '\\' && self.char_at(self.pos + 1).is_some_and(|n| "_~.-!$&'()*+,;=/?#@%".contains(n)) {
                self.pos += 2;
            } else {
                break;
            }
        }
        while self.pos > start && self.bytes[self.pos - 1] == b'.' {
            self.pos -= 1;
        }
        self.src[start..self.pos].to_string()
    }

    fn iri_or_lt(&mut self) -> Result<Tok, LexError> {
        let start = self.pos;
        let mut pos = start + 1;
        while let Some(c) = self.char_at(pos) {
            if c == '>' {
                self.pos = pos + 1;
                return Ok(Tok::IriRef(self.src[start + 1..pos].to_string()));
            }
            if c.is_whitespace() || c.is_control() || "<\"{}|^`\\".contains(c) {
                break;
            }
            pos += c.len_utf8();
        }
        if self.char_at(start + 1) == Some('=') {
            self.pos += 2;
            Ok(Tok::Le)
        } else {
            self.pos += 1;
            Ok(Tok::Lt)
        }
    }

    fn number(&mut self) -> Result<Tok, LexError> {
        let start = self.pos;
        let digits = |l: &mut Self| l.take_while(|c| c.is_ascii_digit()).len();
        let int_len = digits(self);
        let mut is_decimal = false;
        if self.peek_char() == Some('.') && self.char_at(self.pos + 1).is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
            digits(self);
            is_decimal = true;
        } else if int_len == 0 {
            return self.err(start, "malformed number");
        }
        if matches!(self.peek_char(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek_char(), Some('+' | '-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return self.err(start, "malformed exponent");
            }
            return Ok(Tok::Double(self.src[start..self.pos].to_string()));
        }
        let text = self.src[start..self.pos].to_string();
        Ok(if is_decimal {
            Tok::Decimal(text)
        } else {
            Tok::Integer(text)
        })
    }

    fn string(&mut self, quote: char) -> Result<Tok, LexError> {
        let start = self.pos;
        let q = quote as u8;
        let long = self.bytes.get(start + 1) == Some(&q) && self.bytes.get(start + 2) == Some(&q);
        self.pos += if long { 3 } else { 1 };
        let mut value = String::new();
        loop {
            let Some(c) = self.peek_char() else {
                return self.err(start, "unterminated string literal");
            };
            if c == quote {
                if !long {
                    self.pos += 1;
                    return Ok(Tok::Str(value));
                }
                if self.bytes.get(self.pos + 1) == Some(&q) && self.bytes.get(self.pos + 2) == Some(&q) {
                    self.pos += 3;
                    return Ok(Tok::Str(value));
                }
                value.push(c);
                self.pos += 1;
            } else if c == '\\' {
                let esc_at = self.pos;
                self.pos += 1;
                let Some(e) = self.peek_char() else {
                    return self.err(start, "unterminated string literal");
                };
                self.pos += e.len_utf8();
                match e {
                    't' => value.push('\t'),
                    'b' => value.push('\u{8}'),
                    'n' => value.push('\n'),
                    'r' => value.push('\r'),
                    'f' => value.push('\u{c}'),
                    '"' | '\'' | '\\' => value.push(e),
                    'u' | 'U' => {
                        let n = if e == 'u' { 4 } else { 8 };
                        let hex = self.src.get(self.pos..self.pos + n).unwrap_or("");
                        match u32::from_str_radix(hex, 16).ok().and_then(char::from_u32) {
                            Some(ch) if hex.len() == n => {
                                value.push(ch);
                                self.pos += n;
                            }
                            _ => return self.err(esc_at, "invalid unicode escape"),
                        }
                    }
                    _ => return self.err(esc_at, format!("invalid escape '\\{e}'")),
                }
            } else if !long && (c == '\n' || c == '\r') {
                return self.err(start, "unterminated string literal");
            } else {
                value.push(c);
                self.pos += c.len_utf8();
            }
        }
    }
}
