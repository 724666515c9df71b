use super::CypherError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    Match,
    Where,
    Return,
    Limit,
    And,
}

impl Keyword {
    fn from_word(word: &str) -> Option<Self> {
        let kw = match word.to_ascii_uppercase().as_str() {
            "MATCH" => Keyword::Match,
            "WHERE" => Keyword::Where,
            "RETURN" => Keyword::Return,
            "LIMIT" => Keyword::Limit,
            "AND" => Keyword::And,
            _ => return None,
        };
        Some(kw)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Match => "MATCH",
            Keyword::Where => "WHERE",
            Keyword::Return => "RETURN",
            Keyword::Limit => "LIMIT",
            Keyword::And => "AND",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Keyword(Keyword),
    Identifier,
    Integer,
    StringLiteral,
    Punct(char),
}

/// A lexeme with its raw source text and character offset.
///
/// String literal text keeps its quotes, so joining token texts with the
/// skipped whitespace reproduces the input exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub offset: usize,
}

impl Token {
    /// Literal contents without the surrounding quotes.
    pub fn literal_value(&self) -> &str {
        match self.kind {
            TokenKind::StringLiteral => &self.text[1..self.text.len() - 1],
            _ => &self.text,
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            TokenKind::Keyword(k) => k.as_str().to_string(),
            TokenKind::Identifier => format!("identifier `{}`", self.text),
            TokenKind::Integer => format!("integer {}", self.text),
            TokenKind::StringLiteral => format!("string {}", self.text),
            TokenKind::Punct(c) => format!("`{c}`"),
        }
    }
}

const PUNCTUATION: &[char] = &['(', ')', '[', ']', '{', '}', ':', ',', '.', '-', '<', '>', '='];

pub fn tokenize(text: &str) -> Result<Vec<Token>, CypherError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c == '"' || c == '\'' {
            i += 1;
            while i < chars.len() && chars[i] != c {
                i += 1;
            }
            if i == chars.len() {
                return Err(CypherError::UnterminatedString { offset: start });
            }
            i += 1;
            tokens.push(Token {
                kind: TokenKind::StringLiteral,
                text: chars[start..i].iter().collect(),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let kind = match Keyword::from_word(&word) {
                Some(kw) => TokenKind::Keyword(kw),
                None => TokenKind::Identifier,
            };
            tokens.push(Token {
                kind,
                text: word,
                offset: start,
            });
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Integer,
                text: chars[start..i].iter().collect(),
                offset: start,
            });
        } else if PUNCTUATION.contains(&c) {
            i += 1;
            tokens.push(Token {
                kind: TokenKind::Punct(c),
                text: c.to_string(),
                offset: start,
            });
        } else {
            return Err(CypherError::UnexpectedChar {
                ch: c,
                offset: start,
            });
        }
    }
    Ok(tokens)
}
