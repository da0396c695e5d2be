//! Regular expression surface syntax for path queries.
//!
//! Grammar (highest precedence first):
//!
//! ```text
//! postfix  :=  atom ('*' | '+' | '?')*
//! concat   :=  postfix ('/' postfix)*
//! alt      :=  concat ('|' concat)*
//! atom     :=  LABEL | '(' alt ')'
//! LABEL    :=  [A-Za-z0-9_:.]+
//! ```
//!
//! Whitespace between tokens is ignored. Error positions are byte
//! offsets into the query string.

use super::QueryError;

/// Abstract syntax tree of a path regular expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegexAst {
    Epsilon,
    Atom(String),
    Concat(Box<RegexAst>, Box<RegexAst>),
    Alt(Box<RegexAst>, Box<RegexAst>),
    Star(Box<RegexAst>),
    Plus(Box<RegexAst>),
    Optional(Box<RegexAst>),
}

impl RegexAst {
    pub fn atom(text: &str) -> Self {
        RegexAst::Atom(text.to_owned())
    }

    pub fn concat(left: RegexAst, right: RegexAst) -> Self {
        RegexAst::Concat(Box::new(left), Box::new(right))
    }

    pub fn alt(left: RegexAst, right: RegexAst) -> Self {
        RegexAst::Alt(Box::new(left), Box::new(right))
    }

    pub fn star(inner: RegexAst) -> Self {
        RegexAst::Star(Box::new(inner))
    }

    pub fn plus(inner: RegexAst) -> Self {
        RegexAst::Plus(Box::new(inner))
    }

    pub fn optional(inner: RegexAst) -> Self {
        RegexAst::Optional(Box::new(inner))
    }

    /// All distinct label texts mentioned by the expression, in first-use order.
    pub fn labels(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            RegexAst::Epsilon => {}
            RegexAst::Atom(a) => {
                if !out.contains(&a.as_str()) {
                    out.push(a);
                }
            }
            RegexAst::Concat(l, r) | RegexAst::Alt(l, r) => {
                l.collect_labels(out);
                r.collect_labels(out);
            }
            RegexAst::Star(c) | RegexAst::Plus(c) | RegexAst::Optional(c) => c.collect_labels(out),
        }
    }
}

fn is_label_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | ':' | '.')
}

struct Parser<'a> {
    input: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(input: &'a str) -> Self {
        Parser { input, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.input[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.input.len() - trimmed.len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn error(&self, message: &str) -> QueryError {
        QueryError::Syntax { offset: self.pos, message: message.to_owned() }
    }

    fn parse_alt(&mut self) -> Result<RegexAst, QueryError> {
        let mut node = self.parse_concat()?;
        while self.peek() == Some('|') {
            self.bump();
            let rhs = self.parse_concat()?;
            node = RegexAst::alt(node, rhs);
        }
        Ok(node)
    }

    fn parse_concat(&mut self) -> Result<RegexAst, QueryError> {
        let mut node = self.parse_postfix()?;
        while self.peek() == Some('/') {
            self.bump();
            let rhs = self.parse_postfix()?;
            node = RegexAst::concat(node, rhs);
        }
        Ok(node)
    }

    fn parse_postfix(&mut self) -> Result<RegexAst, QueryError> {
        let mut node = self.parse_atom()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.bump();
                    node = RegexAst::star(node);
                }
                Some('+') => {
                    self.bump();
                    node = RegexAst::plus(node);
                }
                Some('?') => {
                    self.bump();
                    node = RegexAst::optional(node);
                }
                _ => return Ok(node),
            }
        }
    }

    fn parse_atom(&mut self) -> Result<RegexAst, QueryError> {
        match self.peek() {
            Some('(') => {
                self.bump();
                let inner = self.parse_alt()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.bump();
                Ok(inner)
            }
            Some(c) if is_label_char(c) => {
                self.skip_ws();
                let start = self.pos;
                while self.rest().chars().next().map_or(false, is_label_char) {
                    self.pos += 1;
                }
                Ok(RegexAst::atom(&self.input[start..self.pos]))
            }
            Some(_) => Err(self.error("expected label or '('")),
            None => Err(self.error("unexpected end of expression")),
        }
    }
}

/// Parse a query string into its syntax tree.
pub fn parse_regex(text: &str) -> Result<RegexAst, QueryError> {
    if text.trim().is_empty() {
        return Err(QueryError::Syntax { offset: 0, message: "empty expression".to_owned() });
    }
    let mut parser = Parser::new(text);
    let ast = parser.parse_alt()?;
    parser.skip_ws();
    if parser.pos != text.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(ast)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_example_query() {
        let ast = parse_regex("(follows/mentions)+").unwrap();
        assert_eq!(
            ast,
            RegexAst::plus(RegexAst::concat(
                RegexAst::atom("follows"),
                RegexAst::atom("mentions")
            ))
        );
    }

    #[test]
    fn single_atom() {
        assert_eq!(parse_regex("a").unwrap(), RegexAst::atom("a"));
    }

    #[test]
    fn star_binds_tighter_than_alt() {
        assert_eq!(
            parse_regex("a|b*").unwrap(),
            RegexAst::alt(RegexAst::atom("a"), RegexAst::star(RegexAst::atom("b")))
        );
    }

    #[test]
    fn concat_binds_tighter_than_alt() {
        assert_eq!(
            parse_regex("a/b|c").unwrap(),
            RegexAst::alt(
                RegexAst::concat(RegexAst::atom("a"), RegexAst::atom("b")),
                RegexAst::atom("c")
            )
        );
    }

    #[test]
    fn unbalanced_paren_reports_offset() {
        let err = parse_regex("a/(").unwrap_err();
        match err {
            QueryError::Syntax { offset, .. } => assert_eq!(offset, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_rejected() {
        assert!(parse_regex("   ").is_err());
    }

    #[test]
    fn label_charset() {
        let ast = parse_regex("foaf:knows/schema.name_2").unwrap();
        assert_eq!(ast.labels(), vec!["foaf:knows", "schema.name_2"]);
    }

    #[test]
    fn whitespace_tolerated() {
        assert_eq!(parse_regex(" a / b ").unwrap(), parse_regex("a/b").unwrap());
    }
}
