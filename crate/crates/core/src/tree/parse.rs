use super::ops::{BinaryOp, Channel, UnaryOp, CONSTANTS};
use super::{ActivationTree, Node};
use crate::error::{Error, Result};

#[derive(Debug, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(s: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((i, Tok::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::Close));
                i += 1;
            }
            b if b.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'(' && bytes[i] != b')' {
                    i += 1;
                }
                out.push((start, Tok::Atom(&s[start..i])));
            }
        }
    }
    out
}

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek_pos(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn next(&mut self) -> Option<&(usize, Tok<'a>)> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Node> {
        let at = self.peek_pos();
        match self.next() {
            None => Err(Error::Syntax {
                pos: at,
                msg: "unexpected end of input".into(),
            }),
            Some((p, Tok::Close)) => Err(Error::Syntax {
                pos: *p,
                msg: "unexpected `)`".into(),
            }),
            Some((p, Tok::Atom(a))) => atom(a, *p),
            Some((_, Tok::Open)) => {
                let op_pos = self.peek_pos();
                let name = match self.next() {
                    Some((_, Tok::Atom(a))) => *a,
                    _ => {
                        return Err(Error::Syntax {
                            pos: op_pos,
                            msg: "expected operator after `(`".into(),
                        })
                    }
                };
                let node = if let Some(op) = UnaryOp::from_token(name) {
                    Node::Unary(op, Box::new(self.expr()?))
                } else if let Some(op) = BinaryOp::from_token(name) {
                    let a = self.expr()?;
                    let b = self.expr()?;
                    Node::Binary(op, Box::new(a), Box::new(b))
                } else {
                    return Err(Error::UnknownOperator {
                        token: name.to_string(),
                        pos: op_pos,
                    });
                };
                let close_pos = self.peek_pos();
                match self.next() {
                    Some((_, Tok::Close)) => Ok(node),
                    _ => Err(Error::Syntax {
                        pos: close_pos,
                        msg: format!("expected `)` closing `{name}`"),
                    }),
                }
            }
        }
    }
}

fn atom(a: &str, pos: usize) -> Result<Node> {
    if let Some(ch) = Channel::from_token(a) {
        return Ok(Node::Terminal(ch));
    }
    match a.parse::<f64>() {
        Ok(v) if CONSTANTS.contains(&v) => Ok(Node::Constant(if v == 0.0 { 0.0 } else { v })),
        Ok(v) => Err(Error::Syntax {
            pos,
            msg: format!("constant {v} is not in the terminal pool"),
        }),
        Err(_) => Err(Error::Syntax {
            pos,
            msg: format!("unknown terminal `{a}`"),
        }),
    }
}

pub(super) fn parse(s: &str) -> Result<ActivationTree> {
    let mut p = Parser {
        toks: tokenize(s),
        pos: 0,
        end: s.len(),
    };
    let root = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(Error::Syntax {
            pos: p.peek_pos(),
            msg: "trailing input".into(),
        });
    }
    Ok(ActivationTree::new(root))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_single_terminal() {
        assert_eq!(ActivationTree::terminal(Channel::C).to_string(), "c");
    }

    #[test]
    fn unknown_operator() {
        let e = parse("(foo x)").unwrap_err();
        assert!(matches!(e, Error::UnknownOperator { ref token, pos: 1 } if token == "foo"));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        assert!(matches!(parse("(add x"), Err(Error::Syntax { pos: 6, .. })));
        assert!(matches!(parse("x y"), Err(Error::Syntax { pos: 2, .. })));
        assert!(matches!(parse(")"), Err(Error::Syntax { pos: 0, .. })));
        assert!(matches!(parse("(tanh x x)"), Err(Error::Syntax { pos: 8, .. })));
        assert!(matches!(parse("0.3"), Err(Error::Syntax { .. })));
        assert!(matches!(parse("q"), Err(Error::Syntax { .. })));
        assert!(matches!(parse(""), Err(Error::Syntax { pos: 0, .. })));
    }

    #[test]
    fn parses_constants_and_nesting() {
        let t = parse("(softplus (div m 0.1))").unwrap();
        assert_eq!(t.to_string(), "(softplus (div m 0.1))");
        let t = parse("  (max -2 (neg c))  ").unwrap();
        assert_eq!(t.to_string(), "(max -2 (neg c))");
    }
}
