//! Single-line tokenizer. Strings never span lines.

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eq,
    Colon,
    Arrow,
    Ellipsis,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::LParen => "`(`".to_string(),
            Tok::RParen => "`)`".to_string(),
            Tok::LBracket => "`[`".to_string(),
            Tok::RBracket => "`]`".to_string(),
            Tok::Comma => "`,`".to_string(),
            Tok::Eq => "`=`".to_string(),
            Tok::Colon => "`:`".to_string(),
            Tok::Arrow => "`->`".to_string(),
            Tok::Ellipsis => "`...`".to_string(),
        }
    }
}

#[derive(Debug, Default)]
pub(crate) struct LexedLine {
    pub tokens: Vec<Tok>,
    pub comment: Option<String>,
}

pub(crate) fn lex_line(line: &str) -> Result<LexedLine, String> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = LexedLine::default();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\r' => i += 1,
            '#' => {
                let text: String = chars[i + 1..].iter().collect();
                let text = text.trim();
                if !text.is_empty() {
                    out.comment = Some(text.to_string());
                }
                break;
            }
            '(' => push(&mut out, Tok::LParen, &mut i),
            ')' => push(&mut out, Tok::RParen, &mut i),
            '[' => push(&mut out, Tok::LBracket, &mut i),
            ']' => push(&mut out, Tok::RBracket, &mut i),
            ',' => push(&mut out, Tok::Comma, &mut i),
            '=' => push(&mut out, Tok::Eq, &mut i),
            ':' => push(&mut out, Tok::Colon, &mut i),
            '.' if chars[i..].starts_with(&['.', '.', '.']) => {
                out.tokens.push(Tok::Ellipsis);
                i += 3;
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.tokens.push(Tok::Arrow);
                i += 2;
            }
            '"' | '\'' => {
                let (s, next) = lex_string(&chars, i)?;
                out.tokens.push(Tok::Str(s));
                i = next;
            }
            c if c.is_ascii_digit() || (c == '-' && next_is_digit(&chars, i)) => {
                let (n, next) = lex_number(&chars, i)?;
                out.tokens.push(Tok::Number(n));
                i = next;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.tokens.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(format!("unexpected character `{other}`")),
        }
    }
    Ok(out)
}

fn push(out: &mut LexedLine, tok: Tok, i: &mut usize) {
    out.tokens.push(tok);
    *i += 1;
}

fn next_is_digit(chars: &[char], i: usize) -> bool {
    chars.get(i + 1).is_some_and(|c| c.is_ascii_digit())
}

fn lex_number(chars: &[char], start: usize) -> Result<(String, usize), String> {
    let mut i = start;
    if chars[i] == '-' {
        i += 1;
    }
    let digits = |i: &mut usize| {
        let from = *i;
        while *i < chars.len() && chars[*i].is_ascii_digit() {
            *i += 1;
        }
        *i > from
    };
    digits(&mut i);
    if i < chars.len() && chars[i] == '.' && next_is_digit(chars, i) {
        i += 1;
        digits(&mut i);
    }
    if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
        let mut j = i + 1;
        if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
            j += 1;
        }
        if j < chars.len() && chars[j].is_ascii_digit() {
            i = j;
            digits(&mut i);
        }
    }
    // `10mL` is a unit glued to a number: tell the author to quote it
    if i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
        return Err("number followed by letters; quote values that carry units".to_string());
    }
    Ok((chars[start..i].iter().collect(), i))
}

fn lex_string(chars: &[char], start: usize) -> Result<(String, usize), String> {
    let quote = chars[start];
    let triple = chars[start..].starts_with(&[quote, quote, quote]);
    let mut i = start + if triple { 3 } else { 1 };
    let mut s = String::new();
    while i < chars.len() {
        let c = chars[i];
        if c == '\\' {
            let Some(&escaped) = chars.get(i + 1) else {
                break;
            };
            match escaped {
                'n' => s.push('\n'),
                't' => s.push('\t'),
                '\\' | '"' | '\'' => s.push(escaped),
                other => {
                    s.push('\\');
                    s.push(other);
                }
            }
            i += 2;
            continue;
        }
        if c == quote {
            if !triple {
                return Ok((s, i + 1));
            }
            if chars[i..].starts_with(&[quote, quote, quote]) {
                return Ok((s, i + 3));
            }
        }
        s.push(c);
        i += 1;
    }
    Err("unterminated string literal".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_of_a_call() {
        let lexed = lex_line(r#"x = Mix(volume="10 mL", n=3)  # go"#).unwrap();
        assert_eq!(
            lexed.tokens,
            vec![
                Tok::Ident("x".into()),
                Tok::Eq,
                Tok::Ident("Mix".into()),
                Tok::LParen,
                Tok::Ident("volume".into()),
                Tok::Eq,
                Tok::Str("10 mL".into()),
                Tok::Comma,
                Tok::Ident("n".into()),
                Tok::Eq,
                Tok::Number("3".into()),
                Tok::RParen,
            ]
        );
        assert_eq!(lexed.comment.as_deref(), Some("go"));
    }

    #[test]
    fn hash_inside_string_is_not_a_comment() {
        let lexed = lex_line(r#"Label(text="tube #4")"#).unwrap();
        assert!(lexed.comment.is_none());
        assert!(lexed.tokens.contains(&Tok::Str("tube #4".into())));
    }

    #[test]
    fn escapes_and_numbers() {
        let lexed = lex_line(r#"'a\'b' "\\" -20 1.5e-3 -> ..."#).unwrap();
        assert_eq!(
            lexed.tokens,
            vec![
                Tok::Str("a'b".into()),
                Tok::Str("\\".into()),
                Tok::Number("-20".into()),
                Tok::Number("1.5e-3".into()),
                Tok::Arrow,
                Tok::Ellipsis,
            ]
        );
    }

    #[test]
    fn rejects_glued_units_and_open_strings() {
        assert!(lex_line("Mix(volume=10mL)").is_err());
        assert!(lex_line(r#"Mix(volume="10 mL)"#).is_err());
        assert!(lex_line("Mix(volume=$)").is_err());
    }
}
