//! Maps a JSON path back to a line number in the source text, so
//! diagnostics can point at the offending line. Only well-formed input is
//! expected; anything odd just yields `None`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seg<'a> {
    Key(&'a str),
    Index(usize),
}

/// 1-based line where the value at `path` starts.
pub fn locate(text: &str, path: &[Seg]) -> Option<usize> {
    let mut s = Scanner { b: text.as_bytes(), i: 0 };
    s.find(path)
}

struct Scanner<'t> {
    b: &'t [u8],
    i: usize,
}

impl Scanner<'_> {
    fn line(&self) -> usize {
        1 + self.b[..self.i].iter().filter(|&&c| c == b'\n').count()
    }

    fn ws(&mut self) {
        while self.i < self.b.len() && self.b[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.b.get(self.i).copied()
    }

    fn eat(&mut self, c: u8) -> Option<()> {
        self.ws();
        (self.peek()? == c).then(|| self.i += 1)
    }

    fn find(&mut self, path: &[Seg]) -> Option<usize> {
        self.ws();
        let Some((first, rest)) = path.split_first() else {
            return Some(self.line());
        };
        match (first, self.peek()?) {
            (Seg::Key(k), b'{') => {
                self.i += 1;
                loop {
                    self.ws();
                    if self.peek()? == b'}' {
                        return None;
                    }
                    let key = self.string()?;
                    self.eat(b':')?;
                    if key == *k {
                        return self.find(rest);
                    }
                    self.skip_value()?;
                    self.ws();
                    match self.peek()? {
                        b',' => self.i += 1,
                        _ => return None,
                    }
                }
            }
            (Seg::Index(n), b'[') => {
                self.i += 1;
                let mut idx = 0;
                loop {
                    self.ws();
                    if self.peek()? == b']' {
                        return None;
                    }
                    if idx == *n {
                        return self.find(rest);
                    }
                    self.skip_value()?;
                    self.ws();
                    match self.peek()? {
                        b',' => self.i += 1,
                        _ => return None,
                    }
                    idx += 1;
                }
            }
            _ => None,
        }
    }

    fn string(&mut self) -> Option<String> {
        let start = self.i;
        self.skip_string()?;
        serde_json::from_slice(&self.b[start..self.i]).ok()
    }

    fn skip_string(&mut self) -> Option<()> {
        if self.peek()? != b'"' {
            return None;
        }
        self.i += 1;
        loop {
            match self.peek()? {
                b'\\' => self.i += 2,
                b'"' => {
                    self.i += 1;
                    return Some(());
                }
                _ => self.i += 1,
            }
        }
    }

    fn skip_value(&mut self) -> Option<()> {
        self.ws();
        match self.peek()? {
            b'"' => self.skip_string(),
            b'{' | b'[' => {
                let mut depth = 0usize;
                loop {
                    match self.peek()? {
                        b'"' => {
                            self.skip_string()?;
                            continue;
                        }
                        b'{' | b'[' => depth += 1,
                        b'}' | b']' => {
                            depth -= 1;
                            if depth == 0 {
                                self.i += 1;
                                return Some(());
                            }
                        }
                        _ => {}
                    }
                    self.i += 1;
                }
            }
            _ => {
                while let Some(c) = self.peek() {
                    if matches!(c, b',' | b'}' | b']') || c.is_ascii_whitespace() {
                        break;
                    }
                    self.i += 1;
                }
                Some(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
  "name": "x",
  "timeline": [
    { "t": 0, "event": "measure", "pair": ["A1", "Z9"] },
    {
      "t": 5,
      "note": "has \"quotes\" and [brackets]"
    }
  ]
}"#;

    #[test]
    fn finds_nested_values() {
        assert_eq!(locate(DOC, &[]), Some(1));
        assert_eq!(locate(DOC, &[Seg::Key("name")]), Some(2));
        assert_eq!(locate(DOC, &[Seg::Key("timeline"), Seg::Index(0), Seg::Key("pair"), Seg::Index(1)]), Some(4));
        assert_eq!(locate(DOC, &[Seg::Key("timeline"), Seg::Index(1), Seg::Key("t")]), Some(6));
        assert_eq!(locate(DOC, &[Seg::Key("timeline"), Seg::Index(1), Seg::Key("note")]), Some(7));
    }

    #[test]
    fn missing_paths_yield_none() {
        assert_eq!(locate(DOC, &[Seg::Key("nope")]), None);
        assert_eq!(locate(DOC, &[Seg::Key("timeline"), Seg::Index(2)]), None);
        assert_eq!(locate(DOC, &[Seg::Key("name"), Seg::Index(0)]), None);
        assert_eq!(locate("{", &[Seg::Key("a")]), None);
    }
}
