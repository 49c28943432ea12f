//! `key = value` text files (scene configuration, IQ sidecar headers).

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits `text` into entries. Blank lines and `#` comments are skipped.
pub(crate) fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {line}: expected `key = value`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::config(format!("line {line}: empty key")));
        }
        out.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(out)
}

impl Entry {
    pub fn f64(&self) -> Result<f64> {
        let v = match self.value.as_str() {
            "inf" | "+inf" => f64::INFINITY,
            "-inf" => f64::NEG_INFINITY,
            s => s.parse::<f64>().map_err(|_| self.bad("a number"))?,
        };
        if v.is_nan() {
            return Err(self.bad("a number"));
        }
        Ok(v)
    }

    pub fn usize(&self) -> Result<usize> {
        self.value.parse().map_err(|_| self.bad("a non-negative integer"))
    }

    pub fn u64(&self) -> Result<u64> {
        self.value.parse().map_err(|_| self.bad("a non-negative integer"))
    }

    pub fn bool(&self) -> Result<bool> {
        match self.value.as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(self.bad("a boolean")),
        }
    }

    pub fn f64_list(&self) -> Result<Vec<f64>> {
        if self.value.is_empty() {
            return Ok(Vec::new());
        }
        self.value
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| self.bad("a comma-separated number list")))
            .collect()
    }

    pub fn usize_list(&self) -> Result<Vec<usize>> {
        if self.value.is_empty() {
            return Ok(Vec::new());
        }
        self.value
            .split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| self.bad("a comma-separated integer list")))
            .collect()
    }

    fn bad(&self, what: &str) -> Error {
        Error::config(format!(
            "line {}: `{}` must be {what}, got `{}`",
            self.line, self.key, self.value
        ))
    }
}

/// Formats an `f64` so that parsing it back yields the same bits.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let e = parse("# header\n\na = 1 # trailing\n b=two \n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].key, "a");
        assert_eq!(e[0].value, "1");
        assert_eq!(e[1].line, 4);
        assert_eq!(e[1].value, "two");
    }

    #[test]
    fn missing_equals_is_an_error() {
        assert!(parse("just words").is_err());
    }

    #[test]
    fn float_round_trip() {
        for v in [0.1, -3.25e-7, 1.0 / 3.0, f64::INFINITY, f64::NEG_INFINITY] {
            let e = Entry {
                key: "k".into(),
                value: fmt_f64(v),
                line: 1,
            };
            assert_eq!(e.f64().unwrap().to_bits(), v.to_bits());
        }
    }
}
