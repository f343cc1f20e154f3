//! Vector store files: a JSON header line `{"kind":..,"dim":d,"count":n,...}`
//! followed by `<key>\t<d space-separated floats>` per line.

use std::fmt::{Display, Write as _};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VectorStoreHeader {
    pub kind: String,
    pub dim: usize,
    pub count: usize,
    /// Any further header keys, written after `kind`, `dim` and `count`.
    pub extra: Map<String, Value>,
}

impl VectorStoreHeader {
    pub fn new(kind: &str, dim: usize, count: usize) -> Self {
        VectorStoreHeader {
            kind: kind.to_string(),
            dim,
            count,
            extra: Map::new(),
        }
    }

    fn to_json_line(&self) -> String {
        let mut s = format!(
            "{{\"kind\":{},\"dim\":{},\"count\":{}",
            Value::String(self.kind.clone()),
            self.dim,
            self.count
        );
        for (k, v) in &self.extra {
            let _ = write!(s, ",{}:{}", Value::String(k.clone()), v);
        }
        s.push('}');
        s
    }
}

pub struct VectorStore<T> {
    pub header: VectorStoreHeader,
    pub rows: Vec<(String, Vec<T>)>,
}

pub fn write_vector_store<'a, T, I>(path: &Path, header: &VectorStoreHeader, rows: I) -> Result<()>
where
    T: Display + 'a,
    I: IntoIterator<Item = (&'a str, &'a [T])>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", header.to_json_line()).map_err(io)?;
    let mut line = String::new();
    let mut written = 0usize;
    for (key, values) in rows {
        if values.len() != header.dim {
            return Err(Error::DimensionMismatch {
                expected: header.dim,
                actual: values.len(),
            });
        }
        if key.contains(['\t', '\n']) {
            return Err(Error::InvalidArgument(format!("vector key {key:?} contains a tab or newline")));
        }
        line.clear();
        line.push_str(key);
        line.push('\t');
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{v}");
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(io)?;
        written += 1;
    }
    if written != header.count {
        return Err(Error::Data(format!(
            "{}: header declares {} rows but {} were written",
            path.display(),
            header.count,
            written
        )));
    }
    out.flush().map_err(io)
}

pub fn read_vector_store<T: FromStr>(path: &Path) -> Result<VectorStore<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::format(path, 1, "missing header line"))?
        .map_err(|e| Error::io(path, e))?;
    let mut map: Map<String, Value> = serde_json::from_str(&first)
        .map_err(|e| Error::format(path, 1, format!("malformed header: {e}")))?;
    let mut take_usize = |key: &str| -> Result<usize> {
        map.remove(key)
            .and_then(|v| v.as_u64())
            .map(|v| v as usize)
            .ok_or_else(|| Error::format(path, 1, format!("header field `{key}` missing or not an integer")))
    };
    let dim = take_usize("dim")?;
    let count = take_usize("count")?;
    let kind = match map.remove("kind") {
        Some(Value::String(k)) => k,
        _ => return Err(Error::format(path, 1, "header field `kind` missing")),
    };
    let header = VectorStoreHeader {
        kind,
        dim,
        count,
        extra: map,
    };

    let mut rows = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, lineno, "expected `<key>\\t<floats>`"))?;
        let values = rest
            .split(' ')
            .map(|v| v.parse::<T>())
            .collect::<std::result::Result<Vec<T>, _>>()
            .map_err(|_| Error::format(path, lineno, "unparseable float"))?;
        if values.len() != dim {
            return Err(Error::format(
                path,
                lineno,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        rows.push((key.to_string(), values));
    }
    if rows.len() != count {
        return Err(Error::format(
            path,
            rows.len() + 1,
            format!("header declares {count} rows, found {}", rows.len()),
        ));
    }
    Ok(VectorStore { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vec");
        let mut header = VectorStoreHeader::new("text", 3, 2);
        header.extra.insert("min_n".into(), Value::from(3));
        let a = [0.1f64, -1.0 / 3.0, 1e-20];
        let b = [f64::MIN_POSITIVE, 2.5, -0.0];
        write_vector_store(&path, &header, [("a", &a[..]), ("b", &b[..])]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("{\"kind\":\"text\",\"dim\":3,\"count\":2,\"min_n\":3}\n"));
        let back = read_vector_store::<f64>(&path).unwrap();
        assert_eq!(back.header, header);
        assert_eq!(back.rows[0].1, a.to_vec());
        assert_eq!(back.rows[1].1, b.to_vec());
    }

    #[test]
    fn wrong_width_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vec");
        fs::write(&path, "{\"kind\":\"text\",\"dim\":2,\"count\":1}\nx\t1 2 3\n").unwrap();
        let err = read_vector_store::<f32>(&path).err().unwrap().to_string();
        assert!(err.contains(":2:"), "{err}");
    }
}
