//! Minimal ARFF reader: enough to pull binary label columns out of MULAN
//! datasets. Handles `@relation`, `@attribute` (any type for feature columns,
//! numeric or nominal {0,1} for labels), and dense or sparse `@data` rows.

use std::path::Path;

use super::{dataset_name, read_text, DatasetDescriptor};
use crate::data::LabelMatrix;
use crate::error::{Error, Result};

#[derive(Debug)]
enum AttrType {
    Numeric,
    Nominal(Vec<String>),
    Other,
}

#[derive(Debug)]
struct Attribute {
    name: String,
    kind: AttrType,
}

pub fn load_mulan_arff(
    path: impl AsRef<Path>,
    label_names: &[String],
) -> Result<(DatasetDescriptor, LabelMatrix)> {
    let path = path.as_ref();
    parse_mulan_arff(&read_text(path)?, path, label_names)
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    let b = s.as_bytes();
    if b.len() >= 2
        && ((b[0] == b'\'' && b[b.len() - 1] == b'\'') || (b[0] == b'"' && b[b.len() - 1] == b'"'))
    {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

/// Splits on commas outside single or double quotes.
fn split_fields(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut quote: Option<char> = None;
    let mut start = 0;
    for (idx, ch) in s.char_indices() {
        match (quote, ch) {
            (None, '\'' | '"') => quote = Some(ch),
            (Some(q), c) if c == q => quote = None,
            (None, ',') => {
                out.push(s[start..idx].trim());
                start = idx + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

/// Splits `rest` into a possibly quoted leading token and the remainder.
fn leading_token(rest: &str) -> Option<(&str, &str)> {
    let rest = rest.trim_start();
    let first = rest.chars().next()?;
    if first == '\'' || first == '"' {
        let end = rest[1..].find(first)? + 1;
        Some((&rest[1..end], &rest[end + 1..]))
    } else {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        Some((&rest[..end], &rest[end..]))
    }
}

fn directive<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let head = line.get(..name.len())?;
    if head.eq_ignore_ascii_case(name) {
        let rest = &line[name.len()..];
        if rest.is_empty() || rest.starts_with(char::is_whitespace) {
            return Some(rest);
        }
    }
    None
}

fn parse_attribute(rest: &str, path: &Path, line: usize) -> Result<Attribute> {
    let (name, ty) =
        leading_token(rest).ok_or_else(|| Error::parse(path, line, "attribute without a name"))?;
    let ty = ty.trim();
    let kind = if ty.starts_with('{') {
        let inner = ty
            .strip_prefix('{')
            .and_then(|t| t.strip_suffix('}'))
            .ok_or_else(|| Error::parse(path, line, "unterminated nominal specification"))?;
        AttrType::Nominal(
            split_fields(inner)
                .into_iter()
                .map(|v| unquote(v).to_string())
                .collect(),
        )
    } else {
        match ty.to_ascii_lowercase().as_str() {
            "numeric" | "real" | "integer" => AttrType::Numeric,
            _ => AttrType::Other,
        }
    };
    Ok(Attribute {
        name: name.to_string(),
        kind,
    })
}

fn label_value(raw: &str, attr: &Attribute, path: &Path, line: usize) -> Result<u8> {
    let v = unquote(raw);
    let bad = || {
        Error::parse(
            path,
            line,
            format!("value '{v}' for label '{}' is not 0 or 1", attr.name),
        )
    };
    match &attr.kind {
        AttrType::Numeric => match v.parse::<f64>() {
            Ok(0.0) => Ok(0),
            Ok(1.0) => Ok(1),
            _ => Err(bad()),
        },
        _ => match v {
            "0" => Ok(0),
            "1" => Ok(1),
            _ => Err(bad()),
        },
    }
}

pub fn parse_mulan_arff(
    text: &str,
    path: &Path,
    label_names: &[String],
) -> Result<(DatasetDescriptor, LabelMatrix)> {
    let mut relation: Option<String> = None;
    let mut attrs: Vec<Attribute> = Vec::new();
    let mut label_cols: Vec<usize> = Vec::new();
    let mut rows: Vec<Vec<u8>> = Vec::new();
    let mut in_data = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            if let Some(rest) = directive(line, "@relation") {
                relation = Some(unquote(rest).to_string());
            } else if let Some(rest) = directive(line, "@attribute") {
                attrs.push(parse_attribute(rest, path, line_no)?);
            } else if directive(line, "@data").is_some() {
                in_data = true;
                label_cols = resolve_labels(&attrs, label_names, path, line_no)?;
            } else {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("unexpected header line '{line}'"),
                ));
            }
            continue;
        }

        let mut row = vec![0u8; label_cols.len()];
        if let Some(body) = line.strip_prefix('{') {
            let body = body
                .strip_suffix('}')
                .ok_or_else(|| Error::parse(path, line_no, "unterminated sparse row"))?;
            if !body.trim().is_empty() {
                for pair in split_fields(body) {
                    let (idx_s, val) = pair.split_once(char::is_whitespace).ok_or_else(|| {
                        Error::parse(path, line_no, format!("malformed sparse entry '{pair}'"))
                    })?;
                    let col: usize = idx_s.parse().map_err(|_| {
                        Error::parse(path, line_no, format!("bad sparse index '{idx_s}'"))
                    })?;
                    if col >= attrs.len() {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("sparse index {col} out of range"),
                        ));
                    }
                    if let Some(pos) = label_cols.iter().position(|&c| c == col) {
                        row[pos] = label_value(val, &attrs[col], path, line_no)?;
                    }
                }
            }
        } else {
            let fields = split_fields(line);
            if fields.len() != attrs.len() {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected {} values, found {}", attrs.len(), fields.len()),
                ));
            }
            for (pos, &col) in label_cols.iter().enumerate() {
                row[pos] = label_value(fields[col], &attrs[col], path, line_no)?;
            }
        }
        rows.push(row);
    }
    if !in_data {
        return Err(Error::parse(
            path,
            text.lines().count(),
            "missing @data section",
        ));
    }
    let z = LabelMatrix::from_rows_with_cols(&rows, label_cols.len())?;
    let name = relation.unwrap_or_else(|| dataset_name(path));
    let desc = DatasetDescriptor::new(name, label_names.to_vec(), z.rows())?;
    Ok((desc, z))
}

fn resolve_labels(
    attrs: &[Attribute],
    label_names: &[String],
    path: &Path,
    line: usize,
) -> Result<Vec<usize>> {
    label_names
        .iter()
        .map(|name| {
            let col = attrs.iter().position(|a| &a.name == name).ok_or_else(|| {
                Error::parse(path, line, format!("label '{name}' is not an attribute"))
            })?;
            if let AttrType::Nominal(values) = &attrs[col].kind {
                if let Some(v) = values
                    .iter()
                    .find(|v| v.as_str() != "0" && v.as_str() != "1")
                {
                    return Err(Error::parse(
                        path,
                        line,
                        format!("label '{name}' has nominal value '{v}' outside {{0,1}}"),
                    ));
                }
            }
            Ok(col)
        })
        .collect()
}
