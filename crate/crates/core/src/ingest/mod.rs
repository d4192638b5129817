//! File formats: label-matrix CSV, a MULAN-style ARFF subset, the annotation
//! CSV and the annotator-profile CSV.

mod arff;

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{Annotation, AnnotationSet, LabelMatrix};
use crate::error::{Error, Result};
use crate::sim::AnnotatorProfile;

pub use arff::{load_mulan_arff, parse_mulan_arff};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetDescriptor {
    pub name: String,
    pub num_labels: usize,
    pub num_instances: usize,
    pub label_names: Vec<String>,
}

impl DatasetDescriptor {
    pub(crate) fn new(
        name: String,
        label_names: Vec<String>,
        num_instances: usize,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        if let Some(dup) = label_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Invalid(format!("duplicate label name '{dup}'")));
        }
        Ok(Self {
            name,
            num_labels: label_names.len(),
            num_instances,
            label_names,
        })
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn csv_line(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(path, line, e.to_string())
}

/// Header row of label names followed by rows of 0/1 cells.
pub fn load_label_matrix_csv(path: impl AsRef<Path>) -> Result<(DatasetDescriptor, LabelMatrix)> {
    let path = path.as_ref();
    parse_label_matrix_csv(&read_text(path)?, path)
}

pub fn parse_label_matrix_csv(
    text: &str,
    source: &Path,
) -> Result<(DatasetDescriptor, LabelMatrix)> {
    let mut rdr = csv_reader(text);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(source, e))?,
        None => return Err(Error::parse(source, 1, "empty file")),
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if names.iter().all(String::is_empty) {
        return Err(Error::parse(source, 1, "empty header"));
    }
    let c = names.len();
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(source, e))?;
        let line = csv_line(&rec);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != c {
            return Err(Error::parse(
                source,
                line,
                format!("expected {c} cells, found {}", rec.len()),
            ));
        }
        let row = rec
            .iter()
            .map(|cell| match cell.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::parse(
                    source,
                    line,
                    format!("non-binary cell '{other}'"),
                )),
            })
            .collect::<Result<Vec<u8>>>()?;
        rows.push(row);
    }
    let z = LabelMatrix::from_rows_with_cols(&rows, c)?;
    let desc = DatasetDescriptor::new(dataset_name(source), names, z.rows())?;
    Ok((desc, z))
}

pub fn write_label_matrix_csv(
    path: impl AsRef<Path>,
    label_names: &[String],
    z: &LabelMatrix,
) -> Result<()> {
    let path = path.as_ref();
    if label_names.len() != z.cols() {
        return Err(Error::Dimension(format!(
            "{} label names for {} columns",
            label_names.len(),
            z.cols()
        )));
    }
    let mut out = label_names.join(",");
    out.push('\n');
    for i in 0..z.rows() {
        let cells: Vec<&str> = z
            .row(i)
            .iter()
            .map(|&b| if b == 1 { "1" } else { "0" })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Label names, one per line; blank lines and `#` comments are skipped.
pub fn read_label_names(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub const ANNOTATION_HEADER: &str = "annotator,instance,labels";

/// Optional sizes for an annotation file. Missing sizes are inferred: N and L
/// as one past the largest id, C from the label strings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AnnotationDims {
    pub instances: Option<usize>,
    pub labels: Option<usize>,
    pub annotators: Option<usize>,
}

pub fn read_annotations(path: impl AsRef<Path>, dims: AnnotationDims) -> Result<AnnotationSet> {
    let path = path.as_ref();
    parse_annotations(&read_text(path)?, path, dims)
}

pub fn parse_annotations(text: &str, source: &Path, dims: AnnotationDims) -> Result<AnnotationSet> {
    let mut rdr = csv_reader(text);
    let mut records = rdr.records();
    match records.next() {
        Some(Ok(h)) if h.iter().map(str::trim).eq(ANNOTATION_HEADER.split(',')) => {}
        Some(Err(e)) => return Err(csv_error(source, e)),
        _ => {
            return Err(Error::parse(
                source,
                1,
                format!("expected header '{ANNOTATION_HEADER}'"),
            ))
        }
    }
    let mut out: Vec<Annotation> = Vec::new();
    let mut seen = HashSet::new();
    let mut width = dims.labels;
    for rec in records {
        let rec = rec.map_err(|e| csv_error(source, e))?;
        let line = csv_line(&rec);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != 3 {
            return Err(Error::parse(
                source,
                line,
                format!("expected 3 fields, found {}", rec.len()),
            ));
        }
        let id = |field: &str, what: &str| -> Result<usize> {
            field
                .trim()
                .parse()
                .map_err(|_| Error::parse(source, line, format!("bad {what} id '{field}'")))
        };
        let annotator = id(&rec[0], "annotator")?;
        let instance = id(&rec[1], "instance")?;
        let labels = rec[2]
            .trim()
            .bytes()
            .map(|b| match b {
                b'0' => Ok(0u8),
                b'1' => Ok(1u8),
                _ => Err(Error::parse(
                    source,
                    line,
                    format!("label string '{}' is not binary", &rec[2]),
                )),
            })
            .collect::<Result<Vec<u8>>>()?;
        match width {
            Some(c) if c != labels.len() => {
                return Err(Error::parse(
                    source,
                    line,
                    format!("label string has length {}, expected {c}", labels.len()),
                ))
            }
            None => width = Some(labels.len()),
            _ => {}
        }
        if let Some(n) = dims.instances.filter(|&n| instance >= n) {
            return Err(Error::parse(
                source,
                line,
                format!("instance {instance} out of range (N = {n})"),
            ));
        }
        if let Some(l) = dims.annotators.filter(|&l| annotator >= l) {
            return Err(Error::parse(
                source,
                line,
                format!("annotator {annotator} out of range (L = {l})"),
            ));
        }
        if !seen.insert((annotator, instance)) {
            return Err(Error::parse(
                source,
                line,
                format!("duplicate annotation for (annotator {annotator}, instance {instance})"),
            ));
        }
        out.push(Annotation {
            annotator,
            instance,
            labels,
        });
    }
    let n = dims
        .instances
        .unwrap_or_else(|| out.iter().map(|r| r.instance + 1).max().unwrap_or(0));
    let l = dims
        .annotators
        .unwrap_or_else(|| out.iter().map(|r| r.annotator + 1).max().unwrap_or(0));
    AnnotationSet::new(n, width.unwrap_or(0), l, out)
}

/// Canonical text form: header, then one row per record sorted by (annotator, instance).
pub fn format_annotations(y: &AnnotationSet) -> String {
    let mut out = String::with_capacity(16 + y.len() * (12 + y.num_labels()));
    out.push_str(ANNOTATION_HEADER);
    out.push('\n');
    for r in y.records() {
        out.push_str(&format!("{},{},", r.annotator, r.instance));
        out.extend(r.labels.iter().map(|&b| if b == 1 { '1' } else { '0' }));
        out.push('\n');
    }
    out
}

pub fn write_annotations(y: &AnnotationSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_annotations(y)).map_err(|e| Error::io(path, e))
}

/// `annotator,kind,psi_0,…,psi_{C-1}`
pub fn write_profiles(profiles: &[AnnotatorProfile], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let c = profiles.first().map_or(0, |p| p.psi.len());
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("annotator,kind");
    for j in 0..c {
        text.push_str(&format!(",psi_{j}"));
    }
    text.push('\n');
    for p in profiles {
        text.push_str(&format!("{},{}", p.annotator, p.kind.as_str()));
        for v in &p.psi {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_profiles(path: impl AsRef<Path>) -> Result<Vec<AnnotatorProfile>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut rdr = csv_reader(&text);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(path, e))?,
        None => return Err(Error::parse(path, 1, "empty profiles file")),
    };
    if header.len() < 2 || &header[0] != "annotator" || &header[1] != "kind" {
        return Err(Error::parse(
            path,
            1,
            "expected header 'annotator,kind,psi_0,...'",
        ));
    }
    let c = header.len() - 2;
    let mut out = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = csv_line(&rec);
        if rec.len() != c + 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields", c + 2),
            ));
        }
        let annotator = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line, "bad annotator id"))?;
        let kind = rec[1]
            .parse()
            .map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
        let psi = (2..rec.len())
            .map(|k| {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, line, format!("bad reliability '{}'", &rec[k])))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(AnnotatorProfile {
            annotator,
            kind,
            psi,
        });
    }
    out.sort_by_key(|p| p.annotator);
    if out.iter().enumerate().any(|(k, p)| p.annotator != k) {
        return Err(Error::Invalid(format!(
            "{}: annotator ids must be 0..L without gaps",
            path.display()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem.csv")
    }

    #[test]
    fn label_csv_examples() {
        let (d, z) = parse_label_matrix_csv("a,b\n1,0\n", p()).unwrap();
        assert_eq!(z.to_rows(), vec![vec![1, 0]]);
        assert_eq!(d.label_names, vec!["a", "b"]);
        assert_eq!((d.num_instances, d.num_labels), (1, 2));

        let (_, z) = parse_label_matrix_csv("a,b\r\n1,0\r\n0,1\r\n", p()).unwrap();
        assert_eq!(z.rows(), 2);
    }

    #[test]
    fn label_csv_errors_carry_line_numbers() {
        match parse_label_matrix_csv("a,b\n1,0\n1,2\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_label_matrix_csv("a,b\n1,0,1\n", p()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_label_matrix_csv("", p()).is_err());
        assert!(parse_label_matrix_csv("a,a\n1,0\n", p()).is_err());
    }

    #[test]
    fn emotions_sized_matrix() {
        let mut text = String::from("l0,l1,l2,l3,l4,l5\n");
        for i in 0..593 {
            let row: Vec<String> = (0..6).map(|j| ((i + j) % 2).to_string()).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let (d, z) = parse_label_matrix_csv(&text, p()).unwrap();
        assert_eq!((d.num_instances, d.num_labels), (593, 6));
        assert_eq!((z.rows(), z.cols()), (593, 6));
    }

    #[test]
    fn annotation_examples() {
        let y = parse_annotations(
            "annotator,instance,labels\n0,2,010110\n",
            p(),
            AnnotationDims::default(),
        )
        .unwrap();
        assert_eq!(y.records()[0].labels, vec![0, 1, 0, 1, 1, 0]);
        assert_eq!(
            (y.num_instances(), y.num_labels(), y.num_annotators()),
            (3, 6, 1)
        );

        let dup = "annotator,instance,labels\n0,2,010110\n0,2,000000\n";
        assert!(matches!(
            parse_annotations(dup, p(), AnnotationDims::default()),
            Err(Error::Parse { line: 3, .. })
        ));

        let dims = AnnotationDims {
            labels: Some(5),
            ..Default::default()
        };
        assert!(parse_annotations("annotator,instance,labels\n0,2,010110\n", p(), dims).is_err());

        let dims = AnnotationDims {
            instances: Some(2),
            ..Default::default()
        };
        assert!(parse_annotations("annotator,instance,labels\n0,2,010110\n", p(), dims).is_err());
        assert!(parse_annotations("a,b,c\n", p(), AnnotationDims::default()).is_err());
        assert!(parse_annotations(
            "annotator,instance,labels\n0,1,012\n",
            p(),
            AnnotationDims::default()
        )
        .is_err());
    }

    #[test]
    fn annotation_text_is_canonical() {
        let text = "annotator,instance,labels\n1,0,01\n0,3,11\n0,1,00\n";
        let dims = AnnotationDims {
            instances: Some(4),
            ..Default::default()
        };
        let y = parse_annotations(text, p(), dims).unwrap();
        assert_eq!(
            format_annotations(&y),
            "annotator,instance,labels\n0,1,00\n0,3,11\n1,0,01\n"
        );
    }

    #[test]
    fn profile_round_trip() {
        use crate::sim::AnnotatorKind;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.csv");
        let profiles = vec![
            AnnotatorProfile {
                annotator: 0,
                kind: AnnotatorKind::Reliable,
                psi: vec![0.9123, 0.88],
            },
            AnnotatorProfile {
                annotator: 1,
                kind: AnnotatorKind::Random,
                psi: vec![0.5, 0.5],
            },
        ];
        write_profiles(&profiles, &path).unwrap();
        assert_eq!(read_profiles(&path).unwrap(), profiles);
    }
}
