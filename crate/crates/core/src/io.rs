//! Records files and result output.
//!
//! A records file holds one record per line, `record_id<TAB>label,label,...`.
//! Blank lines and lines starting with `#` are skipped.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::join::JoinPair;
use crate::similarity::NodeSet;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Error)]
pub enum RecordsError {
    #[error("line {line}: expected `record_id<TAB>label[,label...]`")]
    Malformed { line: usize },
    #[error("line {line}: unknown taxonomy label `{label}`")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: duplicate record id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl RecordsError {
    /// 1-based line of the offending input, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::Malformed { line } | Self::UnknownLabel { line, .. } | Self::DuplicateId { line, .. } => {
                Some(*line)
            }
            Self::Io(_) => None,
        }
    }
}

pub fn read_records<R: BufRead>(tax: &Taxonomy, reader: R) -> Result<Vec<NodeSet>, RecordsError> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((id, labels)) = trimmed.split_once('\t') else {
            return Err(RecordsError::Malformed { line: lineno });
        };
        let id = id.trim();
        if id.is_empty() || labels.contains('\t') {
            return Err(RecordsError::Malformed { line: lineno });
        }
        let mut nodes = Vec::new();
        for label in labels.split(',').map(str::trim) {
            if label.is_empty() {
                return Err(RecordsError::Malformed { line: lineno });
            }
            match tax.node(label) {
                Some(n) => nodes.push(n),
                None => {
                    return Err(RecordsError::UnknownLabel {
                        line: lineno,
                        label: label.to_owned(),
                    })
                }
            }
        }
        if !seen.insert(id.to_owned()) {
            return Err(RecordsError::DuplicateId {
                line: lineno,
                id: id.to_owned(),
            });
        }
        out.push(NodeSet::new(id, nodes).map_err(|_| RecordsError::Malformed { line: lineno })?);
    }
    Ok(out)
}

pub fn read_records_path(tax: &Taxonomy, path: impl AsRef<Path>) -> Result<Vec<NodeSet>, RecordsError> {
    read_records(tax, BufReader::new(File::open(path)?))
}

pub fn write_records<W: Write>(tax: &Taxonomy, records: &[NodeSet], mut w: W) -> io::Result<()> {
    for r in records {
        let labels: Vec<&str> = r.nodes().iter().map(|&n| tax.label(n).unwrap_or("")).collect();
        writeln!(w, "{}\t{}", r.record_id(), labels.join(","))?;
    }
    w.flush()
}

/// Writes labeled records as produced by the generator.
pub fn write_labeled<W: Write>(records: &[(String, Vec<String>)], mut w: W) -> io::Result<()> {
    for (id, labels) in records {
        writeln!(w, "{id}\t{}", labels.join(","))?;
    }
    w.flush()
}

/// `child<TAB>parent` lines.
pub fn write_edges<W: Write>(edges: &[(String, String)], mut w: W) -> io::Result<()> {
    for (child, parent) in edges {
        writeln!(w, "{child}\t{parent}")?;
    }
    w.flush()
}

/// `s_id,t_id,gts` with six decimals.
pub fn write_results<W: Write>(pairs: &[JoinPair], mut w: W) -> io::Result<()> {
    writeln!(w, "s_id,t_id,gts")?;
    for p in pairs {
        writeln!(w, "{},{},{:.6}", p.s_id, p.t_id, p.gts)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::join::{ap_join, CountMode, JoinParams};
    use crate::toy::{toy_example, TOY_EDGES};

    #[test]
    fn parses_and_round_trips() {
        let fx = toy_example();
        let text = "# header\nleft\tcoffeehouse, latte,Turin\n\nright\tbar,espresso,Via Nizza\r\n";
        let recs = read_records(&fx.tax, text.as_bytes()).unwrap();
        assert_eq!(recs, vec![fx.left.clone(), fx.right.clone()]);

        let mut buf = Vec::new();
        write_records(&fx.tax, &recs, &mut buf).unwrap();
        let again = read_records(&fx.tax, buf.as_slice()).unwrap();
        assert_eq!(again, recs);
    }

    #[test]
    fn unknown_label_names_the_line() {
        let fx = toy_example();
        let text = "a\tlatte\nb\tlatte,mocha\n";
        let err = read_records(&fx.tax, text.as_bytes()).unwrap_err();
        assert_eq!(err.line(), Some(2));
        assert!(err.to_string().contains("mocha"));
    }

    #[test]
    fn malformed_lines() {
        let fx = toy_example();
        for (text, line) in [
            ("a latte\n", 1),
            ("a\tlatte\n\tlatte\n", 2),
            ("a\tlatte,,bar\n", 1),
            ("a\t\n", 1),
            ("a\tlatte\tbar\n", 1),
        ] {
            let err = read_records(&fx.tax, text.as_bytes()).unwrap_err();
            assert!(matches!(err, RecordsError::Malformed { .. }), "{text:?}: {err}");
            assert_eq!(err.line(), Some(line), "{text:?}");
        }
        let err = read_records(&fx.tax, "a\tlatte\na\tbar\n".as_bytes()).unwrap_err();
        assert!(matches!(err, RecordsError::DuplicateId { line: 2, .. }));
    }

    #[test]
    fn results_csv_has_six_decimals() {
        let fx = toy_example();
        let params = JoinParams::new(0.7, 1, CountMode::Exact).unwrap();
        let r = ap_join(&fx.tax, std::slice::from_ref(&fx.left), std::slice::from_ref(&fx.right), &params).unwrap();
        let mut buf = Vec::new();
        write_results(&r.pairs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "s_id,t_id,gts\nleft,right,0.716667\n");
    }

    #[test]
    fn edges_round_trip() {
        let edges: Vec<(String, String)> = TOY_EDGES
            .iter()
            .map(|(c, p)| (c.to_string(), p.to_string()))
            .collect();
        let mut buf = Vec::new();
        write_edges(&edges, &mut buf).unwrap();
        let tax = Taxonomy::from_reader(buf.as_slice()).unwrap();
        assert_eq!(tax.node_count(), toy_example().tax.node_count());
    }
}
