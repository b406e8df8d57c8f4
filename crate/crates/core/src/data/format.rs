//! The sparse MIL text format.
//!
//! ```text
//! # comment
//! !dims <D> <C>
//! <bag_id> <label> <idx>:<value> <idx>:<value> ...
//! ```
//!
//! One instance per line, 1-based strictly increasing feature indices,
//! omitted features are zero. Lines sharing a bag id form one bag; bags keep
//! first-appearance order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use ndarray::Array2;

use super::{Bag, Dataset};
use crate::error::{Error, Result};

struct RawBag {
    id: String,
    label: usize,
    first_line: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

pub fn parse_mil_sparse<R: BufRead>(reader: R, name: &str) -> Result<Dataset> {
    let mut declared: Option<(usize, usize)> = None;
    let mut raw: Vec<RawBag> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let mut max_index = 0usize;
    let mut max_label = 0usize;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let content = match line.find('#') {
            Some(p) => &line[..p],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace();
        let Some(first) = tokens.next() else {
            continue;
        };

        if first == "!dims" {
            if declared.is_some() || !raw.is_empty() {
                return Err(Error::format(lineno, "!dims header must appear once, before data"));
            }
            let d = parse_count(tokens.next(), lineno, "dimension")?;
            let c = parse_count(tokens.next(), lineno, "class count")?;
            if tokens.next().is_some() {
                return Err(Error::format(lineno, "trailing tokens after !dims"));
            }
            declared = Some((d, c));
            continue;
        }

        let label = parse_count(tokens.next(), lineno, "label")?;
        let mut row = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, value) = tok
                .split_once(':')
                .ok_or_else(|| Error::format(lineno, format!("expected <idx>:<value>, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::format(lineno, format!("non-numeric feature index {idx:?}")))?;
            let value: f64 = value
                .parse()
                .map_err(|_| Error::format(lineno, format!("non-numeric feature value {value:?}")))?;
            if idx == 0 {
                return Err(Error::format(lineno, "feature indices are 1-based"));
            }
            if idx == prev {
                return Err(Error::format(lineno, format!("duplicate feature index {idx}")));
            }
            if idx < prev {
                return Err(Error::format(lineno, format!("feature index {idx} out of order")));
            }
            if !value.is_finite() {
                return Err(Error::format(lineno, format!("non-finite value at index {idx}")));
            }
            if let Some((d, _)) = declared {
                if idx > d {
                    return Err(Error::format(lineno, format!("feature index {idx} exceeds declared dimension {d}")));
                }
            }
            prev = idx;
            row.push((idx - 1, value));
        }
        max_index = max_index.max(prev);
        max_label = max_label.max(label);

        match by_id.get(first) {
            Some(&pos) => {
                let bag = &mut raw[pos];
                if bag.label != label {
                    return Err(Error::format(
                        lineno,
                        format!(
                            "bag {} has conflicting labels {} (line {}) and {label}",
                            bag.id, bag.label, bag.first_line
                        ),
                    ));
                }
                bag.rows.push(row);
            }
            None => {
                by_id.insert(first.to_string(), raw.len());
                raw.push(RawBag {
                    id: first.to_string(),
                    label,
                    first_line: lineno,
                    rows: vec![row],
                });
            }
        }
    }

    if raw.is_empty() {
        return Err(Error::format(0, "no instances"));
    }

    let (dim, classes) = match declared {
        Some((d, c)) => {
            if max_label >= c {
                return Err(Error::format(0, format!("label {max_label} >= declared class count {c}")));
            }
            (d, c)
        }
        None => (max_index, max_label + 1),
    };

    let bags = raw
        .into_iter()
        .map(|rb| {
            let mut m = Array2::zeros((rb.rows.len(), dim));
            for (s, row) in rb.rows.iter().enumerate() {
                for &(i, v) in row {
                    m[[s, i]] = v;
                }
            }
            Bag::new(rb.id, rb.label, m)
        })
        .collect::<Result<Vec<_>>>()?;

    Dataset::new(name, bags, classes, dim)
}

pub fn read_mil_file(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let file = std::fs::File::open(path)?;
    parse_mil_sparse(std::io::BufReader::new(file), &name)
}

/// Writes the dataset with a `!dims` header; zero features are omitted.
pub fn serialize_mil_sparse(dataset: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "!dims {} {}", dataset.num_features, dataset.num_classes);
    for bag in &dataset.bags {
        for row in bag.instances().rows() {
            let _ = write!(out, "{} {}", bag.id, bag.label);
            for (i, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    let _ = write!(out, " {}:{}", i + 1, v);
                }
            }
            out.push('\n');
        }
    }
    out
}

fn parse_count(tok: Option<&str>, lineno: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::format(lineno, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::format(lineno, format!("non-numeric {what} {tok:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<Dataset> {
        parse_mil_sparse(text.as_bytes(), "t")
    }

    #[test]
    fn instances_group_into_bags() {
        let ds = parse("b1 0 1:1 3:0.5\nb1 0 2:1\n").unwrap();
        assert_eq!(ds.len(), 1);
        let bag = &ds.bags[0];
        assert_eq!(bag.len(), 2);
        assert_eq!(ds.num_features, 3);
        assert_eq!(bag.instance(0).to_vec(), vec![1.0, 0.0, 0.5]);
        assert_eq!(bag.instance(1).to_vec(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn class_count_from_labels() {
        let ds = parse("b1 0 1:1\n# comment\n\nb2 1 2:1 # trailing\n").unwrap();
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.bags[1].id, "b2");
    }

    #[test]
    fn header_declares_dims() {
        let ds = parse("!dims 5 3\nb1 0 1:1\n").unwrap();
        assert_eq!((ds.num_features, ds.num_classes), (5, 3));
        assert!(parse("!dims 2 2\nb1 0 3:1\n").is_err());
        assert!(parse("!dims 2 2\nb1 2 1:1\n").is_err());
    }

    #[test]
    fn format_errors_carry_line_numbers() {
        match parse("b1 0 1:1\nb1 1 1:1\n").unwrap_err() {
            Error::Format { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("b1"));
            }
            e => panic!("unexpected {e}"),
        }
        match parse("b1 0 1:1\nb2 0 1:x\n").unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        match parse("b1 0 2:1 2:3\n").unwrap_err() {
            Error::Format { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("duplicate"));
            }
            e => panic!("unexpected {e}"),
        }
        assert!(parse("b1 0 3:1 2:1\n").is_err());
        assert!(parse("b1 x 1:1\n").is_err());
        assert!(parse("b1 0 0:1\n").is_err());
        assert!(parse("# nothing\n").is_err());
    }

    #[test]
    fn musk1_shape() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/musk1.mil");
        let ds = read_mil_file(path).unwrap();
        assert_eq!(ds.name, "musk1");
        assert_eq!(ds.len(), 92);
        assert_eq!(ds.num_instances(), 476);
        assert_eq!(ds.num_features, 166);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.class_counts(), vec![45, 47]);
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        (1usize..6, 2usize..4, 1usize..6).prop_flat_map(|(dim, classes, nbags)| {
            prop::collection::vec(
                (
                    0..classes,
                    prop::collection::vec(
                        prop::collection::vec(prop_oneof![Just(0.0), -1e3f64..1e3], dim),
                        1..4,
                    ),
                ),
                nbags,
            )
            .prop_map(move |bags| {
                let bags = bags
                    .into_iter()
                    .enumerate()
                    .map(|(i, (label, rows))| Bag::from_rows(format!("bag{i}"), label, &rows).unwrap())
                    .collect();
                Dataset::new("t", bags, classes, dim).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn serialize_round_trip(ds in arb_dataset()) {
            let text = serialize_mil_sparse(&ds);
            let back = parse(&text).unwrap();
            prop_assert_eq!(&back, &ds);
            prop_assert_eq!(serialize_mil_sparse(&back), text);
        }
    }
}
