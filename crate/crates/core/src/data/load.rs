use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::error::{Error, Result};

/// How to read a CSV into a [`TabularDataset`].
///
/// Every header column that is not the label, the sensitive attribute, the
/// split column or listed in `drop_columns` becomes a feature. The sensitive
/// attribute becomes a one-hot feature only when it is also listed in
/// `categorical_columns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSchema {
    pub label_column: String,
    pub sensitive_column: String,
    pub positive_label_value: String,
    pub privileged_value: String,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    #[serde(default)]
    pub drop_columns: Vec<String>,
    /// Optional column whose value tags each row (e.g. `train` / `test`).
    #[serde(default)]
    pub split_column: Option<String>,
}

impl DataSchema {
    /// The documented Adult schema: sensitive = sex (Male privileged),
    /// label = income `>50K`, every categorical column one-hot encoded
    /// (sex included).
    pub fn adult() -> Self {
        DataSchema {
            label_column: "income".into(),
            sensitive_column: "sex".into(),
            positive_label_value: ">50K".into(),
            privileged_value: "Male".into(),
            categorical_columns: [
                "workclass",
                "education",
                "marital-status",
                "occupation",
                "relationship",
                "race",
                "sex",
                "native-country",
            ]
            .map(String::from)
            .to_vec(),
            drop_columns: vec![],
            split_column: Some("split".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
    /// Source columns turned into features, in output order.
    pub columns_used: Vec<String>,
    /// Categories of each one-hot encoded column, in column order.
    pub one_hot_map: BTreeMap<String, Vec<String>>,
}

enum ColumnKind {
    Numeric,
    Categorical,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "?"
}

pub fn load_csv(path: &Path, schema: &DataSchema) -> Result<(TabularDataset, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut records = Vec::new();
    for rec in reader.records() {
        records.push(rec.map_err(|e| csv_error(path, e))?);
    }
    build(&header, &records, schema)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn build(header: &[String], records: &[csv::StringRecord], schema: &DataSchema) -> Result<(TabularDataset, LoadReport)> {
    let position: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let find = |name: &str, role: &str| {
        position
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("{role} column '{name}' not found in header")))
    };
    let label_idx = find(&schema.label_column, "label")?;
    let sens_idx = find(&schema.sensitive_column, "sensitive")?;
    let split_idx = schema.split_column.as_deref().map(|c| find(c, "split")).transpose()?;
    for c in &schema.categorical_columns {
        find(c, "categorical")?;
    }
    for c in &schema.drop_columns {
        find(c, "drop")?;
        if schema.categorical_columns.contains(c)
            || *c == schema.label_column
            || *c == schema.sensitive_column
            || schema.split_column.as_ref() == Some(c)
        {
            return Err(Error::Schema(format!("column '{c}' is both dropped and used")));
        }
    }

    let sens_feature = schema.categorical_columns.contains(&schema.sensitive_column);
    let reserved = [Some(label_idx), (!sens_feature).then_some(sens_idx), split_idx];
    let feature_cols: Vec<(usize, ColumnKind)> = header
        .iter()
        .enumerate()
        .filter(|(i, name)| !reserved.contains(&Some(*i)) && !schema.drop_columns.contains(name))
        .map(|(i, name)| {
            let kind = if schema.categorical_columns.contains(name) {
                ColumnKind::Categorical
            } else {
                ColumnKind::Numeric
            };
            (i, kind)
        })
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Schema("schema leaves no feature columns".into()));
    }

    let used: Vec<usize> = feature_cols
        .iter()
        .map(|(i, _)| *i)
        .chain([label_idx, sens_idx])
        .chain(split_idx)
        .collect();
    let kept: Vec<&csv::StringRecord> = records
        .iter()
        .filter(|r| used.iter().all(|&i| !is_missing(r.get(i).unwrap_or(""))))
        .collect();
    if kept.is_empty() {
        return Err(Error::input("no usable rows after dropping rows with missing values"));
    }

    // categories in first-appearance order over the kept rows
    let mut categories: Vec<Vec<String>> = Vec::with_capacity(feature_cols.len());
    for (col, kind) in &feature_cols {
        let mut seen = Vec::new();
        if let ColumnKind::Categorical = kind {
            let mut index = HashMap::new();
            for r in &kept {
                let v = &r[*col];
                if !index.contains_key(v) {
                    index.insert(v.to_string(), seen.len());
                    seen.push(v.to_string());
                }
            }
        }
        categories.push(seen);
    }

    let mut names = Vec::new();
    for ((col, kind), cats) in feature_cols.iter().zip(&categories) {
        match kind {
            ColumnKind::Numeric => names.push(header[*col].clone()),
            ColumnKind::Categorical => names.extend(cats.iter().map(|c| format!("{}={c}", header[*col]))),
        }
    }
    let width = names.len();

    let mut features = Vec::with_capacity(kept.len() * width);
    let mut labels = Vec::with_capacity(kept.len());
    let mut sensitive = Vec::with_capacity(kept.len());
    let mut tags = Vec::new();
    for (row, r) in kept.iter().enumerate() {
        for ((col, kind), cats) in feature_cols.iter().zip(&categories) {
            let cell = &r[*col];
            match kind {
                ColumnKind::Numeric => {
                    let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                        Error::input(format!("row {row}: column '{}' has non-numeric value '{cell}'", header[*col]))
                    })?;
                    features.push(v);
                }
                ColumnKind::Categorical => {
                    features.extend(cats.iter().map(|c| if c == cell { 1.0 } else { 0.0 }));
                }
            }
        }
        labels.push(u8::from(r[label_idx] == schema.positive_label_value));
        sensitive.push(u8::from(r[sens_idx] == schema.privileged_value));
        if let Some(i) = split_idx {
            tags.push(r[i].to_string());
        }
    }

    let mut data = TabularDataset::new(features, width, sensitive, labels, names)?;
    if split_idx.is_some() {
        data = data.with_tags(tags)?;
    }
    let one_hot_map = feature_cols
        .iter()
        .zip(categories)
        .filter(|((_, kind), _)| matches!(kind, ColumnKind::Categorical))
        .map(|((col, _), cats)| (header[*col].clone(), cats))
        .collect();
    let report = LoadReport {
        rows_read: records.len(),
        rows_dropped: records.len() - kept.len(),
        columns_used: feature_cols.iter().map(|(c, _)| header[*c].clone()).collect(),
        one_hot_map,
    };
    Ok((data, report))
}

/// Converts the raw UCI Adult files (`adult.data`, `adult.test`) into one
/// headered CSV with a `split` column (`train` / `test`).
///
/// Cells are trimmed, the trailing `.` on test labels is removed, and the
/// comment line at the top of `adult.test` is skipped. Missing values stay
/// as `?` so the loader drops them.
pub fn convert_adult(train_raw: &Path, test_raw: &Path, out: &Path) -> Result<usize> {
    const COLUMNS: [&str; 15] = [
        "age",
        "workclass",
        "fnlwgt",
        "education",
        "education-num",
        "marital-status",
        "occupation",
        "relationship",
        "race",
        "sex",
        "capital-gain",
        "capital-loss",
        "hours-per-week",
        "native-country",
        "income",
    ];
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out)
        .map_err(|e| csv_error(out, e))?;
    let mut header: Vec<&str> = COLUMNS.to_vec();
    header.push("split");
    writer.write_record(&header).map_err(|e| csv_error(out, e))?;

    let mut rows = 0;
    for (path, tag) in [(train_raw, "train"), (test_raw, "test")] {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('|') {
                continue;
            }
            let mut cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != COLUMNS.len() {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("line {}: expected {} fields, found {}", lineno + 1, COLUMNS.len(), cells.len()),
                });
            }
            let last = cells.len() - 1;
            cells[last] = cells[last].trim_end_matches('.');
            cells.push(tag);
            writer.write_record(&cells).map_err(|e| csv_error(out, e))?;
            rows += 1;
        }
    }
    writer.flush().map_err(|e| Error::io(out, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> DataSchema {
        DataSchema {
            label_column: "y".into(),
            sensitive_column: "s".into(),
            positive_label_value: "yes".into(),
            privileged_value: "m".into(),
            categorical_columns: vec!["color".into()],
            drop_columns: vec![],
            split_column: None,
        }
    }

    fn write(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, text).unwrap();
        (dir, p)
    }

    #[test]
    fn one_hot_width_and_order() {
        let (_d, p) = write("color,age,s,y\nred,30,m,yes\nblue,40,f,no\nred,50,f,yes\n");
        let (data, report) = load_csv(&p, &schema()).unwrap();
        assert_eq!(data.n_features(), 3);
        assert_eq!(data.feature_names(), &["color=red", "color=blue", "age"]);
        assert_eq!(data.row(1), &[0.0, 1.0, 40.0]);
        assert_eq!(data.labels(), &[1, 0, 1]);
        assert_eq!(data.sensitive(), &[1, 0, 0]);
        assert_eq!(report.one_hot_map["color"], vec!["red", "blue"]);
        assert_eq!(report.columns_used, vec!["color", "age"]);
    }

    #[test]
    fn missing_rows_are_dropped_and_counted() {
        let (_d, p) = write("color,age,s,y\nred,?,m,yes\n,40,f,no\nred,50,f,yes\n");
        let (data, report) = load_csv(&p, &schema()).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(report.rows_read, 3);
        assert_eq!(report.rows_dropped, 2);
    }

    #[test]
    fn schema_and_parse_errors() {
        let (_d, p) = write("color,age,s,y\nred,abc,m,yes\n");
        assert!(matches!(load_csv(&p, &schema()), Err(Error::Input(m)) if m.contains("row 0")));
        let mut bad = schema();
        bad.label_column = "nope".into();
        assert!(matches!(load_csv(&p, &bad), Err(Error::Schema(_))));
        let mut overlap = schema();
        overlap.drop_columns = vec!["color".into()];
        assert!(matches!(load_csv(&p, &overlap), Err(Error::Schema(_))));
        let (_d2, p2) = write("color,age,s,y\n?,1,m,yes\n");
        assert!(matches!(load_csv(&p2, &schema()), Err(Error::Input(_))));
    }

    #[test]
    fn split_column_becomes_tags() {
        let mut s = schema();
        s.split_column = Some("part".into());
        let (_d, p) = write("color,age,s,y,part\nred,1,m,yes,train\nblue,2,f,no,test\n");
        let (data, _) = load_csv(&p, &s).unwrap();
        assert_eq!(data.n_features(), 3);
        assert_eq!(data.with_tag("test").unwrap().row(0), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn sensitive_column_listed_as_categorical_is_also_a_feature() {
        let mut s = schema();
        s.categorical_columns.push("s".into());
        let (_d, p) = write("color,age,s,y\nred,30,m,yes\nblue,40,f,no\n");
        let (data, report) = load_csv(&p, &s).unwrap();
        assert_eq!(data.feature_names(), &["color=red", "color=blue", "age", "s=m", "s=f"]);
        assert_eq!(data.sensitive(), &[1, 0]);
        assert_eq!(report.columns_used, vec!["color", "age", "s"]);
    }
}
