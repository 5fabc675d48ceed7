use std::fs::File;
use std::path::Path;

use super::{Dataset, Split};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Reads `f0,…,f{F-1},label[,superclass]` rows. Without a superclass column
/// every sample gets superclass 0.
pub fn load_csv(path: &Path, classes: usize, split: Split) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let label_col = names
        .iter()
        .position(|&h| h == "label")
        .ok_or_else(|| Error::Parse { line: 1, msg: "missing `label` column".into() })?;
    for (i, name) in names[..label_col].iter().enumerate() {
        if *name != format!("f{i}") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected column `f{i}`, found `{name}`"),
            });
        }
    }
    let has_super = match &names[label_col + 1..] {
        [] => false,
        ["superclass"] => true,
        rest => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected trailing columns {rest:?}"),
            })
        }
    };
    if label_col == 0 {
        return Err(Error::Parse { line: 1, msg: "no feature columns".into() });
    }

    let (mut x, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if rec.len() != names.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", names.len(), rec.len()),
            });
        }
        for field in rec.iter().take(label_col) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid number `{field}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, msg: format!("non-finite feature `{field}`") });
            }
            x.push(v);
        }
        let int = |field: &str| -> Result<i64> {
            field.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid integer `{field}`"),
            })
        };
        let label = int(&rec[label_col])?;
        if label < 0 || label as u64 >= classes as u64 {
            return Err(Error::LabelRange { line, label, classes });
        }
        y.push(label as usize);
        let sup = if has_super { int(&rec[label_col + 1])? } else { 0 };
        if sup < 0 {
            return Err(Error::Parse { line, msg: format!("negative superclass {sup}") });
        }
        s.push(sup as usize);
    }
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rows = y.len();
    Dataset::new(Tensor::new(vec![rows, label_col], x)?, y, s, classes, split)
}

/// Writes the format read by [`load_csv`], including the superclass column.
/// Values use shortest round-trip formatting, so reloading is exact.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Malformed(format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let f = data.feature_dim();
    let mut header: Vec<String> = (0..f).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    header.push("superclass".into());
    w.write_record(&header).map_err(io)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.features().row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.labels()[i].to_string());
        rec.push(data.superclasses()[i].to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
