use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

/// Reads `label,feat0,feat1,...` rows. A first line whose label field is not
/// an integer is treated as a header.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    let parse_err = |line: usize, msg: String| Error::Parse { path: path.to_owned(), line, msg };

    let mut dim = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let head = fields.next().unwrap_or("");
        let label = match head.parse::<usize>() {
            Ok(l) => l,
            Err(_) if k == 0 => continue,
            Err(_) => return Err(parse_err(k + 1, format!("bad label {head:?}"))),
        };
        let row = fields
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(k + 1, format!("bad feature {f:?}"))))
            .collect::<Result<Vec<_>>>()?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(parse_err(k + 1, format!("expected {d} features, found {}", row.len())))
            }
            _ => {}
        }
        labels.push(label);
        features.extend(row);
    }
    let dim = dim.ok_or_else(|| parse_err(0, "no samples".into()))?;
    if dim == 0 {
        return Err(parse_err(1, "rows carry no features".into()));
    }
    let classes = labels.iter().max().map_or(0, |&c| c + 1);
    let name = path.file_stem().map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, dim, classes, features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "label,a,b\n1,0.5,2\n0,-1,3e-1\n").unwrap();
        let ds = load_csv(&p).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.classes(), 2);
        assert_eq!(ds.features(1), &[-1.0, 0.3]);

        std::fs::write(&p, "1,0.5,2\n0,-1\n").unwrap();
        match load_csv(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
