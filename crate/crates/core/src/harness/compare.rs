use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// A metrics CSV reduced to its header and final row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl MetricsTable {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, h)| h)
            .filter(|h| !h.is_empty())
            .ok_or_else(|| Error::Format { path: path.to_path_buf(), msg: "empty file".into() })?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (k, line) in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: k + 1,
                    msg: format!("{} fields, header has {}", fields.len(), columns.len()),
                });
            }
            let row = fields
                .iter()
                .map(|f| {
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        f.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                            path: path.to_path_buf(),
                            line: k + 1,
                            msg: format!("{f:?}: {e}"),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Format { path: path.to_path_buf(), msg: "no data rows".into() });
        }
        if !text.ends_with('\n') {
            return Err(Error::Format { path: path.to_path_buf(), msg: "last row is truncated".into() });
        }
        Ok(Self { columns, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }

    pub fn last(&self) -> &[Option<f64>] {
        self.rows.last().expect("parse guarantees one row")
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Expected relation between the final values of run A and run B.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Ge,
    Le,
}

/// `metric:ge` asserts `A >= B` on the final epoch, `metric:le` asserts `A <= B`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderingAssertion {
    pub metric: String,
    pub relation: Relation,
}

impl FromStr for OrderingAssertion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (metric, rel) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("assertion {s:?} is not metric:ge or metric:le")))?;
        let relation = match rel {
            "ge" => Relation::Ge,
            "le" => Relation::Le,
            other => return Err(Error::invalid(format!("unknown relation {other:?} (expected ge or le)"))),
        };
        Ok(Self { metric: metric.to_string(), relation })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricDelta {
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

impl MetricDelta {
    /// `b - a` when both runs report the metric.
    pub fn delta(&self) -> Option<f64> {
        Some(self.b? - self.a?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub a: PathBuf,
    pub b: PathBuf,
    pub final_epoch: (Option<f64>, Option<f64>),
    pub deltas: Vec<MetricDelta>,
    pub assertion: Option<(OrderingAssertion, bool)>,
}

impl CompareReport {
    /// False only when an assertion was given and failed.
    pub fn passed(&self) -> bool {
        self.assertion.as_ref().is_none_or(|(_, ok)| *ok)
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "A = {}", self.a.display())?;
        writeln!(f, "B = {}", self.b.display())?;
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"));
        writeln!(f, "{:<16} {:>14} {:>14} {:>14}", "metric", "A", "B", "B - A")?;
        for d in &self.deltas {
            writeln!(f, "{:<16} {:>14} {:>14} {:>14}", d.metric, show(d.a), show(d.b), show(d.delta()))?;
        }
        if let Some((a, ok)) = &self.assertion {
            let rel = match a.relation {
                Relation::Ge => ">=",
                Relation::Le => "<=",
            };
            writeln!(f, "{} A {rel} B: {}", a.metric, if *ok { "PASS" } else { "FAIL" })?;
        }
        Ok(())
    }
}

/// Final-epoch deltas between two metrics CSVs with the same columns.
pub fn compare_tables(
    a: &MetricsTable,
    b: &MetricsTable,
    names: (&Path, &Path),
    assertion: Option<OrderingAssertion>,
) -> Result<CompareReport> {
    if a.columns != b.columns {
        return Err(Error::invalid(format!("schema mismatch: [{}] vs [{}]", a.columns.join(","), b.columns.join(","))));
    }
    let (la, lb) = (a.last(), b.last());
    let deltas: Vec<MetricDelta> = a
        .columns
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, name)| MetricDelta { metric: name.clone(), a: la[k], b: lb[k] })
        .collect();
    let assertion = match assertion {
        None => None,
        Some(asrt) => {
            let d = deltas
                .iter()
                .find(|d| d.metric == asrt.metric)
                .ok_or_else(|| Error::invalid(format!("no metric named {:?}", asrt.metric)))?;
            let ok = match (d.a, d.b, asrt.relation) {
                (Some(x), Some(y), Relation::Ge) => x >= y,
                (Some(x), Some(y), Relation::Le) => x <= y,
                _ => false,
            };
            Some((asrt, ok))
        }
    };
    Ok(CompareReport {
        a: names.0.to_path_buf(),
        b: names.1.to_path_buf(),
        final_epoch: (la[0], lb[0]),
        deltas,
        assertion,
    })
}

pub fn compare_runs(a: &Path, b: &Path, assertion: Option<OrderingAssertion>) -> Result<CompareReport> {
    compare_tables(&MetricsTable::load(a)?, &MetricsTable::load(b)?, (a, b), assertion)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: &str = "epoch,train_loss,test_acc\n0,1.0,0.5\n1,0.5,0.75\n";
    const B: &str = "epoch,train_loss,test_acc\n0,1.0,0.5\n1,0.25,0.5\n";

    fn table(s: &str) -> MetricsTable {
        MetricsTable::parse(s, Path::new("x.csv")).unwrap()
    }

    #[test]
    fn identical_files_have_zero_deltas() {
        let r = compare_tables(&table(A), &table(A), (Path::new("a"), Path::new("a")), None).unwrap();
        assert!(r.deltas.iter().all(|d| d.delta() == Some(0.0)));
        assert!(r.passed());
    }

    #[test]
    fn assertion_is_evaluated() {
        let p = (Path::new("a"), Path::new("b"));
        let ge: OrderingAssertion = "test_acc:ge".parse().unwrap();
        let r = compare_tables(&table(A), &table(B), p, Some(ge)).unwrap();
        assert!(r.passed());
        assert_eq!(r.deltas[0].delta(), Some(-0.25));
        let le: OrderingAssertion = "test_acc:le".parse().unwrap();
        assert!(!compare_tables(&table(A), &table(B), p, Some(le)).unwrap().passed());
        assert!("test_acc:gt".parse::<OrderingAssertion>().is_err());
        let missing = OrderingAssertion { metric: "nope".into(), relation: Relation::Ge };
        assert!(compare_tables(&table(A), &table(B), p, Some(missing)).is_err());
    }

    #[test]
    fn schema_mismatch_and_truncation() {
        let other = table("epoch,train_loss\n0,1.0\n");
        assert!(matches!(
            compare_tables(&table(A), &other, (Path::new("a"), Path::new("b")), None),
            Err(Error::InvalidArgument(_))
        ));
        assert!(MetricsTable::parse("epoch,train_loss,test_acc\n0,1.0\n", Path::new("t")).is_err());
        assert!(MetricsTable::parse("epoch,train_loss,test_acc\n0,1.0,0.5", Path::new("t")).is_err());
        assert!(MetricsTable::parse("epoch,train_loss,test_acc\n", Path::new("t")).is_err());
        assert!(MetricsTable::parse("", Path::new("t")).is_err());
    }

    #[test]
    fn absent_fields_parse_as_none() {
        let t = table("epoch,test_acc\n0,\n");
        assert_eq!(t.last(), &[Some(0.0), None]);
    }
}
