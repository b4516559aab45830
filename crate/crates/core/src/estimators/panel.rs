use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Balanced unit-by-period panel read from long `unit,period,value` CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub units: Vec<String>,
    pub periods: Vec<i64>,
    /// `values[unit][period index]`.
    pub values: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct Row {
    unit: String,
    period: i64,
    value: f64,
}

impl Panel {
    pub fn unit_index(&self, unit: &str) -> Option<usize> {
        self.units.iter().position(|u| u == unit)
    }

    /// Indices of periods strictly before `first_post`.
    pub fn pre_periods(&self, first_post: i64) -> Vec<usize> {
        self.periods
            .iter()
            .enumerate()
            .filter(|(_, &p)| p < first_post)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn load_panel(path: impl AsRef<Path>) -> Result<Panel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Open {
        path: path.to_path_buf(),
        source,
    })?;
    read_panel(file)
}

pub fn read_panel<R: Read>(reader: R) -> Result<Panel> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in ["unit", "period", "value"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.into()));
        }
    }
    let mut cells: BTreeMap<(String, i64), f64> = BTreeMap::new();
    let mut units: Vec<String> = Vec::new();
    let mut periods = BTreeSet::new();
    for (i, rec) in rdr.deserialize::<Row>().enumerate() {
        let row = rec.map_err(|e| Error::Row {
            row: i + 1,
            message: e.to_string(),
        })?;
        if !row.value.is_finite() {
            return Err(Error::Row {
                row: i + 1,
                message: "non-finite value".into(),
            });
        }
        if !units.contains(&row.unit) {
            units.push(row.unit.clone());
        }
        periods.insert(row.period);
        if cells.insert((row.unit.clone(), row.period), row.value).is_some() {
            return Err(Error::Row {
                row: i + 1,
                message: format!("duplicate cell ({}, {})", row.unit, row.period),
            });
        }
    }
    if cells.is_empty() {
        return Err(Error::Empty("panel".into()));
    }
    let periods: Vec<i64> = periods.into_iter().collect();
    let mut values = Vec::with_capacity(units.len());
    for u in &units {
        let mut series = Vec::with_capacity(periods.len());
        for p in &periods {
            let v = cells
                .get(&(u.clone(), *p))
                .ok_or_else(|| Error::Shape(format!("unbalanced panel: no value for ({u}, {p})")))?;
            series.push(*v);
        }
        values.push(series);
    }
    Ok(Panel { units, periods, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_balanced_panel() {
        let csv = "unit,period,value\nA,2001,1.0\nB,2000,3.0\nA,2000,0.5\nB,2001,4.0\n";
        let p = read_panel(csv.as_bytes()).unwrap();
        assert_eq!(p.units, vec!["A", "B"]);
        assert_eq!(p.periods, vec![2000, 2001]);
        assert_eq!(p.values, vec![vec![0.5, 1.0], vec![3.0, 4.0]]);
        assert_eq!(p.pre_periods(2001), vec![0]);
    }

    #[test]
    fn rejects_unbalanced_panel() {
        let csv = "unit,period,value\nA,1,1.0\nA,2,1.0\nB,1,3.0\n";
        assert!(matches!(read_panel(csv.as_bytes()), Err(Error::Shape(_))));
    }
}
