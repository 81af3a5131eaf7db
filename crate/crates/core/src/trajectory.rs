//! Logged time series of a scenario run and its CSV rendering.

use std::collections::BTreeSet;
use std::io::Write;

use crate::dynamics::ProductId;
use crate::error::Result;
use crate::thermo::AggregateState;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub ids: Vec<ProductId>,
    pub shares: Vec<f64>,
    pub prefs: Vec<f64>,
    /// Utilities in force at `t` (after any event at `t`).
    pub utilities: Vec<f64>,
    pub aggregates: AggregateState,
}

impl LogRow {
    pub fn share_of(&self, id: ProductId) -> f64 {
        self.ids
            .iter()
            .position(|&x| x == id)
            .map_or(0.0, |i| self.shares[i])
    }

    pub fn pref_of(&self, id: ProductId) -> f64 {
        self.ids
            .iter()
            .position(|&x| x == id)
            .map_or(0.0, |i| self.prefs[i])
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn first(&self) -> Option<&LogRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Every product id that appears in any row, ascending.
    pub fn product_ids(&self) -> Vec<ProductId> {
        let all: BTreeSet<ProductId> = self
            .rows
            .iter()
            .flat_map(|r| r.ids.iter().copied())
            .collect();
        all.into_iter().collect()
    }

    /// Share time series of one product (zero where it is absent).
    pub fn share_series(&self, id: ProductId) -> Vec<f64> {
        self.rows.iter().map(|r| r.share_of(id)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// Row whose time is closest to `t`.
    pub fn row_at(&self, t: f64) -> Option<&LogRow> {
        self.rows
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }

    /// Shares of the row at `t` laid out on `ids` (absent products read 0).
    pub fn shares_on(&self, row: &LogRow, ids: &[ProductId]) -> Vec<f64> {
        ids.iter().map(|&id| row.share_of(id)).collect()
    }

    pub fn csv_header(&self) -> String {
        let ids = self.product_ids();
        let mut cols = vec!["t".to_string()];
        cols.extend(ids.iter().map(|id| format!("S_{id}")));
        cols.extend(ids.iter().map(|id| format!("P_{id}")));
        cols.extend(["U_bar", "U_avg", "entropy"].map(String::from));
        cols.join(",")
    }

    /// CSV with header `t,S_<id>...,P_<id>...,U_bar,U_avg,entropy`; every
    /// number is written with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let ids = self.product_ids();
        writeln!(out, "{}", self.csv_header())?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            push_num(&mut line, row.t);
            for &id in &ids {
                line.push(',');
                push_num(&mut line, row.share_of(id));
            }
            for &id in &ids {
                line.push(',');
                push_num(&mut line, row.pref_of(id));
            }
            for v in [
                row.aggregates.representative_utility,
                row.aggregates.average_utility,
                row.aggregates.entropy,
            ] {
                line.push(',');
                push_num(&mut line, v);
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

fn push_num(line: &mut String, v: f64) {
    use std::fmt::Write as _;
    write!(line, "{v:.16e}").expect("writing to a String cannot fail");
}
