use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::desk::Variant;
use crate::error::{Error, Result};
use crate::eval::{Aggregate, MeanStd, AGGREGATE_ROW};

const MODULE: &str = "report";

/// Rows are constructions plus the aggregate row, columns are model variants.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<MeanStd>)>,
    pub with_stdev: bool,
}

/// Builds the table from one aggregate per model. Known variants come in
/// their fixed order; any other model names follow alphabetically.
pub fn comparison_table(aggs: &[Aggregate]) -> Result<ComparisonTable> {
    if aggs.is_empty() {
        return Err(Error::module(MODULE, "no results to report"));
    }
    let rank = |name: &str| Variant::parse(name).map_or(usize::MAX, |v| v as usize);
    let mut sorted: Vec<&Aggregate> = aggs.iter().collect();
    sorted.sort_by(|a, b| (rank(&a.model), &a.model).cmp(&(rank(&b.model), &b.model)));
    for w in sorted.windows(2) {
        if w[0].model == w[1].model {
            return Err(Error::module(MODULE, format!("model {} appears twice", w[0].model)));
        }
    }
    let names = |a: &Aggregate| a.rows.iter().map(|(n, _)| n.clone()).collect::<BTreeSet<_>>();
    let expected = names(sorted[0]);
    for a in &sorted[1..] {
        let got = names(a);
        if got != expected {
            let missing: Vec<_> = expected.difference(&got).collect();
            let extra: Vec<_> = got.difference(&expected).collect();
            return Err(Error::module(
                MODULE,
                format!(
                    "{} has different constructions from {}: missing {missing:?}, extra {extra:?}",
                    a.model, sorted[0].model
                ),
            ));
        }
    }
    let rows = sorted[0]
        .rows
        .iter()
        .map(|(n, _)| n.as_str())
        .chain(std::iter::once(AGGREGATE_ROW))
        .map(|n| {
            (
                n.to_string(),
                sorted.iter().map(|a| a.row(n).expect("checked").clone()).collect(),
            )
        })
        .collect();
    Ok(ComparisonTable {
        columns: sorted.iter().map(|a| a.model.clone()).collect(),
        rows,
        with_stdev: sorted.iter().any(|a| a.seeds.len() > 1),
    })
}

impl ComparisonTable {
    fn best(cells: &[MeanStd]) -> f64 {
        cells.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max)
    }

    fn cell(&self, c: &MeanStd) -> String {
        if self.with_stdev {
            format!("{:.3} ± {:.3}", c.mean, c.stdev)
        } else {
            format!("{:.3}", c.mean)
        }
    }

    /// Column-best cells carry a trailing `*`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("construction");
        for c in &self.columns {
            let _ = write!(out, "\t{c}");
        }
        out.push('\n');
        for (name, cells) in &self.rows {
            let best = Self::best(cells);
            out.push_str(name);
            for c in cells {
                let mark = if c.mean == best { "*" } else { "" };
                let _ = write!(out, "\t{}{mark}", self.cell(c));
            }
            out.push('\n');
        }
        out
    }

    /// Column-best cells in bold.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| construction |");
        for c in &self.columns {
            let _ = write!(out, " {c} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.columns.len()));
        out.push('\n');
        for (name, cells) in &self.rows {
            let best = Self::best(cells);
            let _ = write!(out, "| {} |", name.replace('_', " "));
            for c in cells {
                let s = self.cell(c);
                if c.mean == best {
                    let _ = write!(out, " **{s}** |");
                } else {
                    let _ = write!(out, " {s} |");
                }
            }
            out.push('\n');
        }
        out
    }
}
