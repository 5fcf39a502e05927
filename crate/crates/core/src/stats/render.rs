use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AuditSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
    Table,
}

pub const CSV_HEADER: &str =
    "group,filled_in,well_specified,invalid,not_assessed,percent,records_containing,records_all_valid,record_percent";

/// Render a summary. JSON is pretty-printed with a trailing newline.
pub fn render_summary(summary: &AuditSummary, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => render_csv(summary),
        ReportFormat::Table => render_table(summary),
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn render_csv(s: &AuditSummary) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for g in &s.groups {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            g.group.as_str(),
            g.filled_in,
            g.well_specified,
            g.invalid,
            g.not_assessed,
            opt(g.percent_rounded),
            g.records_containing,
            g.records_all_valid,
            opt(g.record_percent_rounded),
        );
    }
    out
}

/// `1976642` -> `1,976,642`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn grid(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<String>, out: &mut String| {
        let mut l = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(l, "{c:<w$}");
            } else {
                let _ = write!(l, "  {c:>w$}");
            }
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line(header.iter().map(|h| h.to_string()).collect(), &mut out);
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for r in rows {
        line(r.clone(), &mut out);
    }
    out
}

fn pct(v: Option<u64>) -> String {
    v.map(|p| p.to_string()).unwrap_or_else(|| "-".into())
}

fn render_table(s: &AuditSummary) -> String {
    let with_na = s.groups.iter().any(|g| g.not_assessed > 0);
    let mut header = vec![
        "Attribute type",
        "# Filled-in values",
        "# Well-specified values",
        "% Well-specified values",
    ];
    if with_na {
        header.push("# Not assessed");
    }
    let rows: Vec<Vec<String>> = s
        .groups
        .iter()
        .map(|g| {
            let mut r = vec![
                g.group.display_label().to_string(),
                thousands(g.filled_in),
                thousands(g.well_specified),
                pct(g.percent_rounded),
            ];
            if with_na {
                r.push(thousands(g.not_assessed));
            }
            r
        })
        .collect();
    let mut out = grid(&header, &rows);

    out.push('\n');
    let rows: Vec<Vec<String>> = s
        .groups
        .iter()
        .map(|g| {
            vec![
                g.group.display_label().to_string(),
                thousands(g.records_containing),
                thousands(g.records_all_valid),
                pct(g.record_percent_rounded),
            ]
        })
        .collect();
    out.push_str(&grid(
        &["Attribute type", "# Records with values", "# Records all valid", "% Records all valid"],
        &rows,
    ));

    let c = &s.corpus;
    out.push('\n');
    let _ = writeln!(out, "Records: {}", thousands(c.total_records));
    let _ = writeln!(
        out,
        "Attributes: {} (mean {} per record)",
        thousands(c.total_attributes),
        pct(c.mean_attributes_per_record_rounded)
    );
    let _ = writeln!(
        out,
        "Records without attributes: {}",
        thousands(c.records_with_zero_attributes)
    );
    let census = &s.census;
    let _ = writeln!(
        out,
        "Custom attribute names: {}{} in {} occurrences across {} records from {} owners",
        if census.approximate { "~" } else { "" },
        thousands(census.unique_custom_names),
        thousands(census.custom_attribute_occurrences),
        thousands(census.records_with_custom),
        thousands(census.owners_with_custom),
    );
    if !s.packages.is_empty() {
        out.push('\n');
        let rows: Vec<Vec<String>> = s
            .packages
            .iter()
            .map(|p| {
                vec![
                    p.name.clone(),
                    thousands(p.count),
                    p.percent.map(|v| format!("{v:.1}")).unwrap_or_else(|| "-".into()),
                ]
            })
            .collect();
        out.push_str(&grid(&["Package", "# Records", "% Records"], &rows));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::ValidationGroup;
    use crate::stats::{finalize, new_tally};

    #[test]
    fn thousands_separator() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(1000), "1,000");
        assert_eq!(thousands(1_976_642), "1,976,642");
        assert_eq!(thousands(82_360_966), "82,360,966");
    }

    #[test]
    fn csv_shape() {
        let mut t = new_tally();
        let g = t.group_mut(ValidationGroup::Boolean).unwrap();
        g.filled_in = 7_585;
        g.well_specified = 2_015;
        g.invalid = 5_570;
        let csv = render_summary(&finalize(&t), ReportFormat::Csv);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "ontology_term,0,0,0,0,,0,0,");
        assert_eq!(lines[3], "boolean,7585,2015,5570,0,27,0,0,");
    }

    #[test]
    fn table_has_four_rows_and_columns() {
        let out = render_summary(&finalize(&new_tally()), ReportFormat::Table);
        let first: Vec<_> = out.lines().take(6).collect();
        assert!(first[0].starts_with("Attribute type"));
        assert!(first[0].ends_with("% Well-specified values"));
        assert!(first[2].starts_with("Ontology term"));
        assert!(first[5].starts_with("Integer"));
        assert!(first[2].ends_with('-'));
    }
}
