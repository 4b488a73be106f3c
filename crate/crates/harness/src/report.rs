//! Merges sweep CSVs into one table with a summary and gnuplot-ready data.

use crate::error::{HarnessError, Result};
use crate::sweep::ROW_HEADER;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileSummary {
    pub path: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeSummary {
    pub schema_version: u32,
    pub files: Vec<FileSummary>,
    pub total_rows: usize,
    pub dominated: usize,
    pub not_dominated: usize,
    pub unpaired: usize,
}

struct Table {
    source: String,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))?;
    let header = reader.headers()?.clone();
    if header.iter().ne(ROW_HEADER.iter().copied()) {
        return Err(HarnessError::Report(format!(
            "{}: not a sweep CSV (unexpected header)",
            path.display()
        )));
    }
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    let source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Table { source, rows })
}

fn column(name: &str) -> usize {
    ROW_HEADER.iter().position(|h| *h == name).expect("known column")
}

/// Writes `merged.csv`, `summary.json`, `plot.dat` and `plot.gp` into
/// `out_dir`.
pub fn merge_reports(inputs: &[PathBuf], out_dir: &Path) -> Result<MergeSummary> {
    if inputs.is_empty() {
        return Err(HarnessError::Report("no input files".into()));
    }
    let tables = inputs.iter().map(|p| read_table(p)).collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir)?;

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["source"];
    header.extend_from_slice(ROW_HEADER);
    w.write_record(&header)?;
    let dom = column("dominated");
    let (mut dominated, mut not_dominated, mut unpaired) = (0, 0, 0);
    for t in &tables {
        for r in &t.rows {
            let mut rec = vec![t.source.as_str()];
            rec.extend(r.iter());
            w.write_record(&rec)?;
            match r.get(dom) {
                Some("true") => dominated += 1,
                Some("false") => not_dominated += 1,
                _ => unpaired += 1,
            }
        }
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| HarnessError::Report(e.to_string()))?)
        .expect("UTF-8 input stays UTF-8");
    let sources: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
    let merged = format!(
        "# dmclab report schema_version={}\n# sources={}\n{body}",
        crate::SCHEMA_VERSION,
        sources.join(";")
    );
    std::fs::write(out_dir.join("merged.csv"), merged)?;

    let summary = MergeSummary {
        schema_version: crate::SCHEMA_VERSION,
        files: tables
            .iter()
            .zip(&sources)
            .map(|(t, p)| FileSummary {
                path: p.clone(),
                rows: t.rows.len(),
            })
            .collect(),
        total_rows: tables.iter().map(|t| t.rows.len()).sum(),
        dominated,
        not_dominated,
        unpaired,
    };
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    write_plot(&tables, out_dir)?;
    Ok(summary)
}

/// One gnuplot data block per source: `horizon n estimate stderr bound`.
fn write_plot(tables: &[Table], out_dir: &Path) -> Result<()> {
    let cols = ["horizon", "n", "estimate", "stderr", "bound"].map(column);
    let mut dat = String::new();
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            dat.push_str("\n\n");
        }
        writeln!(dat, "# {}", t.source).unwrap();
        writeln!(dat, "# horizon n estimate stderr bound").unwrap();
        for r in &t.rows {
            let fields: Vec<&str> = cols
                .iter()
                .map(|&c| match r.get(c) {
                    Some("") | None => "NaN",
                    Some(v) => v,
                })
                .collect();
            writeln!(dat, "{}", fields.join(" ")).unwrap();
        }
    }
    std::fs::write(out_dir.join("plot.dat"), dat)?;

    let mut gp = String::from(
        "# gnuplot plot.gp\nset terminal pngcairo size 900,600\nset output 'plot.png'\n\
         set xlabel 'T'\nset ylabel 'estimate'\nset logscale y\nset key outside\nplot \\\n",
    );
    let lines: Vec<String> = tables
        .iter()
        .enumerate()
        .map(|(i, t)| {
            format!(
                "  'plot.dat' index {i} using 1:3:4 with yerrorbars title '{0}', \\\n  \
                 'plot.dat' index {i} using 1:5 with lines dashtype 2 title '{0} bound'",
                t.source
            )
        })
        .collect();
    gp.push_str(&lines.join(", \\\n"));
    gp.push('\n');
    std::fs::write(out_dir.join("plot.gp"), gp)?;
    Ok(())
}
