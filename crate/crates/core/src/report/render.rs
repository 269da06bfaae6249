use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;

use super::BiasReport;
use crate::analysis::dominant_index;
use crate::config::Format;
use crate::metrics::{Dimension, ProbVector};

pub const TABLE_FILES: [&str; 6] = [
    "tables/averaged.csv",
    "tables/per_model.csv",
    "tables/bias_scores.csv",
    "tables/volatility.csv",
    "tables/skew_flags.csv",
    "tables/intersections.csv",
];

pub const PLOTDATA_FILES: [&str; 3] = [
    "plotdata/volatility.json",
    "plotdata/bias_scores.json",
    "plotdata/intersections.json",
];

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report values serialize");
    bytes.push(b'\n');
    bytes
}

pub fn render_json(report: &BiasReport) -> Vec<u8> {
    pretty(report)
}

fn share_headers() -> Vec<String> {
    Dimension::MARGINALS
        .iter()
        .flat_map(|d| d.categories())
        .collect()
}

fn shares<'a>(vectors: impl IntoIterator<Item = &'a ProbVector>) -> Vec<String> {
    vectors.into_iter().flat_map(|v| v.p.iter().map(|x| x.to_string())).collect()
}

fn csv_bytes(header: Vec<String>, rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn tables(report: &BiasReport) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();

    let mut header: Vec<String> = ["category", "subcategory", "role"].map(String::from).to_vec();
    header.extend(share_headers());
    let rows = report
        .roles
        .iter()
        .map(|r| {
            let mut row = vec![r.category.clone(), r.subcategory.clone().unwrap_or_default(), r.role.clone()];
            row.extend(shares([&r.averaged.gender, &r.averaged.race, &r.averaged.age]));
            row
        })
        .collect();
    out.push((TABLE_FILES[0].into(), csv_bytes(header, rows)));

    let mut header: Vec<String> = ["model_id", "role", "k"].map(String::from).to_vec();
    header.extend(share_headers());
    let rows = report
        .roles
        .iter()
        .flat_map(|r| {
            r.per_model.iter().map(move |m| {
                let mut row = vec![m.model_id.clone(), r.role.clone(), m.k.to_string()];
                row.extend(shares([&m.gender, &m.race, &m.age]));
                row
            })
        })
        .collect();
    out.push((TABLE_FILES[1].into(), csv_bytes(header, rows)));

    let dims = [Dimension::Gender, Dimension::Race, Dimension::Age, Dimension::Joint];
    let mut header: Vec<String> = ["model_id", "role"].map(String::from).to_vec();
    header.extend(dims.iter().map(|d| format!("{}_nats", d.name())));
    header.extend(dims.iter().map(|d| format!("{}_normalized", d.name())));
    let mut rows = Vec::new();
    for r in &report.roles {
        let entries = r
            .per_model
            .iter()
            .map(|m| (m.model_id.as_str(), &m.bias))
            .chain(std::iter::once(("average", &r.averaged_bias)));
        for (model, scores) in entries {
            let mut row = vec![model.to_string(), r.role.clone()];
            row.extend(dims.iter().map(|&d| scores.get(d).nats.to_string()));
            row.extend(dims.iter().map(|&d| scores.get(d).normalized.to_string()));
            rows.push(row);
        }
    }
    out.push((TABLE_FILES[2].into(), csv_bytes(header, rows)));

    let mut header: Vec<String> = ["rank", "role", "stddev"].map(String::from).to_vec();
    header.extend(report.models.iter().map(|m| format!("male_share_{m}")));
    let rows = report
        .volatility
        .iter()
        .flatten()
        .enumerate()
        .map(|(i, v)| {
            let mut row = vec![(i + 1).to_string(), v.role.clone(), v.stddev.to_string()];
            row.extend(v.male_shares.iter().map(|x| x.to_string()));
            row
        })
        .collect();
    out.push((TABLE_FILES[3].into(), csv_bytes(header, rows)));

    let header = ["role", "model_id", "dimension", "category", "share", "threshold"].map(String::from).to_vec();
    let rows = report
        .skew_flags
        .iter()
        .map(|f| {
            vec![
                f.role.clone(),
                f.model_id.clone().unwrap_or_else(|| "average".into()),
                f.dimension.name().into(),
                f.category.clone(),
                f.share.to_string(),
                f.threshold.to_string(),
            ]
        })
        .collect();
    out.push((TABLE_FILES[4].into(), csv_bytes(header, rows)));

    let mut header: Vec<String> = ["role", "gender", "race", "age", "recurrence"].map(String::from).to_vec();
    header.extend(report.models.iter().map(|m| format!("top_in_{m}")));
    let rows = report
        .intersections
        .iter()
        .map(|f| {
            let mut row = vec![f.role.clone(), f.gender.clone(), f.race.clone(), f.age.clone(), f.recurrence.to_string()];
            row.extend(f.top_in.iter().map(|b| b.to_string()));
            row
        })
        .collect();
    out.push((TABLE_FILES[5].into(), csv_bytes(header, rows)));
    out
}

fn plotdata(report: &BiasReport) -> Vec<(PathBuf, Vec<u8>)> {
    let volatility = report.volatility.as_deref().unwrap_or_default();
    let fig_volatility = json!({
        "description": "per-role population standard deviation of male share across models, descending",
        "models": report.models,
        "roles": volatility.iter().map(|v| &v.role).collect::<Vec<_>>(),
        "stddev": volatility.iter().map(|v| v.stddev).collect::<Vec<_>>(),
        "male_shares": volatility.iter().map(|v| &v.male_shares).collect::<Vec<_>>(),
    });

    let roles: Vec<&str> = report.roles.iter().map(|r| r.role.as_str()).collect();
    let series: Vec<_> = report
        .models
        .iter()
        .enumerate()
        .map(|(mi, model)| {
            let per_dim = |d: Dimension| -> Vec<f64> {
                report.roles.iter().map(|r| r.per_model[mi].bias.get(d).nats).collect()
            };
            json!({
                "model_id": model,
                "gender": per_dim(Dimension::Gender),
                "race": per_dim(Dimension::Race),
                "age": per_dim(Dimension::Age),
            })
        })
        .collect();
    let fig_bias = json!({
        "description": "Jensen-Shannon bias score (nats) per model, role and dimension",
        "roles": roles,
        "series": series,
    });

    let fig_intersections = json!({
        "description": "most frequent gender x race x age cell per role and model, grouped by cell",
        "models": report.models,
        "findings": report.intersections,
    });

    vec![
        (PLOTDATA_FILES[0].into(), pretty(&fig_volatility)),
        (PLOTDATA_FILES[1].into(), pretty(&fig_bias)),
        (PLOTDATA_FILES[2].into(), pretty(&fig_intersections)),
    ]
}

fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

/// Percent cells with the dominant category in bold.
fn pct_cells(v: &ProbVector) -> Vec<String> {
    let top = dominant_index(v);
    v.p.iter()
        .enumerate()
        .map(|(i, &x)| if i == top { format!("**{}**", pct(x)) } else { pct(x) })
        .collect()
}

fn md_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn md_header(cells: &[String]) -> String {
    let mut s = md_row(cells);
    s.push_str(&md_row(&vec!["---".to_string(); cells.len()]));
    s
}

pub fn render_markdown(report: &BiasReport) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Demographic bias audit\n");
    let _ = writeln!(md, "{} {}\n", report.tool.name, report.tool.version);
    let _ = writeln!(
        md,
        "- models: {}\n- roles: {}\n- k: {}\n- skew threshold: {}\n- labels: {} rows (checksum {})\n",
        report.models.join(", "),
        report.roles.len(),
        report.config.k,
        report.config.threshold,
        report.labels_rows,
        report.labels_checksum
    );

    let _ = writeln!(md, "## Corpora\n");
    md.push_str(&md_header(
        &["model", "dim", "images", "image checksum", "prompts", "prompt checksum"].map(String::from),
    ));
    for c in &report.corpus {
        md.push_str(&md_row(&[
            c.model_id.clone(),
            c.dim.to_string(),
            c.image_count.to_string(),
            c.image_checksum.clone(),
            c.prompt_count.to_string(),
            c.prompt_checksum.clone(),
        ]));
    }

    let _ = writeln!(md, "\n## Average shares across models (%)\n");
    let mut header: Vec<String> = ["Category", "Sub-category", "Role"].map(String::from).to_vec();
    header.extend(share_headers());
    md.push_str(&md_header(&header));
    for r in &report.roles {
        let mut row = vec![
            r.category.clone(),
            r.subcategory.clone().unwrap_or_else(|| "--".into()),
            r.role.clone(),
        ];
        for d in Dimension::MARGINALS {
            row.extend(pct_cells(r.averaged.vector(d)));
        }
        md.push_str(&md_row(&row));
    }

    let _ = writeln!(md, "\n## Bias scores (Jensen-Shannon, nats; max ln 2 = 0.6931)\n");
    md.push_str(&md_header(
        &["Role", "Model", "Gender", "Race", "Age", "Joint"].map(String::from),
    ));
    for r in &report.roles {
        let rows = r
            .per_model
            .iter()
            .map(|m| (m.model_id.as_str(), &m.bias))
            .chain(std::iter::once(("average", &r.averaged_bias)));
        for (model, s) in rows {
            md.push_str(&md_row(&[
                r.role.clone(),
                model.to_string(),
                format!("{:.4}", s.gender.nats),
                format!("{:.4}", s.race.nats),
                format!("{:.4}", s.age.nats),
                format!("{:.4}", s.joint.nats),
            ]));
        }
    }

    let _ = writeln!(md, "\n## Gender volatility across models\n");
    match &report.volatility {
        None => {
            let _ = writeln!(md, "Needs at least two models.");
        }
        Some(entries) => {
            let mut header: Vec<String> = ["Rank", "Role", "Std. dev."].map(String::from).to_vec();
            header.extend(report.models.iter().map(|m| format!("{m} male %")));
            md.push_str(&md_header(&header));
            for (i, v) in entries.iter().enumerate() {
                let mut row = vec![(i + 1).to_string(), v.role.clone(), format!("{:.4}", v.stddev)];
                row.extend(v.male_shares.iter().map(|&x| pct(x)));
                md.push_str(&md_row(&row));
            }
        }
    }

    let _ = writeln!(md, "\n## Skew flags (share >= {})\n", report.config.threshold);
    if report.skew_flags.is_empty() {
        let _ = writeln!(md, "None.");
    } else {
        md.push_str(&md_header(&["Role", "Model", "Dimension", "Category", "Share %"].map(String::from)));
        for f in &report.skew_flags {
            md.push_str(&md_row(&[
                f.role.clone(),
                f.model_id.clone().unwrap_or_else(|| "average".into()),
                f.dimension.name().to_string(),
                f.category.clone(),
                pct(f.share),
            ]));
        }
    }

    let _ = writeln!(md, "\n## Intersectional findings\n");
    md.push_str(&md_header(
        &["Role", "Gender", "Race", "Age", "Recurrence", "Models"].map(String::from),
    ));
    for f in &report.intersections {
        let models: Vec<&str> = report
            .models
            .iter()
            .zip(&f.top_in)
            .filter(|(_, &top)| top)
            .map(|(m, _)| m.as_str())
            .collect();
        md.push_str(&md_row(&[
            f.role.clone(),
            f.gender.clone(),
            f.race.clone(),
            f.age.clone(),
            format!("{}/{}", f.recurrence, report.models.len()),
            models.join(", "),
        ]));
    }
    md
}

/// Every output file for the requested formats, as (relative path, bytes).
pub fn render_files(report: &BiasReport, formats: &[Format]) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    if formats.contains(&Format::Json) {
        files.push((PathBuf::from("report.json"), render_json(report)));
        files.extend(plotdata(report));
    }
    if formats.contains(&Format::Csv) {
        files.extend(tables(report));
    }
    if formats.contains(&Format::Md) {
        files.push((PathBuf::from("report.md"), render_markdown(report).into_bytes()));
    }
    files
}
