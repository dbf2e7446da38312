use std::fmt::Write as _;
use std::path::Path;

use super::{AuditReport, CellResult};
use crate::error::{AuditError, Result};
use crate::metrics::MetricKind;
use crate::util::write_atomic;

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metrics_csv(r: &AuditReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "generator",
        "attack",
        "train_size",
        "n_synth",
        "aux_source",
        "metric",
        "point",
        "boot_mean",
        "boot_stderr",
        "replicates",
        "status",
        "error",
    ])?;
    for c in &r.cells {
        for kind in MetricKind::ALL {
            let m = c.metric(kind);
            w.write_record([
                c.generator.clone(),
                c.attack.to_string(),
                c.train_size.to_string(),
                c.n_synth.to_string(),
                c.aux_source.as_str().to_string(),
                kind.as_str().to_string(),
                fmt_opt(m.map(|m| m.point)),
                fmt_opt(m.map(|m| m.boot_mean)),
                fmt_opt(m.map(|m| m.boot_stderr)),
                m.map(|m| m.replicates.to_string()).unwrap_or_default(),
                if c.failed() { "failed" } else { "ok" }.to_string(),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| AuditError::Csv(e.into_error().into()))
}

fn overfit_csv(r: &AuditReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["generator", "train_size", "point", "boot_mean", "boot_stderr", "replicates", "status", "error"])?;
    for o in &r.overfit {
        let e = o.estimate.as_ref();
        w.write_record([
            o.generator.clone(),
            o.train_size.to_string(),
            fmt_opt(e.map(|e| e.point)),
            fmt_opt(e.map(|e| e.boot_mean)),
            fmt_opt(e.map(|e| e.boot_stderr)),
            e.map(|e| e.replicates.to_string()).unwrap_or_default(),
            if o.error.is_some() { "failed" } else { "ok" }.to_string(),
            o.error.clone().unwrap_or_default(),
        ])?;
    }
    w.into_inner().map_err(|e| AuditError::Csv(e.into_error().into()))
}

/// Diverging blue-white-red colour for `t` in [-1, 1]; 0 maps to the neutral midpoint.
fn diverging(t: f64) -> String {
    const MID: [f64; 3] = [247.0, 247.0, 247.0];
    const HI: [f64; 3] = [178.0, 24.0, 43.0];
    const LO: [f64; 3] = [33.0, 102.0, 172.0];
    let t = t.clamp(-1.0, 1.0);
    let end = if t >= 0.0 { HI } else { LO };
    let a = t.abs();
    let c: Vec<u8> = (0..3).map(|i| (MID[i] + a * (end[i] - MID[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grid of optional values rendered as an SVG heatmap.
struct Grid {
    title: String,
    rows: Vec<String>,
    cols: Vec<String>,
    values: Vec<Vec<Option<f64>>>,
    midpoint: f64,
    half_span: f64,
}

impl Grid {
    fn svg(&self) -> String {
        let (cw, ch, left, top) = (64.0, 26.0, 150.0, 120.0);
        let width = left + cw * self.cols.len() as f64 + 20.0;
        let height = top + ch * self.rows.len() as f64 + 20.0;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<text x="10" y="20" font-size="14">{}</text>"#, escape(&self.title));
        for (j, c) in self.cols.iter().enumerate() {
            let x = left + cw * (j as f64 + 0.5);
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{}" transform="rotate(-45 {x} {})" text-anchor="start">{}</text>"#,
                top - 6.0,
                top - 6.0,
                escape(c)
            );
        }
        for (i, r) in self.rows.iter().enumerate() {
            let y = top + ch * i as f64;
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 6.0, y + ch * 0.65, escape(r));
            for (j, v) in self.values[i].iter().enumerate() {
                let x = left + cw * j as f64;
                let (fill, label) = match v {
                    Some(v) => (diverging((v - self.midpoint) / self.half_span), format!("{v:.2}")),
                    None => ("#bdbdbd".to_string(), "n/a".to_string()),
                };
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="white"/><text x="{}" y="{}" text-anchor="middle">{label}</text>"#,
                    x + cw / 2.0,
                    y + ch * 0.65
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn ordered_unique<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

fn column_label(c: &CellResult) -> String {
    match c.aux_source {
        super::AuxSource::Internal => format!("{} N={}", c.generator, c.train_size),
        super::AuxSource::External => format!("{} N={} ext", c.generator, c.train_size),
    }
}

/// Attacks by (generator, size) heatmap of bootstrap means, anchored at 0.5.
pub fn render_heatmap(r: &AuditReport, kind: MetricKind) -> String {
    let rows = ordered_unique(r.cells.iter().map(|c| c.attack));
    let cols = ordered_unique(r.cells.iter().map(column_label));
    let values = rows
        .iter()
        .map(|a| {
            cols.iter()
                .map(|col| {
                    r.cells
                        .iter()
                        .find(|c| c.attack == *a && column_label(c) == *col)
                        .and_then(|c| c.metric(kind))
                        .map(|m| m.boot_mean)
                })
                .collect()
        })
        .collect();
    Grid {
        title: format!("{} (bootstrap mean)", kind.as_str()),
        rows: rows.iter().map(|a| a.to_string()).collect(),
        cols,
        values,
        midpoint: 0.5,
        half_span: 0.5,
    }
    .svg()
}

fn render_overfit(r: &AuditReport) -> String {
    let rows = ordered_unique(r.overfit.iter().map(|o| o.generator.clone()));
    let sizes = ordered_unique(r.overfit.iter().map(|o| o.train_size));
    let values: Vec<Vec<Option<f64>>> = rows
        .iter()
        .map(|g| sizes.iter().map(|n| r.overfit_for(g, *n)).collect())
        .collect();
    let span = values.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    Grid {
        title: "overfit score (bootstrap mean)".into(),
        rows,
        cols: sizes.iter().map(|n| format!("N={n}")).collect(),
        values,
        midpoint: 0.0,
        half_span: if span > 0.0 { span } else { 1.0 },
    }
    .svg()
}

/// Writes `metrics.csv`, `overfit.csv`, `report.json` and one SVG heatmap per
/// metric into `dir`. Every file is replaced atomically.
pub fn emit_report(r: &AuditReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AuditError::io(dir, e))?;
    write_atomic(&dir.join("metrics.csv"), &metrics_csv(r)?)?;
    write_atomic(&dir.join("overfit.csv"), &overfit_csv(r)?)?;
    let mut json = serde_json::to_string_pretty(r)?;
    json.push('\n');
    write_atomic(&dir.join("report.json"), json.as_bytes())?;
    for kind in MetricKind::ALL {
        write_atomic(&dir.join(format!("heatmap_{}.svg", kind.as_str())), render_heatmap(r, kind).as_bytes())?;
    }
    if !r.overfit.is_empty() {
        write_atomic(&dir.join("heatmap_overfit.svg"), render_overfit(r).as_bytes())?;
    }
    Ok(())
}

pub fn load_report(path: &Path) -> Result<AuditReport> {
    let text = std::fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_midpoint_is_neutral() {
        assert_eq!(diverging(0.0), "#f7f7f7");
        assert_eq!(diverging(1.0), "#b2182b");
        assert_eq!(diverging(-1.0), "#2166ac");
        assert_eq!(diverging(5.0), diverging(1.0));
    }
}
