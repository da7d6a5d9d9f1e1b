//! `mrasc report`: the comparison table and per-class accuracy chart.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;

use super::{runtime, validation};
use crate::config::RUNCONFIG_NAME;
use crate::CliError;

#[derive(Args)]
pub struct ReportArgs {
    /// Run directories (from `mrasc train` and optionally an ensemble eval)
    #[arg(long, value_delimiter = ',')]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Default)]
struct ModelRow {
    raw_mean: Option<f64>,
    raw_std: Option<f64>,
    grouped_mean: Option<f64>,
    grouped_std: Option<f64>,
    /// per-class grouped accuracy summed over folds: (correct, total)
    per_class: BTreeMap<String, (usize, usize)>,
}

fn parse_metrics_csv(text: &str, rows: &mut BTreeMap<String, ModelRow>) -> Result<(), String> {
    let mut lines = text.lines();
    match lines.next() {
        Some("fold,model,raw_acc,grouped_acc") => {}
        other => return Err(format!("bad metrics header {other:?}")),
    }
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(format!("bad metrics row `{line}`"));
        }
        let entry = rows.entry(parts[1].to_string()).or_default();
        let parse_opt = |s: &str| -> Option<f64> { s.parse().ok() };
        match parts[0] {
            "mean" => {
                entry.raw_mean = parse_opt(parts[2]);
                entry.grouped_mean = parse_opt(parts[3]);
            }
            "std" => {
                entry.raw_std = parse_opt(parts[2]);
                entry.grouped_std = parse_opt(parts[3]);
            }
            _ => {}
        }
    }
    Ok(())
}

fn parse_confusion_csv(
    text: &str,
) -> Result<(Vec<String>, Vec<Vec<usize>>), String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty confusion file")?;
    let classes: Vec<String> = header
        .split(',')
        .skip(1)
        .map(str::to_string)
        .collect();
    let mut matrix = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let parts: Vec<&str> = line.split(',').collect();
        let row: Vec<usize> = parts[1..]
            .iter()
            .map(|v| v.parse().map_err(|_| format!("bad count `{v}`")))
            .collect::<Result<_, _>>()?;
        matrix.push(row);
    }
    Ok((classes, matrix))
}

/// model display order: ascending resolutions, grouped-single ensemble,
/// multi-resolution last
fn model_order(name: &str) -> (u8, usize) {
    if let Some(fft) = name.strip_prefix("single:") {
        return (0, fft.parse().unwrap_or(0));
    }
    match name {
        "ensemble" => (1, 0),
        "multires" => (2, 0),
        _ => (3, 0),
    }
}

pub fn run(args: ReportArgs) -> Result<(), CliError> {
    if args.runs.is_empty() {
        return Err(validation("--runs requires at least one run directory"));
    }
    let mut rows: BTreeMap<String, ModelRow> = BTreeMap::new();
    for dir in &args.runs {
        if !dir.join(RUNCONFIG_NAME).exists() {
            return Err(validation(format!("no run at {}", dir.display())));
        }
        // per-fold metrics written by train, plus any eval CSVs present
        let mut found = false;
        for name in ["metrics.csv", "eval_grouped.csv", "eval_ensemble.csv", "eval_raw.csv"] {
            let path = dir.join(name);
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(runtime)?;
                parse_metrics_csv(&text, &mut rows).map_err(CliError::Validation)?;
                found = true;
            }
        }
        if !found {
            return Err(validation(format!(
                "{} holds no metrics (run `mrasc train` or `mrasc eval` first)",
                dir.display()
            )));
        }
        collect_confusions(dir, &mut rows).map_err(runtime)?;
    }

    std::fs::create_dir_all(&args.out).map_err(runtime)?;
    let mut names: Vec<&String> = rows.keys().collect();
    names.sort_by_key(|n| model_order(n));

    let mut table = String::from("model,raw_mean,raw_std,grouped_mean,grouped_std\n");
    for name in &names {
        let row = &rows[*name];
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        table.push_str(&format!(
            "{name},{},{},{},{}\n",
            fmt(row.raw_mean),
            fmt(row.raw_std),
            fmt(row.grouped_mean),
            fmt(row.grouped_std)
        ));
    }
    std::fs::write(args.out.join("comparison.csv"), &table).map_err(runtime)?;
    print!("{table}");

    let svg = per_class_chart(&rows);
    std::fs::write(args.out.join("per_class_accuracy.svg"), svg).map_err(runtime)?;
    println!("report written to {}", args.out.display());
    Ok(())
}

fn collect_confusions(
    dir: &Path,
    rows: &mut BTreeMap<String, ModelRow>,
) -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = crate::config::RunConfig::default();
    cfg.merge_file(&dir.join(RUNCONFIG_NAME)).ok();
    let model_name = cfg.get("model").unwrap_or("unknown").to_string();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !name.starts_with("confusion_f") || !name.ends_with(".csv") {
            continue;
        }
        let text = std::fs::read_to_string(entry.path())?;
        let (classes, matrix) = parse_confusion_csv(&text).map_err(std::io::Error::other)?;
        let row = rows.entry(model_name.clone()).or_default();
        for (c, class) in classes.iter().enumerate() {
            let total: usize = matrix[c].iter().sum();
            let correct = matrix[c][c];
            let cell = row.per_class.entry(class.clone()).or_insert((0, 0));
            cell.0 += correct;
            cell.1 += total;
        }
    }
    Ok(())
}

/// Static SVG: grouped bars per class, resolutions ascending with the
/// multi-resolution model last.
fn per_class_chart(rows: &BTreeMap<String, ModelRow>) -> String {
    let mut models: Vec<&String> = rows
        .keys()
        .filter(|n| n.starts_with("single:") || *n == "multires")
        .collect();
    models.sort_by_key(|n| model_order(n));
    let mut classes: Vec<String> = Vec::new();
    for row in rows.values() {
        for class in row.per_class.keys() {
            if !classes.contains(class) {
                classes.push(class.clone());
            }
        }
    }
    classes.sort();

    let bar_w = 16.0;
    let group_gap = 30.0;
    let group_w = models.len() as f64 * bar_w + group_gap;
    let plot_h = 220.0;
    let margin_l = 50.0;
    let margin_t = 30.0;
    let width = margin_l + classes.len() as f64 * group_w + 40.0;
    let height = margin_t + plot_h + 70.0;

    let palette = [
        "#c6dbef", "#9ecae1", "#6baed6", "#3182bd", "#08519c", "#d62728",
    ];
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    svg.push_str(&format!(
        r#"<text x="{margin_l}" y="18" font-size="13">Grouped accuracy per class and model</text>"#
    ));
    for tick in 0..=5 {
        let frac = tick as f64 / 5.0;
        let y = margin_t + plot_h * (1.0 - frac);
        svg.push_str(&format!(
            r##"<line x1="{margin_l}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{:.1}</text>"##,
            width - 20.0,
            margin_l - 6.0,
            y + 4.0,
            frac
        ));
    }
    for (ci, class) in classes.iter().enumerate() {
        let x0 = margin_l + ci as f64 * group_w + group_gap / 2.0;
        for (mi, model) in models.iter().enumerate() {
            let acc = rows[*model]
                .per_class
                .get(class)
                .map_or(0.0, |(c, t)| if *t == 0 { 0.0 } else { *c as f64 / *t as f64 });
            let h = plot_h * acc;
            let x = x0 + mi as f64 * bar_w;
            let y = margin_t + plot_h - h;
            let color = palette[mi.min(palette.len() - 1)];
            svg.push_str(&format!(
                r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{h:.1}" fill="{color}"><title>{model} {class}: {acc:.3}</title></rect>"#,
                bar_w - 2.0
            ));
        }
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{class}</text>"#,
            x0 + (models.len() as f64 * bar_w) / 2.0,
            margin_t + plot_h + 16.0
        ));
    }
    for (mi, model) in models.iter().enumerate() {
        let x = margin_l + mi as f64 * 110.0;
        let y = margin_t + plot_h + 40.0;
        let color = palette[mi.min(palette.len() - 1)];
        svg.push_str(&format!(
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{color}"/><text x="{:.1}" y="{:.1}">{model}</text>"#,
            y - 10.0,
            x + 16.0,
            y
        ));
    }
    svg.push_str("</svg>");
    svg
}
