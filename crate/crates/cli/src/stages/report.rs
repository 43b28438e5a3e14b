//! `report`: aggregate persisted results into a summary and figures.

use std::collections::BTreeMap;
use std::path::Path;

use vpaudit_core::defense::TradeoffRow;
use vpaudit_core::error::{Error, Result};
use vpaudit_core::mia::pearson;
use vpaudit_core::report::{summarize_matrix, Matrix, Report};

use crate::plots;
use crate::stages::mia::read_study_rows;
use crate::stages::StageCtx;

pub fn run(ctx: &StageCtx<'_>) -> Result<Option<Report>> {
    let results = ctx.paths.results();
    let mut report = Report::new(&ctx.config.task_id);
    let mut any = false;

    if let Some(rows) = read_pia_rows(&results.join("pia.csv"))? {
        any = true;
        let mut sum = 0.0;
        for (task, property, accuracy) in &rows {
            report.push_cell("pia", property, task, *accuracy);
            sum += accuracy;
        }
        report.set_summary("pia_average_accuracy", sum / rows.len() as f64);
    }

    if let Some(rows) = read_mia_rows(&results.join("mia.csv"))? {
        any = true;
        let mut by_family: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &rows {
            let name = if r.metric.is_empty() {
                r.attack_family.clone()
            } else {
                format!("metric-{}", r.metric)
            };
            report.push_cell(
                "mia",
                &name,
                &format!("{}|{}", r.shadow_dataset, r.shadow_model),
                r.accuracy,
            );
            by_family.entry(name).or_default().push(r.accuracy);
        }
        for (family, accs) in by_family {
            report.set_summary(
                &format!("mia_{family}_average"),
                accs.iter().sum::<f64>() / accs.len() as f64,
            );
        }
        if let Some(first) = rows.first() {
            report.set_summary("mia_overfit_gap", first.overfit_gap);
        }
    }

    for axis in ["dataset", "model"] {
        for family in [
            "metric-corr",
            "metric-conf",
            "metric-ent",
            "metric-ment",
            "nn-based",
            "gradient-based",
        ] {
            let path = results.join(format!("mia_relaxed_{axis}_{family}.csv"));
            if let Some(matrix) = read_matrix(&path)? {
                any = true;
                let (avg, drop) = summarize_matrix(&matrix)?;
                report.set_summary(&format!("mia_relaxed_{axis}_{family}_avg"), avg);
                report.set_summary(&format!("mia_relaxed_{axis}_{family}_drop"), drop);
                plots::heatmap(
                    &ctx.paths
                        .plots()
                        .join(format!("mia_relaxed_{axis}_{family}.svg")),
                    &format!("{family} after relaxing the {axis} assumption"),
                    &matrix,
                )?;
            }
        }
    }

    let defense_path = results.join("defense.csv");
    if defense_path.exists() {
        let rows = read_defense_rows(&defense_path)?;
        if !rows.is_empty() {
            any = true;
            defense_plots(ctx, &rows, &mut report)?;
        }
    }

    let study_path = results.join("mia_study.csv");
    if study_path.exists() {
        let rows = read_study_rows(&study_path)?;
        if !rows.is_empty() {
            any = true;
            study_plots(ctx, &rows, &mut report)?;
        }
    }

    if !any {
        eprintln!(
            "warning: no results found under {}; nothing to report",
            results.display()
        );
        return Ok(None);
    }

    report.save(&ctx.paths.report().join("summary.json"))?;
    Ok(Some(report))
}

fn read_pia_rows(path: &Path) -> Result<Option<Vec<(String, String, f64)>>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push((
            record[0].to_string(),
            record[1].to_string(),
            parse_f64(&record[5])?,
        ));
    }
    Ok(Some(rows))
}

struct MiaRow {
    attack_family: String,
    metric: String,
    shadow_model: String,
    shadow_dataset: String,
    accuracy: f64,
    overfit_gap: f64,
}

fn read_mia_rows(path: &Path) -> Result<Option<Vec<MiaRow>>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(MiaRow {
            attack_family: record[0].to_string(),
            metric: record[1].to_string(),
            shadow_model: record[3].to_string(),
            shadow_dataset: record[5].to_string(),
            accuracy: parse_f64(&record[6])?,
            overfit_gap: parse_f64(&record[7])?,
        });
    }
    Ok(Some(rows))
}

fn read_matrix(path: &Path) -> Result<Option<Matrix>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col_labels: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut row_labels = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        row_labels.push(record[0].to_string());
        values.push(
            record
                .iter()
                .skip(1)
                .map(parse_f64)
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(Some(Matrix::new(row_labels, col_labels, values)))
}

fn read_defense_rows(path: &Path) -> Result<Vec<TradeoffRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(TradeoffRow {
            context: record[0].to_string(),
            sigma: parse_f64(&record[1])?,
            adaptive: &record[2] == "true",
            utility: parse_f64(&record[3])?,
            family: record[4].to_string(),
            accuracy: parse_f64(&record[5])?,
            seed: record[6]
                .parse()
                .map_err(|_| Error::Format("bad seed in defense.csv".into()))?,
        });
    }
    Ok(rows)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Format(format!("bad numeric value '{s}' in results file")))
}

/// Two line plots per context: utility vs sigma, and attack accuracy vs
/// sigma (one series per family, naive and adaptive kept separate).
fn defense_plots(ctx: &StageCtx<'_>, rows: &[TradeoffRow], report: &mut Report) -> Result<()> {
    let contexts: Vec<String> = {
        let mut c: Vec<String> = rows.iter().map(|r| r.context.clone()).collect();
        c.sort();
        c.dedup();
        c
    };
    for context in contexts {
        let of_ctx: Vec<&TradeoffRow> = rows.iter().filter(|r| r.context == context).collect();
        let mut utility_series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        let mut attack_series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for adaptive in [false, true] {
            let subset: Vec<&&TradeoffRow> =
                of_ctx.iter().filter(|r| r.adaptive == adaptive).collect();
            if subset.is_empty() {
                continue;
            }
            let adversary = if adaptive { "adaptive" } else { "naive" };
            let mut sigmas: Vec<f64> = subset.iter().map(|r| r.sigma).collect();
            sigmas.sort_by(f64::total_cmp);
            sigmas.dedup();
            let utility: Vec<(f64, f64)> = sigmas
                .iter()
                .map(|&s| {
                    let u = subset
                        .iter()
                        .find(|r| r.sigma == s)
                        .map(|r| r.utility)
                        .unwrap_or(0.0);
                    (s, u)
                })
                .collect();
            utility_series.push((adversary.to_string(), utility));
            let mut families: Vec<String> = subset.iter().map(|r| r.family.clone()).collect();
            families.sort();
            families.dedup();
            for family in families {
                let pts: Vec<(f64, f64)> = sigmas
                    .iter()
                    .filter_map(|&s| {
                        subset
                            .iter()
                            .find(|r| r.sigma == s && r.family == family)
                            .map(|r| (s, r.accuracy))
                    })
                    .collect();
                attack_series.push((format!("{family} ({adversary})"), pts));
            }
        }
        plots::line_chart(
            &ctx.paths.plots().join(format!("defense_{context}_utility.svg")),
            &format!("Prompt utility under the {context} defense"),
            "sigma",
            "accuracy",
            &utility_series,
        )?;
        plots::line_chart(
            &ctx.paths.plots().join(format!("defense_{context}_attack.svg")),
            &format!("Attack accuracy under the {context} defense"),
            "sigma",
            "accuracy",
            &attack_series,
        )?;
        for (name, pts) in &utility_series {
            if let Some((_, u0)) = pts.first() {
                report.set_summary(&format!("defense_{context}_{name}_utility_at_zero"), *u0);
            }
        }
    }
    Ok(())
}

/// Scatter of (overfit gap, attack accuracy) plus epoch/size effect lines.
fn study_plots(
    ctx: &StageCtx<'_>,
    rows: &[crate::stages::mia::StudyRow],
    report: &mut Report,
) -> Result<()> {
    let gaps: Vec<f64> = rows.iter().map(|r| r.overfit_gap).collect();
    let accs: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    let r = pearson(&gaps, &accs)?;
    report.set_summary("study_pearson_gap_vs_accuracy", r);
    let points: Vec<(f64, f64)> = gaps.iter().copied().zip(accs.iter().copied()).collect();
    plots::scatter(
        &ctx.paths.plots().join("overfit_vs_attack.svg"),
        "Overfitting level vs attack accuracy",
        "overfitting level",
        "attack accuracy",
        &points,
        &format!("Pearson r = {r:.2}"),
    )?;

    // mean accuracy per (epochs, size) cell
    let mut cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for row in rows {
        cells
            .entry((row.epochs, row.size))
            .or_default()
            .push(row.accuracy);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut epochs: Vec<usize> = rows.iter().map(|r| r.epochs).collect();
    epochs.sort_unstable();
    epochs.dedup();

    let epoch_series: Vec<(String, Vec<(f64, f64)>)> = sizes
        .iter()
        .map(|&s| {
            let pts: Vec<(f64, f64)> = epochs
                .iter()
                .filter_map(|&e| cells.get(&(e, s)).map(|v| (e as f64, mean(v))))
                .collect();
            (format!("size {s}"), pts)
        })
        .collect();
    plots::line_chart(
        &ctx.paths.plots().join("epoch_effect.svg"),
        "Attack accuracy vs prompt training epochs",
        "epochs",
        "accuracy",
        &epoch_series,
    )?;
    let size_series: Vec<(String, Vec<(f64, f64)>)> = epochs
        .iter()
        .map(|&e| {
            let pts: Vec<(f64, f64)> = sizes
                .iter()
                .filter_map(|&s| cells.get(&(e, s)).map(|v| (s as f64, mean(v))))
                .collect();
            (format!("{e} epochs"), pts)
        })
        .collect();
    plots::line_chart(
        &ctx.paths.plots().join("size_effect.svg"),
        "Attack accuracy vs prompt training-set size",
        "training-set size",
        "accuracy",
        &size_series,
    )?;
    Ok(())
}
