//! Metric tables, radiomic reports, summary JSON and SVG box plots.

use std::fmt::Write as _;
use std::path::Path;

use ctnorm::metrics::{Metric, MetricReport};
use ctnorm::radiomics::{BoxSummary, ComparisonReport, Feature, Method};
use ctnorm::volume::Plane;
use serde::{Deserialize, Serialize};

use crate::pipeline::{write_file, write_json};
use crate::Result;

/// Everything measured for one scenario over the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvaluation {
    pub scenario: String,
    pub n_cases: usize,
    pub n_rois: usize,
    pub raw: MetricReport,
    pub cnn: MetricReport,
    pub gan: MetricReport,
    pub radiomics: ComparisonReport,
}

impl ScenarioEvaluation {
    pub fn metrics(&self, method: Method) -> &MetricReport {
        match method {
            Method::Raw => &self.raw,
            Method::Cnn => &self.cnn,
            Method::Gan => &self.gan,
        }
    }

    pub fn median_error(&self, feature: Feature, method: Method) -> Option<f64> {
        self.radiomics.boxplot(feature, method).map(|b| b.median)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneMeans {
    pub method: Method,
    pub metric: Metric,
    pub axial: Option<f64>,
    pub coronal: Option<f64>,
    pub sagittal: Option<f64>,
    pub average: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: Feature,
    pub median_raw: Option<f64>,
    pub median_cnn: Option<f64>,
    pub median_gan: Option<f64>,
    pub p_gan_vs_raw: Option<f64>,
    pub p_gan_vs_cnn: Option<f64>,
    pub p_cnn_vs_raw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub n_cases: usize,
    pub n_rois: usize,
    pub metrics: Vec<PlaneMeans>,
    /// 100·(CNN − GAN)/CNN on the plane-averaged SRF-PD.
    pub perceptual_improvement_pct: Option<f64>,
    pub gan_below_raw_perceptual_all_planes: bool,
    pub cnn_psnr_at_least_gan: bool,
    pub gan_perceptual_at_most_cnn: bool,
    pub features: Vec<FeatureSummary>,
    pub features_gan_below_raw: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub experiment: String,
    pub scenarios: Vec<ScenarioSummary>,
}

fn plane_means(r: &MetricReport, method: Method, metric: Metric) -> PlaneMeans {
    PlaneMeans {
        method,
        metric,
        axial: r.mean(metric, Plane::Axial),
        coronal: r.mean(metric, Plane::Coronal),
        sagittal: r.mean(metric, Plane::Sagittal),
        average: r.plane_average(metric),
    }
}

fn both<F: Fn(f64, f64) -> bool>(a: Option<f64>, b: Option<f64>, f: F) -> bool {
    matches!((a, b), (Some(a), Some(b)) if f(a, b))
}

pub fn summarize(ev: &ScenarioEvaluation) -> ScenarioSummary {
    let mut metrics = Vec::new();
    for method in Method::ALL {
        for metric in Metric::ALL {
            metrics.push(plane_means(ev.metrics(method), method, metric));
        }
    }
    let perc = |m: Method| ev.metrics(m).plane_average(Metric::Perceptual);
    let improvement = match (perc(Method::Cnn), perc(Method::Gan)) {
        (Some(c), Some(g)) if c > 0.0 => Some(100.0 * (c - g) / c),
        _ => None,
    };
    let below_raw = Plane::ALL.iter().all(|&p| {
        both(
            ev.gan.mean(Metric::Perceptual, p),
            ev.raw.mean(Metric::Perceptual, p),
            |g, r| g < r,
        )
    });
    let p_value = |f, a, b| ev.radiomics.test(f, a, b).map(|t| t.result.p_value);
    let features: Vec<FeatureSummary> = Feature::ALL
        .iter()
        .map(|&f| FeatureSummary {
            feature: f,
            median_raw: ev.median_error(f, Method::Raw),
            median_cnn: ev.median_error(f, Method::Cnn),
            median_gan: ev.median_error(f, Method::Gan),
            p_gan_vs_raw: p_value(f, Method::Gan, Method::Raw),
            p_gan_vs_cnn: p_value(f, Method::Gan, Method::Cnn),
            p_cnn_vs_raw: p_value(f, Method::Cnn, Method::Raw),
        })
        .collect();
    let features_gan_below_raw = features
        .iter()
        .filter(|f| both(f.median_gan, f.median_raw, |g, r| g < r))
        .count();
    ScenarioSummary {
        scenario: ev.scenario.clone(),
        n_cases: ev.n_cases,
        n_rois: ev.n_rois,
        metrics,
        perceptual_improvement_pct: improvement,
        gan_below_raw_perceptual_all_planes: below_raw,
        cnn_psnr_at_least_gan: both(
            ev.cnn.plane_average(Metric::Psnr),
            ev.gan.plane_average(Metric::Psnr),
            |c, g| c >= g,
        ),
        gan_perceptual_at_most_cnn: both(perc(Method::Gan), perc(Method::Cnn), |g, c| g <= c),
        features,
        features_gan_below_raw,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Long-format rows: scenario, method, metric, plane, mean, count, excluded.
pub fn metrics_csv(evals: &[ScenarioEvaluation], methods: &[Method]) -> String {
    let mut s = String::from("scenario,method,metric,plane,mean,count,excluded_infinite\n");
    for ev in evals {
        for &m in methods {
            for c in &ev.metrics(m).cells {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    ev.scenario,
                    m.name(),
                    c.metric.name(),
                    c.plane.short_name(),
                    fmt_opt(c.mean),
                    c.count,
                    c.excluded_infinite
                );
            }
        }
    }
    s
}

/// Scenario/method rows against metric × plane columns.
pub fn table_text(evals: &[ScenarioEvaluation], methods: &[Method]) -> String {
    let mut s = format!("{:<10}{:<8}", "scenario", "method");
    for metric in Metric::ALL {
        for p in Plane::ALL {
            let _ = write!(s, "{:>12}", format!("{} {}", metric.name(), p.short_name()));
        }
    }
    s.push('\n');
    for ev in evals {
        for &m in methods {
            let _ = write!(s, "{:<10}{:<8}", ev.scenario, m.name());
            for metric in Metric::ALL {
                for p in Plane::ALL {
                    let cell = match ev.metrics(m).mean(metric, p) {
                        Some(v) if metric == Metric::Perceptual => format!("{v:.4}"),
                        Some(v) if metric == Metric::Ssim => format!("{v:.4}"),
                        Some(v) => format!("{v:.2}"),
                        None => "-".into(),
                    };
                    let _ = write!(s, "{cell:>12}");
                }
            }
            s.push('\n');
        }
    }
    s
}

#[derive(Serialize)]
struct TableCell<'a> {
    scenario: &'a str,
    method: Method,
    metric: Metric,
    plane: Plane,
    mean: Option<f64>,
}

const PLOT_W: f64 = 360.0;
const PLOT_H: f64 = 280.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 40.0;

/// Box-and-whisker plot of normalized feature errors, one box per method.
pub fn boxplot_svg(title: &str, boxes: &[BoxSummary]) -> String {
    let lo = boxes.iter().map(|b| b.min).fold(f64::INFINITY, f64::min);
    let hi = boxes
        .iter()
        .map(|b| b.max)
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if boxes.is_empty() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    };
    let inner_h = PLOT_H - MARGIN_T - MARGIN_B;
    let inner_w = PLOT_W - MARGIN_L - MARGIN_R;
    let y = |v: f64| MARGIN_T + inner_h * (1.0 - (v - lo) / (hi - lo));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_W}" height="{PLOT_H}" viewBox="0 0 {PLOT_W} {PLOT_H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{PLOT_W}" height="{PLOT_H}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        PLOT_W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{}" stroke="black"/>"#,
        MARGIN_T + inner_h
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{yy:.2}" x2="{MARGIN_L}" y2="{yy:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_L - 4.0,
            MARGIN_L - 6.0,
            yy + 4.0,
            tick_label(v)
        );
    }
    let slot = inner_w / boxes.len().max(1) as f64;
    for (i, b) in boxes.iter().enumerate() {
        let cx = MARGIN_L + slot * (i as f64 + 0.5);
        let half = slot * 0.25;
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.max),
            y(b.q3)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.q1),
            y(b.min)
        );
        for v in [b.min, b.max] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                cx - half / 2.0,
                y(v),
                cx + half / 2.0,
                y(v)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" stroke="black"/>"#,
            cx - half,
            y(b.q3),
            2.0 * half,
            (y(b.q1) - y(b.q3)).max(0.5),
            fill(b.method)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(b.median),
            cx + half,
            y(b.median)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{} (n={})</text>"#,
            PLOT_H - MARGIN_B + 16.0,
            b.method.name(),
            b.n
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fill(m: Method) -> &'static str {
    match m {
        Method::Raw => "#d9d9d9",
        Method::Cnn => "#9ecae1",
        Method::Gan => "#fdae6b",
    }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes every report file into `dir` and returns the summary.
pub fn write_reports(
    dir: &Path,
    experiment: &str,
    evals: &[ScenarioEvaluation],
) -> Result<EvaluationSummary> {
    let table_methods = [Method::Cnn, Method::Gan];
    write_file(&dir.join("metrics.csv"), metrics_csv(evals, &Method::ALL))?;
    write_file(&dir.join("table1.csv"), metrics_csv(evals, &table_methods))?;
    write_file(&dir.join("table1.txt"), table_text(evals, &table_methods))?;
    let mut cells = Vec::new();
    for ev in evals {
        for m in table_methods {
            for c in &ev.metrics(m).cells {
                cells.push(TableCell {
                    scenario: &ev.scenario,
                    method: m,
                    metric: c.metric,
                    plane: c.plane,
                    mean: c.mean,
                });
            }
        }
    }
    write_json(&dir.join("table1.json"), &cells)?;

    for ev in evals {
        let sc = &ev.scenario;
        let r = &ev.radiomics;
        write_file(
            &dir.join(format!("radiomics_{sc}_errors.csv")),
            r.errors_csv(),
        )?;
        write_file(
            &dir.join(format!("radiomics_{sc}_stats.csv")),
            r.stats_csv(),
        )?;
        write_file(
            &dir.join(format!("radiomics_{sc}_boxplots.csv")),
            r.boxplot_csv(),
        )?;
        write_json(&dir.join(format!("evaluation_{sc}.json")), ev)?;
        for f in Feature::ALL {
            let boxes: Vec<BoxSummary> = Method::ALL
                .iter()
                .filter_map(|&m| r.boxplot(f, m).copied())
                .collect();
            let title = format!("Scenario {sc}: {} normalized error", f.name());
            write_file(
                &dir.join(format!("boxplot_{sc}_{}.svg", f.name().to_lowercase())),
                boxplot_svg(&title, &boxes),
            )?;
        }
    }
    let summary = EvaluationSummary {
        experiment: experiment.to_string(),
        scenarios: evals.iter().map(summarize).collect(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
