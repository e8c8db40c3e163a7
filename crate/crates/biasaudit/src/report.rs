//! Markdown tables, CSV and SVG plots rendered from the results store.
//!
//! Output depends only on the stored rows (never on timestamps or log
//! order), so the same store always renders byte-identical documents.
//! Cells without a stored result are left blank.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use biasaudit_core::study::Histogram;
use biasaudit_core::{AugmentationLevel, ConvergenceStatus, CorruptionKind, CorruptionSpec};

use crate::error::{Error, Result};
use crate::reference;
use crate::store::{Outcome, StoredRun};
use crate::suite::SuiteKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Template {
    CombinationsTable,
    SizePlot,
    ScalePlot,
    AugmentationTable,
    CorruptionTable,
    PseudoTable,
    ProbeTable,
    StudyHistogram,
}

impl Template {
    pub const ALL: [Template; 8] = [
        Self::CombinationsTable,
        Self::SizePlot,
        Self::ScalePlot,
        Self::AugmentationTable,
        Self::CorruptionTable,
        Self::PseudoTable,
        Self::ProbeTable,
        Self::StudyHistogram,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CombinationsTable => "combinations_table",
            Self::SizePlot => "size_plot",
            Self::ScalePlot => "scale_plot",
            Self::AugmentationTable => "augmentation_table",
            Self::CorruptionTable => "corruption_table",
            Self::PseudoTable => "pseudo_table",
            Self::ProbeTable => "probe_table",
            Self::StudyHistogram => "study_histogram",
        }
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Format(format!("unknown report template `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub markdown: String,
    pub csv: Option<String>,
    pub svg: Option<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RenderOptions {
    /// Show published reference values next to measured ones.
    pub reference: bool,
}

fn pct(v: f64) -> String {
    format!("{v:.1}")
}

/// `1000` → `1K`, `1000000` → `1M`; other values verbatim.
pub fn scale_label(n: usize) -> String {
    match n {
        n if n >= 1_000_000 && n % 1_000_000 == 0 => format!("{}M", n / 1_000_000),
        n if n >= 1_000 && n % 1_000 == 0 => format!("{}K", n / 1_000),
        n => n.to_string(),
    }
}

fn with_ref(value: Option<String>, reference: Option<String>, opts: RenderOptions) -> String {
    let value = value.unwrap_or_default();
    match (opts.reference, reference) {
        (true, Some(r)) if value.is_empty() => format!("({r})"),
        (true, Some(r)) => format!("{value} ({r})"),
        _ => value,
    }
}

fn table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
    out.push_str(&line(header));
    out.push_str(&line(&vec!["---".to_string(); header.len()]));
    for r in rows {
        out.push_str(&line(r));
    }
}

fn of_kind<'a>(runs: &[&'a StoredRun], kind: SuiteKind) -> Vec<&'a StoredRun> {
    let mut v: Vec<&StoredRun> = runs.iter().copied().filter(|r| r.cell.kind == kind).collect();
    v.sort_by(|a, b| (a.cell.ordinal, &a.config_hash).cmp(&(b.cell.ordinal, &b.config_hash)));
    v
}

fn val_acc(r: &StoredRun) -> Option<f64> {
    r.outcome.record().map(|rec| rec.val_accuracy)
}

pub fn render_report(runs: &[&StoredRun], template: Template, opts: RenderOptions) -> Result<Report> {
    Ok(match template {
        Template::CombinationsTable => combinations_table(runs, opts),
        Template::SizePlot => size_plot(runs),
        Template::ScalePlot => scale_plot(runs),
        Template::AugmentationTable => augmentation_table(runs, opts),
        Template::CorruptionTable => corruption_table(runs, opts),
        Template::PseudoTable => pseudo_table(runs, opts),
        Template::ProbeTable => probe_table(runs, opts),
        Template::StudyHistogram => {
            return Err(Error::Format("study_histogram renders from study sessions, not the results store".into()))
        }
    })
}

/// Dataset columns: known corpora in their customary order, then the rest
/// alphabetically.
fn dataset_columns(runs: &[&StoredRun]) -> Vec<String> {
    let all: BTreeSet<&str> = runs.iter().flat_map(|r| r.cell.datasets.iter().map(String::as_str)).collect();
    let mut cols: Vec<String> =
        reference::DATASETS.iter().filter(|(id, _)| all.contains(id)).map(|(id, _)| id.to_string()).collect();
    cols.extend(all.iter().filter(|id| reference::letter(id).is_none()).map(|s| s.to_string()));
    cols
}

fn combinations_table(runs: &[&StoredRun], opts: RenderOptions) -> Report {
    let runs = of_kind(runs, SuiteKind::Combinations);
    let cols = dataset_columns(&runs);
    let mut rows: Vec<(Vec<usize>, &StoredRun)> = runs
        .iter()
        .map(|r| {
            let mut pos: Vec<usize> = r.cell.datasets.iter().filter_map(|d| cols.iter().position(|c| c == d)).collect();
            pos.sort_unstable();
            (pos, *r)
        })
        .collect();
    rows.sort_by(|a, b| (a.0.len(), &a.0).cmp(&(b.0.len(), &b.0)));
    rows.dedup_by(|a, b| a.0 == b.0);

    let mut header: Vec<String> = cols.clone();
    header.push("accuracy".into());
    if opts.reference {
        header.push("reference".into());
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(pos, r)| {
            let mut cells: Vec<String> =
                (0..cols.len()).map(|i| if pos.contains(&i) { "x".into() } else { String::new() }).collect();
            cells.push(val_acc(r).map(pct).unwrap_or_default());
            if opts.reference {
                cells.push(reference::combination(&r.cell.datasets).map(pct).unwrap_or_default());
            }
            cells
        })
        .collect();
    let mut md = String::from("# Dataset classification accuracy by combination\n\n");
    table(&mut md, &header, &body);
    Report { markdown: md, ..Default::default() }
}

struct Point {
    series: String,
    x: f64,
    y: f64,
}

fn plot(title: &str, x_label: &str, points: &[Point]) -> String {
    const W: f64 = 560.0;
    const H: f64 = 360.0;
    const L: f64 = 60.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        svg,
        r#"<line x1="{L}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{L}" y1="{T}" x2="{L}" y2="{}" stroke="black"/>"#,
        H - B,
        W - R,
        H - B,
        H - B
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{x_label}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {})">accuracy (%)</text>"#,
        H / 2.0,
        H / 2.0
    );
    let ys = |y: f64| T + (H - T - B) * (1.0 - y / 100.0);
    for tick in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end" font-size="10">{tick}</text>"#, L - 6.0, ys(tick) + 3.0);
    }
    let xs_all: BTreeSet<u64> = points.iter().map(|p| p.x.to_bits()).collect();
    let xs_all: Vec<f64> = xs_all.into_iter().map(f64::from_bits).collect();
    if let (Some(&lo), Some(&hi)) = (xs_all.iter().min_by(|a, b| a.total_cmp(b)), xs_all.iter().max_by(|a, b| a.total_cmp(b))) {
        let log = lo > 0.0 && hi / lo >= 10.0;
        let t = |x: f64| if log { x.ln() } else { x };
        let (tlo, thi) = (t(lo), t(hi));
        let xs = |x: f64| if thi > tlo { L + (W - L - R) * (t(x) - tlo) / (thi - tlo) } else { (L + W - R) / 2.0 };
        for &x in &xs_all {
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
                xs(x),
                H - B + 14.0,
                scale_label(x as usize)
            );
        }
        let mut series: BTreeMap<&str, Vec<&Point>> = BTreeMap::new();
        for p in points {
            series.entry(&p.series).or_default().push(p);
        }
        const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
        for (i, (name, mut pts)) in series.into_iter().enumerate() {
            pts.sort_by(|a, b| a.x.total_cmp(&b.x));
            let color = COLORS[i % COLORS.len()];
            let coords: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", xs(p.x), ys(p.y))).collect();
            let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
            for p in &pts {
                let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, xs(p.x), ys(p.y));
            }
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="10" fill="{color}">{name}</text>"#,
                L + 8.0,
                T + 12.0 * (i as f64 + 1.0)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn series_name(r: &StoredRun) -> String {
    r.cell.datasets.join("+")
}

fn size_plot(runs: &[&StoredRun]) -> Report {
    let mut runs = of_kind(runs, SuiteKind::ModelSize);
    runs.sort_by(|a, b| (a.cell.param_count, a.cell.ordinal).cmp(&(b.cell.param_count, b.cell.ordinal)));
    let mut md = String::from("# Accuracy by model size\n\n");
    let mut csv = String::from("series,param_count,width_multiplier,val_accuracy\n");
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for r in &runs {
        let acc = val_acc(r);
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            series_name(r),
            r.cell.param_count,
            r.cell.width_multiplier,
            acc.map(pct).unwrap_or_default()
        );
        rows.push(vec![
            series_name(r),
            r.cell.param_count.to_string(),
            r.cell.width_multiplier.to_string(),
            acc.map(pct).unwrap_or_default(),
        ]);
        if let Some(y) = acc {
            points.push(Point { series: series_name(r), x: r.cell.param_count as f64, y });
        }
    }
    table(&mut md, &["datasets", "parameters", "width", "accuracy"].map(String::from), &rows);
    Report { markdown: md, csv: Some(csv), svg: Some(plot("Accuracy by model size", "parameters", &points)) }
}

fn scale_plot(runs: &[&StoredRun]) -> Report {
    let mut runs = of_kind(runs, SuiteKind::DataScale);
    runs.sort_by(|a, b| {
        (series_name(a), a.cell.images_per_dataset, a.cell.ordinal).cmp(&(series_name(b), b.cell.images_per_dataset, b.cell.ordinal))
    });
    let mut md = String::from("# Accuracy by training images per dataset\n\n");
    let mut csv = String::from("series,images_per_dataset,val_accuracy\n");
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for r in &runs {
        let acc = val_acc(r);
        let _ = writeln!(csv, "{},{},{}", series_name(r), r.cell.images_per_dataset, acc.map(pct).unwrap_or_default());
        rows.push(vec![series_name(r), scale_label(r.cell.images_per_dataset), acc.map(pct).unwrap_or_default()]);
        if let Some(y) = acc {
            points.push(Point { series: series_name(r), x: r.cell.images_per_dataset as f64, y });
        }
    }
    table(&mut md, &["datasets", "images per dataset", "accuracy"].map(String::from), &rows);
    Report {
        markdown: md,
        csv: Some(csv),
        svg: Some(plot("Accuracy by training images per dataset", "images per dataset", &points)),
    }
}

/// Rows by `row_key`, columns by scale; the latest stored value wins on
/// collisions, which cannot happen within one suite.
fn grid<K: Ord + Copy>(runs: &[&StoredRun], row_key: impl Fn(&StoredRun) -> K) -> (Vec<K>, Vec<usize>, BTreeMap<(K, usize), usize>) {
    let mut rows = BTreeSet::new();
    let mut cols = BTreeSet::new();
    let mut at = BTreeMap::new();
    for (i, r) in runs.iter().enumerate() {
        let k = row_key(r);
        rows.insert(k);
        cols.insert(r.cell.images_per_dataset);
        at.insert((k, r.cell.images_per_dataset), i);
    }
    (rows.into_iter().collect(), cols.into_iter().collect(), at)
}

fn augmentation_table(runs: &[&StoredRun], opts: RenderOptions) -> Report {
    let runs = of_kind(runs, SuiteKind::Augmentation);
    let (levels, scales, at) = grid(&runs, |r| r.cell.augmentation);
    let mut header = vec!["augmentation / training images per dataset".to_string()];
    header.extend(scales.iter().map(|&s| scale_label(s)));
    let body: Vec<Vec<String>> = levels
        .iter()
        .map(|&level| {
            let mut row = vec![level.table_label().to_string()];
            row.extend(scales.iter().map(|&s| {
                let value = at.get(&(level, s)).and_then(|&i| val_acc(runs[i])).map(pct);
                with_ref(value, reference::augmentation(level, s).map(pct), opts)
            }));
            row
        })
        .collect();
    let mut md = String::from("# Accuracy by augmentation\n\n");
    table(&mut md, &header, &body);
    Report { markdown: md, ..Default::default() }
}

pub fn corruption_label(c: &CorruptionSpec) -> String {
    let p = c.parameter;
    match c.kind {
        CorruptionKind::None => "none".into(),
        CorruptionKind::ColorJitter => format!("color jittering (strength: {p:.1})"),
        CorruptionKind::GaussianNoise => format!("Gaussian noise (std: {p})"),
        CorruptionKind::GaussianBlur => format!("Gaussian blur (radius: {p})"),
        CorruptionKind::LowResolution => format!("low resolution ({p}×{p})"),
    }
}

fn corruption_table(runs: &[&StoredRun], opts: RenderOptions) -> Report {
    let mut runs = of_kind(runs, SuiteKind::Corruption);
    runs.sort_by(|a, b| {
        let key = |r: &StoredRun| (r.cell.corruption.kind, r.cell.corruption.parameter.to_bits(), r.cell.ordinal);
        key(a).cmp(&key(b))
    });
    let mut header = vec!["corruption (on train+val)".to_string(), "accuracy".into()];
    if opts.reference {
        header.push("reference".into());
    }
    let body: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            let mut row = vec![corruption_label(&r.cell.corruption), val_acc(r).map(pct).unwrap_or_default()];
            if opts.reference {
                row.push(reference::corruption(&r.cell.corruption).map(pct).unwrap_or_default());
            }
            row
        })
        .collect();
    let mut md = String::from("# Accuracy under corruptions\n\n");
    table(&mut md, &header, &body);
    Report { markdown: md, ..Default::default() }
}

fn pseudo_label(level: AugmentationLevel) -> String {
    match level {
        AugmentationLevel::None => "w/o aug".into(),
        AugmentationLevel::RandCropRandAugMix => "w/ aug".into(),
        other => other.table_label().into(),
    }
}

fn pseudo_table(runs: &[&StoredRun], opts: RenderOptions) -> Report {
    let runs = of_kind(runs, SuiteKind::Pseudo);
    let (levels, scales, at) = grid(&runs, |r| r.cell.augmentation);
    let mut header = vec!["imgs per set".to_string()];
    header.extend(levels.iter().map(|&l| pseudo_label(l)));
    let body: Vec<Vec<String>> = scales
        .iter()
        .map(|&s| {
            let mut row = vec![scale_label(s)];
            row.extend(levels.iter().map(|&level| {
                let value = at.get(&(level, s)).and_then(|&i| runs[i].outcome.record()).map(|rec| {
                    match rec.convergence_status {
                        ConvergenceStatus::Failed => "fail".to_string(),
                        ConvergenceStatus::Converged => pct(rec.train_accuracy),
                    }
                });
                with_ref(value, reference::pseudo(level, s), opts)
            }));
            row
        })
        .collect();
    let mut md = String::from("# Pseudo-dataset training accuracy\n\n");
    table(&mut md, &header, &body);
    Report { markdown: md, ..Default::default() }
}

fn probe_table(runs: &[&StoredRun], opts: RenderOptions) -> Report {
    let runs = of_kind(runs, SuiteKind::Probe);
    let mut rows: Vec<(String, f64)> = Vec::new();
    let transfers: Vec<(&StoredRun, f64, f64)> = runs
        .iter()
        .filter_map(|r| match &r.outcome {
            Outcome::Completed { transfer: Some(t), .. } => Some((*r, t.trained, t.random)),
            _ => None,
        })
        .collect();
    if let Some(&(_, _, random)) = transfers.first() {
        rows.push(("random weights".into(), random));
    }
    for (r, trained, _) in &transfers {
        rows.push((reference::combination_label(&r.cell.datasets), *trained));
    }
    for r in &runs {
        if let Outcome::Probed { accuracy } = r.outcome {
            rows.push((r.cell.label.clone(), accuracy));
        }
    }
    let mut header = vec!["case".to_string(), "accuracy".into()];
    if opts.reference {
        header.push("reference".into());
    }
    let body: Vec<Vec<String>> = rows
        .into_iter()
        .map(|(label, acc)| {
            let mut row = vec![label.clone(), pct(acc)];
            if opts.reference {
                row.push(reference::probe(&label).map(pct).unwrap_or_default());
            }
            row
        })
        .collect();
    let mut md = String::from("# Linear probing\n\n");
    table(&mut md, &header, &body);
    Report { markdown: md, ..Default::default() }
}

fn trim_num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

/// Per-bin user counts plus mean and median.
pub fn render_histogram(h: &Histogram) -> Report {
    let mut md = String::from("# Human accuracy\n\n");
    let mut csv = String::from("lo,hi,users\n");
    let mut rows = Vec::new();
    for b in &h.bins {
        let _ = writeln!(csv, "{},{},{}", trim_num(b.lo), trim_num(b.hi), b.count);
        rows.push(vec![format!("{}-{}", trim_num(b.lo), trim_num(b.hi)), b.count.to_string()]);
    }
    table(&mut md, &["accuracy (%)", "users"].map(String::from), &rows);
    let _ = write!(md, "\nusers: {}, mean: {}, median: {}\n", h.n, pct(h.mean), pct(h.median));

    const W: f64 = 560.0;
    const H: f64 = 300.0;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let max = h.bins.iter().map(|b| b.count).max().unwrap_or(0).max(1) as f64;
    let bw = (W - 80.0) / h.bins.len().max(1) as f64;
    for (i, b) in h.bins.iter().enumerate() {
        let bh = (H - 80.0) * b.count as f64 / max;
        let x = 60.0 + i as f64 * bw;
        let _ = writeln!(
            svg,
            r##"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{bh:.1}" fill="#1f77b4"/>"##,
            H - 40.0 - bh,
            bw - 1.0
        );
        if i % 2 == 0 {
            let _ = writeln!(svg, r#"<text x="{x:.1}" y="{}" font-size="9">{}</text>"#, H - 26.0, trim_num(b.lo));
        }
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">accuracy (%)</text>"#, W / 2.0, H - 8.0);
    svg.push_str("</svg>\n");
    Report { markdown: md, csv: Some(csv), svg: Some(svg) }
}
