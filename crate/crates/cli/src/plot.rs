//! Grouped bar chart of mean IoU as a standalone SVG document.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use objdyn::pipeline::ReportRow;

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

const BAR: f64 = 22.0;
const GROUP_GAP: f64 = 28.0;
const PLOT_H: f64 = 240.0;
const LEFT: f64 = 56.0;
const TOP: f64 = 40.0;

/// One bar: the mean over all rows sharing dataset and series.
#[derive(Clone, Debug, PartialEq)]
pub struct Bar {
    pub dataset: String,
    pub series: String,
    pub mean_iou: f64,
    /// Number of report rows (usually seeds) averaged.
    pub rows: usize,
}

fn first_seen<'a>(keys: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    keys.filter(|k| seen.insert(*k))
        .map(str::to_owned)
        .collect()
}

/// Averages rows into bars. Series are variants, suffixed with the horizon
/// when the rows mix horizons. Order follows first appearance.
pub fn bars(rows: &[ReportRow]) -> Vec<Bar> {
    let horizons: BTreeSet<usize> = rows.iter().map(|r| r.horizon).collect();
    let series_of = |r: &ReportRow| {
        if horizons.len() > 1 {
            format!("{} h{}", r.variant, r.horizon)
        } else {
            r.variant.clone()
        }
    };
    let labels: Vec<String> = rows.iter().map(series_of).collect();
    let datasets = first_seen(rows.iter().map(|r| r.dataset.as_str()));
    let series = first_seen(labels.iter().map(String::as_str));
    let mut out = Vec::new();
    for d in &datasets {
        for s in &series {
            let vals: Vec<f64> = rows
                .iter()
                .zip(&labels)
                .filter(|(r, l)| &r.dataset == d && *l == s)
                .map(|(r, _)| r.mean_iou)
                .collect();
            if !vals.is_empty() {
                out.push(Bar {
                    dataset: d.clone(),
                    series: s.clone(),
                    mean_iou: vals.iter().sum::<f64>() / vals.len() as f64,
                    rows: vals.len(),
                });
            }
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the bars grouped by dataset on a fixed [0, 1] axis.
pub fn render_svg(bars: &[Bar], title: &str) -> String {
    let datasets = first_seen(bars.iter().map(|b| b.dataset.as_str()));
    let series = first_seen(bars.iter().map(|b| b.series.as_str()));
    let group_w = series.len() as f64 * BAR;
    let plot_w = datasets.len() as f64 * (group_w + GROUP_GAP) + GROUP_GAP;
    let legend_w = 20.0 + series.iter().map(|s| s.len()).max().unwrap_or(0) as f64 * 7.0 + 30.0;
    let width = LEFT + plot_w + legend_w;
    let height = TOP + PLOT_H + 60.0;
    let y = |v: f64| TOP + PLOT_H * (1.0 - v.clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" font-size="14" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line class="grid" x1="{LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            LEFT + plot_w,
            y(v),
            y(v),
            LEFT - 6.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">mean IoU</text>"#,
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0
    );
    for (gi, d) in datasets.iter().enumerate() {
        let x0 = LEFT + GROUP_GAP + gi as f64 * (group_w + GROUP_GAP);
        for (si, name) in series.iter().enumerate() {
            let Some(b) = bars.iter().find(|b| &b.dataset == d && &b.series == name) else {
                continue;
            };
            let x = x0 + si as f64 * BAR;
            let _ = writeln!(
                s,
                r#"<rect class="bar" x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>{} / {}: {:.4} ({} rows)</title></rect>"#,
                x + 1.0,
                y(b.mean_iou),
                BAR - 2.0,
                TOP + PLOT_H - y(b.mean_iou),
                PALETTE[si % PALETTE.len()],
                escape(d),
                escape(name),
                b.mean_iou,
                b.rows
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="8" text-anchor="middle">{:.2}</text>"#,
                x + BAR / 2.0,
                y(b.mean_iou) - 3.0,
                b.mean_iou
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + group_w / 2.0,
            TOP + PLOT_H + 18.0,
            escape(d)
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" x2="{LEFT}" y1="{TOP}" y2="{:.1}" stroke="black"/><line x1="{LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#,
        TOP + PLOT_H,
        LEFT + plot_w,
        TOP + PLOT_H,
        TOP + PLOT_H
    );
    let lx = LEFT + plot_w + 16.0;
    for (si, name) in series.iter().enumerate() {
        let ly = TOP + si as f64 * 18.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{ly:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            PALETTE[si % PALETTE.len()],
            lx + 18.0,
            ly + 10.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
