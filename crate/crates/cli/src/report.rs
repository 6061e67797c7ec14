use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance rule, e.g. `<= 1e-6`.
    pub rule: String,
    pub passed: bool,
}

impl Verdict {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Verdict {
            name: name.into(),
            value,
            rule: format!("<= {limit:e}"),
            passed: value <= limit,
        }
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Verdict {
            name: name.into(),
            value,
            rule: format!(">= {limit:e}"),
            passed: value >= limit,
        }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Verdict {
            name: name.into(),
            value,
            rule: format!("in [{lo}, {hi}]"),
            passed: (lo..=hi).contains(&value),
        }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Verdict {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            rule: "== 1".into(),
            passed: ok,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub name: String,
    pub scenario: String,
    pub config: BTreeMap<String, String>,
    pub metrics: Vec<(String, f64)>,
    pub verdicts: Vec<Verdict>,
    /// `(suffix, csv text)`; written as `<name>_<suffix>.csv`.
    pub tables: Vec<(String, String)>,
    pub plot: Option<Plot>,
    pub wall_clock: f64,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// Summary table: config echo, metrics and verdicts. Wall-clock is kept
    /// out so repeated runs produce identical files.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("section,key,value,rule,pass\n");
        let _ = writeln!(s, "run,scenario,{},,", self.scenario);
        for (k, v) in &self.config {
            let _ = writeln!(s, "config,{k},{},,", v.replace(',', ";"));
        }
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "metric,{k},{v:.10e},,");
        }
        for v in &self.verdicts {
            let _ = writeln!(s, "verdict,{},{:.10e},{},{}", v.name, v.value, v.rule, v.passed);
        }
        s
    }

    /// Writes every table, the summary and (when requested) the plot. Returns the paths written.
    pub fn write(&self, dir: &Path, plot: bool) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |file: String, text: &str| -> io::Result<()> {
            let path = dir.join(file);
            fs::write(&path, text)?;
            written.push(path);
            Ok(())
        };
        put(format!("{}_report.csv", self.name), &self.summary_csv())?;
        for (suffix, text) in &self.tables {
            put(format!("{}_{suffix}.csv", self.name), text)?;
        }
        if plot {
            if let Some(p) = &self.plot {
                put(format!("{}.svg", self.name), &render_svg(p))?;
            }
        }
        Ok(written)
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal SVG line chart.
pub fn render_svg(plot: &Plot) -> String {
    let transform = |y: f64| if plot.log_y { y.log10() } else { y };
    let series: Vec<(&str, Vec<(f64, f64)>)> = plot
        .series
        .iter()
        .map(|s| {
            let pts = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!plot.log_y || *y > 0.0))
                .map(|&(x, y)| (x, transform(y)))
                .collect();
            (s.label.as_str(), pts)
        })
        .collect();
    let all = series.iter().flat_map(|s| s.1.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let label_y = |y: f64| {
        if plot.log_y {
            format!("{:.1e}", 10f64.powf(y))
        } else {
            format!("{y:.3e}")
        }
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(&plot.title)
    );
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<polyline points="{l},{t} {l},{b} {r},{b}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<text x="{l}" y="{}" text-anchor="middle">{x0:.3}</text>"#, b + 15.0);
    let _ = writeln!(s, r#"<text x="{r}" y="{}" text-anchor="middle">{x1:.3}</text>"#, b + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{b}" text-anchor="end">{}</text>"#, l - 4.0, label_y(y0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, l - 4.0, t + 4.0, label_y(y1));
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(&plot.y_label)
    );
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
        let ly = t + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#,
            r - 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}
