//! SVG learning curves with a logarithmic query axis.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::config::Strategy;
use crate::logs::RunSummary;

pub const LEARNING_CURVE_SVG: &str = "learning_curve.svg";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 140.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

fn color(s: Strategy) -> &'static str {
    match s {
        Strategy::Barl => "#d62728",
        Strategy::EigT => "#1f77b4",
        Strategy::Random => "#7f7f7f",
        Strategy::RolloutMpc => "#2ca02c",
    }
}

/// Mean return and standard error across seeds at one query count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub n_queries: usize,
    pub mean: f64,
    pub se: f64,
}

/// Averages seeds at each query count. With a single seed at a point the
/// run's own evaluation SE is kept.
pub fn aggregate(runs: &[&RunSummary]) -> Vec<CurvePoint> {
    let mut at: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in runs {
        for e in &r.evals {
            at.entry(e.n_queries).or_default().push((e.mean, e.se));
        }
    }
    at.into_iter()
        .map(|(n_queries, v)| {
            let k = v.len() as f64;
            let mean = v.iter().map(|x| x.0).sum::<f64>() / k;
            let se = if v.len() == 1 {
                v[0].1
            } else {
                let var = v.iter().map(|x| (x.0 - mean) * (x.0 - mean)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            };
            CurvePoint { n_queries, mean, se }
        })
        .collect()
}

/// Powers of ten covering `[lo, hi]`.
pub fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let a = lo.max(1.0).log10().floor() as i32;
    let b = hi.max(1.0).log10().ceil().max(a as f64 + 1.0) as i32;
    (a..=b).map(|e| 10f64.powi(e)).collect()
}

/// Renders one environment's curves; `runs` may mix strategies and seeds.
pub fn render_svg(title: &str, runs: &[RunSummary]) -> String {
    let mut by_strategy: BTreeMap<Strategy, Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        by_strategy.entry(r.config.strategy).or_default().push(r);
    }
    let curves: Vec<(Strategy, Vec<CurvePoint>)> =
        by_strategy.into_iter().map(|(s, rs)| (s, aggregate(&rs))).filter(|(_, c)| !c.is_empty()).collect();

    let pts = curves.iter().flat_map(|(_, c)| c.iter());
    let (mut xmax, mut ymin, mut ymax) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        xmax = xmax.max(p.n_queries as f64);
        ymin = ymin.min(p.mean - p.se);
        ymax = ymax.max(p.mean + p.se);
    }
    if !ymin.is_finite() {
        (ymin, ymax) = (0.0, 1.0);
    }
    if ymax - ymin < 1e-9 {
        ymin -= 0.5;
        ymax += 0.5;
    }
    let ticks = log_ticks(1.0, xmax);
    let (lx, hx) = (ticks[0].log10(), ticks[ticks.len() - 1].log10());
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |n: f64| MARGIN_L + (n.max(1.0).log10() - lx) / (hx - lx) * pw;
    let sy = |y: f64| MARGIN_T + (ymax - y) / (ymax - ymin) * ph;

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{title}</text>"#, MARGIN_L + pw / 2.0).unwrap();
    writeln!(
        s,
        r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    )
    .unwrap();
    for t in &ticks {
        let x = sx(*t);
        writeln!(
            s,
            r##"<line class="xtick" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" font-size="12" text-anchor="middle">{t}</text>"##,
            MARGIN_T + ph,
            MARGIN_T + ph + 5.0,
            MARGIN_T + ph + 20.0
        )
        .unwrap();
    }
    for k in 0..=4 {
        let y = ymin + (ymax - ymin) * k as f64 / 4.0;
        let py = sy(y);
        writeln!(
            s,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{MARGIN_L}" y2="{py:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{y:.1}</text>"##,
            MARGIN_L - 5.0,
            MARGIN_L - 8.0,
            py + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">queries (log scale)</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 10.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.2})">eval return</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0
    )
    .unwrap();

    for (i, (strategy, c)) in curves.iter().enumerate() {
        let col = color(*strategy);
        let upper: Vec<String> = c.iter().map(|p| format!("{:.2},{:.2}", sx(p.n_queries as f64), sy(p.mean + p.se))).collect();
        let lower: Vec<String> =
            c.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.n_queries as f64), sy(p.mean - p.se))).collect();
        writeln!(s, r#"<polygon class="se-band" points="{} {}" fill="{col}" fill-opacity="0.2" stroke="none"/>"#, upper.join(" "), lower.join(" "))
            .unwrap();
        let line: Vec<String> = c.iter().map(|p| format!("{:.2},{:.2}", sx(p.n_queries as f64), sy(p.mean))).collect();
        writeln!(s, r#"<polyline class="curve" points="{}" fill="none" stroke="{col}" stroke-width="2"/>"#, line.join(" ")).unwrap();
        let ly = MARGIN_T + 10.0 + 20.0 * i as f64;
        let lx0 = WIDTH - MARGIN_R + 10.0;
        writeln!(
            s,
            r#"<line x1="{lx0}" y1="{ly}" x2="{}" y2="{ly}" stroke="{col}" stroke-width="2"/><text x="{}" y="{}" font-size="12">{strategy}</text>"#,
            lx0 + 20.0,
            lx0 + 25.0,
            ly + 4.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
