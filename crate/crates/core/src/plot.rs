//! SVG rendering of learning curves and engagement trajectories.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::engagement::{Entity, Status, TraceRow};
use crate::ppo::CurveRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// Pixels per unit of target value in disc radius.
pub const RADIUS_PER_VALUE: f64 = 1.5;

/// Linear map from a data range onto a pixel range.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
        Self { lo, hi, px_lo, px_hi }
    }

    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn header(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title)).unwrap();
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Axis lines, end-point tick labels and axis titles.
fn axes(s: &mut String, x: &Axis, y: &Axis, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    writeln!(s, r#"<g class="axes" stroke="black" fill="none">"#).unwrap();
    writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>"#).unwrap();
    writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#).unwrap();
    writeln!(s, "</g>").unwrap();
    for (v, px) in [(x.lo, x0), (x.hi, x1)] {
        writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y0 + 16.0, tick(v)).unwrap();
    }
    for (v, py) in [(y.lo, y0), (y.hi, y1)] {
        writeln!(s, r#"<text x="{:.1}" y="{py:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, tick(v)).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 18.0, escape(x_label)).unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    )
    .unwrap();
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn polyline(points: &[(f64, f64)], stroke: &str, class: &str) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(r#"<polyline class="{class}" fill="none" stroke="{stroke}" stroke-width="1.5" points="{}"/>"#, pts.join(" "))
}

/// Curve name, stroke colour and the column it plots.
type Series = (&'static str, &'static str, fn(&CurveRow) -> f64);

/// Mean, minimum and maximum rollout reward against iteration.
pub fn learning_curve_svg(rows: &[CurveRow]) -> String {
    let mut s = header("Learning curve");
    let (x_lo, x_hi) = if rows.is_empty() { (0.0, 1.0) } else { bounds(rows.iter().map(|r| r.iteration as f64)) };
    let (y_lo, y_hi) = if rows.is_empty() {
        (0.0, 1.0)
    } else {
        bounds(rows.iter().flat_map(|r| [r.min_reward, r.max_reward, r.mean_reward]))
    };
    let x = Axis::new(x_lo, x_hi, MARGIN, WIDTH - MARGIN);
    let y = Axis::new(y_lo.min(0.0), y_hi, HEIGHT - MARGIN, MARGIN);
    axes(&mut s, &x, &y, "iteration", "reward");
    let series: [Series; 3] = [
        ("max", "#9ecae1", |r| r.max_reward),
        ("min", "#fdae6b", |r| r.min_reward),
        ("mean", "#08519c", |r| r.mean_reward),
    ];
    for (name, colour, get) in series {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (x.map(r.iteration as f64), y.map(get(r)))).collect();
        if !pts.is_empty() {
            writeln!(s, "{}", polyline(&pts, colour, name)).unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Ground-plane view: one polyline per weapon, one disc per target with
/// radius proportional to value, destroyed targets crossed out.
pub fn engagement_svg(rows: &[TraceRow]) -> String {
    let mut s = header("Engagement");
    let mut weapons: BTreeMap<usize, Vec<&TraceRow>> = BTreeMap::new();
    let mut targets: BTreeMap<usize, &TraceRow> = BTreeMap::new();
    let mut destroyed: BTreeMap<usize, bool> = BTreeMap::new();
    for r in rows {
        match r.entity {
            Entity::Weapon => weapons.entry(r.id).or_default().push(r),
            Entity::Target => {
                targets.insert(r.id, r);
                if r.status == Status::Destroyed {
                    destroyed.insert(r.id, true);
                }
            }
        }
    }
    let (x_lo, x_hi) = if rows.is_empty() { (0.0, 1.0) } else { bounds(rows.iter().map(|r| r.position.x)) };
    let (y_lo, y_hi) = if rows.is_empty() { (0.0, 1.0) } else { bounds(rows.iter().map(|r| r.position.y)) };
    // equal scale on both axes
    let span = (x_hi - x_lo).max(y_hi - y_lo).max(1.0);
    let (cx, cy) = (0.5 * (x_lo + x_hi), 0.5 * (y_lo + y_hi));
    let side = (HEIGHT - 2.0 * MARGIN).min(WIDTH - 2.0 * MARGIN);
    let px0 = 0.5 * (WIDTH - side);
    let x = Axis::new(cx - 0.55 * span, cx + 0.55 * span, px0, px0 + side);
    let y = Axis::new(cy - 0.55 * span, cy + 0.55 * span, HEIGHT - MARGIN, HEIGHT - MARGIN - side);
    axes(&mut s, &x, &y, "x (m)", "y (m)");
    for (id, track) in &weapons {
        let pts: Vec<(f64, f64)> = track.iter().map(|r| (x.map(r.position.x), y.map(r.position.y))).collect();
        writeln!(s, r#"<g id="weapon-{id}">{}</g>"#, polyline(&pts, "#444", "weapon")).unwrap();
    }
    for (id, t) in &targets {
        let (px, py) = (x.map(t.position.x), y.map(t.position.y));
        let r = RADIUS_PER_VALUE * t.value.unwrap_or(1.0);
        let fill = if destroyed.contains_key(id) { "#de2d26" } else { "#3182bd" };
        writeln!(
            s,
            r#"<circle class="target" id="target-{id}" cx="{px:.2}" cy="{py:.2}" r="{r:.3}" fill="{fill}" fill-opacity="0.6" stroke="black"/>"#
        )
        .unwrap();
        if destroyed.contains_key(id) {
            writeln!(
                s,
                r#"<path class="destroyed" d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="black" stroke-width="1.5"/>"#,
                px - r,
                py - r,
                px + r,
                py + r,
                px - r,
                py + r,
                px + r,
                py - r
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}
