//! Deterministic figure emission: the dynamic-complexity heatmap as SVG
//! and per-phase interaction networks as DOT.
//!
//! Rendering is a pure function of its inputs; identical inputs produce
//! byte-identical documents, which keeps the outputs golden-testable.

use serde::Deserialize;

use crate::complexity::ComplexitySeries;
use crate::error::{Error, Result};
use crate::instability::InstabilityEvent;
use crate::model::{Interval, MemberId, Timestamp};
use crate::netmetrics::InteractionNetwork;

/// Colormap stops: blue at 0, light gray at 0.5, red at 1.
const STOP_LO: (f64, f64, f64) = (59.0, 76.0, 192.0);
const STOP_MID: (f64, f64, f64) = (221.0, 221.0, 221.0);
const STOP_HI: (f64, f64, f64) = (180.0, 4.0, 38.0);
/// Fill for cells whose window was undefined; never produced by the
/// colormap itself.
pub const MISSING_CELL_RGB: (u8, u8, u8) = (160, 160, 160);

/// Node diameter range in display units, shared across a figure set.
pub const NODE_DIAMETER_RANGE: (f64, f64) = (0.3, 1.5);
/// Edge pen width range in display units, shared across a figure set.
pub const EDGE_PENWIDTH_RANGE: (f64, f64) = (0.5, 6.0);

const CELL_W: usize = 3;
const CELL_H: usize = 18;
const ROW_GAP: usize = 2;
const LABEL_W: usize = 120;
const TICK_EVERY_SECS: f64 = 300.0;

/// Piecewise-linear diverging colormap over `[0, 1]` (values clamped),
/// rounded half-up per channel.
pub fn colormap(value: f64) -> (u8, u8, u8) {
    let v = if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) };
    let lerp = |a: (f64, f64, f64), b: (f64, f64, f64), t: f64| {
        let ch = |x: f64, y: f64| ((x + t * (y - x)) + 0.5).floor() as u8;
        (ch(a.0, b.0), ch(a.1, b.1), ch(a.2, b.2))
    };
    if v <= 0.5 {
        lerp(STOP_LO, STOP_MID, v / 0.5)
    } else {
        lerp(STOP_MID, STOP_HI, (v - 0.5) / 0.5)
    }
}

fn rgb(c: (u8, u8, u8)) -> String {
    format!("#{:02x}{:02x}{:02x}", c.0, c.1, c.2)
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A labeled span drawn along the top of the heatmap (known task
/// boundaries supplied for evaluation only).
#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub label: String,
    pub span: Interval,
}

/// Parse annotations from a JSON array of
/// `{"label": ..., "start": ..., "end": ...}` objects.
pub fn annotations_from_json(text: &str) -> Result<Vec<Annotation>> {
    #[derive(Deserialize)]
    struct Doc {
        label: String,
        start: String,
        end: String,
    }
    let docs: Vec<Doc> = serde_json::from_str(text)?;
    docs.into_iter()
        .map(|d| {
            Ok(Annotation {
                label: d.label,
                span: Interval::new(Timestamp::parse_iso(&d.start)?, Timestamp::parse_iso(&d.end)?),
            })
        })
        .collect()
}

/// Render the heatmap: one row band per member, then the team average,
/// then the critical-instability marks, with `HH:MM:SS` ticks every five
/// minutes.
///
/// DC values are min-max normalized jointly across all rows before the
/// colormap; if every defined value is equal the normalization degenerates
/// to 0 (the cool end). Undefined cells use a dedicated neutral gray.
pub fn render_heatmap(
    per_member: &[&ComplexitySeries<f64>],
    average: &ComplexitySeries<f64>,
    events: &[InstabilityEvent],
    annotations: &[Annotation],
) -> Result<String> {
    if per_member.is_empty() {
        return Err(Error::EmptyInput("heatmap needs at least one member series".into()));
    }
    for s in per_member {
        if s.window_end_times != average.window_end_times {
            return Err(Error::InvalidArgument(format!(
                "series for {} is not on the average's window grid",
                s.member
            )));
        }
    }
    let cols = average.len();
    if cols == 0 {
        return Err(Error::EmptyInput("heatmap needs at least one window".into()));
    }

    // joint min-max normalization across member rows and the average row
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in per_member.iter().copied().chain(std::iter::once(average)) {
        for v in s.dc.iter().flatten() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    let norm = move |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };

    let rows = per_member.len() + 2;
    let grid_w = cols * CELL_W;
    let top = if annotations.is_empty() { 8 } else { 36 };
    let axis_h = 26;
    let width = LABEL_W + grid_w + 16;
    let height = top + rows * (CELL_H + ROW_GAP) + axis_h;

    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"
    ));

    let t0 = average.window_end_times[0];
    let t_last = average.window_end_times[cols - 1];
    let span_secs = t_last.secs_since(t0).max(1e-9);
    let x_of = |t: Timestamp| -> f64 {
        LABEL_W as f64 + (t.secs_since(t0) / span_secs) * ((cols - 1) * CELL_W) as f64
    };

    if !annotations.is_empty() {
        svg.push_str("<g class=\"annotations\">\n");
        for a in annotations {
            let x1 = x_of(a.span.start).max(LABEL_W as f64);
            let x2 = x_of(a.span.end).min((LABEL_W + grid_w) as f64);
            if x2 <= x1 {
                continue;
            }
            svg.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"18\" width=\"{:.1}\" height=\"10\" fill=\"#dddddd\" stroke=\"#555555\" stroke-width=\"0.5\"/>\n",
                x1,
                x2 - x1
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"14\" font-size=\"9\" text-anchor=\"middle\">{}</text>\n",
                (x1 + x2) / 2.0,
                escape_xml(&a.label)
            ));
        }
        svg.push_str("</g>\n");
    }

    let mut row_y = top;
    let mut draw_value_row = |svg: &mut String, label: &str, series: &ComplexitySeries<f64>| {
        svg.push_str(&format!("<g class=\"row\" id=\"row-{}\">\n", escape_xml(label)));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            LABEL_W - 6,
            row_y + CELL_H / 2 + 4,
            escape_xml(label)
        ));
        for (i, v) in series.dc.iter().enumerate() {
            let fill = match v {
                Some(x) => rgb(colormap(norm(*x))),
                None => rgb(MISSING_CELL_RGB),
            };
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
                LABEL_W + i * CELL_W,
                row_y,
                CELL_W,
                CELL_H,
                fill
            ));
        }
        svg.push_str("</g>\n");
        row_y += CELL_H + ROW_GAP;
    };

    for s in per_member {
        draw_value_row(&mut svg, s.member.as_str(), s);
    }
    draw_value_row(&mut svg, "Average", average);

    // instability row: black marks at event columns, white elsewhere
    svg.push_str("<g class=\"row\" id=\"row-instabilities\">\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">Critical Instabilities</text>\n",
        LABEL_W - 6,
        row_y + CELL_H / 2 + 4
    ));
    let half_period = if cols > 1 {
        average.window_end_times[1].secs_since(average.window_end_times[0]) / 2.0
    } else {
        0.5
    };
    for i in 0..cols {
        let t = average.window_end_times[i];
        let hit = events
            .iter()
            .any(|e| (e.time.secs_since(t)).abs() < half_period.max(1e-9));
        let fill = if hit { "#000000" } else { "#ffffff" };
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"#cccccc\" stroke-width=\"0.2\"/>\n",
            LABEL_W + i * CELL_W,
            row_y,
            CELL_W,
            CELL_H,
            fill
        ));
    }
    svg.push_str("</g>\n");
    row_y += CELL_H + ROW_GAP;

    // time axis: HH:MM:SS every five minutes
    svg.push_str("<g class=\"axis\">\n");
    let first_tick = (t0.epoch_secs() / TICK_EVERY_SECS).ceil() * TICK_EVERY_SECS;
    let mut tick = first_tick;
    while tick <= t_last.epoch_secs() + 1e-9 {
        let t = Timestamp::from_epoch_secs(tick);
        let x = x_of(t);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{top}\" x2=\"{x:.1}\" y2=\"{row_y}\" stroke=\"#999999\" stroke-width=\"0.4\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{}\" font-size=\"9\" text-anchor=\"middle\">{}</text>\n",
            row_y + 14,
            t.to_clock()
        ));
        tick += TICK_EVERY_SECS;
    }
    svg.push_str("</g>\n");
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Shared size/width scaling across a set of figures so phases stay
/// visually comparable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DotScale {
    max_sqrt_energy: f64,
    max_engagement: f64,
}

impl DotScale {
    pub fn from_networks<'a>(networks: impl IntoIterator<Item = &'a InteractionNetwork>) -> Self {
        let mut max_sqrt_energy: f64 = 0.0;
        let mut max_engagement: f64 = 0.0;
        for n in networks {
            for &e in n.energy.values() {
                max_sqrt_energy = max_sqrt_energy.max(e.max(0.0).sqrt());
            }
            for &w in n.engagement.values() {
                max_engagement = max_engagement.max(w);
            }
        }
        DotScale {
            max_sqrt_energy,
            max_engagement,
        }
    }

    /// Node diameter for an energy value: proportional to sqrt(energy)
    /// (perceived area tracks the value), mapped onto the display range.
    pub fn node_diameter(&self, energy: f64) -> f64 {
        let (lo, hi) = NODE_DIAMETER_RANGE;
        if self.max_sqrt_energy <= 0.0 {
            return lo;
        }
        lo + (energy.max(0.0).sqrt() / self.max_sqrt_energy) * (hi - lo)
    }

    pub fn edge_penwidth(&self, engagement: f64) -> f64 {
        let (lo, hi) = EDGE_PENWIDTH_RANGE;
        if self.max_engagement <= 0.0 {
            return lo;
        }
        lo + (engagement.max(0.0) / self.max_engagement) * (hi - lo)
    }
}

/// Emit one phase network as an undirected DOT graph laid out on a
/// circle. Node diameter encodes energy, edge pen width engagement;
/// zero-weight edges are omitted and low-coverage members drawn dashed.
pub fn emit_network_dot(network: &InteractionNetwork, scale: &DotScale) -> Result<String> {
    let members: Vec<MemberId> = network.members();
    if members.is_empty() {
        return Err(Error::EmptyInput("network has no members".into()));
    }
    let mut out = String::new();
    out.push_str("graph interaction {\n");
    out.push_str("  layout=circo;\n");
    out.push_str(&format!(
        "  label=\"{} - {}\";\n",
        network.phase.start.to_clock(),
        network.phase.end.to_clock()
    ));
    out.push_str("  node [shape=circle, fixedsize=true, style=filled, fillcolor=\"#9ecae1\"];\n");
    for m in &members {
        let d = scale.node_diameter(network.energy[m]);
        let style = if network.is_low_confidence(m) {
            ", style=\"filled,dashed\""
        } else {
            ""
        };
        out.push_str(&format!(
            "  \"{}\" [width={:.3}, height={:.3}{}];\n",
            m.as_str(),
            d,
            d,
            style
        ));
    }
    for ((i, j), &w) in &network.engagement {
        if w <= 0.0 {
            continue;
        }
        out.push_str(&format!(
            "  \"{}\" -- \"{}\" [penwidth={:.3}];\n",
            i.as_str(),
            j.as_str(),
            scale.edge_penwidth(w)
        ));
    }
    out.push_str("}\n");
    Ok(out)
}
