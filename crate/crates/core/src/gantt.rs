//! Train-time and train-location chart rendering, as standalone SVG 1.1
//! documents or fixed-width text. Output is a pure function of the inputs,
//! byte for byte.
//!
//! Color classes separate the two traversal directions and the load, unload
//! and dwell shares of each station stop; ellipses mark stops stretched
//! beyond their required time by interactions with other trains (a returning
//! train held at a siding while an opposing train clears, typically).

use std::fmt::Write as _;

use crate::model::{Direction, Instance, Schedule};
use crate::{Error, Result};

/// Output encoding of a chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartFormat {
    Svg,
    Text,
}

const TIME_SCALE: f64 = 10.0; // px per hour
const LEFT: f64 = 90.0;
const TOP: f64 = 50.0;
const ROW_H: f64 = 34.0;
const BAR_H: f64 = 14.0;
const STOP_H: f64 = 7.0;
const BAND_W: f64 = 150.0;
const INTERRUPT_EPS: f64 = 1e-6;

const STYLE: &str = "<style>\n\
    text { font-family: monospace; font-size: 11px; fill: #222; }\n\
    .dep-run { fill: #1f77b4; }\n\
    .ret-run { fill: #d62728; }\n\
    .dep-load { fill: #2ca02c; }\n\
    .dep-unload { fill: #9467bd; }\n\
    .dep-dwell { fill: #8c564b; }\n\
    .ret-load { fill: #17becf; }\n\
    .ret-unload { fill: #e377c2; }\n\
    .ret-dwell { fill: #7f7f7f; }\n\
    .interrupt { fill: #ffdd57; fill-opacity: 0.85; stroke: #b8860b; }\n\
    .segment-rule { stroke: #2e8b57; stroke-width: 2; }\n\
    .band { fill: none; stroke: #2e8b57; stroke-width: 1.5; }\n\
    .axis { stroke: #333; stroke-width: 1; }\n\
    .tick { stroke: #bbb; stroke-width: 0.5; }\n\
    .dep-depart, .dep-arrive { fill: #1f77b4; }\n\
    .ret-depart, .ret-arrive { fill: #d62728; }\n\
    .dep-arrive, .ret-arrive { fill-opacity: 0.45; }\n\
    </style>";

fn ensure_feasible(inst: &Instance, sched: &Schedule) -> Result<()> {
    let violations = crate::model::validate_schedule(inst, sched)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InfeasibleSchedule(violations))
    }
}

fn horizon(inst: &Instance, sched: &Schedule) -> f64 {
    (0..inst.trains.len())
        .map(|t| sched.final_arrival(t))
        .fold(0.0, f64::max)
}

fn tick_step(horizon: f64) -> f64 {
    for step in [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0] {
        if horizon / step <= 16.0 {
            return step;
        }
    }
    200.0
}

fn x_of(time: f64) -> f64 {
    LEFT + time * TIME_SCALE
}

fn direction_tag(direction: Direction) -> &'static str {
    match direction {
        Direction::Departing => "dep",
        Direction::Returning => "ret",
    }
}

/// Both direction-relative names of a physical segment.
fn segment_names(n: usize, s: usize) -> String {
    format!("pd{s} / pdr{}", n + 1 - s)
}

/// Required stop and actual wait of train `t` at the station after traversal
/// step `k`, with the interruption flag.
fn stop_info(inst: &Instance, sched: &Schedule, t: usize, k: usize) -> (usize, f64, f64, bool) {
    let station = inst.station_after(t, k);
    let required = inst.stop_time(t, station);
    let wait = sched.dep_at(t, k + 1) - sched.arr_at(t, k);
    (station, required, wait, wait > required + INTERRUPT_EPS)
}

/// Renders the train-time chart: one row per train, time on the horizontal
/// axis, traversal bars with stop blocks between them.
pub fn render_train_time(inst: &Instance, sched: &Schedule, format: ChartFormat) -> Result<String> {
    ensure_feasible(inst, sched)?;
    match format {
        ChartFormat::Svg => Ok(train_time_svg(inst, sched)),
        ChartFormat::Text => Ok(train_time_text(inst, sched)),
    }
}

fn train_time_svg(inst: &Instance, sched: &Schedule) -> String {
    let n = inst.n();
    let horizon = horizon(inst, sched);
    let width = x_of(horizon) + 40.0;
    let height = TOP + ROW_H * inst.trains.len() as f64 + 30.0;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.6}" height="{height:.6}" viewBox="0 0 {width:.6} {height:.6}" data-time-scale="{TIME_SCALE}" data-time-origin="{LEFT}">"#
    );
    let _ = writeln!(out, "{STYLE}");
    let _ = writeln!(out, r#"<text x="8" y="18">train-time chart (hours)</text>"#);
    let step = tick_step(horizon);
    let mut tick = 0.0;
    while tick <= horizon + step / 2.0 {
        let x = x_of(tick);
        let _ = writeln!(
            out,
            r#"<line class="tick" x1="{x:.6}" y1="{TOP:.6}" x2="{x:.6}" y2="{:.6}"/>"#,
            height - 24.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.6}" y="{:.6}">{tick:.1}</text>"#,
            x - 8.0,
            height - 10.0
        );
        tick += step;
    }
    let _ = writeln!(
        out,
        r#"<line class="axis" x1="{LEFT:.6}" y1="{TOP:.6}" x2="{LEFT:.6}" y2="{:.6}"/>"#,
        height - 24.0
    );
    for (t, train) in inst.trains.iter().enumerate() {
        let row_top = TOP + ROW_H * t as f64;
        let bar_y = row_top + (ROW_H - BAR_H) / 2.0;
        let tag = direction_tag(train.direction);
        let _ = writeln!(
            out,
            r#"<text x="8" y="{:.6}">{} ({})</text>"#,
            row_top + ROW_H / 2.0 + 4.0,
            train.id,
            train.direction
        );
        for k in 1..=n {
            let (dep, arr) = (sched.dep_at(t, k), sched.arr_at(t, k));
            let _ = writeln!(
                out,
                r#"<rect class="{tag}-run" data-train="{}" data-step="{k}" x="{:.6}" y="{bar_y:.6}" width="{:.6}" height="{BAR_H:.6}"/>"#,
                train.id,
                x_of(dep),
                (arr - dep) * TIME_SCALE
            );
            // Segment divider at the end of each traversal rectangle.
            let _ = writeln!(
                out,
                r#"<line class="segment-rule" x1="{0:.6}" y1="{1:.6}" x2="{0:.6}" y2="{2:.6}"/>"#,
                x_of(arr),
                row_top + 3.0,
                row_top + ROW_H - 3.0
            );
            if k == n {
                continue;
            }
            let (station, required, wait, interrupted) = stop_info(inst, sched, t, k);
            let stop_y = row_top + (ROW_H - STOP_H) / 2.0;
            let mut cursor = arr;
            for (share, role) in [
                (train.unload[station], "unload"),
                (train.load[station], "load"),
                (train.dwell[station], "dwell"),
            ] {
                if share > 0.0 {
                    let _ = writeln!(
                        out,
                        r#"<rect class="{tag}-{role}" data-train="{}" data-station="{station}" x="{:.6}" y="{stop_y:.6}" width="{:.6}" height="{STOP_H:.6}"/>"#,
                        train.id,
                        x_of(cursor),
                        share * TIME_SCALE
                    );
                    cursor += share;
                }
            }
            if interrupted {
                let idle_start = arr + required;
                let idle_end = sched.dep_at(t, k + 1);
                let _ = writeln!(
                    out,
                    r#"<ellipse class="interrupt" data-train="{}" data-station="{station}" cx="{:.6}" cy="{:.6}" rx="{:.6}" ry="{:.6}"/>"#,
                    train.id,
                    x_of((idle_start + idle_end) / 2.0),
                    row_top + ROW_H / 2.0,
                    (idle_end - idle_start) / 2.0 * TIME_SCALE,
                    BAR_H * 0.6
                );
            }
            let _ = wait;
        }
    }
    let _ = writeln!(out, "</svg>");
    out
}

fn train_time_text(inst: &Instance, sched: &Schedule) -> String {
    let n = inst.n();
    let mut out = String::new();
    let _ = writeln!(out, "train-time chart (hours)");
    for (t, train) in inst.trains.iter().enumerate() {
        let _ = writeln!(out, "{} ({})", train.id, train.direction);
        for k in 1..=n {
            let phys = inst.phys(t, k);
            let name = match train.direction {
                Direction::Departing => format!("pd{phys}"),
                Direction::Returning => format!("pdr{k}"),
            };
            let _ = writeln!(
                out,
                "  step {k} [{name}]: dep {:.1} -> arr {:.1}",
                sched.dep_at(t, k),
                sched.arr_at(t, k)
            );
            if k < n {
                let (station, required, wait, interrupted) = stop_info(inst, sched, t, k);
                let mark = if interrupted { "  !interrupted" } else { "" };
                let _ = writeln!(
                    out,
                    "  station {station}: stop {wait:.1} (required {required:.1}){mark}"
                );
            }
        }
    }
    out
}

/// Renders the train-location chart: one row per train, physical segments as
/// vertical bands labeled with both direction-relative names, departure and
/// arrival arrows with their times printed beneath.
pub fn render_train_location(
    inst: &Instance,
    sched: &Schedule,
    format: ChartFormat,
) -> Result<String> {
    ensure_feasible(inst, sched)?;
    match format {
        ChartFormat::Svg => Ok(train_location_svg(inst, sched)),
        ChartFormat::Text => Ok(train_location_text(inst, sched)),
    }
}

fn train_location_svg(inst: &Instance, sched: &Schedule) -> String {
    let n = inst.n();
    let width = LEFT + BAND_W * n as f64 + 40.0;
    let height = TOP + ROW_H * inst.trains.len() as f64 + 30.0;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.6}" height="{height:.6}" viewBox="0 0 {width:.6} {height:.6}">"#
    );
    let _ = writeln!(out, "{STYLE}");
    let _ = writeln!(out, r#"<text x="8" y="18">train-location chart (hours)</text>"#);
    let band_bottom = TOP + ROW_H * inst.trains.len() as f64;
    for s in 1..=n {
        let x = LEFT + BAND_W * (s - 1) as f64;
        let _ = writeln!(
            out,
            r#"<rect class="band" data-segment="{s}" x="{x:.6}" y="{TOP:.6}" width="{BAND_W:.6}" height="{:.6}"/>"#,
            band_bottom - TOP
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.6}" y="{:.6}">{}</text>"#,
            x + 10.0,
            TOP - 8.0,
            segment_names(n, s)
        );
    }
    for (t, train) in inst.trains.iter().enumerate() {
        let row_top = TOP + ROW_H * t as f64;
        let mid = row_top + ROW_H / 2.0 - 4.0;
        let _ = writeln!(
            out,
            r#"<text x="8" y="{:.6}">{} ({})</text>"#,
            mid + 4.0,
            train.id,
            train.direction
        );
        let tag = direction_tag(train.direction);
        for k in 1..=n {
            let s = inst.phys(t, k);
            let band_left = LEFT + BAND_W * (s - 1) as f64;
            let band_right = band_left + BAND_W;
            // Entry edge is where the train departs the segment from;
            // departing trains move left to right, returning the other way.
            let (entry, exit, step_dir) = match train.direction {
                Direction::Departing => (band_left + 8.0, band_right - 8.0, 1.0),
                Direction::Returning => (band_right - 8.0, band_left + 8.0, -1.0),
            };
            let tip = 8.0 * step_dir;
            let _ = writeln!(
                out,
                r#"<path class="{tag}-depart" data-train="{}" data-step="{k}" d="M{entry:.6},{:.6} L{:.6},{mid:.6} L{entry:.6},{:.6} Z"/>"#,
                train.id,
                mid - 4.0,
                entry + tip,
                mid + 4.0
            );
            let _ = writeln!(
                out,
                r#"<text data-train="{}" x="{:.6}" y="{:.6}">{:.1}</text>"#,
                train.id,
                entry - 10.0,
                mid + 16.0,
                sched.dep_at(t, k)
            );
            let _ = writeln!(
                out,
                r#"<path class="{tag}-arrive" data-train="{}" data-step="{k}" d="M{exit:.6},{:.6} L{:.6},{mid:.6} L{exit:.6},{:.6} Z"/>"#,
                train.id,
                mid - 4.0,
                exit + tip,
                mid + 4.0
            );
            let _ = writeln!(
                out,
                r#"<text data-train="{}" x="{:.6}" y="{:.6}">{:.1}</text>"#,
                train.id,
                exit - 10.0,
                mid + 16.0,
                sched.arr_at(t, k)
            );
        }
    }
    let _ = writeln!(out, "</svg>");
    out
}

fn train_location_text(inst: &Instance, sched: &Schedule) -> String {
    let n = inst.n();
    let mut out = String::new();
    let _ = writeln!(out, "train-location chart (hours)");
    for s in 1..=n {
        let _ = writeln!(out, "segment {s} [{}]", segment_names(n, s));
        for (t, train) in inst.trains.iter().enumerate() {
            let k = match train.direction {
                Direction::Departing => s,
                Direction::Returning => n + 1 - s,
            };
            let _ = writeln!(
                out,
                "  {}: dep {:.1} -> arr {:.1}",
                train.id,
                sched.dep_at(t, k),
                sched.arr_at(t, k)
            );
        }
    }
    out
}
