//! SVG snapshot of an episode: world, paths, the plan at one tick and a state timeline.

use std::fmt::Write;

use follow_core::adaptation::FollowState;
use follow_core::follower::{CandidateStatus, PlanRecord, RunRecord};
use follow_core::sim::Shape;
use follow_core::Vec2;

const SCALE: f64 = 40.0;
const STRIP: f64 = 40.0;

fn state_color(s: FollowState) -> &'static str {
    match s {
        FollowState::Chasing => "#e67e22",
        FollowState::Following => "#27ae60",
        FollowState::Planning => "#8e44ad",
        FollowState::Retreating => "#c0392b",
        FollowState::Switching => "#2980b9",
    }
}

fn state_name(s: FollowState) -> &'static str {
    match s {
        FollowState::Chasing => "chasing",
        FollowState::Following => "following",
        FollowState::Planning => "planning",
        FollowState::Retreating => "retreating",
        FollowState::Switching => "switching",
    }
}

struct Frame {
    min: Vec2,
    height: f64,
}

impl Frame {
    fn map(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.min.x) * SCALE, self.height - (p.y - self.min.y) * SCALE)
    }

    fn points(&self, pts: &[Vec2]) -> String {
        let mut s = String::new();
        for (i, &p) in pts.iter().enumerate() {
            let (x, y) = self.map(p);
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x:.1},{y:.1}");
        }
        s
    }
}

/// Index of the tick whose plan is drawn: `requested` if given, else the last tick with candidates.
pub fn plan_tick(record: &RunRecord, requested: Option<usize>) -> Option<usize> {
    match requested {
        Some(i) => (i < record.ticks.len()).then_some(i),
        None => record
            .ticks
            .iter()
            .rposition(|t| t.plan.as_ref().is_some_and(|p| !p.candidates.is_empty()))
            .or_else(|| record.ticks.iter().rposition(|t| t.plan.is_some())),
    }
}

/// Renders one episode. Every candidate of the drawn plan becomes one `candidate` polyline.
pub fn render_svg(record: &RunRecord, tick: Option<usize>) -> String {
    let size = record.arena.max - record.arena.min;
    let width = size.x * SCALE;
    let height = size.y * SCALE;
    let frame = Frame {
        min: record.arena.min,
        height,
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.1} {h:.1}">"#,
        w = width,
        h = height + STRIP
    );
    let _ = writeln!(
        s,
        r##"<rect class="arena" x="0" y="0" width="{width:.1}" height="{height:.1}" fill="#fafafa" stroke="#333"/>"##
    );
    for shape in &record.obstacles {
        match shape {
            Shape::Polygon { vertices } => {
                let _ = writeln!(
                    s,
                    r##"<polygon class="obstacle" points="{}" fill="#999"/>"##,
                    frame.points(vertices)
                );
            }
            Shape::Disc { center, radius } => {
                let (x, y) = frame.map(*center);
                let _ = writeln!(
                    s,
                    r##"<circle class="obstacle" cx="{x:.1}" cy="{y:.1}" r="{:.1}" fill="#999"/>"##,
                    radius * SCALE
                );
            }
        }
    }
    let leader: Vec<Vec2> = record.ticks.iter().map(|t| t.leader.position()).collect();
    let robot: Vec<Vec2> = record.ticks.iter().map(|t| t.robot.position()).collect();
    if leader.len() > 1 {
        let _ = writeln!(
            s,
            r##"<polyline class="leader-path" points="{}" fill="none" stroke="#2c3e50" stroke-dasharray="4 3"/>"##,
            frame.points(&leader)
        );
        let _ = writeln!(
            s,
            r##"<polyline class="robot-path" points="{}" fill="none" stroke="#16a085" stroke-width="1.5"/>"##,
            frame.points(&robot)
        );
    }

    if let Some(i) = plan_tick(record, tick) {
        let t = &record.ticks[i];
        if let Some(plan) = &t.plan {
            draw_plan(&mut s, &frame, plan);
        }
        let (rx, ry) = frame.map(t.robot.position());
        let (lx, ly) = frame.map(t.leader.position());
        let _ = writeln!(
            s,
            r##"<circle class="robot" cx="{rx:.1}" cy="{ry:.1}" r="{:.1}" fill="#16a085"/>"##,
            0.3 * SCALE
        );
        let _ = writeln!(
            s,
            r##"<circle class="leader" cx="{lx:.1}" cy="{ly:.1}" r="{:.1}" fill="#2c3e50"/>"##,
            0.3 * SCALE
        );
        let _ = writeln!(
            s,
            r##"<text x="4" y="14" font-size="12">t = {:.1} s, {}</text>"##,
            t.time,
            state_name(t.state)
        );
    }

    // state timeline along the bottom
    let n = record.ticks.len().max(1) as f64;
    let mut start = 0;
    while start < record.ticks.len() {
        let state = record.ticks[start].state;
        let mut end = start;
        while end < record.ticks.len() && record.ticks[end].state == state {
            end += 1;
        }
        let x = start as f64 / n * width;
        let w = (end - start) as f64 / n * width;
        let _ = writeln!(
            s,
            r#"<rect class="state {}" x="{x:.1}" y="{:.1}" width="{w:.1}" height="{:.1}" fill="{}"/>"#,
            state_name(state),
            height + 8.0,
            STRIP - 16.0,
            state_color(state)
        );
        start = end;
    }
    s.push_str("</svg>\n");
    s
}

fn draw_plan(s: &mut String, frame: &Frame, plan: &PlanRecord) {
    for hull in &plan.hulls {
        let _ = writeln!(
            s,
            r##"<polygon class="hull" points="{}" fill="none" stroke="#7f8c8d" stroke-dasharray="2 2"/>"##,
            frame.points(&hull.vertices)
        );
    }
    for goal in &plan.goals {
        let pts = goal.sample(48);
        let _ = writeln!(
            s,
            r##"<polyline class="goal" points="{}" fill="none" stroke="#f1c40f" stroke-width="3"/>"##,
            frame.points(&pts)
        );
    }
    for (i, c) in plan.candidates.iter().enumerate() {
        let selected = plan.selected == Some(i);
        let (class, stroke, width) = match (selected, c.status) {
            (true, _) => ("candidate selected", "#e74c3c", 2.5),
            (false, CandidateStatus::Feasible) => ("candidate", "#3498db", 1.0),
            (false, CandidateStatus::Fallback) => ("candidate fallback", "#95a5a6", 1.0),
            (false, CandidateStatus::Rejected) => ("candidate rejected", "#bdc3c7", 0.8),
        };
        let _ = writeln!(
            s,
            r#"<polyline class="{class}" points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            frame.points(&c.points)
        );
    }
}
