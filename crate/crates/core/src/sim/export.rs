//! Trajectory CSV and scene SVG.

use super::TrajectoryRecord;
use crate::world::WorldMap;
use std::fmt::Write as _;

/// Columns: `step,x,y,heading,mode`.
pub fn trajectory_csv(trajectory: &[TrajectoryRecord]) -> String {
    let mut s = String::from("step,x,y,heading,mode\n");
    for r in trajectory {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.step,
            r.pose.position.x,
            r.pose.position.y,
            r.pose.heading,
            r.mode.name()
        );
    }
    s
}

/// Map geometry in world coordinates (y up) with the optional driven path.
/// Roads and junction boxes are `rect` elements with class `road`/`junction`,
/// parked cars are `polygon` elements with class `parked`.
pub fn scene_svg(map: &WorldMap, trajectory: Option<&[TrajectoryRecord]>) -> String {
    let b = map.bounds;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}">"#,
        b.min.x,
        -b.max.y,
        b.width(),
        b.height()
    );
    let _ = writeln!(s, r#"<g transform="scale(1,-1)">"#);
    let _ = writeln!(
        s,
        r##"<rect class="bounds" x="{}" y="{}" width="{}" height="{}" fill="#f4f4f0"/>"##,
        b.min.x,
        b.min.y,
        b.width(),
        b.height()
    );
    for r in &map.roads {
        let rect = map.road_surface(r.id);
        let _ = writeln!(
            s,
            r##"<rect class="road" data-id="{}" x="{}" y="{}" width="{}" height="{}" fill="#888"/>"##,
            r.id.0,
            rect.min.x,
            rect.min.y,
            rect.width(),
            rect.height()
        );
    }
    for j in &map.junctions {
        let rect = map.junction_box(j.id);
        let _ = writeln!(
            s,
            r##"<rect class="junction" data-id="{}" x="{}" y="{}" width="{}" height="{}" fill="#777"/>"##,
            j.id.0,
            rect.min.x,
            rect.min.y,
            rect.width(),
            rect.height()
        );
    }
    for p in &map.parked {
        let pts: Vec<String> = p
            .footprint
            .corners()
            .iter()
            .map(|c| format!("{},{}", c.x, c.y))
            .collect();
        let _ = writeln!(
            s,
            r##"<polygon class="parked" data-id="{}" points="{}" fill="#c33"/>"##,
            p.id.0,
            pts.join(" ")
        );
    }
    let _ = writeln!(
        s,
        r##"<circle class="target" cx="{}" cy="{}" r="2" fill="#2a2"/>"##,
        map.target.x, map.target.y
    );
    if let Some(t) = trajectory {
        let pts: Vec<String> = t
            .iter()
            .map(|r| format!("{},{}", r.pose.position.x, r.pose.position.y))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline class="path" points="{}" fill="none" stroke="#03c" stroke-width="0.5"/>"##,
            pts.join(" ")
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}
