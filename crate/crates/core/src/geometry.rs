//! Trajectory planners for the incident-response project: ground paths
//! that detour around hazard footprints, and drone paths that climb
//! over them while keeping the two drones laterally separated.

use crate::builtins::Builtins;
use crate::eval::{EvalError, EvalResult};
use crate::value::Value;

/// Footprint shape of a hazard.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HazardTag {
    Square,
    Cylinder,
}

/// A hazard: tagged footprint at (cx, cy) with a size (half-extent for
/// squares, radius for cylinders) and a height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hazard {
    pub tag: HazardTag,
    pub cx: f64,
    pub cy: f64,
    pub size: f64,
    pub height: f64,
}

impl Hazard {
    /// Footprint disc radius: squares use the circumscribed disc.
    pub fn disc_radius(&self) -> f64 {
        match self.tag {
            HazardTag::Square => self.size * std::f64::consts::SQRT_2,
            HazardTag::Cylinder => self.size,
        }
    }

    pub fn inflated_radius(&self, g: &GeometryConfig) -> f64 {
        self.disc_radius() + g.inflate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint2 {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Waypoint2 {
    pub fn new(x: f64, y: f64) -> Self {
        Waypoint2 { x, y }
    }

    fn dist(self, other: Waypoint2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Planner parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryConfig {
    /// Vertical margin kept above hazard height, metres.
    pub clearance: f64,
    /// Minimum drone separation, metres.
    pub sep_min: f64,
    /// Lateral detour margin, metres.
    pub inflate: f64,
    /// Detour recursion depth before falling back to the direct segment.
    pub max_detour_depth: u32,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            clearance: 2.0,
            sep_min: 5.0,
            inflate: 0.5,
            max_detour_depth: 3,
        }
    }
}

/// A planned path plus a flag telling whether some segment remained
/// blocked after the detour budget was exhausted.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan2 {
    pub waypoints: Vec<Waypoint2>,
    pub blocked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan3 {
    pub waypoints: Vec<Waypoint3>,
    pub blocked: bool,
}

fn min_dist_to_segment(c: (f64, f64), a: Waypoint2, b: Waypoint2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return ((c.0 - a.x).powi(2) + (c.1 - a.y).powi(2)).sqrt();
    }
    let t = (((c.0 - a.x) * dx + (c.1 - a.y) * dy) / len2).clamp(0.0, 1.0);
    let (px, py) = (a.x + t * dx, a.y + t * dy);
    ((c.0 - px).powi(2) + (c.1 - py).powi(2)).sqrt()
}

/// Entry parameter of the segment into the hazard's inflated disc, or
/// None when the segment stays clear. Hazards containing an endpoint
/// are not treated as blockers.
fn blocking_entry(h: &Hazard, a: Waypoint2, b: Waypoint2, g: &GeometryConfig) -> Option<f64> {
    let r = h.inflated_radius(g);
    let c = Waypoint2::new(h.cx, h.cy);
    if a.dist(c) <= r || b.dist(c) <= r {
        return None;
    }
    if min_dist_to_segment((h.cx, h.cy), a, b) >= r {
        return None;
    }
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = (((h.cx - a.x) * dx + (h.cy - a.y) * dy) / len2).clamp(0.0, 1.0);
    Some(t)
}

/// Ground trajectory from `current` to `dest` avoiding hazard
/// footprints. The final waypoint is `dest` exactly; an identical
/// current and dest yields the empty path.
pub fn calc_traj(
    current: Waypoint2,
    dest: Waypoint2,
    hazards: &[Hazard],
    g: &GeometryConfig,
) -> Plan2 {
    if current == dest {
        return Plan2 {
            waypoints: vec![],
            blocked: false,
        };
    }
    let mut blocked = false;
    let mut waypoints = Vec::new();
    avoid(current, dest, hazards, g, g.max_detour_depth, &mut waypoints, &mut blocked);
    waypoints.dedup_by(|a, b| a == b);
    if waypoints.first() == Some(&current) {
        waypoints.remove(0);
    }
    Plan2 { waypoints, blocked }
}

/// Append the waypoints of a path from `a` to `b` (excluding `a`,
/// including `b`), detouring around the earliest blocking disc.
fn avoid(
    a: Waypoint2,
    b: Waypoint2,
    hazards: &[Hazard],
    g: &GeometryConfig,
    depth: u32,
    out: &mut Vec<Waypoint2>,
    blocked: &mut bool,
) {
    let blocker = hazards
        .iter()
        .filter_map(|h| blocking_entry(h, a, b, g).map(|t| (t, h)))
        .min_by(|(t1, _), (t2, _)| t1.partial_cmp(t2).unwrap());
    let Some((_, h)) = blocker else {
        out.push(b);
        return;
    };
    // dest inside some inflated footprint is unavoidable
    let dest_inside = hazards
        .iter()
        .any(|hh| b.dist(Waypoint2::new(hh.cx, hh.cy)) <= hh.inflated_radius(g));
    if depth == 0 || dest_inside {
        *blocked = true;
        out.push(b);
        return;
    }
    // two detour points at the ±45° positions around the disc, on the
    // side away from the centre, far enough out that the chord between
    // them stays clear of the inflated radius
    let r_inner = h.inflated_radius(g);
    let r_det = (r_inner * 1.5).max(r_inner + g.inflate);
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len = (dx * dx + dy * dy).sqrt();
    let (ux, uy) = (dx / len, dy / len);
    // side away from the centre: sign of the cross product of the
    // direction with (centre − a); ties detour to the left
    let cross = ux * (h.cy - a.y) - uy * (h.cx - a.x);
    let s = if cross > 0.0 { -1.0 } else { 1.0 };
    let (nx, ny) = (-uy * s, ux * s);
    let mk = |along: f64| {
        let (vx, vy) = (nx + along * ux, ny + along * uy);
        let vlen = (vx * vx + vy * vy).sqrt();
        Waypoint2::new(h.cx + r_det * vx / vlen, h.cy + r_det * vy / vlen)
    };
    let w1 = mk(-1.0);
    let w2 = mk(1.0);
    avoid(a, w1, hazards, g, depth - 1, out, blocked);
    avoid(w1, w2, hazards, g, depth - 1, out, blocked);
    avoid(w2, b, hazards, g, depth - 1, out, blocked);
}

/// Hazards whose inflated footprint the straight 2-D segment from `a`
/// to `b` crosses, including those containing an endpoint.
fn crossed_hazards<'a>(
    a: Waypoint2,
    b: Waypoint2,
    hazards: &'a [Hazard],
    g: &GeometryConfig,
) -> impl Iterator<Item = &'a Hazard> {
    let g = *g;
    hazards
        .iter()
        .filter(move |h| min_dist_to_segment((h.cx, h.cy), a, b) < h.inflated_radius(&g))
}

/// Drone trajectory: climb above the current position, fly laterally at
/// cruise altitude, and hover at the separation-offset target.
///
/// The hover target is the centroid of the controller and responder
/// positions, pushed `lateral_sign`-ward perpendicular to the approach.
/// Cruise altitude clears every hazard the straight 2-D route crosses.
#[allow(clippy::too_many_arguments)]
pub fn calc_cent_avoid_traj(
    current: Waypoint3,
    controller: Waypoint2,
    responders: &[Waypoint2],
    other_drone: Waypoint3,
    hazards: &[Hazard],
    g: &GeometryConfig,
    lateral_sign: f64,
) -> Plan3 {
    assert!(!responders.is_empty(), "responder positions must be non-empty");
    let n = responders.len() as f64 + 1.0;
    let tx = (controller.x + responders.iter().map(|r| r.x).sum::<f64>()) / n;
    let ty = (controller.y + responders.iter().map(|r| r.y).sum::<f64>()) / n;
    let target = Waypoint2::new(tx, ty);

    let cur2 = Waypoint2::new(current.x, current.y);
    let (ax, ay) = (target.x - cur2.x, target.y - cur2.y);
    let alen = (ax * ax + ay * ay).sqrt();
    let (px, py) = if alen > 0.0 {
        (-ay / alen, ax / alen)
    } else {
        (1.0, 0.0)
    };
    let shortfall = (g.sep_min
        - target.dist(Waypoint2::new(other_drone.x, other_drone.y)))
    .max(0.0);
    // half the separation floor plus 4% slack keeps the two opposite-sign
    // hover points strictly sep_min apart
    let offset = (g.sep_min * 0.52).max(shortfall);
    // a drone already on the offset ring around the target is where it
    // should be; replanning from the hover point must be a fixed point
    let final2 = if cur2.dist(target) <= offset + 1e-9 {
        cur2
    } else {
        Waypoint2::new(
            target.x + lateral_sign * offset * px,
            target.y + lateral_sign * offset * py,
        )
    };

    let max_height = crossed_hazards(cur2, final2, hazards, g)
        .map(|h| h.height)
        .fold(0.0f64, f64::max);
    let z = g.clearance + max_height;

    let lateral = calc_traj(cur2, final2, hazards, g);
    let mut waypoints = Vec::new();
    waypoints.push(Waypoint3 {
        x: cur2.x,
        y: cur2.y,
        z,
    });
    for w in &lateral.waypoints {
        waypoints.push(Waypoint3 { x: w.x, y: w.y, z });
    }
    waypoints.push(Waypoint3 {
        x: final2.x,
        y: final2.y,
        z,
    });
    waypoints.dedup_by(|a, b| a == b);
    if waypoints.first() == Some(&current) {
        waypoints.remove(0);
    }
    Plan3 {
        waypoints,
        blocked: lateral.blocked,
    }
}

// ---------------------------------------------------------------------
// expression-level bindings

fn num(v: &Value, what: &'static str) -> Result<f64, EvalError> {
    v.as_f64().ok_or_else(|| EvalError::Type {
        context: what.to_string(),
        expected: "number",
        got: v.kind_name().to_string(),
    })
}

fn point2(v: &Value, what: &'static str) -> Result<Waypoint2, EvalError> {
    let flat = v.flatten();
    if flat.len() != 2 {
        return Err(EvalError::Type {
            context: what.to_string(),
            expected: "pair (x ↦ y)",
            got: v.kind_name().to_string(),
        });
    }
    Ok(Waypoint2::new(num(flat[0], what)?, num(flat[1], what)?))
}

fn point3(v: &Value, what: &'static str) -> Result<Waypoint3, EvalError> {
    let flat = v.flatten();
    if flat.len() != 3 {
        return Err(EvalError::Type {
            context: what.to_string(),
            expected: "triple (x ↦ y ↦ z)",
            got: v.kind_name().to_string(),
        });
    }
    Ok(Waypoint3 {
        x: num(flat[0], what)?,
        y: num(flat[1], what)?,
        z: num(flat[2], what)?,
    })
}

/// Decode the runtime hazard set: `{(tag ↦ x ↦ y ↦ size ↦ height), …}`.
pub fn hazards_from_value(v: &Value) -> Result<Vec<Hazard>, EvalError> {
    let Value::Set(items) = v else {
        return Err(EvalError::Type {
            context: "hazards".into(),
            expected: "set",
            got: v.kind_name().to_string(),
        });
    };
    let mut out = Vec::new();
    for item in items {
        let flat = item.flatten();
        if flat.len() != 5 {
            return Err(EvalError::Type {
                context: "hazard tuple".into(),
                expected: "(tag ↦ x ↦ y ↦ size ↦ height)",
                got: item.kind_name().to_string(),
            });
        }
        let tag = match flat[0] {
            Value::Enum { lit, .. } if lit == "SQ" => HazardTag::Square,
            Value::Enum { lit, .. } if lit == "CYL" => HazardTag::Cylinder,
            other => {
                return Err(EvalError::Type {
                    context: "hazard tag".into(),
                    expected: "SQ or CYL",
                    got: other.to_string(),
                })
            }
        };
        out.push(Hazard {
            tag,
            cx: num(flat[1], "hazard x")?,
            cy: num(flat[2], "hazard y")?,
            size: num(flat[3], "hazard size")?,
            height: num(flat[4], "hazard height")?,
        });
    }
    Ok(out)
}

fn w2_value(w: Waypoint2) -> Value {
    Value::tuple(vec![Value::Real(w.x), Value::Real(w.y)])
}

fn w3_value(w: Waypoint3) -> Value {
    Value::tuple(vec![Value::Real(w.x), Value::Real(w.y), Value::Real(w.z)])
}

/// Register `calcTraj` and `calcCentAvoidTraj` with a fixed geometry
/// configuration.
pub fn register(b: &mut Builtins, g: GeometryConfig) {
    b.register("calcTraj", Some(3), move |args: &[Value]| -> EvalResult {
        let current = point2(&args[0], "calcTraj current")?;
        let dest = point2(&args[1], "calcTraj dest")?;
        let hazards = hazards_from_value(&args[2])?;
        let plan = calc_traj(current, dest, &hazards, &g);
        Ok(Value::Seq(plan.waypoints.into_iter().map(w2_value).collect()))
    });
    b.register(
        "calcCentAvoidTraj",
        Some(6),
        move |args: &[Value]| -> EvalResult {
            let current = point3(&args[0], "calcCentAvoidTraj current")?;
            let controller = point2(&args[1], "calcCentAvoidTraj controller")?;
            let resps = match &args[2] {
                Value::Seq(items) => items
                    .iter()
                    .map(|v| point2(v, "calcCentAvoidTraj responders"))
                    .collect::<Result<Vec<_>, _>>()?,
                other => {
                    return Err(EvalError::Type {
                        context: "calcCentAvoidTraj responders".into(),
                        expected: "sequence of pairs",
                        got: other.kind_name().to_string(),
                    })
                }
            };
            if resps.is_empty() {
                return Err(EvalError::Unsupported(
                    "calcCentAvoidTraj needs at least one responder position".into(),
                ));
            }
            let other = point3(&args[3], "calcCentAvoidTraj other drone")?;
            let hazards = hazards_from_value(&args[4])?;
            let sign = num(&args[5], "calcCentAvoidTraj lateral sign")?;
            let plan = calc_cent_avoid_traj(current, controller, &resps, other, &hazards, &g, sign);
            Ok(Value::Seq(plan.waypoints.into_iter().map(w3_value).collect()))
        },
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> GeometryConfig {
        GeometryConfig::default()
    }

    #[test]
    fn direct_path_without_hazards() {
        let p = calc_traj(
            Waypoint2::new(0.0, 0.0),
            Waypoint2::new(12.3, 15.0),
            &[],
            &cfg(),
        );
        assert_eq!(p.waypoints, vec![Waypoint2::new(12.3, 15.0)]);
        assert!(!p.blocked);
    }

    #[test]
    fn same_point_yields_empty_path() {
        let p = calc_traj(Waypoint2::new(1.0, 2.0), Waypoint2::new(1.0, 2.0), &[], &cfg());
        assert!(p.waypoints.is_empty());
    }

    #[test]
    fn midpoint_cylinder_inserts_two_waypoints_with_clearance() {
        let h = Hazard {
            tag: HazardTag::Cylinder,
            cx: 5.0,
            cy: 0.0,
            size: 1.0,
            height: 3.0,
        };
        let a = Waypoint2::new(0.0, 0.0);
        let b = Waypoint2::new(10.0, 0.0);
        let p = calc_traj(a, b, &[h], &cfg());
        assert!(!p.blocked);
        assert_eq!(p.waypoints.len(), 3, "2 detour points + destination: {:?}", p.waypoints);
        assert_eq!(*p.waypoints.last().unwrap(), b);
        // sample every segment: all points strictly outside the inflated disc
        let r_infl = h.inflated_radius(&cfg());
        let mut prev = a;
        for w in &p.waypoints {
            for k in 0..=1000 {
                let t = k as f64 / 1000.0;
                let (x, y) = (prev.x + t * (w.x - prev.x), prev.y + t * (w.y - prev.y));
                let d = ((x - h.cx).powi(2) + (y - h.cy).powi(2)).sqrt();
                assert!(
                    d > r_infl,
                    "sample ({x:.3},{y:.3}) inside inflated radius {r_infl:.3} (d={d:.3})"
                );
            }
            prev = *w;
        }
    }

    #[test]
    fn centroid_of_controller_and_appendix_destinations() {
        let resps = [
            Waypoint2::new(12.3, 15.0),
            Waypoint2::new(-11.2, 14.0),
            Waypoint2::new(2.1, 29.0),
        ];
        let plan = calc_cent_avoid_traj(
            Waypoint3 { x: 0.0, y: 0.0, z: 0.0 },
            Waypoint2::new(0.0, 0.0),
            &resps,
            Waypoint3 { x: 0.0, y: 0.0, z: 0.0 },
            &[],
            &cfg(),
            1.0,
        );
        // centroid (0.8, 14.5), hover point offset perpendicular to it
        let last = *plan.waypoints.last().unwrap();
        let off = cfg().sep_min * 0.52;
        let d = ((last.x - 0.8).powi(2) + (last.y - 14.5).powi(2)).sqrt();
        assert!((d - off).abs() < 1e-9, "offset distance {d} vs {off}");
        assert!((last.z - cfg().clearance).abs() < 1e-12);
    }

    #[test]
    fn already_at_target_yields_empty_path() {
        let resps = [Waypoint2::new(0.0, 0.0)];
        let g = cfg();
        // compute where a fresh plan would hover, then plan again from there
        let first = calc_cent_avoid_traj(
            Waypoint3 { x: 3.0, y: 4.0, z: g.clearance },
            Waypoint2::new(0.0, 0.0),
            &resps,
            Waypoint3 { x: -3.0, y: -4.0, z: g.clearance },
            &[],
            &g,
            1.0,
        );
        let hover = *first.waypoints.last().unwrap();
        let again = calc_cent_avoid_traj(
            hover,
            Waypoint2::new(0.0, 0.0),
            &resps,
            Waypoint3 { x: -3.0, y: -4.0, z: g.clearance },
            &[],
            &g,
            1.0,
        );
        assert!(again.waypoints.is_empty(), "{:?}", again.waypoints);
    }

    #[test]
    fn cruise_altitude_clears_crossed_hazard() {
        // a cylinder of height 3 under the route with clearance 2 → z = 5.
        // the hover target is the centroid of controller and responder,
        // pushed sideways; place the hazard on that actual straight route
        let g = cfg();
        let resp = Waypoint2::new(0.8, 14.5);
        let target = Waypoint2::new(0.4, 7.25);
        let alen = (target.x * target.x + target.y * target.y).sqrt();
        let (px, py) = (-target.y / alen, target.x / alen);
        let off = g.sep_min * 0.52;
        let final2 = Waypoint2::new(target.x + off * px, target.y + off * py);
        let mid = Waypoint2::new(final2.x / 2.0, final2.y / 2.0);
        let h = Hazard {
            tag: HazardTag::Cylinder,
            cx: mid.x,
            cy: mid.y,
            size: 1.0,
            height: 3.0,
        };
        let plan = calc_cent_avoid_traj(
            Waypoint3 { x: 0.0, y: 0.0, z: 0.0 },
            Waypoint2::new(0.0, 0.0),
            &[resp],
            Waypoint3 { x: 10.0, y: 0.0, z: 0.0 },
            &[h],
            &g,
            1.0,
        );
        for w in &plan.waypoints {
            assert!((w.z - 5.0).abs() < 1e-12, "{:?}", plan.waypoints);
        }
    }

    #[test]
    fn opposite_signs_keep_separation() {
        let resps = [
            Waypoint2::new(12.3, 15.0),
            Waypoint2::new(-11.2, 14.0),
            Waypoint2::new(2.1, 29.0),
        ];
        let origin = Waypoint3 { x: 0.0, y: 0.0, z: 0.0 };
        let g = cfg();
        let p1 = calc_cent_avoid_traj(origin, Waypoint2::new(0.0, 0.0), &resps, origin, &[], &g, 1.0);
        let p2 = calc_cent_avoid_traj(origin, Waypoint2::new(0.0, 0.0), &resps, origin, &[], &g, -1.0);
        let (a, b) = (*p1.waypoints.last().unwrap(), *p2.waypoints.last().unwrap());
        let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
        assert!(d >= g.sep_min, "hover separation {d} < {}", g.sep_min);
    }

    #[test]
    fn planner_is_pure() {
        let h = Hazard {
            tag: HazardTag::Square,
            cx: -4.0,
            cy: 10.0,
            size: 2.0,
            height: 4.0,
        };
        let a = Waypoint2::new(-11.2, 14.0);
        let b = Waypoint2::new(0.0, 0.0);
        let p1 = calc_traj(a, b, &[h], &cfg());
        let p2 = calc_traj(a, b, &[h], &cfg());
        assert_eq!(p1, p2);
    }
}
