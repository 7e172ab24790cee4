//! Bounded domains G with boundary queries used by exit detection.

use crate::coeffs::{Point, MAX_DIM};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Domain {
    /// Open hyperrectangle (lo_i, hi_i).
    Rect { lo: Vec<f64>, hi: Vec<f64> },
    /// Open ball of given center and radius.
    Ball { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Domain::Rect {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    pub fn unit_interval() -> Self {
        Self::interval(0.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Rect { lo, .. } => lo.len(),
            Domain::Ball { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        match self {
            Domain::Rect { lo, hi } => lo
                .iter()
                .zip(hi.iter())
                .enumerate()
                .all(|(i, (l, h))| x[i] > *l && x[i] < *h),
            Domain::Ball { center, radius } => {
                let mut r2 = 0.0;
                for (i, c) in center.iter().enumerate() {
                    r2 += (x[i] - c) * (x[i] - c);
                }
                r2 < radius * radius
            }
        }
    }

    /// Signed distance proxy: positive inside, <= 0 outside. For rectangles
    /// this is the min face clearance, for balls radius - |x - center|.
    pub fn clearance(&self, x: &Point) -> f64 {
        match self {
            Domain::Rect { lo, hi } => {
                let mut m = f64::INFINITY;
                for (i, (l, h)) in lo.iter().zip(hi.iter()).enumerate() {
                    m = m.min(x[i] - l).min(h - x[i]);
                }
                m
            }
            Domain::Ball { center, radius } => {
                let mut r2 = 0.0;
                for (i, c) in center.iter().enumerate() {
                    r2 += (x[i] - c) * (x[i] - c);
                }
                radius - r2.sqrt()
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Rect { lo, hi } => {
                let mut s = 0.0;
                for (l, h) in lo.iter().zip(hi.iter()) {
                    s += (h - l) * (h - l);
                }
                s.sqrt()
            }
            Domain::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Fraction s in [0,1] of the segment x0 -> x1 at which the boundary is
    /// crossed, assuming x0 inside and x1 outside, plus the crossing point
    /// projected onto the boundary.
    pub fn crossing(&self, x0: &Point, x1: &Point) -> (f64, Point) {
        match self {
            Domain::Rect { lo, hi } => {
                let mut s_min = 1.0f64;
                for (i, (l, h)) in lo.iter().zip(hi.iter()).enumerate() {
                    let dx = x1[i] - x0[i];
                    if dx.abs() < f64::MIN_POSITIVE {
                        continue;
                    }
                    for face in [*l, *h] {
                        let s = (face - x0[i]) / dx;
                        if (0.0..=1.0).contains(&s) {
                            // only count crossings that actually leave the box
                            let leaving = (dx > 0.0 && face == *h) || (dx < 0.0 && face == *l);
                            if leaving {
                                s_min = s_min.min(s);
                            }
                        }
                    }
                }
                let mut p = [0.0; MAX_DIM];
                for i in 0..lo.len() {
                    p[i] = (x0[i] + s_min * (x1[i] - x0[i])).clamp(lo[i], hi[i]);
                }
                (s_min, p)
            }
            Domain::Ball { center, radius } => {
                // |x0 + s (x1-x0) - c|^2 = r^2, smaller root in [0,1]
                let d = center.len();
                let mut aa = 0.0;
                let mut bb = 0.0;
                let mut cc = -radius * radius;
                for i in 0..d {
                    let u = x1[i] - x0[i];
                    let w = x0[i] - center[i];
                    aa += u * u;
                    bb += 2.0 * u * w;
                    cc += w * w;
                }
                let disc = (bb * bb - 4.0 * aa * cc).max(0.0);
                let s = if aa > 0.0 {
                    ((-bb + disc.sqrt()) / (2.0 * aa)).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                let mut p = [0.0; MAX_DIM];
                let mut norm = 0.0;
                for i in 0..d {
                    p[i] = x0[i] + s * (x1[i] - x0[i]) - center[i];
                    norm += p[i] * p[i];
                }
                let norm = norm.sqrt();
                if norm > 0.0 {
                    for q in p.iter_mut().take(d) {
                        *q *= radius / norm;
                    }
                }
                for (i, c) in center.iter().enumerate() {
                    p[i] += c;
                }
                (s, p)
            }
        }
    }

    /// Distance from x to each face of a rectangle, as (axis, lo-face dist,
    /// hi-face dist) triples. Used by the Brownian-bridge exit rule.
    pub fn rect_face_distances(&self, x: &Point) -> Option<Vec<(usize, f64, f64)>> {
        match self {
            Domain::Rect { lo, hi } => Some(
                lo.iter()
                    .zip(hi.iter())
                    .enumerate()
                    .map(|(i, (l, h))| (i, x[i] - l, h - x[i]))
                    .collect(),
            ),
            Domain::Ball { .. } => None,
        }
    }
}
