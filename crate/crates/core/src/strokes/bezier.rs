use super::StrokeParams;

type Vec2 = [f64; 2];

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Quadratic Bezier curve in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadBezier {
    pub p0: Vec2,
    pub p1: Vec2,
    pub p2: Vec2,
}

/// Closest point on a curve to a query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nearest {
    pub t: f64,
    pub distance: f64,
    /// `curve(t) - query`
    pub offset: Vec2,
}

impl QuadBezier {
    pub fn point(&self, t: f64) -> Vec2 {
        let s = 1.0 - t;
        let (w0, w1, w2) = (s * s, 2.0 * s * t, t * t);
        [
            w0 * self.p0[0] + w1 * self.p1[0] + w2 * self.p2[0],
            w0 * self.p0[1] + w1 * self.p1[1] + w2 * self.p2[1],
        ]
    }

    /// Axis-aligned bounds of the control polygon, which contains the curve.
    pub fn bounds(&self) -> [f64; 4] {
        let xs = [self.p0[0], self.p1[0], self.p2[0]];
        let ys = [self.p0[1], self.p1[1], self.p2[1]];
        [
            xs.iter().copied().fold(f64::INFINITY, f64::min),
            ys.iter().copied().fold(f64::INFINITY, f64::min),
            xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ]
    }

    fn nearest_at(&self, query: Vec2, t: f64) -> Nearest {
        let offset = sub(self.point(t), query);
        Nearest {
            t,
            distance: dot(offset, offset).sqrt(),
            offset,
        }
    }

    /// Exact nearest point by solving the cubic stationarity condition.
    ///
    /// With `A = p1 - p0`, `B = p2 - 2 p1 + p0` and `m = p0 - q`, stationary
    /// points of the squared distance are the roots in `[0, 1]` of
    /// `|B|^2 t^3 + 3 (A.B) t^2 + (2 |A|^2 + m.B) t + m.A`. The cubic is split
    /// into monotone pieces at the roots of its derivative and each bracketed
    /// root is refined with safeguarded Newton steps.
    pub fn nearest(&self, query: Vec2) -> Nearest {
        let a_vec = sub(self.p1, self.p0);
        let b_vec = [
            self.p2[0] - 2.0 * self.p1[0] + self.p0[0],
            self.p2[1] - 2.0 * self.p1[1] + self.p0[1],
        ];
        let m = sub(self.p0, query);
        let coeffs = [
            dot(b_vec, b_vec),
            3.0 * dot(a_vec, b_vec),
            2.0 * dot(a_vec, a_vec) + dot(m, b_vec),
            dot(m, a_vec),
        ];

        let mut best = self.nearest_at(query, 0.0);
        let end = self.nearest_at(query, 1.0);
        if end.distance < best.distance {
            best = end;
        }

        let mut breaks = [0.0; 4];
        let mut n_breaks = 1;
        for r in quadratic_roots(3.0 * coeffs[0], 2.0 * coeffs[1], coeffs[2]) {
            if r > 0.0 && r < 1.0 {
                breaks[n_breaks] = r;
                n_breaks += 1;
            }
        }
        breaks[n_breaks] = 1.0;
        n_breaks += 1;
        breaks[..n_breaks].sort_by(f64::total_cmp);

        for w in breaks[..n_breaks].windows(2) {
            if let Some(t) = bracketed_root(&coeffs, w[0], w[1]) {
                let cand = self.nearest_at(query, t);
                if cand.distance < best.distance {
                    best = cand;
                }
            }
        }
        best
    }
}

fn cubic(c: &[f64; 4], t: f64) -> f64 {
    ((c[0] * t + c[1]) * t + c[2]) * t + c[3]
}

fn cubic_slope(c: &[f64; 4], t: f64) -> f64 {
    (3.0 * c[0] * t + 2.0 * c[1]) * t + c[2]
}

/// Real roots of `a t^2 + b t + c`, tolerant of a vanishing leading term.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        if b.abs() <= 1e-14 * scale {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

/// Root of a cubic on a monotone interval, if the endpoints bracket one.
fn bracketed_root(c: &[f64; 4], mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut f_lo = cubic(c, lo);
    let f_hi = cubic(c, hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return None;
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..100 {
        let f = cubic(c, t);
        if f == 0.0 {
            return Some(t);
        }
        if f.signum() == f_lo.signum() {
            lo = t;
            f_lo = f;
        } else {
            hi = t;
        }
        let slope = cubic_slope(c, t);
        let newton = t - f / slope;
        let next = if slope != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() <= 1e-15 || hi - lo <= 1e-15 {
            return Some(next);
        }
        t = next;
    }
    Some(t)
}

/// Control points of a stroke in pixel coordinates.
///
/// In the stroke frame `p0 = (0, 0)`, `p1 = (L/2, B)`, `p2 = (L, 0)` with
/// `L = length * diagonal` and `B = bend * diagonal`. The frame is rotated by
/// the orientation and translated so `p0` sits at `(x * width, y * height)`.
pub fn stroke_geometry(s: &StrokeParams, width: usize, height: usize) -> QuadBezier {
    let (w, h) = (width as f64, height as f64);
    let diag = w.hypot(h);
    let (sin, cos) = s.orientation.sin_cos();
    let origin = [s.x * w, s.y * h];
    let place = |lx: f64, ly: f64| [origin[0] + cos * lx - sin * ly, origin[1] + sin * lx + cos * ly];
    let len = s.length * diag;
    let bend = s.bend * diag;
    QuadBezier {
        p0: origin,
        p1: place(0.5 * len, bend),
        p2: place(len, 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn stroke(orientation: f64, bend: f64) -> StrokeParams {
        StrokeParams {
            x: 0.5,
            y: 0.5,
            orientation,
            length: 0.2,
            bend,
            thickness: 0.01,
            color: [0.0; 3],
            opacity: 1.0,
        }
    }

    #[test]
    fn straight_stroke_has_midpoint_control() {
        let q = stroke_geometry(&stroke(0.7, 0.0), 120, 80);
        let mid = [(q.p0[0] + q.p2[0]) / 2.0, (q.p0[1] + q.p2[1]) / 2.0];
        assert!((q.p1[0] - mid[0]).abs() < 1e-12);
        assert!((q.p1[1] - mid[1]).abs() < 1e-12);
    }

    #[test]
    fn horizontal_stroke_endpoint() {
        let q = stroke_geometry(&stroke(0.0, 0.0), 100, 100);
        let diag = (100.0f64 * 100.0 + 100.0 * 100.0).sqrt();
        assert_eq!(q.p0, [50.0, 50.0]);
        assert!((q.p2[0] - (50.0 + 0.2 * diag)).abs() < 1e-12);
        assert!((q.p2[1] - 50.0).abs() < 1e-12);
        // 0.2 * 141.42... = 28.2842...
        assert!((q.p2[0] - 78.284_271_247_461_9).abs() < 1e-9);
    }

    #[test]
    fn half_turn_reflects_through_start() {
        let a = stroke_geometry(&stroke(0.3, 0.1), 64, 48);
        let b = stroke_geometry(&stroke(0.3 + PI, 0.1), 64, 48);
        for k in 0..2 {
            assert!(((a.p2[k] - a.p0[k]) + (b.p2[k] - b.p0[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_matches_dense_search() {
        let curves = [
            QuadBezier {
                p0: [2.0, 3.0],
                p1: [10.0, 20.0],
                p2: [25.0, 4.0],
            },
            QuadBezier {
                p0: [0.0, 0.0],
                p1: [5.0, 0.0],
                p2: [10.0, 0.0],
            },
            QuadBezier {
                p0: [5.0, 5.0],
                p1: [30.0, 5.0],
                p2: [5.0, 6.0],
            },
        ];
        for curve in curves {
            for qx in 0..12 {
                for qy in 0..12 {
                    let q = [qx as f64 * 2.5 - 1.0, qy as f64 * 2.1 - 0.7];
                    let exact = curve.nearest(q);
                    let brute = (0..=20_000)
                        .map(|k| {
                            let p = curve.point(k as f64 / 20_000.0);
                            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
                        })
                        .fold(f64::INFINITY, f64::min);
                    assert!(exact.distance <= brute + 1e-12);
                    assert!(brute - exact.distance < 1e-4, "{curve:?} {q:?}");
                }
            }
        }
    }

    #[test]
    fn nearest_on_curve_is_zero() {
        let c = QuadBezier {
            p0: [1.0, 1.0],
            p1: [4.0, 9.0],
            p2: [9.0, 2.0],
        };
        let p = c.point(0.37);
        assert!(c.nearest(p).distance < 1e-9);
    }
}
