//! Linear-domain summary of a walk segment, closed under concatenation.
//!
//! A segment of `m` increments started at 0 is summarized by its endpoint,
//! the fractional-linear sums in both orientations (`e^{-S_k}` and
//! `e^{+S_k}`) and its extrema. Concatenation is associative with the empty
//! segment as identity, so the summary of a long path can be assembled from
//! independently simulated pieces.
//!
//! Values are relative to the segment start and kept in linear scale; a
//! segment whose excursion exceeds [`MAX_SPAN`] is rejected at construction.

use rand::Rng;

use crate::env::IncrementLaw;

/// Largest |S_k| allowed inside one segment, well below `ln(f64::MAX) ≈ 709`.
pub const MAX_SPAN: f64 = 300.0;

/// Sums of `e^{σ S_k}` over one orientation `σ = ±1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpSums {
    /// `e^{σ S_m}`
    pub a: f64,
    /// `sum_{k=0}^{m-1} e^{σ S_k}`
    pub b: f64,
    /// `sum_{k=1}^{m} e^{σ S_k}`
    pub c: f64,
}

impl ExpSums {
    const EMPTY: ExpSums = ExpSums { a: 1.0, b: 0.0, c: 0.0 };

    #[inline]
    fn concat(&self, r: &ExpSums) -> ExpSums {
        ExpSums {
            a: self.a * r.a,
            b: self.b + self.a * r.b,
            c: self.c + self.a * r.c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub len: usize,
    /// `S_m`
    pub end: f64,
    /// Terms `e^{-S_k}`: `down.a = a_m`, `down.b = b_m`.
    pub down: ExpSums,
    /// Terms `e^{+S_k}`.
    pub up: ExpSums,
    /// `min_{0≤k≤m} S_k` and its first minimizer.
    pub min: f64,
    pub min_at: usize,
    /// `max_{0≤k≤m} S_k` and its first maximizer.
    pub max: f64,
    pub max_at: usize,
    /// `max_{1≤k≤m} S_k`, `-inf` for the empty segment.
    pub max_tail: f64,
    /// `min_{0≤k≤m-1} S_k`, `+inf` for the empty segment.
    pub min_head: f64,
    /// `max |S_k|`.
    pub span: f64,
}

impl Segment {
    pub const EMPTY: Segment = Segment {
        len: 0,
        end: 0.0,
        down: ExpSums::EMPTY,
        up: ExpSums::EMPTY,
        min: 0.0,
        min_at: 0,
        max: 0.0,
        max_at: 0,
        max_tail: f64::NEG_INFINITY,
        min_head: f64::INFINITY,
        span: 0.0,
    };

    pub fn step(x: f64) -> Segment {
        let e = x.exp();
        let d = 1.0 / e;
        Segment {
            len: 1,
            end: x,
            down: ExpSums { a: d, b: 1.0, c: d },
            up: ExpSums { a: e, b: 1.0, c: e },
            min: x.min(0.0),
            min_at: usize::from(x < 0.0),
            max: x.max(0.0),
            max_at: usize::from(x > 0.0),
            max_tail: x,
            min_head: 0.0,
            span: x.abs(),
        }
    }

    /// Concatenation: `self` first, then `r` shifted to start at `self.end`.
    #[inline]
    pub fn concat(&self, r: &Segment) -> Segment {
        let (min, min_at) = {
            let cand = self.end + r.min;
            if cand < self.min {
                (cand, self.len + r.min_at)
            } else {
                (self.min, self.min_at)
            }
        };
        let (max, max_at) = {
            let cand = self.end + r.max;
            if cand > self.max {
                (cand, self.len + r.max_at)
            } else {
                (self.max, self.max_at)
            }
        };
        let min_head = if r.len == 0 {
            self.min_head
        } else {
            self.min.min(self.end + r.min_head)
        };
        Segment {
            len: self.len + r.len,
            end: self.end + r.end,
            down: self.down.concat(&r.down),
            up: self.up.concat(&r.up),
            min,
            min_at,
            max,
            max_at,
            max_tail: self.max_tail.max(self.end + r.max_tail),
            min_head,
            span: self.span.max((self.end + r.min).abs()).max((self.end + r.max).abs()),
        }
    }

    /// Summary of `increments` computed by a single forward pass.
    pub fn from_increments(increments: &[f64]) -> Segment {
        let mut seg = SegmentBuilder::new();
        for &x in increments {
            seg.push(x);
        }
        seg.finish()
    }

    /// Simulates `m` increments from `law` and summarizes them.
    pub fn simulate<R: Rng + ?Sized>(law: &IncrementLaw, m: usize, rng: &mut R) -> Segment {
        let mut seg = SegmentBuilder::new();
        for _ in 0..m {
            seg.push(law.sample(rng));
        }
        seg.finish()
    }

    pub fn within_range(&self) -> bool {
        self.span <= MAX_SPAN
    }
}

/// Streaming construction of a [`Segment`].
#[derive(Clone, Debug)]
pub struct SegmentBuilder {
    seg: Segment,
}

impl Default for SegmentBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl SegmentBuilder {
    pub fn new() -> Self {
        SegmentBuilder { seg: Segment::EMPTY }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        let g = &mut self.seg;
        let s_prev = g.end;
        let s = s_prev + x;
        let e_up = s.exp();
        let e_dn = 1.0 / e_up;
        g.down.b += g.down.a;
        g.up.b += g.up.a;
        g.down.a = e_dn;
        g.up.a = e_up;
        g.down.c += e_dn;
        g.up.c += e_up;
        g.min_head = g.min_head.min(s_prev);
        g.len += 1;
        g.end = s;
        if s < g.min {
            g.min = s;
            g.min_at = g.len;
        }
        if s > g.max {
            g.max = s;
            g.max_at = g.len;
        }
        g.max_tail = g.max_tail.max(s);
        g.span = g.span.max(s.abs());
    }

    pub fn finish(self) -> Segment {
        self.seg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{path_summary, WalkPath};
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    }

    fn assert_close(x: &Segment, y: &Segment) {
        assert_eq!(x.len, y.len);
        assert_eq!((x.min_at, x.max_at), (y.min_at, y.max_at));
        for (a, b) in [
            (x.end, y.end),
            (x.down.a, y.down.a),
            (x.down.b, y.down.b),
            (x.down.c, y.down.c),
            (x.up.a, y.up.a),
            (x.up.b, y.up.b),
            (x.up.c, y.up.c),
            (x.min, y.min),
            (x.max, y.max),
            (x.max_tail, y.max_tail),
            (x.min_head, y.min_head),
        ] {
            assert!(rel(a, b) < 1e-12 || (a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn matches_direct_definitions() {
        let inc = [0.5, -0.7, 0.2, -0.4, 1.1];
        let g = Segment::from_increments(&inc);
        let p = WalkPath::from_increments(inc.to_vec()).unwrap();
        let s = p.partial_sums();
        let m = inc.len();
        assert!(rel(g.down.b, (0..m).map(|k| (-s[k]).exp()).sum()) < 1e-14);
        assert!(rel(g.down.c, (1..=m).map(|k| (-s[k]).exp()).sum()) < 1e-14);
        assert!(rel(g.up.b, (0..m).map(|k| s[k].exp()).sum()) < 1e-14);
        let ps = path_summary(&p);
        assert_eq!(g.min_at, ps.tau_n);
        assert_eq!(g.min, ps.l_n());
        assert_eq!(g.max_tail, ps.m_n());
        assert_eq!(g.min_head, s[..m].iter().cloned().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn first_extremum_rule_on_ties() {
        let g = Segment::from_increments(&[-1.0, 1.0, -1.0]);
        assert_eq!((g.min, g.min_at), (-1.0, 1));
        let g = Segment::from_increments(&[1.0, -1.0, 1.0]);
        assert_eq!((g.max, g.max_at), (1.0, 1));
        let l = Segment::from_increments(&[-1.0, 1.0]);
        let r = Segment::from_increments(&[-1.0]);
        assert_eq!(l.concat(&r).min_at, 1);
    }

    proptest! {
        #[test]
        fn concat_equals_single_pass(a in proptest::collection::vec(-3.0f64..3.0, 0..30),
                                     b in proptest::collection::vec(-3.0f64..3.0, 0..30),
                                     c in proptest::collection::vec(-3.0f64..3.0, 0..30)) {
            let whole: Vec<f64> = a.iter().chain(&b).chain(&c).cloned().collect();
            let direct = Segment::from_increments(&whole);
            let (sa, sb, sc) = (Segment::from_increments(&a), Segment::from_increments(&b), Segment::from_increments(&c));
            assert_close(&sa.concat(&sb).concat(&sc), &direct);
            assert_close(&sa.concat(&sb.concat(&sc)), &direct);
            assert_close(&Segment::EMPTY.concat(&sa), &sa);
            assert_close(&sa.concat(&Segment::EMPTY), &sa);
        }
    }
}
