//! Small numerical helpers shared across modules.

/// Neumaier compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
    abs: f64,
    terms: u64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
        self.abs += x.abs();
        self.terms += 1;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        let (abs, terms) = (self.abs, self.terms);
        self.add(other.sum);
        self.add(other.comp);
        self.abs = abs + other.abs;
        self.terms = terms + other.terms;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    /// Rigorous-in-practice bound on the accumulated rounding error of the
    /// summation itself (the terms are taken as exact).
    pub fn rounding_bound(&self) -> f64 {
        // Neumaier: 2u|S| + O(n u²) Σ|x|
        let u = f64::EPSILON;
        2.0 * u * self.value().abs() + 4.0 * (self.terms as f64 + 2.0) * u * u * self.abs
    }
}

/// Closed interval `[lo, hi]` used for certified quantities.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi || (lo.is_nan() || hi.is_nan()));
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;


    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        for _ in 0..1000 {
            s.add(1e-17);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-14).abs() < 1e-25);
    }
}
