//! Small floating-point helpers shared by the solvers.

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// `|v|^q` given the squared norm `s = |v|²`, with fast paths for the
/// exponents used by the bundled scenarios.
#[inline]
pub fn pow_from_squared(s: f64, q: f64) -> f64 {
    if q == 2.0 {
        s
    } else if q == 4.0 {
        s * s
    } else if q == 1.0 {
        s.sqrt()
    } else if s == 0.0 {
        0.0
    } else {
        s.powf(0.5 * q)
    }
}

/// Index of the first minimum; strict comparison keeps the smallest index on ties.
pub fn argmin_first<I: IntoIterator<Item = f64>>(values: I) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            None => best = Some((i, v)),
            Some((_, b)) if v < b => best = Some((i, v)),
            _ => {}
        }
    }
    best
}
