//! Mixed-radix layout shared by every multipartite table in the crate.
//!
//! A table over `K` parties stores `P(o_1..o_K | s_1..s_K)` as a flat
//! row-major array: all outcome digits first (party 0 most significant),
//! then all setting digits. Single boxes, N-pair boxes and tripartite
//! extensions are all instances of this layout, so normalization and
//! no-signaling are checked by the same code.

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Layout {
    outcomes: Vec<usize>,
    settings: Vec<usize>,
    outcome_space: usize,
    setting_space: usize,
}

impl Layout {
    pub(crate) fn new(outcomes: Vec<usize>, settings: Vec<usize>) -> Self {
        debug_assert_eq!(outcomes.len(), settings.len());
        let outcome_space = outcomes.iter().product();
        let setting_space = settings.iter().product();
        Self {
            outcomes,
            settings,
            outcome_space,
            setting_space,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.outcome_space * self.setting_space
    }

    pub(crate) fn outcome_space(&self) -> usize {
        self.outcome_space
    }

    pub(crate) fn setting_space(&self) -> usize {
        self.setting_space
    }

    pub(crate) fn parties(&self) -> usize {
        self.outcomes.len()
    }

    #[inline]
    pub(crate) fn index(&self, outcome: usize, setting: usize) -> usize {
        outcome * self.setting_space + setting
    }

    fn stride(radices: &[usize], k: usize) -> usize {
        radices[k + 1..].iter().product()
    }

    fn digit(radices: &[usize], value: usize, k: usize) -> usize {
        (value / Self::stride(radices, k)) % radices[k]
    }

    /// Largest deviation of `Σ_o P(o|s)` from 1 over all setting tuples.
    pub(crate) fn normalization_residual(&self, entries: &[f64]) -> f64 {
        (0..self.setting_space)
            .map(|s| {
                let total: f64 = (0..self.outcome_space)
                    .map(|o| entries[self.index(o, s)])
                    .sum();
                (total - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// For each party `k`, the worst dependence of the marginal of all other
    /// parties on `k`'s setting.
    ///
    /// Requiring these to vanish for every single party is equivalent to
    /// no-signaling between arbitrary subsets.
    pub(crate) fn signaling(&self, entries: &[f64]) -> Vec<PartyResidual> {
        (0..self.parties())
            .map(|k| self.signaling_for_party(entries, k))
            .collect()
    }

    fn signaling_for_party(&self, entries: &[f64], k: usize) -> PartyResidual {
        let o_stride = Self::stride(&self.outcomes, k);
        let s_stride = Self::stride(&self.settings, k);
        let n_out = self.outcomes[k];
        let n_set = self.settings[k];
        let mut worst = PartyResidual {
            party: k,
            residual: 0.0,
            rest_outcome: 0,
            rest_setting: 0,
            setting: 0,
        };
        if n_set < 2 {
            return worst;
        }
        let mut marg = vec![0.0; n_set];
        for o in 0..self.outcome_space {
            if Self::digit(&self.outcomes, o, k) != 0 {
                continue;
            }
            for s in 0..self.setting_space {
                if Self::digit(&self.settings, s, k) != 0 {
                    continue;
                }
                for (sk, slot) in marg.iter_mut().enumerate() {
                    *slot = (0..n_out)
                        .map(|ok| entries[self.index(o + ok * o_stride, s + sk * s_stride)])
                        .sum();
                }
                let (mut lo, mut hi, mut arg_hi) = (f64::INFINITY, f64::NEG_INFINITY, 0);
                for (sk, &v) in marg.iter().enumerate() {
                    lo = lo.min(v);
                    if v > hi {
                        hi = v;
                        arg_hi = sk;
                    }
                }
                if hi - lo > worst.residual {
                    worst.residual = hi - lo;
                    worst.rest_outcome = self.strip_digit(&self.outcomes, o, k);
                    worst.rest_setting = self.strip_digit(&self.settings, s, k);
                    worst.setting = arg_hi;
                }
            }
        }
        worst
    }

    /// Removes digit `k` (known to be zero) from a mixed-radix value.
    fn strip_digit(&self, radices: &[usize], value: usize, k: usize) -> usize {
        let stride = Self::stride(radices, k);
        let high = value / (stride * radices[k]);
        let low = value % stride;
        high * stride + low
    }
}

/// Worst no-signaling violation caused by one party's setting choice.
///
/// `rest_outcome` / `rest_setting` index the joint outcome and setting of the
/// remaining parties (same mixed-radix order with party `party` removed);
/// `setting` is the value of the signaling party's input at which the
/// disturbed marginal peaks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartyResidual {
    pub party: usize,
    pub residual: f64,
    pub rest_outcome: usize,
    pub rest_setting: usize,
    pub setting: usize,
}

/// Result of a no-signaling check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignalingReport {
    pub normalization_residual: f64,
    /// One family per party: dependence of the others' marginal on its input.
    pub families: Vec<PartyResidual>,
    pub max_residual: f64,
    pub worst: Option<PartyResidual>,
    pub tolerance: f64,
    pub pass: bool,
}

impl SignalingReport {
    pub(crate) fn build(layout: &Layout, entries: &[f64], tol: f64) -> Self {
        let families = layout.signaling(entries);
        let worst = families
            .iter()
            .filter(|f| f.residual > 0.0)
            .max_by(|a, b| a.residual.total_cmp(&b.residual))
            .cloned();
        let max_residual = worst.as_ref().map_or(0.0, |w| w.residual);
        Self {
            normalization_residual: layout.normalization_residual(entries),
            families,
            max_residual,
            worst,
            tolerance: tol,
            pass: max_residual <= tol,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_digit_removes_middle_party() {
        let l = Layout::new(vec![2, 3, 2], vec![1, 1, 1]);
        // digits (1, 0, 1) -> value 1*6 + 0*2 + 1 = 7; stripping party 1 gives (1, 1) = 3
        assert_eq!(l.strip_digit(&[2, 3, 2], 7, 1), 3);
        assert_eq!(Layout::digit(&[2, 3, 2], 7, 0), 1);
        assert_eq!(Layout::digit(&[2, 3, 2], 7, 2), 1);
    }

    #[test]
    fn product_table_has_no_signaling() {
        // two parties, two outcomes, three settings each, P(o1,o2|s1,s2) = p1(o1|s1) p2(o2|s2)
        let l = Layout::new(vec![2, 2], vec![3, 3]);
        let p1 = [0.2, 0.5, 0.9];
        let p2 = [0.7, 0.1, 0.4];
        let mut e = vec![0.0; l.len()];
        for o1 in 0..2 {
            for o2 in 0..2 {
                for s1 in 0..3 {
                    for s2 in 0..3 {
                        let a = if o1 == 0 { p1[s1] } else { 1.0 - p1[s1] };
                        let b = if o2 == 0 { p2[s2] } else { 1.0 - p2[s2] };
                        e[l.index(o1 * 2 + o2, s1 * 3 + s2)] = a * b;
                    }
                }
            }
        }
        let r = SignalingReport::build(&l, &e, 1e-12);
        assert!(r.pass, "{r:?}");
        assert!(r.normalization_residual < 1e-15);
    }
}
