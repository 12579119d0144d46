//! Captured demand under the multinomial logit model.
//!
//! `f(S) = sum_n q_n * A_n(S) / (U_n + A_n(S))` with `A_n(S) = sum_{i in S} V_ni`.
//! The zones are split into disjoint groups and the per-group part
//! `Psi_l(S) = sum_{n in D_l} q_n - q_n U_n / (U_n + A_n(S))` is what the
//! cutting-plane methods approximate. Every sum runs over zones in ascending
//! index order.

use crate::instance::Instance;

/// Binary location vector; entry `i` is location `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Selection(Vec<bool>);

impl Selection {
    pub fn empty(m: usize) -> Self {
        Selection(vec![false; m])
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        Selection(bits)
    }

    /// Builds a selection from 1-based location indices.
    pub fn from_locations(m: usize, locs: &[usize]) -> Self {
        let mut s = Selection::empty(m);
        for &i in locs {
            assert!((1..=m).contains(&i), "location {i} outside 1..={m}");
            s.0[i - 1] = true;
        }
        s
    }

    /// Bit `i - 1` of `mask` marks location `i`.
    pub fn from_mask(m: usize, mask: u64) -> Self {
        Selection((0..m).map(|i| mask >> i & 1 == 1).collect())
    }

    pub fn to_mask(&self) -> u64 {
        assert!(self.0.len() <= 64);
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| if b { acc | 1 << i } else { acc })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Whether location `i` (1-based) is selected.
    pub fn contains(&self, i: usize) -> bool {
        self.0[i - 1]
    }

    pub fn set(&mut self, i: usize, on: bool) {
        self.0[i - 1] = on;
    }

    /// Selected locations, 1-based, ascending.
    pub fn locations(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i + 1))
            .collect()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Disjoint zone groups covering every zone.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
}

impl GroupPartition {
    /// Wraps explicit groups, checking disjointness and coverage of `0..n_zones`.
    pub fn from_groups(groups: Vec<Vec<usize>>, n_zones: usize) -> Option<Self> {
        let mut seen = vec![false; n_zones];
        for g in &groups {
            if g.is_empty() {
                return None;
            }
            for &n in g {
                if n >= n_zones || seen[n] {
                    return None;
                }
                seen[n] = true;
            }
        }
        seen.iter().all(|&s| s).then_some(GroupPartition { groups })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, l: usize) -> &[usize] {
        &self.groups[l]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

/// Contiguous blocks of near-equal size; `L` is clipped to the zone count.
pub fn partition_zones(inst: &Instance, l: usize) -> GroupPartition {
    let n = inst.n_zones();
    let l = l.max(1).min(n.max(1));
    let groups = (0..l)
        .map(|k| (k * n / l..(k + 1) * n / l).collect::<Vec<_>>())
        .filter(|g| !g.is_empty())
        .collect();
    GroupPartition { groups }
}

#[inline]
fn attraction(inst: &Instance, zone: usize, x: &[f64]) -> f64 {
    inst.zones[zone].v.iter().zip(x).map(|(v, xi)| v * xi).sum()
}

fn attraction_set(inst: &Instance, zone: usize, x: &Selection) -> f64 {
    inst.zones[zone]
        .v
        .iter()
        .zip(x.bits())
        .filter(|(_, &b)| b)
        .map(|(v, _)| v)
        .sum()
}

/// Captured demand `f(x)`.
pub fn eval_objective(inst: &Instance, x: &Selection) -> f64 {
    assert_eq!(x.len(), inst.m);
    inst.zones
        .iter()
        .enumerate()
        .map(|(n, z)| {
            let a = attraction_set(inst, n, x);
            z.q * a / (z.u_comp + a)
        })
        .sum()
}

/// `Psi_l` at a binary point.
pub fn eval_group(inst: &Instance, part: &GroupPartition, l: usize, x: &Selection) -> f64 {
    part.group(l)
        .iter()
        .map(|&n| {
            let z = &inst.zones[n];
            z.q - z.q * z.u_comp / (z.u_comp + attraction_set(inst, n, x))
        })
        .sum()
}

/// `Psi_l` anywhere in the box `[0, 1]^m`.
pub fn eval_group_relaxed(inst: &Instance, part: &GroupPartition, l: usize, x: &[f64]) -> f64 {
    part.group(l)
        .iter()
        .map(|&n| {
            let z = &inst.zones[n];
            z.q - z.q * z.u_comp / (z.u_comp + attraction(inst, n, x))
        })
        .sum()
}

/// Gradient of `Psi_l` at a point of the box.
pub fn group_gradient(inst: &Instance, part: &GroupPartition, l: usize, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; inst.m];
    for &n in part.group(l) {
        let z = &inst.zones[n];
        let d = z.u_comp + attraction(inst, n, x);
        let scale = z.q * z.u_comp / (d * d);
        for (gi, v) in g.iter_mut().zip(&z.v) {
            *gi += scale * v;
        }
    }
    g
}

/// `rho_lk(S) = Psi_l(S + k) - Psi_l(S)` in closed form; zero if `k` is in `S`.
pub fn marginal_gain(inst: &Instance, part: &GroupPartition, l: usize, k: usize, s: &Selection) -> f64 {
    if s.contains(k) {
        return 0.0;
    }
    part.group(l)
        .iter()
        .map(|&n| {
            let z = &inst.zones[n];
            let d = z.u_comp + attraction_set(inst, n, s);
            let vk = z.v[k - 1];
            z.q * z.u_comp * vk / (d * (d + vk))
        })
        .sum()
}

/// Coefficients of the first-order expansion of `f` around a set `S0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorCoefficients {
    pub anchor: Selection,
    pub base_value: f64,
    pub coeffs: Vec<f64>,
}

impl TaylorCoefficients {
    /// `f_hat(S) = f(S0) + sum_i F_i (x^S_i - x^S0_i)`.
    pub fn estimate(&self, s: &Selection) -> f64 {
        let delta: f64 = self
            .coeffs
            .iter()
            .zip(s.bits().iter().zip(self.anchor.bits()))
            .map(|(f, (&a, &b))| match (a, b) {
                (true, false) => *f,
                (false, true) => -*f,
                _ => 0.0,
            })
            .sum();
        self.base_value + delta
    }
}

pub fn taylor_coefficients(inst: &Instance, s0: &Selection) -> TaylorCoefficients {
    let mut coeffs = vec![0.0; inst.m];
    for (n, z) in inst.zones.iter().enumerate() {
        let d = z.u_comp + attraction_set(inst, n, s0);
        let scale = z.q * z.u_comp / (d * d);
        for (c, v) in coeffs.iter_mut().zip(&z.v) {
            *c += scale * v;
        }
    }
    TaylorCoefficients { anchor: s0.clone(), base_value: eval_objective(inst, s0), coeffs }
}

pub fn taylor_estimate(tc: &TaylorCoefficients, s: &Selection) -> f64 {
    tc.estimate(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_instance, t1};
    use proptest::prelude::*;

    fn sel(m: usize, locs: &[usize]) -> Selection {
        Selection::from_locations(m, locs)
    }

    #[test]
    fn t1_objective_values() {
        let inst = t1();
        assert_eq!(eval_objective(&inst, &sel(2, &[])), 0.0);
        assert!((eval_objective(&inst, &sel(2, &[1])) - 0.5).abs() < 1e-15);
        assert!((eval_objective(&inst, &sel(2, &[1, 2])) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn partition_examples() {
        let mut inst = random_instance(3, 4, 1);
        assert_eq!(partition_zones(&inst, 2).groups(), &[vec![0, 1], vec![2, 3]]);
        inst.zones.push(inst.zones[0].clone());
        assert_eq!(partition_zones(&inst, 2).groups(), &[vec![0, 1], vec![2, 3, 4]]);
        let inst = random_instance(3, 3, 1);
        assert_eq!(partition_zones(&inst, 20).groups(), &[vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn explicit_partition_checks() {
        assert!(GroupPartition::from_groups(vec![vec![0], vec![1]], 2).is_some());
        assert!(GroupPartition::from_groups(vec![vec![0], vec![0, 1]], 2).is_none());
        assert!(GroupPartition::from_groups(vec![vec![0]], 2).is_none());
        assert!(GroupPartition::from_groups(vec![vec![0, 1], vec![]], 2).is_none());
    }

    #[test]
    fn group_values() {
        let inst = t1();
        let part = partition_zones(&inst, 1);
        assert!((eval_group(&inst, &part, 0, &sel(2, &[1, 2])) - 0.8).abs() < 1e-15);
        let inst = random_instance(4, 2, 3);
        let part = partition_zones(&inst, 2);
        assert_eq!(part.len(), 2);
        let x = sel(4, &[1, 3]);
        let sum: f64 = (0..2).map(|l| eval_group(&inst, &part, l, &x)).sum();
        assert!((sum - eval_objective(&inst, &x)).abs() < 1e-12);
        for l in 0..2 {
            assert_eq!(eval_group(&inst, &part, l, &Selection::empty(4)), 0.0);
        }
    }

    #[test]
    fn t1_gradients() {
        let inst = t1();
        let part = partition_zones(&inst, 1);
        assert_eq!(group_gradient(&inst, &part, 0, &[0.0, 0.0]), vec![1.0, 3.0]);
        assert_eq!(group_gradient(&inst, &part, 0, &[1.0, 0.0]), vec![0.25, 0.75]);
    }

    #[test]
    fn t1_marginal_gains() {
        let inst = t1();
        let part = partition_zones(&inst, 1);
        let at_empty = marginal_gain(&inst, &part, 0, 2, &sel(2, &[]));
        let at_one = marginal_gain(&inst, &part, 0, 2, &sel(2, &[1]));
        assert!((at_empty - 0.75).abs() < 1e-15);
        assert!((at_one - 0.3).abs() < 1e-15);
        assert!(at_empty >= at_one);
        assert_eq!(marginal_gain(&inst, &part, 0, 1, &sel(2, &[1])), 0.0);
    }

    #[test]
    fn t1_taylor() {
        let inst = t1();
        let tc = taylor_coefficients(&inst, &sel(2, &[]));
        assert_eq!(tc.coeffs, vec![1.0, 3.0]);
        assert_eq!(taylor_estimate(&tc, &sel(2, &[])), 0.0);
        assert_eq!(taylor_estimate(&tc, &sel(2, &[1])), 1.0);
        assert_eq!(taylor_estimate(&tc, &sel(2, &[1, 2])), 4.0);
        let tc1 = taylor_coefficients(&inst, &sel(2, &[1]));
        assert_eq!(tc1.coeffs, vec![0.25, 0.75]);
        assert_eq!(taylor_estimate(&tc1, &sel(2, &[1])), tc1.base_value);
    }

    #[test]
    fn monotone_and_submodular_exhaustive() {
        for seed in 0..3 {
            let inst = random_instance(8, 6, seed);
            let part = partition_zones(&inst, 3);
            let m = inst.m;
            let full = (1u64 << m) - 1;
            for s in 0..=full {
                let ss = Selection::from_mask(m, s);
                let fs = eval_objective(&inst, &ss);
                // every superset S' = S + extra
                let rest = full & !s;
                let mut extra = rest;
                loop {
                    let sp = Selection::from_mask(m, s | extra);
                    assert!(fs <= eval_objective(&inst, &sp) + 1e-12);
                    for k in 1..=m {
                        if (s | extra) >> (k - 1) & 1 == 1 {
                            continue;
                        }
                        for l in 0..part.len() {
                            let a = marginal_gain(&inst, &part, l, k, &ss);
                            let b = marginal_gain(&inst, &part, l, k, &sp);
                            assert!(a + 1e-12 >= b && b >= 0.0);
                        }
                    }
                    if extra == 0 {
                        break;
                    }
                    extra = (extra - 1) & rest;
                }
            }
        }
    }

    #[test]
    fn taylor_dominates_exhaustive() {
        let inst = random_instance(9, 12, 11);
        let m = inst.m;
        let f: Vec<f64> = (0..1u64 << m)
            .map(|s| eval_objective(&inst, &Selection::from_mask(m, s)))
            .collect();
        for s0 in 0..1u64 << m {
            let tc = taylor_coefficients(&inst, &Selection::from_mask(m, s0));
            assert!(tc.coeffs.iter().all(|&c| c > 0.0));
            for s in 0..1u64 << m {
                assert!(tc.estimate(&Selection::from_mask(m, s)) >= f[s as usize] - 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn decomposition_sums_to_objective(seed in 0u64..500, mask in 0u64..1024, l in 1usize..8) {
            let inst = random_instance(10, 9, seed);
            let part = partition_zones(&inst, l);
            let x = Selection::from_mask(10, mask);
            let sum: f64 = (0..part.len()).map(|g| eval_group(&inst, &part, g, &x)).sum();
            prop_assert!((sum - eval_objective(&inst, &x)).abs() < 1e-12);
        }

        #[test]
        fn closed_form_gain_matches_difference(seed in 0u64..500, mask in 0u64..256, k in 1usize..=8) {
            let inst = random_instance(8, 7, seed);
            let part = partition_zones(&inst, 3);
            let s = Selection::from_mask(8, mask);
            let mut sk = s.clone();
            sk.set(k, true);
            for l in 0..part.len() {
                let diff = eval_group(&inst, &part, l, &sk) - eval_group(&inst, &part, l, &s);
                prop_assert!((marginal_gain(&inst, &part, l, k, &s) - diff).abs() < 1e-12);
            }
        }

        #[test]
        fn gradient_matches_central_differences(seed in 0u64..200, pts in proptest::collection::vec(0.05f64..0.95, 6)) {
            let inst = random_instance(6, 10, seed);
            let part = partition_zones(&inst, 2);
            let h = 1e-6;
            for l in 0..part.len() {
                let g = group_gradient(&inst, &part, l, &pts);
                for i in 0..6 {
                    let (mut up, mut dn) = (pts.clone(), pts.clone());
                    up[i] += h;
                    dn[i] -= h;
                    let fd = (eval_group_relaxed(&inst, &part, l, &up)
                        - eval_group_relaxed(&inst, &part, l, &dn)) / (2.0 * h);
                    prop_assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs());
                }
            }
        }
    }
}
