//! Cut families used by the exact methods.
//!
//! Objective cuts bound one group term from above, `theta_l <= alpha^T x + beta`,
//! and touch `Psi_l` at the binary point that generated them. Routing cuts
//! remove cycle covers that split into sub-tours.

use thiserror::Error;

use crate::instance::Instance;
use crate::objective::{eval_group, group_gradient, marginal_gain, GroupPartition, Selection};

const VALID_TOL: f64 = 1e-9;
const DEDUP_TOL: f64 = 1e-12;
/// Largest `m` accepted by the enumerative validity check.
pub const VALIDITY_GUARD: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum CutError {
    #[error("enumerative validity check needs m <= {VALIDITY_GUARD}, got {0}")]
    TooLarge(usize),
    #[error("malformed edge selection: node {node} has degree {degree}, expected {expected}")]
    Degree { node: usize, degree: usize, expected: usize },
    #[error("edge ({0}, {1}) is not a pair of distinct nodes in range")]
    BadEdge(usize, usize),
    #[error("sub-tour elimination needs a node set of size >= 3 without the depot, got {0:?}")]
    BadComponent(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CutOrigin {
    OuterApprox,
    Submodular1,
    Submodular2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCut {
    pub group: usize,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub origin: CutOrigin,
    pub anchor: Selection,
}

impl LinearCut {
    pub fn value(&self, x: &Selection) -> f64 {
        self.beta
            + self
                .alpha
                .iter()
                .zip(x.bits())
                .filter(|(_, &b)| b)
                .map(|(a, _)| a)
                .sum::<f64>()
    }

    pub fn value_mask(&self, mask: u64) -> f64 {
        self.beta + crate::subset::locations(mask).map(|i| self.alpha[i - 1]).sum::<f64>()
    }
}

/// Tangent cut from concavity of `Psi_l`.
pub fn oa_cut(inst: &Instance, part: &GroupPartition, l: usize, anchor: &Selection) -> LinearCut {
    let alpha = group_gradient(inst, part, l, &anchor.as_f64());
    let psi = eval_group(inst, part, l, anchor);
    let beta = psi - alpha.iter().zip(anchor.bits()).filter(|(_, &b)| b).map(|(a, _)| a).sum::<f64>();
    LinearCut { group: l, alpha, beta, origin: CutOrigin::OuterApprox, anchor: anchor.clone() }
}

/// Builds `Psi(S) + sum_{k not in S} up_k x_k - sum_{k in S} down_k (1 - x_k)`.
fn submodular_form(
    l: usize,
    anchor: &Selection,
    psi: f64,
    up: impl Fn(usize) -> f64,
    down: impl Fn(usize) -> f64,
    origin: CutOrigin,
) -> LinearCut {
    let m = anchor.len();
    let mut alpha = vec![0.0; m];
    let mut beta = psi;
    for k in 1..=m {
        if anchor.contains(k) {
            let d = down(k);
            alpha[k - 1] = d;
            beta -= d;
        } else {
            alpha[k - 1] = up(k);
        }
    }
    LinearCut { group: l, alpha, beta, origin, anchor: anchor.clone() }
}

/// Cut from gains at the anchor and at the complements `[m] - k`.
pub fn submodular_cut_1(inst: &Instance, part: &GroupPartition, l: usize, anchor: &Selection) -> LinearCut {
    CutGenerator::new(inst, part).submodular_1(l, anchor)
}

/// Cut from gains at the empty set and at `S - k`.
pub fn submodular_cut_2(inst: &Instance, part: &GroupPartition, l: usize, anchor: &Selection) -> LinearCut {
    CutGenerator::new(inst, part).submodular_2(l, anchor)
}

/// Generates objective cuts, caching the two anchor-independent gain
/// families `rho_lk([m] - k)` and `rho_lk(empty)`.
pub struct CutGenerator<'a> {
    inst: &'a Instance,
    part: &'a GroupPartition,
    complement_gain: Vec<Option<Vec<f64>>>,
    empty_gain: Vec<Option<Vec<f64>>>,
}

impl<'a> CutGenerator<'a> {
    pub fn new(inst: &'a Instance, part: &'a GroupPartition) -> Self {
        let groups = part.len();
        CutGenerator { inst, part, complement_gain: vec![None; groups], empty_gain: vec![None; groups] }
    }

    fn complement(&mut self, l: usize) -> &[f64] {
        let (inst, part) = (self.inst, self.part);
        self.complement_gain[l].get_or_insert_with(|| {
            (1..=inst.m)
                .map(|k| {
                    let mut s = Selection::from_bools(vec![true; inst.m]);
                    s.set(k, false);
                    marginal_gain(inst, part, l, k, &s)
                })
                .collect()
        })
    }

    fn empty(&mut self, l: usize) -> &[f64] {
        let (inst, part) = (self.inst, self.part);
        self.empty_gain[l].get_or_insert_with(|| {
            let s = Selection::empty(inst.m);
            (1..=inst.m).map(|k| marginal_gain(inst, part, l, k, &s)).collect()
        })
    }

    pub fn oa(&self, l: usize, anchor: &Selection) -> LinearCut {
        oa_cut(self.inst, self.part, l, anchor)
    }

    pub fn submodular_1(&mut self, l: usize, anchor: &Selection) -> LinearCut {
        let psi = eval_group(self.inst, self.part, l, anchor);
        let (inst, part) = (self.inst, self.part);
        let comp = self.complement(l).to_vec();
        submodular_form(
            l,
            anchor,
            psi,
            |k| marginal_gain(inst, part, l, k, anchor),
            |k| comp[k - 1],
            CutOrigin::Submodular1,
        )
    }

    pub fn submodular_2(&mut self, l: usize, anchor: &Selection) -> LinearCut {
        let psi = eval_group(self.inst, self.part, l, anchor);
        let (inst, part) = (self.inst, self.part);
        let empty = self.empty(l).to_vec();
        submodular_form(
            l,
            anchor,
            psi,
            |k| empty[k - 1],
            |k| {
                let mut without = anchor.clone();
                without.set(k, false);
                marginal_gain(inst, part, l, k, &without)
            },
            CutOrigin::Submodular2,
        )
    }
}

/// Enumerative check of a cut against `Psi_l` on all binary points.
///
/// Holds the table of `Psi_l` values so that many cuts of one instance
/// can be checked cheaply.
pub struct CutValidator {
    m: usize,
    psi: Vec<Vec<f64>>,
}

impl CutValidator {
    pub fn new(inst: &Instance, part: &GroupPartition) -> Result<Self, CutError> {
        if inst.m > VALIDITY_GUARD {
            return Err(CutError::TooLarge(inst.m));
        }
        let m = inst.m;
        let psi = (0..part.len())
            .map(|l| {
                (0u64..1 << m)
                    .map(|mask| eval_group(inst, part, l, &Selection::from_mask(m, mask)))
                    .collect()
            })
            .collect();
        Ok(CutValidator { m, psi })
    }

    pub fn psi(&self, l: usize, mask: u64) -> f64 {
        self.psi[l][mask as usize]
    }

    /// Largest violation `Psi_l(x) - cut(x)` over all binary `x` and the
    /// tangency gap at the anchor.
    pub fn violation(&self, cut: &LinearCut) -> (f64, f64) {
        let size = 1usize << self.m;
        let mut val = vec![0.0; size];
        val[0] = cut.beta;
        let table = &self.psi[cut.group];
        let mut worst = table[0] - cut.beta;
        for mask in 1..size {
            let low = mask.trailing_zeros() as usize;
            val[mask] = val[mask & (mask - 1)] + cut.alpha[low];
            worst = worst.max(table[mask] - val[mask]);
        }
        let a = cut.anchor.to_mask() as usize;
        (worst, (val[a] - table[a]).abs())
    }

    pub fn is_valid(&self, cut: &LinearCut) -> bool {
        let (worst, gap) = self.violation(cut);
        worst <= VALID_TOL && gap <= VALID_TOL
    }
}

pub fn check_valid_cut(inst: &Instance, part: &GroupPartition, cut: &LinearCut) -> Result<bool, CutError> {
    Ok(CutValidator::new(inst, part)?.is_valid(cut))
}

/// Undirected edge multiset over nodes `0..=m`. The out-and-back tour to a
/// single location is the edge `(0, i)` listed twice.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeSet {
    edges: Vec<(usize, usize)>,
}

impl EdgeSet {
    pub fn new() -> Self {
        EdgeSet::default()
    }

    pub fn from_pairs(pairs: &[(usize, usize)]) -> Self {
        let mut e = EdgeSet::new();
        for &(a, b) in pairs {
            e.push(a, b);
        }
        e
    }

    /// Edges of the closed walk `order` (first node repeated at the end).
    pub fn from_route(order: &[usize]) -> Self {
        let mut e = EdgeSet::new();
        for w in order.windows(2) {
            if w[0] != w[1] {
                e.push(w[0], w[1]);
            }
        }
        e
    }

    pub fn push(&mut self, a: usize, b: usize) {
        self.edges.push((a.min(b), a.max(b)));
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    /// Total travel time of the selected edges.
    pub fn cost(&self, inst: &Instance) -> f64 {
        self.edges.iter().map(|&(a, b)| inst.t(a, b)).sum()
    }

    fn count(&self, pred: impl Fn(bool, bool) -> bool, set: &[bool]) -> usize {
        self.edges.iter().filter(|&&(a, b)| pred(set[a], set[b])).count()
    }
}

/// Connected components of the active nodes under `y`, each sorted, listed
/// by smallest node. A valid tour has exactly one component.
pub fn find_subtours(x: &Selection, y: &EdgeSet) -> Result<Vec<Vec<usize>>, CutError> {
    let n = x.len() + 1;
    let active = |v: usize| v == 0 || x.contains(v);
    let mut degree = vec![0usize; n];
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in y.edges() {
        if a == b || b >= n {
            return Err(CutError::BadEdge(a, b));
        }
        degree[a] += 1;
        degree[b] += 1;
        adj[a].push(b);
        adj[b].push(a);
    }
    for (v, &d) in degree.iter().enumerate() {
        let expected = if active(v) { 2 } else { 0 };
        if d != expected {
            return Err(CutError::Degree { node: v, degree: d, expected });
        }
    }
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for start in (0..n).filter(|&v| active(v)) {
        if seen[start] {
            continue;
        }
        let mut comp = vec![];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            comp.push(v);
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    Ok(comps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SecKind {
    /// `cross(S) >= 2 x_k` for one `k` in `S`.
    Sec1,
    /// `|S| * internal(S) <= (|S| - 1) * sum_{k in S} x_k`.
    Sec2,
}

/// Which sub-tour cuts to add per offending component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SecVariant {
    /// One `Sec1` cut for every node of the component.
    Sec1,
    /// The single aggregated `Sec2` cut.
    Sec2,
    /// `Sec2` plus one `Sec1` at the component's most attractive location.
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RoutingCut {
    pub kind: SecKind,
    /// Sorted locations, depot excluded.
    pub node_set: Vec<usize>,
    /// Location on the right-hand side of a `Sec1` cut.
    pub anchor_k: Option<usize>,
}

impl RoutingCut {
    /// Left-hand side minus right-hand side in `lhs >= rhs` orientation; the
    /// cut holds iff the result is non-negative.
    pub fn slack(&self, x: &Selection, y: &EdgeSet) -> f64 {
        let mut in_set = vec![false; x.len() + 1];
        for &v in &self.node_set {
            in_set[v] = true;
        }
        match self.kind {
            SecKind::Sec1 => {
                let cross = y.count(|a, b| a != b, &in_set) as f64;
                let k = self.anchor_k.expect("Sec1 cut without anchor");
                cross - if x.contains(k) { 2.0 } else { 0.0 }
            }
            SecKind::Sec2 => {
                let s = self.node_set.len() as f64;
                let internal = y.count(|a, b| a && b, &in_set) as f64;
                let chosen = self.node_set.iter().filter(|&&k| x.contains(k)).count() as f64;
                (s - 1.0) * chosen - s * internal
            }
        }
    }

    pub fn is_satisfied(&self, x: &Selection, y: &EdgeSet) -> bool {
        self.slack(x, y) >= 0.0
    }
}

fn check_component(component: &[usize]) -> Result<Vec<usize>, CutError> {
    let mut s = component.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() < 3 || s.len() != component.len() || s.contains(&0) {
        return Err(CutError::BadComponent(component.to_vec()));
    }
    Ok(s)
}

/// `Sec1` cuts (one per node) or the `Sec2` cut for a depot-free component.
/// [`SecVariant::Both`] yields the `Sec2` cut and every `Sec1` cut; use
/// [`sec_cuts_for`] to pick the single `Sec1` anchor instead.
pub fn sec_cuts(component: &[usize], kind: SecKind) -> Result<Vec<RoutingCut>, CutError> {
    let s = check_component(component)?;
    Ok(match kind {
        SecKind::Sec1 => s
            .iter()
            .map(|&k| RoutingCut { kind: SecKind::Sec1, node_set: s.clone(), anchor_k: Some(k) })
            .collect(),
        SecKind::Sec2 => vec![RoutingCut { kind: SecKind::Sec2, node_set: s, anchor_k: None }],
    })
}

/// Cuts added by the solvers for one component under a [`SecVariant`].
pub fn sec_cuts_for(inst: &Instance, component: &[usize], variant: SecVariant) -> Result<Vec<RoutingCut>, CutError> {
    match variant {
        SecVariant::Sec1 => sec_cuts(component, SecKind::Sec1),
        SecVariant::Sec2 => sec_cuts(component, SecKind::Sec2),
        SecVariant::Both => {
            let mut cuts = sec_cuts(component, SecKind::Sec2)?;
            let s = &cuts[0].node_set;
            let attraction = |k: usize| inst.zones.iter().map(|z| z.q * z.v[k - 1]).sum::<f64>();
            let mut best = s[0];
            for &k in &s[1..] {
                if attraction(k) > attraction(best) {
                    best = k;
                }
            }
            let node_set = s.clone();
            cuts.push(RoutingCut { kind: SecKind::Sec1, node_set, anchor_k: Some(best) });
            Ok(cuts)
        }
    }
}

/// Objective cuts per group plus the routing cuts of one solve.
#[derive(Debug, Clone)]
pub struct CutPool {
    groups: Vec<Vec<LinearCut>>,
    routing: Vec<RoutingCut>,
}

impl CutPool {
    pub fn new(n_groups: usize) -> Self {
        CutPool { groups: vec![Vec::new(); n_groups], routing: Vec::new() }
    }

    pub fn group(&self, l: usize) -> &[LinearCut] {
        &self.groups[l]
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn routing(&self) -> &[RoutingCut] {
        &self.routing
    }

    pub fn objective_cut_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Adds an objective cut unless one with the same coefficients exists.
    pub fn add(&mut self, cut: LinearCut) -> bool {
        let same = |c: &LinearCut| {
            (c.beta - cut.beta).abs() <= DEDUP_TOL
                && c.alpha.iter().zip(&cut.alpha).all(|(a, b)| (a - b).abs() <= DEDUP_TOL)
        };
        let pool = &mut self.groups[cut.group];
        if pool.iter().any(same) {
            return false;
        }
        pool.push(cut);
        true
    }

    pub fn add_routing(&mut self, cut: RoutingCut) -> bool {
        if self.routing.contains(&cut) {
            return false;
        }
        self.routing.push(cut);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_instance, t1};
    use crate::objective::partition_zones;

    fn sel(m: usize, locs: &[usize]) -> Selection {
        Selection::from_locations(m, locs)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn t1_oa_cut() {
        let inst = t1();
        let part = partition_zones(&inst, 1);
        let cut = oa_cut(&inst, &part, 0, &sel(2, &[]));
        assert_eq!((cut.alpha.clone(), cut.beta), (vec![1.0, 3.0], 0.0));
        assert_eq!(cut.value(&sel(2, &[1, 2])), 4.0);
        assert!(check_valid_cut(&inst, &part, &cut).unwrap());
        let at = oa_cut(&inst, &part, 0, &sel(2, &[1]));
        assert!(close(at.value(&sel(2, &[1])), 0.5));
    }

    #[test]
    fn t1_submodular_cut_1() {
        let inst = t1();
        let part = partition_zones(&inst, 1);
        let c0 = submodular_cut_1(&inst, &part, 0, &sel(2, &[]));
        assert!(close(c0.alpha[0], 0.5) && close(c0.alpha[1], 0.75) && close(c0.beta, 0.0));
        assert!(close(c0.value(&sel(2, &[1, 2])), 1.25));
        let c11 = submodular_cut_1(&inst, &part, 0, &sel(2, &[1, 2]));
        assert!(close(c11.value(&sel(2, &[1, 2])), 0.8));
        assert!(close(c11.value(&sel(2, &[])), 0.45));
        assert!(check_valid_cut(&inst, &part, &c11).unwrap());
    }

    #[test]
    fn t1_submodular_cut_2() {
        let inst = t1();
        let part = partition_zones(&inst, 1);
        let a = submodular_cut_1(&inst, &part, 0, &sel(2, &[]));
        let b = submodular_cut_2(&inst, &part, 0, &sel(2, &[]));
        assert_eq!((a.alpha, a.beta), (b.alpha, b.beta));
        let c = submodular_cut_2(&inst, &part, 0, &sel(2, &[1]));
        // 0.5 + 0.75 x2 - 0.5 (1 - x1)
        assert!(close(c.alpha[0], 0.5) && close(c.alpha[1], 0.75) && close(c.beta, 0.0));
        assert!(close(c.value(&sel(2, &[2])), 0.75));
        assert!(check_valid_cut(&inst, &part, &c).unwrap());
    }

    #[test]
    fn lowered_cut_is_invalid() {
        let inst = t1();
        let part = partition_zones(&inst, 1);
        let mut cut = oa_cut(&inst, &part, 0, &sel(2, &[1]));
        cut.beta -= 0.1;
        assert!(!check_valid_cut(&inst, &part, &cut).unwrap());
    }

    #[test]
    fn validity_guard() {
        let inst = random_instance(21, 1, 0);
        let part = partition_zones(&inst, 1);
        let cut = oa_cut(&inst, &part, 0, &Selection::empty(21));
        assert_eq!(check_valid_cut(&inst, &part, &cut), Err(CutError::TooLarge(21)));
    }

    #[test]
    fn all_families_valid_on_random_anchors() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for seed in 0..4 {
            let inst = random_instance(8, 10, seed);
            let part = partition_zones(&inst, 3);
            let checker = CutValidator::new(&inst, &part).unwrap();
            let mut gen = CutGenerator::new(&inst, &part);
            for _ in 0..100 {
                let anchor = Selection::from_mask(8, rng.gen_range(0..256));
                for l in 0..part.len() {
                    let cuts = [gen.oa(l, &anchor), gen.submodular_1(l, &anchor), gen.submodular_2(l, &anchor)];
                    let psi = eval_group(&inst, &part, l, &anchor);
                    for c in &cuts {
                        assert!(checker.is_valid(c), "{:?} at {:?}", c.origin, anchor);
                        assert!((c.value(&anchor) - psi).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn subtour_detection() {
        let x = sel(2, &[1, 2]);
        let y = EdgeSet::from_route(&[0, 1, 2, 0]);
        assert_eq!(find_subtours(&x, &y).unwrap(), vec![vec![0, 1, 2]]);

        let x = sel(5, &[1, 2, 3, 4, 5]);
        let y = EdgeSet::from_pairs(&[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]);
        let comps = find_subtours(&x, &y).unwrap();
        assert_eq!(comps, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert!(!comps[1].contains(&0));

        let err = find_subtours(&Selection::empty(2), &EdgeSet::new()).unwrap_err();
        assert_eq!(err, CutError::Degree { node: 0, degree: 0, expected: 2 });
        // out-and-back tour to a single location
        let y = EdgeSet::from_route(&[0, 2, 0]);
        assert_eq!(find_subtours(&sel(2, &[2]), &y).unwrap(), vec![vec![0, 2]]);
    }

    #[test]
    fn sec_cuts_on_two_cycles() {
        let x = sel(5, &[1, 2, 3, 4, 5]);
        let y = EdgeSet::from_pairs(&[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]);
        let s1 = sec_cuts(&[3, 4, 5], SecKind::Sec1).unwrap();
        assert_eq!(s1.len(), 3);
        for c in &s1 {
            assert_eq!(c.slack(&x, &y), -2.0);
        }
        let s2 = sec_cuts(&[3, 4, 5], SecKind::Sec2).unwrap();
        assert_eq!(s2.len(), 1);
        // 3 * 3 <= 2 * 3 fails by 3
        assert_eq!(s2[0].slack(&x, &y), -3.0);
    }

    #[test]
    fn sec2_holds_on_a_tour() {
        let x = sel(3, &[1, 2, 3]);
        let y = EdgeSet::from_route(&[0, 1, 2, 3, 0]);
        let c = &sec_cuts(&[1, 2, 3], SecKind::Sec2).unwrap()[0];
        assert_eq!(c.slack(&x, &y), 0.0);
        for c in sec_cuts(&[1, 2, 3], SecKind::Sec1).unwrap() {
            assert!(c.is_satisfied(&x, &y));
        }
    }

    #[test]
    fn sec_rejects_small_or_depot_sets() {
        assert!(sec_cuts(&[1, 2], SecKind::Sec1).is_err());
        assert!(sec_cuts(&[0, 1, 2], SecKind::Sec2).is_err());
        assert!(sec_cuts(&[1, 1, 2], SecKind::Sec2).is_err());
    }

    #[test]
    fn both_variant_anchors_most_attractive() {
        let inst = crate::oracle::two_cluster_fixture();
        let cuts = sec_cuts_for(&inst, &[3, 4, 5], SecVariant::Both).unwrap();
        assert_eq!(cuts.len(), 2);
        assert_eq!(cuts[0].kind, SecKind::Sec2);
        // q-weighted attraction: 3 -> 10+22+15, 4 -> 8+26+15, 5 -> 9+18+15
        assert_eq!(cuts[1].anchor_k, Some(4));
    }

    #[test]
    fn pool_deduplicates() {
        let inst = t1();
        let part = partition_zones(&inst, 1);
        let mut pool = CutPool::new(1);
        let a = oa_cut(&inst, &part, 0, &sel(2, &[]));
        assert!(pool.add(a.clone()));
        assert!(!pool.add(a));
        let b = submodular_cut_1(&inst, &part, 0, &sel(2, &[]));
        assert!(pool.add(b));
        assert_eq!(pool.objective_cut_count(), 2);
        let r = sec_cuts(&[1, 2, 3], SecKind::Sec2).unwrap().remove(0);
        assert!(pool.add_routing(r.clone()));
        assert!(!pool.add_routing(r));
    }
}
