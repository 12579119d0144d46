//! Explicit mathematical-programming formulations and LP-format export.
//!
//! Variable names carry their role: `x_i`, `y_i_j`, `p_i`, `w_n`, `s_n_i`,
//! `r_n`, `theta_l` with 1-based location, zone and group indices. In the
//! directed routing model node `m + 1` is the closing copy of the depot.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::instance::Instance;
use crate::objective::{GroupPartition, Selection};

const CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid w bounds for zone {zone}: need 0 <= {lower} < {upper}")]
    Bounds { zone: usize, lower: f64, upper: f64 },
    #[error("row {row} violated: lhs {lhs} vs rhs {rhs}")]
    RowViolated { row: String, lhs: f64, rhs: f64 },
    #[error("variable {name} = {value} outside [{lower}, {upper}]")]
    BoundViolated { name: String, value: f64, lower: f64, upper: f64 },
    #[error("model has no variable {0}")]
    UnknownVariable(String),
    #[error("model is neither a linearized nor a conic formulation")]
    NotReformulation,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Relation::Le => lhs <= rhs + tol,
            Relation::Eq => (lhs - rhs).abs() <= tol,
            Relation::Ge => lhs >= rhs - tol,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Row of bilinear terms `sum c * v_a * v_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRow {
    pub name: String,
    pub terms: Vec<(usize, usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Role of a variable, decoded from its name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    Select(usize),
    Arc(usize, usize),
    Edge(usize, usize),
    Order(usize),
    W(usize),
    S(usize, usize),
    R(usize),
    Theta(usize),
}

/// Linear model, maximized, with optional bilinear rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MipModel {
    pub name: String,
    vars: Vec<Variable>,
    index: HashMap<String, usize>,
    objective: Vec<(usize, f64)>,
    objective_constant: f64,
    rows: Vec<LinearRow>,
    quad_rows: Vec<QuadRow>,
}

impl MipModel {
    pub fn new(name: &str) -> Self {
        MipModel {
            name: name.to_string(),
            vars: Vec::new(),
            index: HashMap::new(),
            objective: Vec::new(),
            objective_constant: 0.0,
            rows: Vec::new(),
            quad_rows: Vec::new(),
        }
    }

    /// Adds a variable, or returns the existing one of that name.
    pub fn add_var(&mut self, name: &str, kind: VarKind, lower: f64, upper: f64) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let (lower, upper) = if kind == VarKind::Binary { (0.0, 1.0) } else { (lower, upper) };
        self.vars.push(Variable { name: name.to_string(), kind, lower, upper });
        self.index.insert(name.to_string(), self.vars.len() - 1);
        self.vars.len() - 1
    }

    pub fn add_row(&mut self, name: &str, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        let terms = terms.into_iter().filter(|&(_, c)| c != 0.0).collect();
        self.rows.push(LinearRow { name: name.to_string(), terms, relation, rhs });
    }

    pub fn add_quad_row(&mut self, name: &str, terms: Vec<(usize, usize, f64)>, relation: Relation, rhs: f64) {
        self.quad_rows.push(QuadRow { name: name.to_string(), terms, relation, rhs });
    }

    pub fn set_objective(&mut self, terms: Vec<(usize, f64)>, constant: f64) {
        self.objective = terms.into_iter().filter(|&(_, c)| c != 0.0).collect();
        self.objective_constant = constant;
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    pub fn row(&self, name: &str) -> Option<&LinearRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn quad_rows(&self) -> &[QuadRow] {
        &self.quad_rows
    }

    pub fn objective(&self) -> (&[(usize, f64)], f64) {
        (&self.objective, self.objective_constant)
    }

    pub fn coefficient(&self, row: &str, var: &str) -> Option<f64> {
        let v = self.var(var)?;
        let r = self.row(row)?;
        Some(r.terms.iter().filter(|t| t.0 == v).map(|t| t.1).sum())
    }

    pub fn rows_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a LinearRow> + 'a {
        self.rows.iter().filter(move |r| r.name.starts_with(prefix))
    }

    fn objective_value(&self, values: &[Option<f64>]) -> Option<f64> {
        let mut v = self.objective_constant;
        for &(i, c) in &self.objective {
            v += c * values[i]?;
        }
        Some(v)
    }
}

pub fn role(name: &str) -> Option<VarRole> {
    let mut parts = name.split('_');
    let head = parts.next()?;
    let nums: Vec<usize> = parts.map(|p| p.parse().ok()).collect::<Option<_>>()?;
    match (head, nums.as_slice()) {
        ("x", [i]) => Some(VarRole::Select(*i)),
        ("y", [i, j]) => Some(VarRole::Arc(*i, *j)),
        ("e", [i, j]) => Some(VarRole::Edge(*i, *j)),
        ("p", [i]) => Some(VarRole::Order(*i)),
        ("w", [n]) => Some(VarRole::W(*n)),
        ("s", [n, i]) => Some(VarRole::S(*n, *i)),
        ("r", [n]) => Some(VarRole::R(*n)),
        ("theta", [l]) => Some(VarRole::Theta(*l)),
        _ => None,
    }
}

/// A model with rotated-cone rows `r_n * w_n >= 1`, one per zone.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicModel {
    pub model: MipModel,
    /// `(zone, r index, w index)` per hyperbolic row.
    pub hyperbolic: Vec<(usize, usize, usize)>,
}

/// Directed routing model with MTZ ordering rows and the cardinality cap.
pub fn build_mtz_model(inst: &Instance) -> MipModel {
    let m = inst.m;
    let mut model = MipModel::new(&inst.name);
    let x: Vec<usize> = (1..=m).map(|i| model.add_var(&format!("x_{i}"), VarKind::Binary, 0.0, 1.0)).collect();
    let mut y = HashMap::new();
    for i in 0..=m {
        for j in 1..=m + 1 {
            y.insert((i, j), model.add_var(&format!("y_{i}_{j}"), VarKind::Binary, 0.0, 1.0));
        }
    }
    let p: Vec<usize> = (1..=m)
        .map(|i| model.add_var(&format!("p_{i}"), VarKind::Continuous, 1.0, m.max(1) as f64))
        .collect();
    let phys = |v: usize| if v == m + 1 { 0 } else { v };

    model.add_row("card", x.iter().map(|&v| (v, 1.0)).collect(), Relation::Le, inst.cap_c as f64);
    model.add_row("start", (1..=m + 1).map(|j| (y[&(0, j)], 1.0)).collect(), Relation::Eq, 1.0);
    model.add_row("end", (0..=m).map(|i| (y[&(i, m + 1)], 1.0)).collect(), Relation::Eq, 1.0);
    for i in 1..=m {
        let mut terms: Vec<(usize, f64)> = (0..=m).map(|j| (y[&(j, i)], 1.0)).collect();
        terms.push((x[i - 1], -1.0));
        model.add_row(&format!("in_{i}"), terms, Relation::Eq, 0.0);
        let mut terms: Vec<(usize, f64)> = (1..=m + 1).map(|k| (y[&(i, k)], 1.0)).collect();
        terms.push((x[i - 1], -1.0));
        model.add_row(&format!("out_{i}"), terms, Relation::Eq, 0.0);
    }
    let mut budget = Vec::new();
    for i in 0..=m {
        for j in 1..=m + 1 {
            budget.push((y[&(i, j)], inst.t(phys(i), phys(j))));
        }
    }
    model.add_row("budget", budget, Relation::Le, inst.t_max);
    let mf = m as f64;
    for i in 1..=m {
        for j in 1..=m {
            model.add_row(
                &format!("mtz_{i}_{j}"),
                vec![(p[i - 1], 1.0), (p[j - 1], -1.0), (y[&(i, j)], mf)],
                Relation::Le,
                mf - 1.0,
            );
        }
    }
    model
}

/// Per-zone bounds on `w_n` used by the linearization rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl WBounds {
    /// `w^L = 0` and `w^U_n = 1 / U_n`, the value of `w_n` at the empty selection.
    pub fn default_for(inst: &Instance) -> Self {
        WBounds { lower: vec![0.0; inst.n_zones()], upper: inst.zones.iter().map(|z| 1.0 / z.u_comp).collect() }
    }
}

/// Linearized MILP: routing model plus `w_n`, `s_n_i` and the four envelope
/// rows per `(n, i)`. Rows `lin1` use the tightened `1 / (U_n + V_ni)`.
pub fn build_li_milp(inst: &Instance, bounds: &WBounds) -> Result<MipModel, ModelError> {
    for n in 0..inst.n_zones() {
        let (lo, hi) = (bounds.lower[n], bounds.upper[n]);
        if !(lo >= 0.0 && lo < hi) {
            return Err(ModelError::Bounds { zone: n + 1, lower: lo, upper: hi });
        }
    }
    let mut model = build_mtz_model(inst);
    let mut objective = Vec::new();
    for (n0, zone) in inst.zones.iter().enumerate() {
        let n = n0 + 1;
        let (wl, wu) = (bounds.lower[n0], bounds.upper[n0]);
        let w = model.add_var(&format!("w_{n}"), VarKind::Continuous, wl, wu);
        let mut def = Vec::with_capacity(inst.m + 1);
        for i in 1..=inst.m {
            let v = zone.v[i - 1];
            let x = model.var(&format!("x_{i}")).expect("routing model declares x");
            let s = model.add_var(&format!("s_{n}_{i}"), VarKind::Continuous, 0.0, wu);
            let tight = wu.min(1.0 / (zone.u_comp + v));
            model.add_row(&format!("lin1_{n}_{i}"), vec![(s, 1.0), (x, -tight)], Relation::Le, 0.0);
            model.add_row(&format!("lin2_{n}_{i}"), vec![(x, wl), (s, -1.0)], Relation::Le, 0.0);
            model.add_row(&format!("lin3_{n}_{i}"), vec![(s, 1.0), (w, -1.0), (x, -wl)], Relation::Le, -wl);
            model.add_row(&format!("lin4_{n}_{i}"), vec![(w, 1.0), (x, wu), (s, -1.0)], Relation::Le, wu);
            def.push((s, v));
            objective.push((s, zone.q * v));
        }
        def.push((w, zone.u_comp));
        model.add_row(&format!("defw_{n}"), def, Relation::Eq, 1.0);
    }
    model.set_objective(objective, 0.0);
    Ok(model)
}

/// Conic model: routing model plus `r_n = sum_i V_ni x_i + U_n` and
/// `r_n * w_n >= 1`, maximizing `sum q_n - sum q_n U_n w_n`.
pub fn build_conic_model(inst: &Instance) -> ConicModel {
    let mut model = build_mtz_model(inst);
    let mut hyperbolic = Vec::new();
    let mut objective = Vec::new();
    for (n0, zone) in inst.zones.iter().enumerate() {
        let n = n0 + 1;
        let w = model.add_var(&format!("w_{n}"), VarKind::Continuous, 0.0, f64::INFINITY);
        let r = model.add_var(&format!("r_{n}"), VarKind::Continuous, 0.0, f64::INFINITY);
        let mut terms = vec![(r, 1.0)];
        for i in 1..=inst.m {
            terms.push((model.var(&format!("x_{i}")).expect("routing model declares x"), -zone.v[i - 1]));
        }
        model.add_row(&format!("rdef_{n}"), terms, Relation::Eq, zone.u_comp);
        model.add_quad_row(&format!("hyp_{n}"), vec![(r, w, 1.0)], Relation::Ge, 1.0);
        hyperbolic.push((n, r, w));
        objective.push((w, -zone.q * zone.u_comp));
    }
    model.set_objective(objective, inst.total_demand());
    ConicModel { model, hyperbolic }
}

/// Undirected relaxed master: edge variables `e_i_j` for `i < j` on
/// `{0..m}`, degree rows, budget, cardinality, `x_0 = 1` and `theta_l`
/// bounded by the group demand.
pub fn build_master_model(inst: &Instance, part: &GroupPartition) -> MipModel {
    let m = inst.m;
    let mut model = MipModel::new(&inst.name);
    let x: Vec<usize> = (0..=m).map(|i| model.add_var(&format!("x_{i}"), VarKind::Binary, 0.0, 1.0)).collect();
    let mut edges = Vec::new();
    for i in 0..=m {
        for j in i + 1..=m {
            edges.push((i, j, model.add_var(&format!("e_{i}_{j}"), VarKind::Binary, 0.0, 1.0)));
        }
    }
    let theta: Vec<usize> = part
        .groups()
        .iter()
        .enumerate()
        .map(|(l, g)| {
            let seed: f64 = g.iter().map(|&n| inst.zones[n].q).sum();
            model.add_var(&format!("theta_{}", l + 1), VarKind::Continuous, 0.0, seed)
        })
        .collect();
    model.add_row("card", (1..=m).map(|i| (x[i], 1.0)).collect(), Relation::Le, inst.cap_c as f64);
    model.add_row("budget", edges.iter().map(|&(i, j, v)| (v, inst.t(i, j))).collect(), Relation::Le, inst.t_max);
    for (j, &xj) in x.iter().enumerate() {
        let mut terms: Vec<(usize, f64)> =
            edges.iter().filter(|&&(a, b, _)| a == j || b == j).map(|&(_, _, v)| (v, 1.0)).collect();
        terms.push((xj, -2.0));
        model.add_row(&format!("deg_{j}"), terms, Relation::Eq, 0.0);
    }
    model.add_row("depot", vec![(x[0], 1.0)], Relation::Eq, 1.0);
    model.set_objective(theta.iter().map(|&t| (t, 1.0)).collect(), 0.0);
    model
}

/// Fixes `x`, assigns `w`, `s` and `r` in closed form, checks every row and
/// bound that involves them, and returns the model objective.
pub fn check_fixed_x_consistency(model: &MipModel, inst: &Instance, x: &Selection) -> Result<f64, ModelError> {
    let has = |f: fn(VarRole) -> bool| model.vars.iter().any(|v| role(&v.name).is_some_and(f));
    if !has(|r| matches!(r, VarRole::S(..) | VarRole::R(_))) {
        return Err(ModelError::NotReformulation);
    }
    let w_of: Vec<f64> = inst
        .zones
        .iter()
        .map(|z| 1.0 / (z.u_comp + x.locations().iter().map(|&i| z.v[i - 1]).sum::<f64>()))
        .collect();
    let mut values: Vec<Option<f64>> = vec![None; model.vars.len()];
    let mut derived = vec![false; model.vars.len()];
    for (idx, var) in model.vars.iter().enumerate() {
        let value = match role(&var.name) {
            Some(VarRole::Select(i)) if (1..=inst.m).contains(&i) => Some(if x.contains(i) { 1.0 } else { 0.0 }),
            Some(VarRole::W(n)) => Some(w_of[n - 1]),
            Some(VarRole::S(n, i)) => Some(if x.contains(i) { w_of[n - 1] } else { 0.0 }),
            Some(VarRole::R(n)) => Some(1.0 / w_of[n - 1]),
            _ => None,
        };
        if let Some(v) = value {
            values[idx] = Some(v);
            derived[idx] = !matches!(role(&var.name), Some(VarRole::Select(_)));
            if v < var.lower - CHECK_TOL || v > var.upper + CHECK_TOL {
                return Err(ModelError::BoundViolated { name: var.name.clone(), value: v, lower: var.lower, upper: var.upper });
            }
        }
    }
    for row in &model.rows {
        if !row.terms.iter().any(|t| derived[t.0]) {
            continue;
        }
        let lhs = row_value(&row.terms, &values).ok_or_else(|| unassigned(model, &row.terms, &values))?;
        if !row.relation.holds(lhs, row.rhs, tol_for(lhs, row.rhs)) {
            return Err(ModelError::RowViolated { row: row.name.clone(), lhs, rhs: row.rhs });
        }
    }
    for row in &model.quad_rows {
        let mut lhs = 0.0;
        for &(a, b, c) in &row.terms {
            let (Some(va), Some(vb)) = (values[a], values[b]) else {
                return Err(ModelError::UnknownVariable(model.vars[a].name.clone()));
            };
            lhs += c * va * vb;
        }
        if !row.relation.holds(lhs, row.rhs, tol_for(lhs, row.rhs)) {
            return Err(ModelError::RowViolated { row: row.name.clone(), lhs, rhs: row.rhs });
        }
    }
    model.objective_value(&values).ok_or_else(|| unassigned(model, &model.objective, &values))
}

fn tol_for(lhs: f64, rhs: f64) -> f64 {
    CHECK_TOL * lhs.abs().max(rhs.abs()).max(1.0)
}

fn row_value(terms: &[(usize, f64)], values: &[Option<f64>]) -> Option<f64> {
    terms.iter().try_fold(0.0, |acc, &(v, c)| Some(acc + c * values[v]?))
}

fn unassigned(model: &MipModel, terms: &[(usize, f64)], values: &[Option<f64>]) -> ModelError {
    let v = terms.iter().find(|t| values[t.0].is_none()).map_or(0, |t| t.0);
    ModelError::UnknownVariable(model.vars[v].name.clone())
}

/// Whether the directed routing model admits an assignment with `x` fixed.
///
/// Enumerates successor assignments on the arcs of the selected nodes under
/// the budget row, solves the ordering rows for `p` as difference
/// constraints, and verifies every row of the model against the result.
pub fn mtz_fixed_x_feasible(model: &MipModel, x: &Selection) -> Result<bool, ModelError> {
    let m = x.len();
    let lookup = |name: String| model.var(&name).ok_or(ModelError::UnknownVariable(name));
    let budget = model.row("budget").ok_or_else(|| ModelError::UnknownVariable("budget".into()))?;
    let arc_cost: HashMap<usize, f64> = budget.terms.iter().copied().collect();
    let sources: Vec<usize> = std::iter::once(0).chain(x.locations()).collect();
    let targets: Vec<usize> = x.locations().into_iter().chain(std::iter::once(m + 1)).collect();
    let mut arc = vec![vec![0usize; targets.len()]; sources.len()];
    for (a, &i) in sources.iter().enumerate() {
        for (b, &j) in targets.iter().enumerate() {
            arc[a][b] = lookup(format!("y_{i}_{j}"))?;
        }
    }
    let mut ctx = MtzSearch {
        model,
        x,
        arc,
        arc_cost,
        cap: budget.rhs + CHECK_TOL * budget.rhs.abs().max(1.0),
        used: vec![false; targets.len()],
        chosen: Vec::with_capacity(sources.len()),
    };
    Ok(ctx.assign(0, 0.0))
}

struct MtzSearch<'a> {
    model: &'a MipModel,
    x: &'a Selection,
    arc: Vec<Vec<usize>>,
    arc_cost: HashMap<usize, f64>,
    cap: f64,
    used: Vec<bool>,
    chosen: Vec<usize>,
}

impl MtzSearch<'_> {
    fn assign(&mut self, a: usize, cost: f64) -> bool {
        if a == self.arc.len() {
            return self.verify();
        }
        for b in 0..self.used.len() {
            if self.used[b] {
                continue;
            }
            let v = self.arc[a][b];
            let c = cost + self.arc_cost.get(&v).copied().unwrap_or(0.0);
            if c > self.cap {
                continue;
            }
            self.used[b] = true;
            self.chosen.push(v);
            let found = self.assign(a + 1, c);
            self.chosen.pop();
            self.used[b] = false;
            if found {
                return true;
            }
        }
        false
    }

    fn verify(&self) -> bool {
        let model = self.model;
        let mut values: Vec<Option<f64>> = vec![None; model.vars.len()];
        let mut orders = Vec::new();
        for (idx, var) in model.vars.iter().enumerate() {
            match role(&var.name) {
                Some(VarRole::Select(i)) => values[idx] = Some(if self.x.contains(i) { 1.0 } else { 0.0 }),
                Some(VarRole::Arc(..)) => values[idx] = Some(0.0),
                Some(VarRole::Order(_)) => orders.push(idx),
                _ => {}
            }
        }
        for &v in &self.chosen {
            values[v] = Some(1.0);
        }
        let Some(p) = solve_order_rows(model, &orders, &values) else {
            return false;
        };
        for (k, &idx) in orders.iter().enumerate() {
            values[idx] = Some(p[k]);
        }
        model.rows.iter().all(|row| match row_value(&row.terms, &values) {
            Some(lhs) => row.relation.holds(lhs, row.rhs, tol_for(lhs, row.rhs)),
            None => true,
        })
    }
}

/// Bellman-Ford on the `mtz_*` rows read as `p_a - p_b <= rhs - c * y`,
/// with the variable bounds tied to an extra reference node.
fn solve_order_rows(model: &MipModel, orders: &[usize], values: &[Option<f64>]) -> Option<Vec<f64>> {
    let k = orders.len();
    let pos: HashMap<usize, usize> = orders.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let z = k;
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &v) in orders.iter().enumerate() {
        edges.push((z, i, model.vars[v].upper));
        edges.push((i, z, -model.vars[v].lower));
    }
    for row in model.rows_with_prefix("mtz_") {
        let mut plus = None;
        let mut minus = None;
        let mut rhs = row.rhs;
        for &(v, c) in &row.terms {
            match pos.get(&v) {
                Some(&i) if c > 0.0 => plus = Some(i),
                Some(&i) => minus = Some(i),
                None => rhs -= c * values[v]?,
            }
        }
        match (plus, minus) {
            (Some(a), Some(b)) => edges.push((b, a, rhs)),
            // Both order terms on the same variable cancel.
            _ if rhs < -CHECK_TOL => return None,
            _ => {}
        }
    }
    let mut dist = vec![0.0; k + 1];
    for round in 0..=k + 1 {
        let mut changed = false;
        for &(u, v, w) in &edges {
            if dist[u] + w < dist[v] - 1e-12 {
                dist[v] = dist[u] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        if round == k + 1 {
            return None;
        }
    }
    Some((0..k).map(|i| dist[i] - dist[z]).collect())
}

/// LP-format text: `Maximize`, `Subject To`, `Bounds`, `Binaries`, `End`.
/// Every variable appears in `Bounds` in declaration order.
pub fn write_lp(model: &MipModel) -> String {
    let mut out = String::new();
    let name = |i: usize| model.vars[i].name.as_str();
    let _ = writeln!(out, "\\ Problem name: {}", model.name);
    out.push_str("Maximize\n obj:");
    let mut obj = terms_text(&model.objective, name);
    if model.objective_constant != 0.0 || model.objective.is_empty() {
        obj.push(signed(model.objective_constant));
    }
    push_wrapped(&mut out, &obj);
    out.push_str("Subject To\n");
    for row in &model.rows {
        let _ = write!(out, " {}:", row.name);
        let mut toks = terms_text(&row.terms, name);
        toks.push(format!("{} {}", row.relation.symbol(), num(row.rhs)));
        push_wrapped(&mut out, &toks);
    }
    for row in &model.quad_rows {
        let _ = write!(out, " {}:", row.name);
        let mut toks = vec!["[".to_string()];
        for (k, &(a, b, c)) in row.terms.iter().enumerate() {
            let lead = if k == 0 && c >= 0.0 { num(c) } else { signed(c) };
            toks.push(format!("{lead} {} * {}", name(a), name(b)));
        }
        toks.push("]".to_string());
        toks.push(format!("{} {}", row.relation.symbol(), num(row.rhs)));
        push_wrapped(&mut out, &toks);
    }
    out.push_str("Bounds\n");
    for v in &model.vars {
        let _ = writeln!(out, " {} <= {} <= {}", num(v.lower), v.name, num(v.upper));
    }
    let binaries: Vec<&str> = model.vars.iter().filter(|v| v.kind == VarKind::Binary).map(|v| v.name.as_str()).collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(10) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

fn terms_text<'a>(terms: &[(usize, f64)], name: impl Fn(usize) -> &'a str) -> Vec<String> {
    terms.iter().map(|&(v, c)| format!("{} {}", signed(c), name(v))).collect()
}

fn push_wrapped(out: &mut String, toks: &[String]) {
    for (k, t) in toks.iter().enumerate() {
        if k > 0 && k % 8 == 0 {
            out.push_str("\n   ");
        }
        out.push(' ');
        out.push_str(t);
    }
    out.push('\n');
}

/// Shortest text that parses back to the same `f64`.
fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

fn signed(v: f64) -> String {
    if v.is_sign_negative() {
        format!("- {}", num(-v))
    } else {
        format!("+ {}", num(v))
    }
}

#[derive(PartialEq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    End,
}

/// Reads the LP subset produced by [`write_lp`].
pub fn parse_lp(text: &str) -> Result<MipModel, ModelError> {
    let mut name = String::new();
    let mut section = Section::Preamble;
    let mut objective_toks: Vec<(usize, String)> = Vec::new();
    let mut rows: Vec<(usize, String, Vec<String>)> = Vec::new();
    let mut bounds: Vec<(usize, String, f64, f64)> = Vec::new();
    let mut binaries: Vec<String> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('\\') {
            if let Some(n) = rest.trim().strip_prefix("Problem name:") {
                name = n.trim().to_string();
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        match line.to_ascii_lowercase().as_str() {
            "maximize" | "maximise" | "max" => {
                section = Section::Objective;
                continue;
            }
            "subject to" | "such that" | "st" | "s.t." => {
                section = Section::Constraints;
                continue;
            }
            "bounds" => {
                section = Section::Bounds;
                continue;
            }
            "binaries" | "binary" | "bin" => {
                section = Section::Binaries;
                continue;
            }
            "end" => {
                section = Section::End;
                continue;
            }
            _ => {}
        }
        let toks = line.split_whitespace().map(str::to_string);
        match section {
            Section::Objective => objective_toks.extend(toks.map(|t| (line_no, t))),
            Section::Constraints => {
                for t in toks {
                    if let Some(label) = t.strip_suffix(':') {
                        rows.push((line_no, label.to_string(), Vec::new()));
                    } else {
                        let row = rows.last_mut().ok_or_else(|| perr(line_no, "constraint without a name"))?;
                        row.2.push(t);
                    }
                }
            }
            Section::Bounds => {
                let t: Vec<&str> = line.split_whitespace().collect();
                let [lo, "<=", var, "<=", hi] = t.as_slice() else {
                    return Err(perr(line_no, "expected `lower <= name <= upper`"));
                };
                bounds.push((line_no, var.to_string(), parse_num(lo, line_no)?, parse_num(hi, line_no)?));
            }
            Section::Binaries => binaries.extend(toks),
            Section::Preamble | Section::End => return Err(perr(line_no, "text outside a section")),
        }
    }
    if section != Section::End {
        return Err(perr(text.lines().count(), "missing End"));
    }
    let mut model = MipModel::new(&name);
    let is_binary = |v: &str| binaries.iter().any(|b| b == v);
    for (_, var, lo, hi) in &bounds {
        let kind = if is_binary(var) { VarKind::Binary } else { VarKind::Continuous };
        model.vars.push(Variable { name: var.clone(), kind, lower: *lo, upper: *hi });
        model.index.insert(var.clone(), model.vars.len() - 1);
    }
    let lookup = |model: &MipModel, v: &str, line: usize| model.var(v).ok_or_else(|| perr(line, &format!("undeclared variable {v}")));

    let obj_line = objective_toks.first().map_or(0, |t| t.0);
    let toks: Vec<String> = objective_toks.into_iter().map(|t| t.1).filter(|t| t != "obj:").collect();
    let terms = parse_terms(&toks, obj_line)?;
    let mut obj = Vec::new();
    let mut obj_constant = 0.0;
    for (c, v) in terms {
        match v {
            Some(v) => obj.push((lookup(&model, &v, obj_line)?, c)),
            None => obj_constant += c,
        }
    }
    model.objective = obj;
    model.objective_constant = obj_constant;

    for (line, label, toks) in rows {
        let rel_at = toks
            .iter()
            .position(|t| matches!(t.as_str(), "<=" | ">=" | "=" | "=<" | "=>" | "<" | ">"))
            .ok_or_else(|| perr(line, "constraint without a relation"))?;
        let relation = match toks[rel_at].as_str() {
            "<=" | "=<" | "<" => Relation::Le,
            ">=" | "=>" | ">" => Relation::Ge,
            _ => Relation::Eq,
        };
        if toks.len() != rel_at + 2 {
            return Err(perr(line, "expected a single right-hand side"));
        }
        let rhs = parse_num(&toks[rel_at + 1], line)?;
        let lhs = &toks[..rel_at];
        if lhs.first().map(String::as_str) == Some("[") {
            if lhs.last().map(String::as_str) != Some("]") {
                return Err(perr(line, "unclosed quadratic bracket"));
            }
            let quad = parse_quad(&lhs[1..lhs.len() - 1], line)?;
            let mut terms = Vec::new();
            for (c, a, b) in quad {
                terms.push((lookup(&model, &a, line)?, lookup(&model, &b, line)?, c));
            }
            model.quad_rows.push(QuadRow { name: label, terms, relation, rhs });
        } else {
            let terms = parse_terms(lhs, line)?;
            let mut out = Vec::new();
            for (c, v) in terms {
                let v = v.ok_or_else(|| perr(line, "constant on the left-hand side"))?;
                out.push((lookup(&model, &v, line)?, c));
            }
            model.rows.push(LinearRow { name: label, terms: out, relation, rhs });
        }
    }
    Ok(model)
}

fn perr(line: usize, msg: &str) -> ModelError {
    ModelError::Parse { line, msg: msg.to_string() }
}

fn parse_num(t: &str, line: usize) -> Result<f64, ModelError> {
    match t.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        s => s.parse().map_err(|_| perr(line, &format!("bad number {t}"))),
    }
}

fn is_number(t: &str) -> bool {
    t.parse::<f64>().is_ok() || matches!(t, "inf" | "+inf" | "-inf")
}

/// `[sign] [coef] name` or `[sign] coef` items.
fn parse_terms(toks: &[String], line: usize) -> Result<Vec<(f64, Option<String>)>, ModelError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let mut sign = 1.0;
        if toks[i] == "+" || toks[i] == "-" {
            sign = if toks[i] == "-" { -1.0 } else { 1.0 };
            i += 1;
        }
        let tok = toks.get(i).ok_or_else(|| perr(line, "dangling sign"))?;
        if is_number(tok) {
            let c = sign * parse_num(tok, line)?;
            i += 1;
            match toks.get(i) {
                Some(v) if !is_number(v) && v != "+" && v != "-" => {
                    out.push((c, Some(v.clone())));
                    i += 1;
                }
                _ => out.push((c, None)),
            }
        } else {
            out.push((sign, Some(tok.clone())));
            i += 1;
        }
    }
    Ok(out)
}

fn parse_quad(toks: &[String], line: usize) -> Result<Vec<(f64, String, String)>, ModelError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let mut sign = 1.0;
        if toks[i] == "+" || toks[i] == "-" {
            sign = if toks[i] == "-" { -1.0 } else { 1.0 };
            i += 1;
        }
        let mut c = sign;
        if toks.get(i).is_some_and(|t| is_number(t)) {
            c *= parse_num(&toks[i], line)?;
            i += 1;
        }
        match (toks.get(i), toks.get(i + 1), toks.get(i + 2)) {
            (Some(a), Some(star), Some(b)) if star == "*" => {
                out.push((c, a.clone(), b.clone()));
                i += 3;
            }
            _ => return Err(perr(line, "expected `a * b` in quadratic term")),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_instance, t1};
    use crate::objective::{eval_objective, partition_zones};
    use crate::oracle::tsp_length;

    fn sel(m: usize, locs: &[usize]) -> Selection {
        Selection::from_locations(m, locs)
    }

    #[test]
    fn mtz_counts() {
        let model = build_mtz_model(&t1());
        let arcs = model.vars().iter().filter(|v| matches!(role(&v.name), Some(VarRole::Arc(..)))).count();
        assert_eq!(arcs, 9);
        assert_eq!(model.rows_with_prefix("mtz_").count(), 4);
        assert_eq!(model.rows_with_prefix("in_").count() + model.rows_with_prefix("out_").count(), 4);
        assert!(model.row("start").is_some() && model.row("end").is_some() && model.row("budget").is_some());
    }

    #[test]
    fn mtz_fixed_x_examples() {
        let inst = t1();
        let model = build_mtz_model(&inst);
        assert!(mtz_fixed_x_feasible(&model, &sel(2, &[1, 2])).unwrap());
        let mut tight = t1();
        tight.t_max = 0.0;
        let model = build_mtz_model(&tight);
        assert!(!mtz_fixed_x_feasible(&model, &sel(2, &[1])).unwrap());
        assert!(mtz_fixed_x_feasible(&model, &sel(2, &[])).unwrap());
    }

    #[test]
    fn mtz_matches_tour_oracle() {
        for seed in 0..3 {
            let inst = random_instance(6, 3, seed);
            let model = build_mtz_model(&inst);
            for mask in 0u64..1 << 6 {
                let x = Selection::from_mask(6, mask);
                let oracle = inst.within_budget(tsp_length(&inst, &x).unwrap().length);
                assert_eq!(mtz_fixed_x_feasible(&model, &x).unwrap(), oracle, "seed {seed} mask {mask:b}");
            }
        }
    }

    #[test]
    fn li_examples() {
        let inst = t1();
        let model = build_li_milp(&inst, &WBounds::default_for(&inst)).unwrap();
        let w = model.var("w_1").unwrap();
        assert_eq!((model.vars()[w].lower, model.vars()[w].upper), (0.0, 1.0));
        assert_eq!(model.coefficient("lin1_1_1", "x_1"), Some(-0.5));
        assert_eq!(check_fixed_x_consistency(&model, &inst, &sel(2, &[1])).unwrap(), 0.5);
        assert_eq!(check_fixed_x_consistency(&model, &inst, &sel(2, &[])).unwrap(), 0.0);
        let bad = WBounds { lower: vec![1.0], upper: vec![0.5] };
        assert!(matches!(build_li_milp(&inst, &bad), Err(ModelError::Bounds { zone: 1, .. })));
    }

    #[test]
    fn conic_examples() {
        let inst = t1();
        let conic = build_conic_model(&inst);
        let model = &conic.model;
        assert_eq!(model.objective().1, 1.0);
        assert_eq!(model.objective().0, &[(model.var("w_1").unwrap(), -1.0)]);
        assert_eq!(model.coefficient("rdef_1", "x_1"), Some(-1.0));
        assert_eq!(model.coefficient("rdef_1", "x_2"), Some(-3.0));
        assert_eq!(model.row("rdef_1").unwrap().rhs, 1.0);
        assert_eq!(conic.hyperbolic.len(), 1);
        let f = check_fixed_x_consistency(model, &inst, &sel(2, &[1, 2])).unwrap();
        assert!((f - 0.8).abs() < 1e-12);
        assert_eq!(check_fixed_x_consistency(model, &inst, &sel(2, &[])).unwrap(), 0.0);
    }

    #[test]
    fn reformulations_match_objective() {
        let inst = random_instance(6, 5, 9);
        let li = build_li_milp(&inst, &WBounds::default_for(&inst)).unwrap();
        let conic = build_conic_model(&inst);
        for mask in 0u64..1 << 6 {
            let x = Selection::from_mask(6, mask);
            let f = eval_objective(&inst, &x);
            assert!((check_fixed_x_consistency(&li, &inst, &x).unwrap() - f).abs() <= 1e-9);
            assert!((check_fixed_x_consistency(&conic.model, &inst, &x).unwrap() - f).abs() <= 1e-9);
        }
    }

    #[test]
    fn master_examples() {
        let inst = t1();
        let part = partition_zones(&inst, 1);
        let model = build_master_model(&inst, &part);
        let edges: Vec<&str> = model
            .vars()
            .iter()
            .filter(|v| matches!(role(&v.name), Some(VarRole::Edge(..))))
            .map(|v| v.name.as_str())
            .collect();
        assert_eq!(edges, vec!["e_0_1", "e_0_2", "e_1_2"]);
        assert_eq!(model.vars()[model.var("theta_1").unwrap()].upper, 1.0);
        let deg = model.row("deg_1").unwrap();
        let names: Vec<(&str, f64)> = deg.terms.iter().map(|&(v, c)| (model.vars()[v].name.as_str(), c)).collect();
        assert_eq!(names, vec![("e_0_1", 1.0), ("e_1_2", 1.0), ("x_1", -2.0)]);
        assert_eq!(deg.rhs, 0.0);
    }

    #[test]
    fn master_is_not_a_reformulation() {
        let inst = t1();
        let model = build_master_model(&inst, &partition_zones(&inst, 1));
        assert_eq!(check_fixed_x_consistency(&model, &inst, &sel(2, &[1])), Err(ModelError::NotReformulation));
    }

    #[test]
    fn lp_round_trips() {
        let inst = random_instance(5, 4, 1);
        let part = partition_zones(&inst, 2);
        let models = [
            build_master_model(&inst, &part),
            build_li_milp(&inst, &WBounds::default_for(&inst)).unwrap(),
            build_conic_model(&inst).model,
            build_master_model(&t1(), &partition_zones(&t1(), 1)),
        ];
        for model in models {
            let text = write_lp(&model);
            assert_eq!(parse_lp(&text).unwrap(), model);
        }
        let conic_text = write_lp(&build_conic_model(&t1()).model);
        assert!(conic_text.contains(" hyp_1: [ 1 r_1 * w_1 ] >= 1\n"));
    }

    #[test]
    fn lp_degenerate_model() {
        let mut model = MipModel::new("empty");
        model.add_var("z", VarKind::Continuous, 0.0, 2.5);
        let text = write_lp(&model);
        assert!(text.contains("Subject To\nBounds\n 0 <= z <= 2.5\nEnd\n"));
        assert_eq!(parse_lp(&text).unwrap(), model);
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5e20, 7.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(3.0), "3");
    }
}
