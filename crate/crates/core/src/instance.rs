//! Problem data for maximum capture with routing constraints.
//!
//! Locations are numbered `1..=m` with the depot at index 0. Each customer
//! zone carries a demand weight, the attraction mass of the competitor
//! facilities and one attraction value per candidate location.
//!
//! # Text format
//!
//! ```text
//! # comment lines start with '#'
//! MCPR <name> <m> <n_zones> <C> <T_max>
//! <m + 1 coordinate lines "idx x y">   or   MATRIX followed by (m+1)^2 times
//! <n_zones lines "q U_comp V_1 ... V_m">
//! ```

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const SYMMETRY_TOL: f64 = 1e-9;
const EXP_CLAMP: f64 = 700.0;

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-positive utility in zone {zone}: {what} = {value}")]
    NonPositiveUtility { zone: usize, what: String, value: f64 },
    #[error("non-positive demand in zone {zone}: q = {value}")]
    NonPositiveDemand { zone: usize, value: f64 },
    #[error("asymmetric travel matrix: t[{i}][{j}] = {a} but t[{j}][{i}] = {b}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("invalid travel time t[{i}][{j}] = {value}")]
    InvalidTravel { i: usize, j: usize, value: f64 },
    #[error("cardinality cap {cap} outside [0, {m}]")]
    Cap { cap: usize, m: usize },
    #[error("invalid time budget {0}")]
    Budget(f64),
    #[error("empty input: {0}")]
    Empty(&'static str),
}

/// Dense symmetric travel-time matrix over the depot and all locations.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TravelMatrix {
    /// Builds a matrix from row-major data of size `n * n`.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self, InstanceError> {
        if n == 0 {
            return Err(InstanceError::Empty("travel matrix"));
        }
        if data.len() != n * n {
            return Err(InstanceError::Dimension(format!(
                "travel matrix needs {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        let m = TravelMatrix { n, data };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), InstanceError> {
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.get(i, j);
                if !v.is_finite() || v < 0.0 || (i == j && v != 0.0) {
                    return Err(InstanceError::InvalidTravel { i, j, value: v });
                }
                let w = self.get(j, i);
                if (v - w).abs() > SYMMETRY_TOL {
                    return Err(InstanceError::Asymmetric { i, j, a: v, b: w });
                }
            }
        }
        Ok(())
    }

    /// Number of nodes (depot included).
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Euclidean distances between points; the depot is the first point.
pub fn euclidean_travel_matrix(coords: &[(f64, f64)]) -> Result<TravelMatrix, InstanceError> {
    if coords.is_empty() {
        return Err(InstanceError::Empty("coordinate list"));
    }
    let n = coords.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (dx, dy) = (coords[i].0 - coords[j].0, coords[i].1 - coords[j].1);
            let d = dx.hypot(dy);
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    TravelMatrix::from_rows(n, data)
}

/// A customer zone.
#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    /// Number of customers.
    pub q: f64,
    /// Competitor attraction mass.
    pub u_comp: f64,
    /// Attraction of each candidate location (index 0 is location 1).
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub m: usize,
    pub zones: Vec<Zone>,
    pub travel: TravelMatrix,
    pub t_max: f64,
    pub cap_c: usize,
}

impl Instance {
    pub fn new(
        name: impl Into<String>,
        zones: Vec<Zone>,
        travel: TravelMatrix,
        t_max: f64,
        cap_c: usize,
    ) -> Result<Self, InstanceError> {
        let inst = Instance {
            name: name.into(),
            m: travel.size() - 1,
            zones,
            travel,
            t_max,
            cap_c,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Checks every data invariant.
    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.travel.size() != self.m + 1 {
            return Err(InstanceError::Dimension(format!(
                "travel matrix is {}x{}, expected {}",
                self.travel.size(),
                self.travel.size(),
                self.m + 1
            )));
        }
        self.travel.validate()?;
        if self.cap_c > self.m {
            return Err(InstanceError::Cap { cap: self.cap_c, m: self.m });
        }
        if !self.t_max.is_finite() || self.t_max < 0.0 {
            return Err(InstanceError::Budget(self.t_max));
        }
        for (n, z) in self.zones.iter().enumerate() {
            if z.v.len() != self.m {
                return Err(InstanceError::Dimension(format!(
                    "zone {n} has {} attractions, expected {}",
                    z.v.len(),
                    self.m
                )));
            }
            if !z.q.is_finite() || z.q <= 0.0 {
                return Err(InstanceError::NonPositiveDemand { zone: n, value: z.q });
            }
            if !z.u_comp.is_finite() || z.u_comp <= 0.0 {
                return Err(InstanceError::NonPositiveUtility {
                    zone: n,
                    what: "U_comp".into(),
                    value: z.u_comp,
                });
            }
            for (i, &v) in z.v.iter().enumerate() {
                if !v.is_finite() || v <= 0.0 {
                    return Err(InstanceError::NonPositiveUtility {
                        zone: n,
                        what: format!("V_{}", i + 1),
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n_zones(&self) -> usize {
        self.zones.len()
    }

    #[inline]
    pub fn t(&self, i: usize, j: usize) -> f64 {
        self.travel.get(i, j)
    }

    /// Budget test shared by every method, with a relative slack of 1e-9 so
    /// that tours summed in different orders agree at the boundary.
    #[inline]
    pub fn within_budget(&self, length: f64) -> bool {
        length <= self.t_max + 1e-9 * self.t_max.max(1.0)
    }

    /// Total demand `sum_n q_n`.
    pub fn total_demand(&self) -> f64 {
        self.zones.iter().map(|z| z.q).sum()
    }

    /// Writes the instance in the documented text format (matrix form).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "MCPR {} {} {} {} {}",
            self.name,
            self.m,
            self.zones.len(),
            self.cap_c,
            self.t_max
        );
        out.push_str("MATRIX\n");
        for i in 0..=self.m {
            let row: Vec<String> = self.travel.row(i).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        for z in &self.zones {
            let _ = write!(out, "{} {}", z.q, z.u_comp);
            for v in &z.v {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> InstanceError {
    InstanceError::Syntax { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, InstanceError> {
    tok.parse::<T>()
        .map_err(|_| syntax(line, format!("cannot parse {what} from '{tok}'")))
}

/// Parses the documented instance text format.
pub fn parse_instance(text: &str) -> Result<Instance, InstanceError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or(InstanceError::Empty("instance file"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 6 || h[0] != "MCPR" {
        return Err(syntax(hline, "expected header 'MCPR <name> <m> <n_zones> <C> <T_max>'"));
    }
    let name = h[1].to_string();
    let m: usize = parse_num(h[2], hline, "m")?;
    let n_zones: usize = parse_num(h[3], hline, "n_zones")?;
    let cap_c: usize = parse_num(h[4], hline, "C")?;
    let t_max: f64 = parse_num(h[5], hline, "T_max")?;
    let n = m + 1;

    let (first_no, first) = lines.next().ok_or_else(|| syntax(hline, "missing travel section"))?;
    let travel = if first == "MATRIX" {
        let mut data = Vec::with_capacity(n * n);
        let mut last = first_no;
        while data.len() < n * n {
            let (no, l) = lines
                .next()
                .ok_or_else(|| InstanceError::Dimension(format!("MATRIX section has {} of {} entries", data.len(), n * n)))?;
            last = no;
            for tok in l.split_whitespace() {
                data.push(parse_num::<f64>(tok, no, "travel time")?);
            }
        }
        if data.len() != n * n {
            return Err(syntax(last, format!("MATRIX section has {} entries, expected {}", data.len(), n * n)));
        }
        TravelMatrix::from_rows(n, data)?
    } else {
        let mut coords = vec![None; n];
        let mut pending = Some((first_no, first));
        for _ in 0..n {
            let (no, l) = match pending.take() {
                Some(p) => p,
                None => lines
                    .next()
                    .ok_or_else(|| InstanceError::Dimension(format!("expected {n} coordinate lines")))?,
            };
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(syntax(no, "coordinate line must be 'idx x y'"));
            }
            let idx: usize = parse_num(toks[0], no, "node index")?;
            if idx >= n || coords[idx].is_some() {
                return Err(syntax(no, format!("bad or repeated node index {idx}")));
            }
            coords[idx] = Some((parse_num::<f64>(toks[1], no, "x")?, parse_num::<f64>(toks[2], no, "y")?));
        }
        let coords: Vec<(f64, f64)> = coords.into_iter().map(|c| c.unwrap()).collect();
        euclidean_travel_matrix(&coords)?
    };

    let mut zones = Vec::with_capacity(n_zones);
    for _ in 0..n_zones {
        let (no, l) = lines
            .next()
            .ok_or_else(|| InstanceError::Dimension(format!("expected {n_zones} zone lines, got {}", zones.len())))?;
        let vals: Vec<f64> = l
            .split_whitespace()
            .map(|t| parse_num::<f64>(t, no, "zone value"))
            .collect::<Result<_, _>>()?;
        if vals.len() != m + 2 {
            return Err(InstanceError::Dimension(format!(
                "line {no}: zone line has {} values, expected {}",
                vals.len(),
                m + 2
            )));
        }
        zones.push(Zone { q: vals[0], u_comp: vals[1], v: vals[2..].to_vec() });
    }
    if let Some((no, _)) = lines.next() {
        return Err(syntax(no, "trailing content after zone lines"));
    }
    Instance::new(name, zones, travel, t_max, cap_c)
}

/// Attraction data derived from deterministic utilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneUtilities {
    /// `v[n][i] = exp(v_ni - v_n)`.
    pub v: Vec<Vec<f64>>,
    /// Competitor mass per zone, `exp(v_n - v_n) = 1`.
    pub u_comp: Vec<f64>,
    /// Number of exponent arguments that had to be clamped.
    pub clamped: usize,
}

/// Normalizes raw utilities by the competitor utility of each zone.
pub fn make_utilities(v_raw: &[Vec<f64>], v_comp: &[f64]) -> Result<ZoneUtilities, InstanceError> {
    if v_raw.len() != v_comp.len() {
        return Err(InstanceError::Dimension(format!(
            "{} utility rows but {} competitor utilities",
            v_raw.len(),
            v_comp.len()
        )));
    }
    let mut clamped = 0;
    let mut exp_clamped = |a: f64| {
        if a.abs() > EXP_CLAMP {
            clamped += 1;
            a.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
        } else {
            a.exp()
        }
    };
    let mut v = Vec::with_capacity(v_raw.len());
    let mut u_comp = Vec::with_capacity(v_raw.len());
    for (row, &vn) in v_raw.iter().zip(v_comp) {
        v.push(row.iter().map(|&vi| exp_clamped(vi - vn)).collect());
        u_comp.push(1.0);
    }
    if clamped > 0 {
        log::warn!("make_utilities: clamped {clamped} exponent arguments to +/-{EXP_CLAMP}");
    }
    Ok(ZoneUtilities { v, u_comp, clamped })
}

/// One copy of `inst` per multiplier, with the time budget scaled.
pub fn derive_budget_variants(inst: &Instance, multipliers: &[f64]) -> Vec<Instance> {
    multipliers
        .iter()
        .map(|&k| Instance { t_max: inst.t_max * k, ..inst.clone() })
        .collect()
}

/// Knobs for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub m: usize,
    pub n_zones: usize,
    pub seed: u64,
    /// Side length of the square the points are drawn from.
    pub side: f64,
    /// `t_max` as a fraction of a nearest-neighbour tour over all nodes.
    pub budget_ratio: f64,
    /// Cardinality cap; `None` means `m`.
    pub cap: Option<usize>,
}

impl SyntheticConfig {
    pub fn new(m: usize, n_zones: usize, seed: u64) -> Self {
        SyntheticConfig { m, n_zones, seed, side: 100.0, budget_ratio: 0.5, cap: None }
    }
}

/// Closed nearest-neighbour tour from the depot through every node.
fn nearest_neighbor_tour_length(travel: &TravelMatrix) -> f64 {
    let n = travel.size();
    let mut seen = vec![false; n];
    seen[0] = true;
    let (mut cur, mut len) = (0, 0.0);
    for _ in 1..n {
        let next = (0..n)
            .filter(|&j| !seen[j])
            .min_by(|&a, &b| travel.get(cur, a).total_cmp(&travel.get(cur, b)))
            .unwrap();
        len += travel.get(cur, next);
        seen[next] = true;
        cur = next;
    }
    len + travel.get(cur, 0)
}

/// Random Euclidean instance. Deterministic for a given configuration.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Instance, InstanceError> {
    if cfg.m == 0 {
        return Err(InstanceError::Empty("m must be at least 1"));
    }
    if cfg.n_zones == 0 {
        return Err(InstanceError::Empty("n_zones must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = cfg.side / 2.0;
    let mut coords = vec![(half, half)];
    for _ in 0..cfg.m {
        coords.push((rng.gen_range(0.0..cfg.side), rng.gen_range(0.0..cfg.side)));
    }
    let travel = euclidean_travel_matrix(&coords)?;

    let v_raw: Vec<Vec<f64>> = (0..cfg.n_zones)
        .map(|_| (0..cfg.m).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    let q: Vec<f64> = (0..cfg.n_zones).map(|_| rng.gen_range(1..=100u32) as f64).collect();
    let util = make_utilities(&v_raw, &vec![0.0; cfg.n_zones])?;
    let zones = util
        .v
        .into_iter()
        .zip(util.u_comp)
        .zip(q)
        .map(|((v, u_comp), q)| Zone { q, u_comp, v })
        .collect();

    let t_max = cfg.budget_ratio * nearest_neighbor_tour_length(&travel);
    let name = format!("syn_m{}_n{}_s{}", cfg.m, cfg.n_zones, cfg.seed);
    Instance::new(name, zones, travel, t_max, cfg.cap.unwrap_or(cfg.m))
}
