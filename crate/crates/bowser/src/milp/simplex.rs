//! Bounded-variable simplex engine.
//!
//! Works on the computational form `min c x : A x + s = b, l <= (x, s) <= u`
//! with one slack per row. A dense explicit basis inverse is maintained
//! across pivots; the engine persists across branch-and-bound nodes so that
//! node re-solves are warm dual-simplex runs (reduced costs do not depend on
//! bounds, so any optimal basis stays dual feasible after bound changes).
//!
//! Root solves use the two-phase primal simplex with a long-step composite
//! phase 1; entering-variable selection is Dantzig pricing with a Bland-rule
//! fallback after a stall.

use super::model::{MilpModel, Sense};

const PIVOT_TOL: f64 = 1e-9;
const DJ_TOL: f64 = 1e-7;
const BOUND_TOL: f64 = 1e-7;
const STALL_LIMIT: u64 = 500;
const REFACTOR_EVERY: u64 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VStat {
    Basic,
    Lower,
    Upper,
}

/// Snapshot of a basis: which variable sits in each row plus every column's
/// status.
#[derive(Debug, Clone)]
pub(crate) struct BasisSnapshot {
    pub basic: Vec<u32>,
    pub stat: Vec<VStat>,
}

#[derive(Debug)]
pub(crate) enum LpFailure {
    /// Iteration limit hit without convergence; caller should fall back to a
    /// cold primal solve.
    Stalled,
}

/// Computational form of the LP with mutable bounds.
pub(crate) struct LpCore {
    pub nrows: usize,
    pub nstruct: usize,
    /// Sparse columns, structural then slack; slack `i` is column
    /// `nstruct + i` with a single unit entry.
    pub cols: Vec<Vec<(u32, f64)>>,
    pub cost: Vec<f64>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpCore {
    pub fn ncols(&self) -> usize {
        self.nstruct + self.nrows
    }

    /// Builds the computational form of a model; binaries become their [0, 1]
    /// boxes (integrality lives in the branch-and-bound layer).
    pub fn from_model(model: &MilpModel) -> Self {
        let nstruct = model.num_vars();
        let nrows = model.num_constraints();
        let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nstruct + nrows];
        let mut cost = vec![0.0; nstruct + nrows];
        let mut rhs = vec![0.0; nrows];
        let mut lower = vec![0.0; nstruct + nrows];
        let mut upper = vec![0.0; nstruct + nrows];
        for (j, v) in model.vars().iter().enumerate() {
            lower[j] = v.lb;
            upper[j] = v.ub;
        }
        for &(v, c) in model.objective() {
            cost[v.index()] += c;
        }
        for (i, con) in model.constraints().iter().enumerate() {
            rhs[i] = con.rhs;
            for &(v, a) in &con.terms {
                if a != 0.0 {
                    cols[v.index()].push((i as u32, a));
                }
            }
            let s = nstruct + i;
            cols[s].push((i as u32, 1.0));
            match con.sense {
                Sense::Le => {
                    lower[s] = 0.0;
                    upper[s] = f64::INFINITY;
                }
                Sense::Ge => {
                    lower[s] = f64::NEG_INFINITY;
                    upper[s] = 0.0;
                }
                Sense::Eq => {
                    lower[s] = 0.0;
                    upper[s] = 0.0;
                }
            }
        }
        LpCore { nrows, nstruct, cols, cost, rhs, lower, upper }
    }
}

pub(crate) struct Engine {
    pub core: LpCore,
    binv: Vec<f64>,
    basic: Vec<usize>,
    stat: Vec<VStat>,
    xb: Vec<f64>,
    pub iterations: u64,
    pivots_since_factor: u64,
}

impl Engine {
    pub fn new(core: LpCore) -> Self {
        let m = core.nrows;
        let ncols = core.ncols();
        let mut e = Engine {
            core,
            binv: vec![0.0; m * m],
            basic: (0..m).map(|i| 0usize + i).collect(),
            stat: vec![VStat::Lower; ncols],
            xb: vec![0.0; m],
            iterations: 0,
            pivots_since_factor: 0,
        };
        e.reset_to_slack_basis();
        e
    }

    pub fn snapshot(&self) -> BasisSnapshot {
        BasisSnapshot {
            basic: self.basic.iter().map(|&b| b as u32).collect(),
            stat: self.stat.clone(),
        }
    }

    pub fn restore(&mut self, snap: &BasisSnapshot) -> bool {
        self.basic = snap.basic.iter().map(|&b| b as usize).collect();
        self.stat = snap.stat.clone();
        self.normalize_nonbasic_statuses();
        if !self.factorize() {
            self.reset_to_slack_basis();
            return false;
        }
        self.compute_xb();
        true
    }

    pub fn reset_to_slack_basis(&mut self) {
        let m = self.core.nrows;
        for i in 0..m {
            self.basic[i] = self.core.nstruct + i;
        }
        for j in 0..self.core.ncols() {
            self.stat[j] = VStat::Lower;
        }
        for i in 0..m {
            self.stat[self.core.nstruct + i] = VStat::Basic;
        }
        self.normalize_nonbasic_statuses();
        self.binv.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            self.binv[i * m + i] = 1.0;
        }
        self.pivots_since_factor = 0;
        self.compute_xb();
    }

    /// Puts every nonbasic column on a finite bound, preferring the one that
    /// keeps reduced-cost sign conventions (dual feasibility against the real
    /// objective) where both bounds are finite.
    pub fn normalize_nonbasic_statuses(&mut self) {
        for j in 0..self.core.ncols() {
            match self.stat[j] {
                VStat::Basic => {}
                VStat::Lower if self.core.lower[j].is_finite() => {}
                VStat::Upper if self.core.upper[j].is_finite() => {}
                _ => {
                    self.stat[j] = if self.core.lower[j].is_finite() {
                        VStat::Lower
                    } else {
                        VStat::Upper
                    };
                }
            }
        }
    }

    fn nb_value(&self, j: usize) -> f64 {
        match self.stat[j] {
            VStat::Basic => unreachable!("value of a basic column"),
            VStat::Lower => self.core.lower[j],
            VStat::Upper => self.core.upper[j],
        }
    }

    pub fn compute_xb(&mut self) {
        let m = self.core.nrows;
        let mut r = self.core.rhs.clone();
        for j in 0..self.core.ncols() {
            if self.stat[j] == VStat::Basic {
                continue;
            }
            let v = self.nb_value(j);
            if v != 0.0 {
                for &(i, a) in &self.core.cols[j] {
                    r[i as usize] -= a * v;
                }
            }
        }
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            self.xb[k] = row.iter().zip(&r).map(|(b, rr)| b * rr).sum();
        }
    }

    /// Dense Gauss-Jordan inversion of the basis matrix. Returns false on a
    /// (numerically) singular basis.
    fn factorize(&mut self) -> bool {
        let m = self.core.nrows;
        let mut b = vec![0.0; m * m];
        for (r, &col) in self.basic.iter().enumerate() {
            for &(i, a) in &self.core.cols[col] {
                b[i as usize * m + r] = a;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv_row = col;
            let mut piv_val = b[col * m + col].abs();
            for r in col + 1..m {
                let v = b[r * m + col].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_val < 1e-11 {
                return false;
            }
            if piv_row != col {
                for k in 0..m {
                    b.swap(piv_row * m + k, col * m + k);
                    inv.swap(piv_row * m + k, col * m + k);
                }
            }
            let p = b[col * m + col];
            for k in 0..m {
                b[col * m + k] /= p;
                inv[col * m + k] /= p;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = b[r * m + col];
                if f != 0.0 {
                    for k in 0..m {
                        b[r * m + k] -= f * b[col * m + k];
                        inv[r * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        self.pivots_since_factor = 0;
        true
    }

    /// `y = cb^T B^{-1}` for a per-row coefficient vector.
    fn btran(&self, cb: &[f64]) -> Vec<f64> {
        let m = self.core.nrows;
        let mut y = vec![0.0; m];
        for (k, &c) in cb.iter().enumerate() {
            if c != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                for i in 0..m {
                    y[i] += c * row[i];
                }
            }
        }
        y
    }

    /// `d = B^{-1} A_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.core.nrows;
        let mut d = vec![0.0; m];
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            let mut acc = 0.0;
            for &(i, a) in &self.core.cols[j] {
                acc += row[i as usize] * a;
            }
            d[k] = acc;
        }
        d
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        let mut r = self.core.cost[j];
        for &(i, a) in &self.core.cols[j] {
            r -= y[i as usize] * a;
        }
        r
    }

    fn pivot(&mut self, row: usize, entering: usize, d: &[f64]) {
        let m = self.core.nrows;
        let piv = d[row];
        debug_assert!(piv.abs() > PIVOT_TOL / 10.0);
        let (before, rest) = self.binv.split_at_mut(row * m);
        let (prow, after) = rest.split_at_mut(m);
        let inv_piv = 1.0 / piv;
        for k in 0..m {
            prow[k] *= inv_piv;
        }
        for (r, chunk) in before.chunks_exact_mut(m).enumerate() {
            let f = d[r];
            if f != 0.0 {
                for k in 0..m {
                    chunk[k] -= f * prow[k];
                }
            }
        }
        for (off, chunk) in after.chunks_exact_mut(m).enumerate() {
            let f = d[row + 1 + off];
            if f != 0.0 {
                for k in 0..m {
                    chunk[k] -= f * prow[k];
                }
            }
        }
        self.basic[row] = entering;
        self.stat[entering] = VStat::Basic;
        self.pivots_since_factor += 1;
        if self.pivots_since_factor >= REFACTOR_EVERY {
            if !self.factorize() {
                self.reset_to_slack_basis();
            }
            self.compute_xb();
        }
    }

    fn infeasibility(&self) -> f64 {
        let mut f = 0.0;
        for (k, &col) in self.basic.iter().enumerate() {
            let x = self.xb[k];
            f += (self.core.lower[col] - x).max(0.0) + (x - self.core.upper[col]).max(0.0);
        }
        f
    }

    /// Two-phase bounded primal simplex from the current basis.
    pub fn primal(&mut self) -> Result<LpStatus, LpFailure> {
        if self.infeasibility() > BOUND_TOL {
            if !self.phase1()? {
                return Ok(LpStatus::Infeasible);
            }
        }
        self.phase2()
    }

    /// Long-step composite phase 1: minimizes total bound violation of the
    /// basic variables, letting blocking variables pass through bounds while
    /// the directional derivative stays negative.
    fn phase1(&mut self) -> Result<bool, LpFailure> {
        let m = self.core.nrows;
        let mut stall = 0u64;
        let mut best_f = f64::INFINITY;
        let max_iters = 200 * (m as u64 + self.core.nstruct as u64) + 20_000;
        let mut local_iters = 0u64;
        loop {
            let f = self.infeasibility();
            if f <= BOUND_TOL {
                return Ok(true);
            }
            if local_iters > max_iters {
                return Err(LpFailure::Stalled);
            }
            if f < best_f - 1e-12 {
                best_f = f;
                stall = 0;
            } else {
                stall += 1;
            }
            let bland = stall > STALL_LIMIT;

            let mut grad = vec![0.0; m];
            for (k, &col) in self.basic.iter().enumerate() {
                if self.xb[k] < self.core.lower[col] - BOUND_TOL {
                    grad[k] = -1.0;
                } else if self.xb[k] > self.core.upper[col] + BOUND_TOL {
                    grad[k] = 1.0;
                }
            }
            let y = self.btran(&grad);

            let mut entering = None;
            let mut best_score = DJ_TOL;
            for j in 0..self.core.ncols() {
                let (sigma, score) = match self.stat[j] {
                    VStat::Basic => continue,
                    VStat::Lower => {
                        let r1 = -self.dot_col(j, &y);
                        (1.0, -r1)
                    }
                    VStat::Upper => {
                        let r1 = -self.dot_col(j, &y);
                        (-1.0, r1)
                    }
                };
                if score > best_score {
                    entering = Some((j, sigma, score));
                    if bland {
                        break;
                    }
                    best_score = score;
                }
            }
            let Some((q, sigma, score)) = entering else {
                return Ok(false); // no descent direction: f > 0 is minimal
            };

            let d = self.ftran(q);
            // breakpoints of the piecewise-linear infeasibility along the ray
            let mut bps: Vec<(f64, f64, usize, VStat)> = Vec::new();
            for k in 0..m {
                let dir = -sigma * d[k];
                if dir.abs() <= PIVOT_TOL {
                    continue;
                }
                let col = self.basic[k];
                let (x, l, u) = (self.xb[k], self.core.lower[col], self.core.upper[col]);
                if dir > 0.0 {
                    if x < l - BOUND_TOL {
                        bps.push(((l - x) / dir, dir, k, VStat::Lower));
                        if u.is_finite() {
                            bps.push(((u - x) / dir, dir, k, VStat::Upper));
                        }
                    } else if u.is_finite() && x <= u + BOUND_TOL {
                        bps.push((((u - x) / dir).max(0.0), dir, k, VStat::Upper));
                    }
                } else {
                    let dn = -dir;
                    if x > u + BOUND_TOL {
                        bps.push(((x - u) / dn, dn, k, VStat::Upper));
                        if l.is_finite() {
                            bps.push(((x - l) / dn, dn, k, VStat::Lower));
                        }
                    } else if l.is_finite() && x >= l - BOUND_TOL {
                        bps.push((((x - l) / dn).max(0.0), dn, k, VStat::Lower));
                    }
                }
            }
            let range = self.core.upper[q] - self.core.lower[q];
            bps.sort_by(|a, b| a.0.total_cmp(&b.0).then(self.basic[a.2].cmp(&self.basic[b.2])));

            let mut slope = -score;
            let mut chosen: Option<(f64, usize, VStat)> = None;
            for &(theta, delta, k, bound) in &bps {
                if range.is_finite() && range < theta {
                    break; // bound flip happens first
                }
                slope += delta;
                if slope >= -1e-12 {
                    chosen = Some((theta, k, bound));
                    break;
                }
            }
            self.iterations += 1;
            local_iters += 1;
            match chosen {
                Some((theta, row, bound)) => {
                    for k in 0..m {
                        self.xb[k] += -sigma * d[k] * theta;
                    }
                    let entering_value = self.nb_value(q) + sigma * theta;
                    let leaving = self.basic[row];
                    self.stat[leaving] = bound;
                    self.pivot(row, q, &d);
                    self.xb[row] = entering_value;
                }
                None if range.is_finite() => {
                    for k in 0..m {
                        self.xb[k] += -sigma * d[k] * range;
                    }
                    self.stat[q] = match self.stat[q] {
                        VStat::Lower => VStat::Upper,
                        VStat::Upper => VStat::Lower,
                        VStat::Basic => unreachable!(),
                    };
                }
                None => return Err(LpFailure::Stalled), // no blocking: numerically lost
            }
        }
    }

    /// Bounded primal simplex on the true objective from a primal-feasible
    /// basis.
    fn phase2(&mut self) -> Result<LpStatus, LpFailure> {
        let m = self.core.nrows;
        let mut stall = 0u64;
        let mut best_z = f64::INFINITY;
        let max_iters = 200 * (m as u64 + self.core.nstruct as u64) + 20_000;
        let mut local_iters = 0u64;
        let mut cb = vec![0.0; m];
        loop {
            if local_iters > max_iters {
                return Err(LpFailure::Stalled);
            }
            for (k, &col) in self.basic.iter().enumerate() {
                cb[k] = self.core.cost[col];
            }
            let y = self.btran(&cb);
            let z = self.objective_value();
            if z < best_z - 1e-12 {
                best_z = z;
                stall = 0;
            } else {
                stall += 1;
            }
            let bland = stall > STALL_LIMIT;

            let mut entering = None;
            let mut best_score = DJ_TOL;
            for j in 0..self.core.ncols() {
                let (sigma, score) = match self.stat[j] {
                    VStat::Basic => continue,
                    VStat::Lower => {
                        let r = self.reduced_cost(j, &y);
                        (1.0, -r)
                    }
                    VStat::Upper => {
                        let r = self.reduced_cost(j, &y);
                        (-1.0, r)
                    }
                };
                if score > best_score {
                    entering = Some((j, sigma));
                    if bland {
                        break;
                    }
                    best_score = score;
                }
            }
            let Some((q, sigma)) = entering else {
                return Ok(LpStatus::Optimal);
            };

            let d = self.ftran(q);
            let mut theta = self.core.upper[q] - self.core.lower[q];
            let mut blocker: Option<(usize, VStat)> = None;
            let mut block_piv = 0.0f64;
            for k in 0..m {
                let dir = -sigma * d[k];
                if dir.abs() <= PIVOT_TOL {
                    continue;
                }
                let col = self.basic[k];
                let (x, l, u) = (self.xb[k], self.core.lower[col], self.core.upper[col]);
                let t = if dir > 0.0 {
                    if !u.is_finite() {
                        continue;
                    }
                    ((u - x) / dir).max(0.0)
                } else {
                    if !l.is_finite() {
                        continue;
                    }
                    ((l - x) / dir).max(0.0)
                };
                let better = t < theta - 1e-12
                    || (t < theta + 1e-12
                        && (dir.abs() > block_piv + 1e-12
                            || (blocker.is_none() && !theta.is_finite())));
                if better {
                    theta = t;
                    block_piv = dir.abs();
                    blocker = Some((k, if dir > 0.0 { VStat::Upper } else { VStat::Lower }));
                }
            }
            if !theta.is_finite() {
                return Ok(LpStatus::Unbounded);
            }
            self.iterations += 1;
            local_iters += 1;
            match blocker {
                Some((row, bound)) => {
                    for k in 0..m {
                        self.xb[k] += -sigma * d[k] * theta;
                    }
                    let entering_value = self.nb_value(q) + sigma * theta;
                    let leaving = self.basic[row];
                    self.stat[leaving] = bound;
                    self.pivot(row, q, &d);
                    self.xb[row] = entering_value;
                }
                None => {
                    for k in 0..m {
                        self.xb[k] += -sigma * d[k] * theta;
                    }
                    self.stat[q] = match self.stat[q] {
                        VStat::Lower => VStat::Upper,
                        VStat::Upper => VStat::Lower,
                        VStat::Basic => unreachable!(),
                    };
                }
            }
        }
    }

    /// Bounded dual simplex from a dual-feasible basis; used for warm node
    /// re-solves after bound changes.
    pub fn dual(&mut self) -> Result<LpStatus, LpFailure> {
        let m = self.core.nrows;
        let max_iters = 200 * (m as u64 + self.core.nstruct as u64) + 20_000;
        let mut local_iters = 0u64;
        let mut cb = vec![0.0; m];
        loop {
            if local_iters > max_iters {
                return Err(LpFailure::Stalled);
            }
            let mut row = None;
            let mut worst = BOUND_TOL;
            for k in 0..m {
                let col = self.basic[k];
                let below = self.core.lower[col] - self.xb[k];
                let above = self.xb[k] - self.core.upper[col];
                let v = below.max(above);
                if v > worst {
                    worst = v;
                    row = Some((k, below > above));
                }
            }
            let Some((r, needs_increase)) = row else {
                return Ok(LpStatus::Optimal);
            };

            for (k, &col) in self.basic.iter().enumerate() {
                cb[k] = self.core.cost[col];
            }
            let y = self.btran(&cb);
            let rho = &self.binv[r * m..(r + 1) * m];
            let mut entering = None;
            let mut best_ratio = f64::INFINITY;
            for j in 0..self.core.ncols() {
                if self.stat[j] == VStat::Basic {
                    continue;
                }
                let mut alpha = 0.0;
                for &(i, a) in &self.core.cols[j] {
                    alpha += rho[i as usize] * a;
                }
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let eligible = match (self.stat[j], needs_increase) {
                    (VStat::Lower, true) => alpha < 0.0,
                    (VStat::Lower, false) => alpha > 0.0,
                    (VStat::Upper, true) => alpha > 0.0,
                    (VStat::Upper, false) => alpha < 0.0,
                    (VStat::Basic, _) => unreachable!(),
                };
                if !eligible {
                    continue;
                }
                let rc = self.reduced_cost(j, &y);
                let ratio = rc.abs() / alpha.abs();
                if ratio < best_ratio - 1e-12 {
                    best_ratio = ratio;
                    entering = Some((j, alpha));
                }
            }
            let Some((q, alpha)) = entering else {
                return Ok(LpStatus::Infeasible);
            };

            let col = self.basic[r];
            let target =
                if needs_increase { self.core.lower[col] } else { self.core.upper[col] };
            let delta = (self.xb[r] - target) / alpha;
            let d = self.ftran(q);
            for k in 0..m {
                self.xb[k] -= delta * d[k];
            }
            let entering_value = self.nb_value(q) + delta;
            self.stat[col] = if needs_increase { VStat::Lower } else { VStat::Upper };
            self.pivot(r, q, &d);
            self.xb[r] = entering_value;
            self.iterations += 1;
            local_iters += 1;
        }
    }

    fn dot_col(&self, j: usize, y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &(i, a) in &self.core.cols[j] {
            acc += y[i as usize] * a;
        }
        acc
    }

    pub fn objective_value(&self) -> f64 {
        let mut z = 0.0;
        for (k, &col) in self.basic.iter().enumerate() {
            z += self.core.cost[col] * self.xb[k];
        }
        for j in 0..self.core.ncols() {
            if self.stat[j] != VStat::Basic && self.core.cost[j] != 0.0 {
                z += self.core.cost[j] * self.nb_value(j);
            }
        }
        z
    }

    /// Structural solution vector.
    pub fn solution(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.core.nstruct];
        for j in 0..self.core.nstruct {
            if self.stat[j] != VStat::Basic {
                x[j] = self.nb_value(j);
            }
        }
        for (k, &col) in self.basic.iter().enumerate() {
            if col < self.core.nstruct {
                x[col] = self.xb[k];
            }
        }
        x
    }

    /// Largest bound violation over basic variables (diagnostic).
    pub fn primal_infeasibility(&self) -> f64 {
        let mut worst = 0.0f64;
        for (k, &col) in self.basic.iter().enumerate() {
            worst = worst
                .max(self.core.lower[col] - self.xb[k])
                .max(self.xb[k] - self.core.upper[col]);
        }
        worst
    }

    pub fn refactorize(&mut self) -> bool {
        let ok = self.factorize();
        if ok {
            self.compute_xb();
        }
        ok
    }
}
