use super::DiscreteDist;

/// An affine piece `slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub slope: f64,
    pub intercept: f64,
}

/// Max-of-affine function on a domain, used as a convex lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    pub segments: Vec<Segment>,
    pub domain: (f64, f64),
}

impl PiecewiseLinear {
    /// Pointwise maximum over the segments.
    pub fn value(&self, x: f64) -> f64 {
        self.segments
            .iter()
            .map(|s| s.slope * x + s.intercept)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One cell of an equal-probability partition of a distribution's support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionCell {
    /// Probability mass of the cell.
    pub prob: f64,
    /// Conditional mean of the distribution within the cell.
    pub mean: f64,
    /// Last support point contributing mass to the cell. Interior cell
    /// boundaries are the tangency points of the linearization.
    pub upper: usize,
}

/// Splits the support of `d` into `cells` intervals of equal probability,
/// dividing a support point's mass across two cells where a boundary falls
/// inside it. Falls back to one cell per distinct support point when the
/// support is smaller than the requested cell count (the linearization is then
/// exact).
pub fn equal_probability_partition(d: &DiscreteDist, cells: usize) -> Vec<PartitionCell> {
    assert!(cells >= 1, "at least one cell required");
    let support: Vec<(usize, f64)> = d
        .pmf_slice()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(k, &p)| (k, p))
        .collect();
    if support.len() <= cells {
        return support
            .iter()
            .map(|&(k, p)| PartitionCell { prob: p, mean: k as f64, upper: k })
            .collect();
    }

    let mut out = Vec::with_capacity(cells);
    let mut idx = 0usize;
    let mut avail = support[0].1;
    let mut consumed = 0.0;
    for i in 0..cells {
        let target = (i + 1) as f64 / cells as f64;
        let mut prob = 0.0;
        let mut weighted = 0.0;
        let mut upper = support[idx.min(support.len() - 1)].0;
        if i + 1 == cells {
            // last cell absorbs everything left, avoiding float dust
            while idx < support.len() {
                prob += avail;
                weighted += avail * support[idx].0 as f64;
                upper = support[idx].0;
                idx += 1;
                avail = if idx < support.len() { support[idx].1 } else { 0.0 };
            }
        } else {
            while consumed + prob < target - 1e-12 && idx < support.len() {
                let need = target - consumed - prob;
                let take = avail.min(need);
                prob += take;
                weighted += take * support[idx].0 as f64;
                upper = support[idx].0;
                avail -= take;
                if avail <= 1e-15 {
                    idx += 1;
                    avail = if idx < support.len() { support[idx].1 } else { 0.0 };
                }
            }
        }
        consumed += prob;
        out.push(PartitionCell { prob, mean: weighted / prob, upper });
    }
    out
}

/// Lower-bounding max-of-affine approximation of the convex complementary
/// loss `E[(x - D)^+]`.
///
/// Cell `i` of the equal-probability partition contributes the line
/// `(sum of cell probabilities up to i) * x - (sum of prob * conditional mean
/// up to i)`; together with the zero line these support the true function from
/// below, touching it at every interior cell boundary.
pub fn linearize_complementary_loss(d: &DiscreteDist, segments: usize) -> PiecewiseLinear {
    assert!(segments >= 1, "at least one segment required");
    let cells = equal_probability_partition(d, segments);
    let mut segs = Vec::with_capacity(cells.len() + 1);
    segs.push(Segment { slope: 0.0, intercept: 0.0 });
    let mut cum = 0.0;
    let mut acc = 0.0;
    for cell in &cells {
        cum += cell.prob;
        acc += cell.prob * cell.mean;
        segs.push(Segment { slope: cum, intercept: -acc });
    }
    PiecewiseLinear { segments: segs, domain: (0.0, d.max_support() as f64) }
}

/// Interior partition boundaries: the support values where the linearization
/// equals the true complementary loss exactly.
pub fn tangent_points(d: &DiscreteDist, segments: usize) -> Vec<f64> {
    let cells = equal_probability_partition(d, segments);
    let n = cells.len();
    cells.iter().take(n.saturating_sub(1)).map(|c| c.upper as f64).collect()
}
