//! Uniform lattices on truncated boxes, exterior policies and multilinear interpolation.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::functions::{Point, ScalarFn};
use crate::model::ExteriorSpec;

/// Integer lattice offset or index; the second slot is zero when N = 1.
pub type Index = [i64; 2];

pub type ExteriorFn = Arc<dyn Fn(&Point) -> Option<f64> + Send + Sync>;

#[derive(Clone)]
pub enum ExteriorPolicy {
    Periodic,
    /// Clamp to the nearest boundary node.
    Constant,
    /// Explicit exterior data g; `None` means g is undefined at the point.
    Function(ExteriorFn),
}

impl fmt::Debug for ExteriorPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExteriorPolicy::Periodic => write!(f, "Periodic"),
            ExteriorPolicy::Constant => write!(f, "Constant"),
            ExteriorPolicy::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl ExteriorPolicy {
    pub fn from_fn(g: ScalarFn) -> Self {
        ExteriorPolicy::Function(Arc::new(move |x| Some(g.eval(x))))
    }

    pub fn from_spec(spec: &ExteriorSpec) -> Self {
        match spec {
            ExteriorSpec::Periodic => ExteriorPolicy::Periodic,
            ExteriorSpec::Constant => ExteriorPolicy::Constant,
            ExteriorSpec::Function { g } => ExteriorPolicy::from_fn(g.clone()),
        }
    }
}

/// Where a lattice index lands after applying the exterior policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolved {
    Node(usize),
    Value(f64),
}

/// The box [−L, L]^N with nodes x_j = j·h. Periodic grids drop the node at +L,
/// which coincides with −L.
#[derive(Debug, Clone)]
pub struct Grid {
    pub dim: usize,
    pub half_width: f64,
    pub h: f64,
    n: i64,
    pub exterior: ExteriorPolicy,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, h: f64, exterior: ExteriorPolicy) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return invalid(format!("grid dimension must be 1 or 2, got {dim}"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return invalid(format!("grid spacing must be positive, got {h}"));
        }
        if !(half_width >= h && half_width.is_finite()) {
            return invalid(format!("half width {half_width} must be at least h = {h}"));
        }
        let ratio = half_width / h;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio {
            return invalid(format!("half width {half_width} is not an integer multiple of h = {h}"));
        }
        Ok(Grid { dim, half_width, h, n: n as i64, exterior })
    }

    /// Number of cells between 0 and L along one axis.
    pub fn cells(&self) -> i64 {
        self.n
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.exterior, ExteriorPolicy::Periodic)
    }

    /// Lattice period of a periodic grid.
    pub fn period(&self) -> Option<i64> {
        self.is_periodic().then_some(2 * self.n)
    }

    pub fn axis_len(&self) -> usize {
        if self.is_periodic() {
            (2 * self.n) as usize
        } else {
            (2 * self.n + 1) as usize
        }
    }

    pub fn len(&self) -> usize {
        self.axis_len().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_max(&self) -> i64 {
        if self.is_periodic() {
            self.n - 1
        } else {
            self.n
        }
    }

    pub fn contains(&self, idx: &Index) -> bool {
        let hi = self.index_max();
        (0..self.dim).all(|k| idx[k] >= -self.n && idx[k] <= hi) && (self.dim == 2 || idx[1] == 0)
    }

    /// Flat position of an in-box index; axis 0 varies slowest.
    pub fn flat(&self, idx: &Index) -> usize {
        let m = self.axis_len();
        let a = (idx[0] + self.n) as usize;
        if self.dim == 1 {
            a
        } else {
            a * m + (idx[1] + self.n) as usize
        }
    }

    pub fn index_of(&self, flat: usize) -> Index {
        let m = self.axis_len();
        if self.dim == 1 {
            [flat as i64 - self.n, 0]
        } else {
            [(flat / m) as i64 - self.n, (flat % m) as i64 - self.n]
        }
    }

    pub fn coords(&self, idx: &Index) -> Point {
        [idx[0] as f64 * self.h, if self.dim == 2 { idx[1] as f64 * self.h } else { 0.0 }]
    }

    pub fn node_coords(&self, flat: usize) -> Point {
        self.coords(&self.index_of(flat))
    }

    /// Map a lattice index to a node or to an exterior value.
    pub fn resolve(&self, idx: &Index) -> Result<Resolved> {
        if self.contains(idx) {
            return Ok(Resolved::Node(self.flat(idx)));
        }
        match &self.exterior {
            ExteriorPolicy::Periodic => {
                let p = 2 * self.n;
                let mut w = *idx;
                for v in w.iter_mut().take(self.dim) {
                    *v = (*v + self.n).rem_euclid(p) - self.n;
                }
                Ok(Resolved::Node(self.flat(&w)))
            }
            ExteriorPolicy::Constant => {
                let mut w = *idx;
                for v in w.iter_mut().take(self.dim) {
                    *v = (*v).clamp(-self.n, self.n);
                }
                Ok(Resolved::Node(self.flat(&w)))
            }
            ExteriorPolicy::Function(g) => {
                let x = self.coords(idx);
                match g(&x) {
                    Some(v) if v.is_finite() => Ok(Resolved::Value(v)),
                    _ => Err(Error::Exterior(x[..self.dim].to_vec())),
                }
            }
        }
    }

    /// Multilinear interpolation weights on the infinite lattice; zero weights are dropped,
    /// so ties at cell faces go to the lower cell.
    pub fn interp_weights(&self, p: &Point) -> Vec<(Index, f64)> {
        let mut out = Vec::with_capacity(4);
        let s0 = p[0] / self.h;
        let b0 = s0.floor();
        let t0 = s0 - b0;
        let i0 = b0 as i64;
        let ax0 = [(i0, 1.0 - t0), (i0 + 1, t0)];
        if self.dim == 1 {
            for (i, w) in ax0 {
                if w != 0.0 {
                    out.push(([i, 0], w));
                }
            }
        } else {
            let s1 = p[1] / self.h;
            let b1 = s1.floor();
            let t1 = s1 - b1;
            let i1 = b1 as i64;
            let ax1 = [(i1, 1.0 - t1), (i1 + 1, t1)];
            for (a, wa) in ax0 {
                for (b, wb) in ax1 {
                    let w = wa * wb;
                    if w != 0.0 {
                        out.push(([a, b], w));
                    }
                }
            }
        }
        out
    }

    /// Distance from a node to the boundary of the box.
    pub fn boundary_distance(&self, x: &Point) -> f64 {
        (0..self.dim).map(|k| self.half_width - x[k].abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn same_lattice(&self, other: &Grid) -> bool {
        self.dim == other.dim && self.n == other.n && self.h == other.h && self.is_periodic() == other.is_periodic()
    }
}

/// Nodal values on a grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return invalid(format!("grid function values must be finite, found {v}"));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        GridFunction { grid, values: vec![0.0; n] }
    }

    pub fn from_fn<F: Fn(&Point) -> f64 + Sync>(grid: Arc<Grid>, f: F) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.node_coords(i))).collect();
        GridFunction { grid, values }
    }

    pub fn value_at(&self, idx: &Index) -> Result<f64> {
        Ok(match self.grid.resolve(idx)? {
            Resolved::Node(i) => self.values[i],
            Resolved::Value(v) => v,
        })
    }

    /// Interpolated value at an arbitrary point, exterior values from the grid's policy.
    pub fn evaluate(&self, p: &Point) -> Result<f64> {
        let mut s = 0.0;
        for (idx, w) in self.grid.interp_weights(p) {
            s += w * self.value_at(&idx)?;
        }
        Ok(s)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        if g.dim == 1 {
            writeln!(w, "i,x,value")?;
        } else {
            writeln!(w, "i0,i1,x0,x1,value")?;
        }
        for (flat, v) in self.values.iter().enumerate() {
            let idx = g.index_of(flat);
            let x = g.coords(&idx);
            if g.dim == 1 {
                writeln!(w, "{},{},{}", idx[0], fmt_f64(x[0]), fmt_f64(*v))?;
            } else {
                writeln!(w, "{},{},{},{},{}", idx[0], idx[1], fmt_f64(x[0]), fmt_f64(x[1]), fmt_f64(*v))?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(grid: Arc<Grid>, r: R) -> Result<Self> {
        let mut values = vec![f64::NAN; grid.len()];
        let mut seen = vec![false; grid.len()];
        let ncols = if grid.dim == 1 { 3 } else { 5 };
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != ncols {
                return invalid(format!("line {}: expected {ncols} columns", lineno + 1));
            }
            let parse_i = |s: &str| s.parse::<i64>().map_err(|e| Error::InvalidParameter(format!("line {}: {e}", lineno + 1)));
            let idx = if grid.dim == 1 { [parse_i(cols[0])?, 0] } else { [parse_i(cols[0])?, parse_i(cols[1])?] };
            if !grid.contains(&idx) {
                return Err(Error::GridMismatch(format!("index {idx:?} outside the grid")));
            }
            let v: f64 = cols[ncols - 1]
                .parse()
                .map_err(|e| Error::InvalidParameter(format!("line {}: {e}", lineno + 1)))?;
            let f = grid.flat(&idx);
            values[f] = v;
            seen[f] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::GridMismatch("CSV does not cover every node".into()));
        }
        GridFunction::new(grid, values)
    }
}

/// Shortest round-trip decimal, switching to exponent form for extreme magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(policy: ExteriorPolicy) -> Arc<Grid> {
        Arc::new(Grid::new(1, 1.0, 0.125, policy).unwrap())
    }

    #[test]
    fn node_counts_and_layout() {
        assert_eq!(grid1(ExteriorPolicy::Constant).len(), 17);
        assert_eq!(grid1(ExteriorPolicy::Periodic).len(), 16);
        let g = Grid::new(2, 1.0, 0.5, ExteriorPolicy::Constant).unwrap();
        assert_eq!(g.len(), 25);
        for f in 0..g.len() {
            assert_eq!(g.flat(&g.index_of(f)), f);
        }
        assert_eq!(g.index_of(1), [-2, -1]);
        assert!(Grid::new(1, 1.0, 0.3, ExteriorPolicy::Constant).is_err());
    }

    #[test]
    fn interpolation_examples() {
        let g = grid1(ExteriorPolicy::Constant);
        assert_eq!(g.interp_weights(&[3.0 * 0.125, 0.0]), vec![([3, 0], 1.0)]);
        assert_eq!(g.interp_weights(&[0.0625, 0.0]), vec![([0, 0], 0.5), ([1, 0], 0.5)]);
        let g2 = Grid::new(2, 1.0, 0.25, ExteriorPolicy::Constant).unwrap();
        let w = g2.interp_weights(&[0.125, 0.375]);
        assert_eq!(w.len(), 4);
        assert!(w.iter().all(|(_, v)| *v == 0.25));
    }

    #[test]
    fn evaluate_policies() {
        let g = grid1(ExteriorPolicy::Periodic);
        let u = GridFunction::from_fn(g.clone(), |x| x[0] * x[0] + x[0]);
        let wrapped = u.evaluate(&[1.0 + 0.125, 0.0]).unwrap();
        assert_eq!(wrapped, u.values[g.flat(&[-7, 0])]);
        let gc = grid1(ExteriorPolicy::Constant);
        let uc = GridFunction::from_fn(gc.clone(), |x| x[0]);
        assert_eq!(uc.evaluate(&[17.3, 0.0]).unwrap(), 1.0);
        assert_eq!(uc.evaluate(&[-9.0, 0.0]).unwrap(), -1.0);
        let aff = GridFunction::from_fn(gc.clone(), |x| 3.0 * x[0] + 1.0);
        let h = gc.h;
        assert!((aff.evaluate(&[0.3 * h, 0.0]).unwrap() - (1.0 + 0.9 * h)).abs() < 1e-15);
        let gf = Arc::new(Grid::new(1, 1.0, 0.125, ExteriorPolicy::Function(Arc::new(|x| (x[0] < 5.0).then_some(7.0)))).unwrap());
        let uf = GridFunction::zeros(gf);
        assert_eq!(uf.evaluate(&[2.0, 0.0]).unwrap(), 7.0);
        assert!(matches!(uf.evaluate(&[6.0, 0.0]), Err(Error::Exterior(_))));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = Arc::new(Grid::new(2, 1.0, 0.25, ExteriorPolicy::Constant).unwrap());
        let u = GridFunction::from_fn(g.clone(), |x| (x[0] * 1.3).sin() / 3.0 + x[1] * 1e-9);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let v = GridFunction::read_csv(g, &buf[..]).unwrap();
        for (a, b) in u.values.iter().zip(&v.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, 1.0, -0.1, 1e-300, 123456789.125, 3e20, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
