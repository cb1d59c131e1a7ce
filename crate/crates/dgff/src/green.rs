//! Ground-truth oracle layer: the simple-random-walk potential kernel, dense
//! lattice Green functions, harmonic measure, and coarse-field covariances.
//!
//! The potential kernel is filled by the McCrea-Whipple harmonicity
//! recursion. Every table value is of the form `r + s * (4/pi)` with rational
//! `r, s`, so the recursion runs in exact big-rational arithmetic and only the
//! final conversion to `f64` rounds. (A plain double-precision recursion
//! drifts catastrophically: `r` and `s` grow like `4^R` and cancel, which
//! destroys all significant digits by radius ~30.)
//!
//! Green functions use the conditional-variance-1 convention: the field
//! covariance is `(I - P)^{-1}` over interior sites, `P` the simple random
//! walk kernel killed on the boundary ring, so `G(c, c) ~ (2/pi) log N`.

use crate::dst::PoissonSolver;
use crate::error::DgffError;
use crate::lattice::{BoxSpec, Point, SubBoxPartition};
use crate::Result;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.5772156649015329;

/// `(2 gamma + log 8)/pi`, the additive constant of the potential kernel
/// asymptotics.
pub const KERNEL_ASYMPTOTIC_CONSTANT: f64 = 1.0293737303647642;

/// Module tolerances, gathered in one record.
#[derive(Clone, Copy, Debug)]
pub struct GreenTolerances {
    /// Max harmonicity residual of the tabulated potential kernel.
    pub kernel_harmonicity: f64,
    /// Budget for the `|a(x) - asymptotic| * |x|^2` monitor.
    pub kernel_asymptotic: f64,
    /// Relative tolerance of the matrix-inverse vs potential-kernel routes.
    pub crosscheck_rel: f64,
    /// Harmonic-measure normalization tolerance.
    pub hm_norm: f64,
    /// Largest box side solved densely.
    pub dense_budget: usize,
    /// Refinement is declared non-convergent when the error estimate grows by
    /// more than this factor while exceeding `refine_floor`.
    pub refine_factor: f64,
    pub refine_floor: f64,
}

impl Default for GreenTolerances {
    fn default() -> Self {
        GreenTolerances {
            kernel_harmonicity: 1e-10,
            kernel_asymptotic: 1.0,
            crosscheck_rel: 1e-8,
            hm_norm: 1e-12,
            dense_budget: 64,
            refine_factor: 1.5,
            refine_floor: 0.05,
        }
    }
}

// ---------------------------------------------------------------------------
// Potential kernel
// ---------------------------------------------------------------------------

/// Exact values of the potential kernel `a(x)` on `|x|_inf <= radius`.
pub struct PotentialKernelTable {
    radius: usize,
    values: Vec<f64>, // (2R+1)^2, row-major over offsets shifted by +R
}

/// Convert a big rational to `f64` without overflowing intermediate
/// conversions: shift the numerator so the integer quotient keeps ~80 bits.
fn ratio_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let nbits = r.numer().bits() as i64;
    let dbits = r.denom().bits() as i64;
    let shift = (dbits - nbits + 80).max(0) as u64;
    let q: BigInt = (r.numer() << shift) / r.denom();
    q.to_f64().unwrap_or(f64::NAN) * 2f64.powi(-(shift as i32))
}

/// `4/pi` as a rational accurate to ~1e-60, for the final conversion of the
/// `(r, s)` pairs. The individual parts grow like `4^R`, so ordinary double
/// precision for this constant would lose the cancellation.
fn four_over_pi_rational() -> BigRational {
    let pi_times_1e60: BigInt =
        "3141592653589793238462643383279502884197169399375105820974944"
            .parse()
            .expect("literal parses");
    let four_times_1e60: BigInt = BigInt::from(4) * BigInt::from(10u32).pow(60);
    BigRational::new(four_times_1e60, pi_times_1e60)
}

impl PotentialKernelTable {
    pub fn radius(&self) -> usize {
        self.radius
    }

    /// `a(x)` for `|x|_inf <= radius`; symmetric under the 8 lattice
    /// symmetries by construction.
    pub fn a(&self, p: Point) -> f64 {
        let r = self.radius as i64;
        assert!(
            p.0.abs() <= r && p.1.abs() <= r,
            "offset {p:?} outside kernel radius {r}"
        );
        let w = 2 * self.radius + 1;
        let x = (p.0 + r) as usize;
        let y = (p.1 + r) as usize;
        self.values[y * w + x]
    }

    /// Max harmonicity residual over tabulated offsets with all four
    /// neighbors in the table: `|avg(neighbors) - a(x) - 1_{x=0}|`.
    pub fn harmonicity_residual_max(&self) -> f64 {
        let r = self.radius as i64;
        let mut worst: f64 = 0.0;
        for y in -(r - 1)..=(r - 1) {
            for x in -(r - 1)..=(r - 1) {
                let avg = 0.25
                    * (self.a((x - 1, y))
                        + self.a((x + 1, y))
                        + self.a((x, y - 1))
                        + self.a((x, y + 1)));
                let expect = if x == 0 && y == 0 { 1.0 } else { 0.0 };
                worst = worst.max((avg - self.a((x, y)) - expect).abs());
            }
        }
        worst
    }

    /// Max of `|a(x) - (2/pi) log|x| - kappa| * |x|^2` over `|x| >= 10`.
    pub fn asymptotic_deviation_max(&self) -> f64 {
        let r = self.radius as i64;
        let mut worst: f64 = 0.0;
        for y in -r..=r {
            for x in -r..=r {
                let n2 = (x * x + y * y) as f64;
                if n2 < 100.0 {
                    continue;
                }
                let asym = (1.0 / std::f64::consts::PI) * n2.ln() + KERNEL_ASYMPTOTIC_CONSTANT;
                worst = worst.max((self.a((x, y)) - asym).abs() * n2);
            }
        }
        worst
    }
}

/// Build the potential kernel table on `|x|_inf <= radius`.
///
/// Octant fill: seeds `a(0,0) = 0`, `a(1,0) = 1`, `a(1,1) = 4/pi`, the exact
/// diagonal `a(m,m) = (4/pi) sum_{j<=m} 1/(2j-1)`, and the harmonicity
/// recursion for everything else, all in exact rationals.
pub fn potential_kernel(radius: usize) -> Result<PotentialKernelTable> {
    potential_kernel_with(radius, &GreenTolerances::default())
}

pub fn potential_kernel_with(
    radius: usize,
    tol: &GreenTolerances,
) -> Result<PotentialKernelTable> {
    if radius < 1 {
        return Err(DgffError::Domain("kernel radius must be >= 1".into()));
    }
    let r = radius;
    // octant[x][y] for 0 <= y <= x <= r, as (rational, rational) = r + s*(4/pi)
    let zero = || (BigRational::zero(), BigRational::zero());
    let mut oct: Vec<Vec<(BigRational, BigRational)>> =
        (0..=r).map(|x| vec![zero(); x + 1]).collect();
    oct[0][0] = (BigRational::zero(), BigRational::zero());
    if r >= 1 {
        oct[1][0] = (BigRational::from(BigInt::from(1)), BigRational::zero());
        oct[1][1] = (BigRational::zero(), BigRational::from(BigInt::from(1)));
    }
    // running odd harmonic sum for the diagonal
    let mut diag_sum = BigRational::from(BigInt::from(1)); // H_odd(1)
    for x in 1..r {
        diag_sum += BigRational::new(BigInt::from(1), BigInt::from(2 * (x as i64 + 1) - 1));
        // a(x+1, x+1): diagonal closed form
        oct[x + 1][x + 1] = (BigRational::zero(), diag_sum.clone());
        // a(x+1, x) = 2 a(x,x) - a(x,x-1)  (harmonicity at (x,x) + symmetry)
        {
            let (r1, s1) = oct[x][x].clone();
            let (r2, s2) = oct[x][x - 1].clone();
            oct[x + 1][x] = (
                BigRational::from(BigInt::from(2)) * r1 - r2,
                BigRational::from(BigInt::from(2)) * s1 - s2,
            );
        }
        // interior of the octant: harmonicity centered at (x, y)
        for y in (1..x).rev() {
            let four = BigRational::from(BigInt::from(4));
            let rr = four.clone() * &oct[x][y].0 - &oct[x - 1][y].0 - &oct[x][y + 1].0
                - &oct[x][y - 1].0;
            let ss =
                four * &oct[x][y].1 - &oct[x - 1][y].1 - &oct[x][y + 1].1 - &oct[x][y - 1].1;
            oct[x + 1][y] = (rr, ss);
        }
        // axis: harmonicity at (x, 0) with a(x, -1) = a(x, 1)
        {
            let four = BigRational::from(BigInt::from(4));
            let two = BigRational::from(BigInt::from(2));
            let rr = four.clone() * &oct[x][0].0 - &oct[x - 1][0].0 - two.clone() * &oct[x][1].0;
            let ss = four * &oct[x][0].1 - &oct[x - 1][0].1 - two * &oct[x][1].1;
            oct[x + 1][0] = (rr, ss);
        }
    }
    // fold into the full square table
    let q = four_over_pi_rational();
    let w = 2 * r + 1;
    let mut values = vec![0.0; w * w];
    let mut oct_f64: Vec<Vec<f64>> = (0..=r).map(|x| vec![0.0; x + 1]).collect();
    for x in 0..=r {
        for y in 0..=x {
            let (rr, ss) = &oct[x][y];
            oct_f64[x][y] = ratio_to_f64(&(rr + ss * &q));
        }
    }
    for dy in -(r as i64)..=(r as i64) {
        for dx in -(r as i64)..=(r as i64) {
            let (ax, ay) = (dx.unsigned_abs() as usize, dy.unsigned_abs() as usize);
            let (hi, lo) = if ax >= ay { (ax, ay) } else { (ay, ax) };
            values[(dy + r as i64) as usize * w + (dx + r as i64) as usize] = oct_f64[hi][lo];
        }
    }
    let table = PotentialKernelTable { radius: r, values };
    if r >= 11 {
        let dev = table.asymptotic_deviation_max();
        if dev > tol.kernel_asymptotic {
            return Err(DgffError::Precision(format!(
                "potential kernel deviates from the log asymptotic by {dev:.3e} * |x|^-2 \
                 at radius {r}"
            )));
        }
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Green function tables
// ---------------------------------------------------------------------------

/// Dense Green function `E[eta_u eta_v]` of a Dirichlet box. Rows and columns
/// with a boundary point are identically zero (and stored implicitly).
pub struct GreenTable {
    box_spec: BoxSpec,
    mat: DMatrix<f64>,
}

fn interior_index(b: &BoxSpec, p: Point) -> Option<usize> {
    if !b.is_interior(p) {
        return None;
    }
    let m = b.interior_side();
    let (ox, oy) = b.origin();
    let x = (p.0 - ox - 1) as usize;
    let y = (p.1 - oy - 1) as usize;
    Some(y * m + x)
}

/// Assemble `I - P` over the interior sites of `b`.
fn dirichlet_operator(b: &BoxSpec) -> DMatrix<f64> {
    let m = b.interior_side();
    let dim = m * m;
    let mut op = DMatrix::<f64>::identity(dim, dim);
    for y in 0..m {
        for x in 0..m {
            let i = y * m + x;
            if x > 0 {
                op[(i, i - 1)] = -0.25;
            }
            if x + 1 < m {
                op[(i, i + 1)] = -0.25;
            }
            if y > 0 {
                op[(i, i - m)] = -0.25;
            }
            if y + 1 < m {
                op[(i, i + m)] = -0.25;
            }
        }
    }
    op
}

impl GreenTable {
    pub fn box_spec(&self) -> BoxSpec {
        self.box_spec
    }

    pub fn interior_dim(&self) -> usize {
        self.mat.nrows()
    }

    /// `E[eta_u eta_v]`; zero when either point is on the boundary.
    pub fn get(&self, u: Point, v: Point) -> f64 {
        match (
            interior_index(&self.box_spec, u),
            interior_index(&self.box_spec, v),
        ) {
            (Some(i), Some(j)) => self.mat[(i, j)],
            _ => 0.0,
        }
    }

    pub fn center_variance(&self) -> f64 {
        let c = self.box_spec.center();
        self.get(c, c)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// Smallest eigenvalue, for PSD checks.
    pub fn min_eigenvalue(&self) -> f64 {
        self.mat
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Exit distribution on the boundary read off the table:
    /// `P^v(S_tau = z) = (1/4) sum_{u ~ z interior} G(v, u)`.
    pub fn harmonic_measure_from(&self, source: Point) -> Result<HarmonicMeasure> {
        harmonic_measure_from_lookup(&self.box_spec, source, &|u, v| self.get(u, v))
    }
}

/// Dense Green table by Cholesky inversion of `I - P`.
pub fn green_function(b: BoxSpec) -> Result<GreenTable> {
    green_function_with(b, &GreenTolerances::default())
}

pub fn green_function_with(b: BoxSpec, tol: &GreenTolerances) -> Result<GreenTable> {
    if b.side() > tol.dense_budget {
        return Err(DgffError::SizeBudget(format!(
            "dense Green solve for side {} exceeds budget {}",
            b.side(),
            tol.dense_budget
        )));
    }
    if b.interior_side() == 0 {
        return Ok(GreenTable {
            box_spec: b,
            mat: DMatrix::zeros(0, 0),
        });
    }
    let op = dirichlet_operator(&b);
    let chol = Cholesky::new(op)
        .ok_or_else(|| DgffError::Numeric("I - P is not positive definite".into()))?;
    Ok(GreenTable {
        box_spec: b,
        mat: chol.inverse(),
    })
}

/// Cholesky factor of `I - P`, for solving a few columns of `G` without
/// materializing the full inverse.
pub struct GreenFactor {
    box_spec: BoxSpec,
    chol: Cholesky<f64, Dyn>,
}

impl GreenFactor {
    pub fn new(b: BoxSpec, tol: &GreenTolerances) -> Result<Self> {
        if b.side() > tol.dense_budget {
            return Err(DgffError::SizeBudget(format!(
                "dense factorization for side {} exceeds budget {}",
                b.side(),
                tol.dense_budget
            )));
        }
        if b.interior_side() == 0 {
            return Err(DgffError::Domain("box has no interior".into()));
        }
        let chol = Cholesky::new(dirichlet_operator(&b))
            .ok_or_else(|| DgffError::Numeric("I - P is not positive definite".into()))?;
        Ok(GreenFactor { box_spec: b, chol })
    }

    /// Full Green column for one source site.
    pub fn column(&self, source: Point) -> Result<DVector<f64>> {
        let i = interior_index(&self.box_spec, source)
            .ok_or_else(|| DgffError::Domain(format!("{source:?} is not interior")))?;
        let dim = self.chol.l_dirty().nrows();
        let mut e = DVector::zeros(dim);
        e[i] = 1.0;
        Ok(self.chol.solve(&e))
    }

    /// `G(sites_i, sites_j)` submatrix.
    pub fn entries(&self, sites: &[Point]) -> Result<DMatrix<f64>> {
        let n = sites.len();
        let mut out = DMatrix::zeros(n, n);
        for (j, &s) in sites.iter().enumerate() {
            let col = self.column(s)?;
            for (i, &u) in sites.iter().enumerate() {
                out[(i, j)] = interior_index(&self.box_spec, u)
                    .map(|k| col[k])
                    .unwrap_or(0.0);
            }
        }
        Ok(out)
    }
}

/// Green entries through the fast sine-transform Poisson solver: the same
/// operator inverse computed spectrally, used where dense factorization is
/// out of budget. Cross-validated against the dense route in tests.
pub fn green_entries_fast(b: BoxSpec, sites: &[Point]) -> Result<DMatrix<f64>> {
    let m = b.interior_side();
    if m == 0 {
        return Ok(DMatrix::zeros(sites.len(), sites.len()));
    }
    let solver = PoissonSolver::new(m);
    let mut ws = solver.make_workspace();
    let n = sites.len();
    let mut out = DMatrix::zeros(n, n);
    let mut rhs = vec![0.0; m * m];
    for (j, &s) in sites.iter().enumerate() {
        let sj = interior_index(&b, s)
            .ok_or_else(|| DgffError::Domain(format!("{s:?} is not interior")))?;
        rhs.iter_mut().for_each(|v| *v = 0.0);
        rhs[sj] = 1.0;
        solver.solve(&mut rhs, &mut ws);
        for (i, &u) in sites.iter().enumerate() {
            out[(i, j)] = interior_index(&b, u).map(|k| rhs[k]).unwrap_or(0.0);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Harmonic measure
// ---------------------------------------------------------------------------

/// Exit distribution of the killed walk on the boundary ring.
pub struct HarmonicMeasure {
    pub source: Point,
    pub box_spec: BoxSpec,
    /// `(boundary point, weight)` in boundary scan order.
    pub weights: Vec<(Point, f64)>,
    /// Set when the source was already on the boundary (point mass).
    pub degenerate: bool,
}

impl HarmonicMeasure {
    pub fn total(&self) -> f64 {
        self.weights.iter().map(|(_, w)| w).sum()
    }

    pub fn weight_at(&self, z: Point) -> f64 {
        self.weights
            .iter()
            .find(|(p, _)| *p == z)
            .map(|(_, w)| *w)
            .unwrap_or(0.0)
    }
}

fn harmonic_measure_from_lookup(
    b: &BoxSpec,
    source: Point,
    green: &dyn Fn(Point, Point) -> f64,
) -> Result<HarmonicMeasure> {
    if !b.contains(source) {
        return Err(DgffError::Domain(format!(
            "source {source:?} outside the box"
        )));
    }
    if b.is_boundary(source) {
        let weights = b
            .boundary_sites()
            .into_iter()
            .map(|z| (z, if z == source { 1.0 } else { 0.0 }))
            .collect();
        return Ok(HarmonicMeasure {
            source,
            box_spec: *b,
            weights,
            degenerate: true,
        });
    }
    let weights = b
        .boundary_sites()
        .into_iter()
        .map(|z| {
            let mut w = 0.0;
            for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let u = (z.0 + dx, z.1 + dy);
                if b.is_interior(u) {
                    w += 0.25 * green(source, u);
                }
            }
            (z, w)
        })
        .collect();
    Ok(HarmonicMeasure {
        source,
        box_spec: *b,
        weights,
        degenerate: false,
    })
}

/// Harmonic measure by a dense Dirichlet solve for the source column.
pub fn harmonic_measure(b: BoxSpec, source: Point) -> Result<HarmonicMeasure> {
    harmonic_measure_with(b, source, &GreenTolerances::default())
}

pub fn harmonic_measure_with(
    b: BoxSpec,
    source: Point,
    tol: &GreenTolerances,
) -> Result<HarmonicMeasure> {
    if b.contains(source) && b.is_boundary(source) {
        return harmonic_measure_from_lookup(&b, source, &|_, _| 0.0);
    }
    let factor = GreenFactor::new(b, tol)?;
    let col = factor.column(source)?;
    harmonic_measure_from_lookup(&b, source, &|_, u| {
        interior_index(&b, u).map(|k| col[k]).unwrap_or(0.0)
    })
}

/// Max relative disagreement between the table and the potential-kernel
/// representation `G(v,v') = sum_z P^v(S_tau = z) a(z - v') - a(v' - v)`.
pub fn potential_kernel_crosscheck(
    green: &GreenTable,
    kernel: &PotentialKernelTable,
) -> Result<f64> {
    let b = green.box_spec();
    let interior = b.interior_sites();
    let mut worst: f64 = 0.0;
    for &v in &interior {
        let hm = green.harmonic_measure_from(v)?;
        for &vp in &interior {
            let mut rebuilt = -kernel.a((vp.0 - v.0, vp.1 - v.1));
            for &(z, w) in &hm.weights {
                if w != 0.0 {
                    rebuilt += w * kernel.a((z.0 - vp.0, z.1 - vp.1));
                }
            }
            let direct = green.get(v, vp);
            let scale = direct.abs().max(1.0);
            worst = worst.max((rebuilt - direct).abs() / scale);
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Coarse covariance
// ---------------------------------------------------------------------------

/// Covariance of the coarse field at a list of sites.
pub struct CoarseCovariance {
    pub sites: Vec<Point>,
    pub mat: DMatrix<f64>,
}

impl CoarseCovariance {
    pub fn min_eigenvalue(&self) -> f64 {
        self.mat
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// `Cov(X^c_u, X^c_v) = G_N(u,v) - 1[same sub-box] G_{N/K}(u,v)`, both scales
/// from the dense oracle.
pub fn coarse_covariance(
    partition: &SubBoxPartition,
    sites: &[Point],
) -> Result<CoarseCovariance> {
    coarse_covariance_with(partition, sites, &GreenTolerances::default())
}

pub fn coarse_covariance_with(
    partition: &SubBoxPartition,
    sites: &[Point],
    tol: &GreenTolerances,
) -> Result<CoarseCovariance> {
    for &s in sites {
        if !partition.in_delta_interior(s) {
            return Err(DgffError::Domain(format!(
                "site {s:?} is outside the delta-interior"
            )));
        }
    }
    let parent_factor = GreenFactor::new(partition.parent(), tol)?;
    let global = parent_factor.entries(sites)?;
    let mat = subtract_fine_part(partition, sites, global, &|tile, local_sites| {
        let factor = GreenFactor::new(tile, tol)?;
        factor.entries(local_sites)
    })?;
    Ok(CoarseCovariance {
        sites: sites.to_vec(),
        mat,
    })
}

/// Shared assembly: subtract the same-tile fine covariance from the global
/// Green entries.
fn subtract_fine_part(
    partition: &SubBoxPartition,
    sites: &[Point],
    mut global: DMatrix<f64>,
    tile_green: &dyn Fn(BoxSpec, &[Point]) -> Result<DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let tiles: Vec<Option<usize>> = sites
        .iter()
        .map(|&s| partition.sub_box_index_of(s))
        .collect();
    // group sites by tile, correct each group with one sub-box solve
    for t in 0..partition.sub_box_count() {
        let members: Vec<usize> = (0..sites.len()).filter(|&i| tiles[i] == Some(t)).collect();
        if members.is_empty() {
            continue;
        }
        let tile = partition.sub_box(t)?;
        // shift to a tile at the origin so the solver sees local coordinates
        let local_box = BoxSpec::with_origin(tile.side(), (0, 0))?;
        let local_sites: Vec<Point> = members
            .iter()
            .map(|&i| {
                (
                    sites[i].0 - tile.origin().0,
                    sites[i].1 - tile.origin().1,
                )
            })
            .collect();
        let fine = tile_green(local_box, &local_sites)?;
        for (a, &i) in members.iter().enumerate() {
            for (b, &j) in members.iter().enumerate() {
                global[(i, j)] -= fine[(a, b)];
            }
        }
    }
    Ok(global)
}

/// Coarse covariance at one lattice resolution, via the fast Poisson route.
fn coarse_covariance_fast(
    n_side: usize,
    k: usize,
    delta: f64,
    sites_unit: &[(f64, f64)],
) -> Result<(Vec<Point>, DMatrix<f64>)> {
    let parent = BoxSpec::new(n_side)?;
    let partition = SubBoxPartition::new(parent, k, delta)?;
    let sites: Vec<Point> = sites_unit
        .iter()
        .map(|&(x, y)| clamp_to_delta_interior(&partition, x, y))
        .collect::<Result<_>>()?;
    let global = green_entries_fast(parent, &sites)?;
    let mat = subtract_fine_part(&partition, &sites, global, &|tile, local_sites| {
        green_entries_fast(tile, local_sites)
    })?;
    Ok((sites, mat))
}

/// Map a unit-square site to the nearest lattice point inside the discrete
/// delta-interior of its sub-box.
fn clamp_to_delta_interior(partition: &SubBoxPartition, x: f64, y: f64) -> Result<Point> {
    let n = partition.parent().side();
    if !(0.0..1.0).contains(&x) || !(0.0..1.0).contains(&y) {
        return Err(DgffError::Domain(format!(
            "unit-square site ({x}, {y}) outside [0,1)^2"
        )));
    }
    let pt = ((x * n as f64).floor() as i64, (y * n as f64).floor() as i64);
    let Some(i) = partition.sub_box_index_of(pt) else {
        return Err(DgffError::Domain(format!("site ({x}, {y}) unmapped")));
    };
    let sb = partition.sub_box(i)?;
    let m = partition.delta_margin() as i64;
    let lo = m;
    let hi = sb.side() as i64 - 1 - m;
    if hi < lo {
        return Err(DgffError::Domain(format!(
            "delta-interior empty at side {} margin {m}",
            sb.side()
        )));
    }
    Ok((
        sb.origin().0 + (pt.0 - sb.origin().0).clamp(lo, hi),
        sb.origin().1 + (pt.1 - sb.origin().1).clamp(lo, hi),
    ))
}

/// Limit coarse covariance `C^c_K` approximated by discrete refinement.
pub struct CoarseCovarianceLimit {
    pub sites_unit: Vec<(f64, f64)>,
    /// Value at the finest resolution.
    pub mat: DMatrix<f64>,
    /// `max |C_{N_ref} - C_{N_ref/2}|`, the Richardson-style error estimate.
    pub error_estimate: f64,
    pub n_ref: usize,
}

/// Approximate `C^c_K(x_i, x_j)` for unit-square sites by evaluating the
/// finite-`N` coarse covariance at `n_ref`, `n_ref/2` and `n_ref/4` and
/// checking that the refinement errors shrink.
pub fn coarse_covariance_limit(
    k: usize,
    delta: f64,
    sites_unit: &[(f64, f64)],
    n_ref: usize,
    tol: &GreenTolerances,
) -> Result<CoarseCovarianceLimit> {
    if n_ref < 4 * k || !n_ref.is_power_of_two() {
        return Err(DgffError::Parameter(format!(
            "n_ref = {n_ref} must be a power of two with n_ref >= 4K"
        )));
    }
    let (_, fine) = coarse_covariance_fast(n_ref, k, delta, sites_unit)?;
    let (_, half) = coarse_covariance_fast(n_ref / 2, k, delta, sites_unit)?;
    let err_fine = (&fine - &half).abs().max();
    if n_ref / 4 >= 4 * k.max(2) {
        let (_, quarter) = coarse_covariance_fast(n_ref / 4, k, delta, sites_unit)?;
        let err_half = (&half - &quarter).abs().max();
        if err_fine > tol.refine_factor * err_half && err_fine > tol.refine_floor {
            return Err(DgffError::Refinement(format!(
                "error estimate grew under refinement: {err_half:.4e} -> {err_fine:.4e}"
            )));
        }
    }
    Ok(CoarseCovarianceLimit {
        sites_unit: sites_unit.to_vec(),
        mat: fine,
        error_estimate: err_fine,
        n_ref,
    })
}

/// Fitted constant of the coarse-increment bound
/// `E(X^c_u - X^c_v)^2 <= c |u - v| / (N/K)` over same-tile pairs.
pub fn coarse_increment_constant(cov: &CoarseCovariance) -> f64 {
    let n = cov.sites.len();
    let mut c: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let (u, v) = (cov.sites[i], cov.sites[j]);
            let d = (((u.0 - v.0).pow(2) + (u.1 - v.1).pow(2)) as f64).sqrt();
            if d == 0.0 {
                continue;
            }
            let incr = cov.mat[(i, i)] + cov.mat[(j, j)] - 2.0 * cov.mat[(i, j)];
            c = c.max(incr / d);
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_seed_values() {
        let t = potential_kernel(4).unwrap();
        assert_eq!(t.a((0, 0)), 0.0);
        assert!((t.a((1, 0)) - 1.0).abs() < 1e-15);
        assert!((t.a((1, 1)) - 4.0 / std::f64::consts::PI).abs() < 1e-15);
        // a(2,0) = 4 - 8/pi, a(2,1) = 8/pi - 1, a(2,2) = 16/(3 pi)
        assert!((t.a((2, 0)) - (4.0 - 8.0 / std::f64::consts::PI)).abs() < 1e-14);
        assert!((t.a((2, 1)) - (8.0 / std::f64::consts::PI - 1.0)).abs() < 1e-14);
        assert!((t.a((2, 2)) - 16.0 / (3.0 * std::f64::consts::PI)).abs() < 1e-14);
    }

    #[test]
    fn kernel_symmetry_and_harmonicity() {
        let t = potential_kernel(12).unwrap();
        for &(x, y) in &[(3i64, 1i64), (5, 2), (7, 0), (4, 4)] {
            let v = t.a((x, y));
            for &(sx, sy) in &[(x, y), (-x, y), (x, -y), (-x, -y), (y, x), (-y, x)] {
                assert_eq!(t.a((sx, sy)), v);
            }
        }
        assert!(t.harmonicity_residual_max() < 1e-12);
    }

    #[test]
    fn kernel_matches_asymptotic() {
        let t = potential_kernel(24).unwrap();
        assert!(t.asymptotic_deviation_max() < 0.1);
    }

    /// Independent oracle for the seed values: solve the discrete Dirichlet
    /// problem for `a` on a disk, with the log asymptotic as boundary data,
    /// by Gauss-Seidel sweeps.
    #[test]
    fn kernel_seeds_match_disk_oracle() {
        let rad = 60i64;
        let side = (2 * rad + 1) as usize;
        let at = |x: i64, y: i64| ((y + rad) as usize) * side + ((x + rad) as usize);
        let mut vals = vec![0.0f64; side * side];
        let mut fixed = vec![false; side * side];
        for y in -rad..=rad {
            for x in -rad..=rad {
                let r2 = (x * x + y * y) as f64;
                if r2 >= (rad * rad - 2 * rad) as f64 {
                    vals[at(x, y)] =
                        (1.0 / std::f64::consts::PI) * r2.ln() + KERNEL_ASYMPTOTIC_CONSTANT;
                    fixed[at(x, y)] = true;
                } else {
                    // warm start from the asymptotic to speed convergence
                    vals[at(x, y)] = if x == 0 && y == 0 {
                        0.0
                    } else {
                        (1.0 / std::f64::consts::PI) * r2.ln() + KERNEL_ASYMPTOTIC_CONSTANT
                    };
                }
            }
        }
        fixed[at(0, 0)] = true; // a(0) = 0 pinned, source handled via residual
        for _ in 0..4000 {
            for y in -rad + 1..=rad - 1 {
                for x in -rad + 1..=rad - 1 {
                    let i = at(x, y);
                    if fixed[i] {
                        continue;
                    }
                    let mut nb = 0.25
                        * (vals[at(x - 1, y)]
                            + vals[at(x + 1, y)]
                            + vals[at(x, y - 1)]
                            + vals[at(x, y + 1)]);
                    // harmonic everywhere except the origin, where the
                    // neighbor average must exceed a(0) by exactly 1; the
                    // origin itself is pinned, its neighbors feel the source
                    if x == 0 && y == 0 {
                        nb -= 1.0;
                    }
                    vals[i] = nb;
                }
            }
        }
        // neighbor average at the origin should be 1 within oracle tolerance
        let avg = 0.25 * (vals[at(1, 0)] + vals[at(-1, 0)] + vals[at(0, 1)] + vals[at(0, -1)]);
        assert!((avg - 1.0).abs() < 2e-3, "origin defect: {avg}");
        assert!((vals[at(1, 0)] - 1.0).abs() < 2e-3, "a(1,0) ~ {}", vals[at(1, 0)]);
        assert!(
            (vals[at(1, 1)] - 4.0 / std::f64::consts::PI).abs() < 2e-3,
            "a(1,1) ~ {}",
            vals[at(1, 1)]
        );
    }

    #[test]
    fn green_single_interior_point() {
        let b = BoxSpec::any_side(3).unwrap();
        let g = green_function(b).unwrap();
        assert_eq!(g.interior_dim(), 1);
        assert!((g.get((1, 1), (1, 1)) - 1.0).abs() < 1e-12);
        // boundary rows are zero
        assert_eq!(g.get((0, 0), (1, 1)), 0.0);
        assert_eq!(g.get((0, 1), (1, 1)), 0.0);
    }

    #[test]
    fn green_n16_center_regression() {
        // dense (I - P) inversion fixture
        let g = green_function(BoxSpec::new(16).unwrap()).unwrap();
        assert!(
            (g.center_variance() - 2.354269115).abs() < 1e-6,
            "G_16(c,c) = {}",
            g.center_variance()
        );
    }

    #[test]
    fn green_budget_enforced() {
        let b = BoxSpec::new(128).unwrap();
        assert!(matches!(
            green_function(b),
            Err(DgffError::SizeBudget(_))
        ));
    }

    #[test]
    fn fast_route_matches_dense() {
        let b = BoxSpec::new(16).unwrap();
        let dense = green_function(b).unwrap();
        let sites: Vec<Point> = vec![(3, 4), (8, 8), (12, 5), (1, 14)];
        let fast = green_entries_fast(b, &sites).unwrap();
        for (i, &u) in sites.iter().enumerate() {
            for (j, &v) in sites.iter().enumerate() {
                assert!(
                    (fast[(i, j)] - dense.get(u, v)).abs() < 1e-10,
                    "({u:?},{v:?})"
                );
            }
        }
    }

    #[test]
    fn green_factor_matches_table() {
        let b = BoxSpec::new(8).unwrap();
        let table = green_function(b).unwrap();
        let factor = GreenFactor::new(b, &GreenTolerances::default()).unwrap();
        let sites = vec![(2i64, 2i64), (4, 5), (6, 1)];
        let ent = factor.entries(&sites).unwrap();
        for (i, &u) in sites.iter().enumerate() {
            for (j, &v) in sites.iter().enumerate() {
                assert!((ent[(i, j)] - table.get(u, v)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn harmonic_measure_3x3_center() {
        let b = BoxSpec::any_side(3).unwrap();
        let hm = harmonic_measure(b, (1, 1)).unwrap();
        assert!(!hm.degenerate);
        assert!((hm.total() - 1.0).abs() < 1e-12);
        // 1/4 on each edge midpoint, 0 on corners
        for z in [(1i64, 0i64), (0, 1), (2, 1), (1, 2)] {
            assert!((hm.weight_at(z) - 0.25).abs() < 1e-12, "{z:?}");
        }
        for z in [(0i64, 0i64), (2, 0), (0, 2), (2, 2)] {
            assert_eq!(hm.weight_at(z), 0.0, "{z:?}");
        }
    }

    #[test]
    fn harmonic_measure_favors_near_side() {
        let b = BoxSpec::new(8).unwrap();
        let hm = harmonic_measure(b, (1, 4)).unwrap();
        assert!((hm.total() - 1.0).abs() < 1e-12);
        let left: f64 = hm
            .weights
            .iter()
            .filter(|((x, _), _)| *x == 0)
            .map(|(_, w)| w)
            .sum();
        assert!(left > 0.25, "left side weight {left}");
    }

    #[test]
    fn harmonic_measure_degenerate_on_boundary() {
        let b = BoxSpec::new(8).unwrap();
        let hm = harmonic_measure(b, (0, 3)).unwrap();
        assert!(hm.degenerate);
        assert_eq!(hm.weight_at((0, 3)), 1.0);
        assert!((hm.total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eq25_crosscheck_small_box() {
        let g = green_function(BoxSpec::new(16).unwrap()).unwrap();
        let kernel = potential_kernel(16).unwrap();
        let worst = potential_kernel_crosscheck(&g, &kernel).unwrap();
        assert!(worst < 1e-8, "crosscheck residual {worst}");
    }

    #[test]
    fn coarse_covariance_structure() {
        let parent = BoxSpec::new(32).unwrap();
        let partition = SubBoxPartition::new(parent, 2, 0.125).unwrap();
        // u, v in different sub-boxes: entry = G_N(u, v)
        let u = (8, 8);
        let v = (24, 24);
        let cov = coarse_covariance(&partition, &[u, v]).unwrap();
        let g = green_function(parent).unwrap();
        assert!((cov.mat[(0, 1)] - g.get(u, v)).abs() < 1e-10);
        // same-site diagonal at a sub-box center: G_32(u,u) - G_16(c,c)
        let g16 = green_function(BoxSpec::new(16).unwrap()).unwrap();
        let want = g.get(u, u) - g16.get((8, 8), (8, 8));
        assert!((cov.mat[(0, 0)] - want).abs() < 1e-10);
    }

    #[test]
    fn coarse_covariance_rejects_outside_delta_interior() {
        let parent = BoxSpec::new(32).unwrap();
        let partition = SubBoxPartition::new(parent, 2, 0.125).unwrap();
        // (16, 8) is on the second sub-box's boundary column
        assert!(matches!(
            coarse_covariance(&partition, &[(16, 8)]),
            Err(DgffError::Domain(_))
        ));
    }

    #[test]
    fn coarse_covariance_psd_random_sites() {
        let parent = BoxSpec::new(32).unwrap();
        let partition = SubBoxPartition::new(parent, 2, 0.125).unwrap();
        let all = partition.delta_interior_all();
        let sites: Vec<Point> = (0..8)
            .map(|i| all[(crate::rng::keyed_u64(99, i) as usize) % all.len()])
            .collect();
        let cov = coarse_covariance(&partition, &sites).unwrap();
        assert!(cov.min_eigenvalue() > -1e-9, "{}", cov.min_eigenvalue());
    }

    #[test]
    fn coarse_limit_k1_vanishes() {
        let sites = vec![(0.4, 0.4), (0.6, 0.55)];
        let lim =
            coarse_covariance_limit(1, 0.125, &sites, 32, &GreenTolerances::default()).unwrap();
        assert!(lim.mat.abs().max() < 1e-12);
        assert!(lim.error_estimate < 1e-12);
    }

    #[test]
    fn coarse_limit_refines() {
        let sites = vec![(0.3, 0.3), (0.3, 0.35), (0.8, 0.7)];
        let tol = GreenTolerances::default();
        let lo = coarse_covariance_limit(2, 0.125, &sites, 32, &tol).unwrap();
        let hi = coarse_covariance_limit(2, 0.125, &sites, 64, &tol).unwrap();
        assert!(
            hi.error_estimate < lo.error_estimate,
            "{} !< {}",
            hi.error_estimate,
            lo.error_estimate
        );
        // diagonal continuity in the site
        let a = coarse_covariance_limit(2, 0.125, &[(0.30, 0.30)], 64, &tol).unwrap();
        let b = coarse_covariance_limit(2, 0.125, &[(0.30 + 1.0 / 64.0, 0.30)], 64, &tol).unwrap();
        assert!((a.mat[(0, 0)] - b.mat[(0, 0)]).abs() < 0.2);
    }
}
