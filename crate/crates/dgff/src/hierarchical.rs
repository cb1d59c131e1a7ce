//! Branching random walk (BRW) and modified branching random walk (MBRW)
//! samplers with the exact variance ladder, exact covariance computations,
//! and the covariance-sandwich / comparison checks.
//!
//! Level `j` of the BRW attaches one `N(0, (2 log 2)/pi)` variable to each
//! grid-aligned dyadic box of side `2^j`; a site sums the variables of its
//! `n + 1` dyadic ancestors. The MBRW instead sums over *all* level-`j` boxes
//! containing the site, with torus identification and per-box variance
//! `(2 log 2)/pi * 2^{-2j}`, which makes the field torus-stationary.
//!
//! MBRW level grids are quantized to multiples of `2^-32`. Window sums of a
//! few thousand such values are exact in `f64` (every partial sum is
//! representable), so the sliding-window reduction is independent of
//! summation order and agrees bitwise with naive summation. The quantization
//! perturbs each variable by at most `2^-33`, far below statistical
//! resolution.

use crate::error::DgffError;
use crate::field::{FieldSample, Grid, ModelTag};
use crate::lattice::{torus_distance, BoxSpec};
use crate::numeric::mean_se;
use crate::rng;
use crate::sampler::SpectralSampler;
use crate::{Result, LEVEL_VARIANCE, TWO_SQRT_TWO_OVER_PI};

const DOMAIN_BRW: u64 = 0x4252_5700; // "BRW"
const DOMAIN_MBRW: u64 = 0x4D42_5257; // "MBRW"

/// Which hierarchical field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HierKind {
    Brw,
    Mbrw,
}

/// Hierarchical model descriptor with the paper's variance ladder.
#[derive(Clone, Copy, Debug)]
pub struct HierarchicalSpec {
    pub box_spec: BoxSpec,
    pub kind: HierKind,
}

impl HierarchicalSpec {
    /// Variance of one level-`j` variable.
    pub fn level_variance(&self, level: u32) -> f64 {
        match self.kind {
            HierKind::Brw => LEVEL_VARIANCE,
            HierKind::Mbrw => LEVEL_VARIANCE * 0.25f64.powi(level as i32),
        }
    }

    /// Total per-site variance `(n + 1) (2 log 2)/pi` for both kinds.
    pub fn point_variance(&self) -> Result<f64> {
        let n = self.box_spec.level()?;
        Ok((n as f64 + 1.0) * LEVEL_VARIANCE)
    }
}

fn quantize(x: f64) -> f64 {
    const SCALE: f64 = 4294967296.0; // 2^32
    (x * SCALE).round() / SCALE
}

/// BRW sample: per level one Gaussian per aligned dyadic box.
pub fn sample_brw(box_spec: BoxSpec, seed: u64) -> Result<FieldSample> {
    sample_brw_levels(box_spec, seed, 0)
}

/// BRW restricted to levels `j0..=n`; dropping the i.i.d. bottom layers
/// shrinks every increment, which Sudakov-Fernique turns into an expected-max
/// ordering.
pub fn sample_brw_levels(box_spec: BoxSpec, seed: u64, j0: u32) -> Result<FieldSample> {
    let n = box_spec.level()?;
    let side = box_spec.side();
    let sigma = LEVEL_VARIANCE.sqrt();
    let mut grid = Grid::zeros(side);
    for j in j0..=n {
        let cells = side >> j; // side / 2^j
        let key = rng::derive_key(seed, DOMAIN_BRW, j as u64);
        let mut level = vec![0.0; cells * cells];
        rng::fill_normals(key, 0, &mut level);
        for v in &mut level {
            *v *= sigma;
        }
        for y in 0..side {
            let row = (y >> j) * cells;
            for x in 0..side {
                let val = level[row + (x >> j)];
                let i = y * side + x;
                grid.as_mut_slice()[i] += val;
            }
        }
    }
    Ok(FieldSample {
        box_spec,
        values: grid,
        model: ModelTag::Brw,
        seed,
    })
}

/// BRW with every level variance scaled by `factor` (used by the Gaussian
/// scaling checks: scaling all covariances by `c` scales the field by
/// `sqrt(c)`).
pub fn sample_brw_scaled(box_spec: BoxSpec, seed: u64, factor: f64) -> Result<FieldSample> {
    let mut f = sample_brw(box_spec, seed)?;
    let s = factor.sqrt();
    for v in f.values.as_mut_slice() {
        *v *= s;
    }
    Ok(f)
}

/// Underlying MBRW level grid: `side^2` quantized normals with standard
/// deviation `sqrt((2 log 2)/pi) * 2^-j`, indexed by torus corner.
fn mbrw_level_grid(seed: u64, level: u32, side: usize) -> Vec<f64> {
    let key = rng::derive_key(seed, DOMAIN_MBRW, level as u64);
    let sigma = LEVEL_VARIANCE.sqrt() * 0.5f64.powi(level as i32);
    let mut grid = vec![0.0; side * side];
    rng::fill_normals(key, 0, &mut grid);
    for v in &mut grid {
        *v = quantize(*v * sigma);
    }
    grid
}

/// Circular sliding-window sum of width `w` along each row, in place.
fn circular_window_rows(grid: &mut [f64], side: usize, w: usize, scratch: &mut [f64]) {
    for row in grid.chunks_exact_mut(side) {
        scratch[..side].copy_from_slice(row);
        let mut sum = 0.0;
        // the x = 0 window is positions {0, side-1, ..., side-w+1}
        for t in 0..w {
            sum += scratch[(side - t) % side];
        }
        row[0] = sum;
        for x in 1..side {
            sum += scratch[x];
            sum -= scratch[(x + side - w) % side];
            row[x] = sum;
        }
    }
}

/// Transpose a square grid in place.
fn transpose(grid: &mut [f64], side: usize) {
    for y in 0..side {
        for x in (y + 1)..side {
            grid.swap(y * side + x, x * side + y);
        }
    }
}

/// MBRW sample via circular prefix/sliding-window sums, `O(N^2 log N)`.
pub fn sample_mbrw(box_spec: BoxSpec, seed: u64) -> Result<FieldSample> {
    sample_mbrw_levels(box_spec, seed, 0)
}

/// MBRW restricted to levels `j0..=n` (comparison-check building block).
pub fn sample_mbrw_levels(box_spec: BoxSpec, seed: u64, j0: u32) -> Result<FieldSample> {
    let n = box_spec.level()?;
    let side = box_spec.side();
    let mut acc = vec![0.0; side * side];
    let mut scratch = vec![0.0; side];
    for j in j0..=n {
        let mut level = mbrw_level_grid(seed, j, side);
        let w = 1usize << j;
        // sum over corners t in [v - w + 1, v] per axis (torus): boxes
        // containing v are those with corner in that window
        circular_window_rows(&mut level, side, w, &mut scratch);
        transpose(&mut level, side);
        circular_window_rows(&mut level, side, w, &mut scratch);
        transpose(&mut level, side);
        for (a, l) in acc.iter_mut().zip(&level) {
            *a += l;
        }
    }
    Ok(FieldSample {
        box_spec,
        values: Grid::from_vec(side, acc),
        model: ModelTag::Mbrw,
        seed,
    })
}

/// Naive MBRW: direct summation over all covering boxes per site, sharing
/// the level grids with the fast sampler. Oracle for small `N`.
pub fn sample_mbrw_naive(box_spec: BoxSpec, seed: u64) -> Result<FieldSample> {
    let n = box_spec.level()?;
    let side = box_spec.side();
    let mut acc = vec![0.0; side * side];
    for j in 0..=n {
        let level = mbrw_level_grid(seed, j, side);
        let w = 1i64 << j;
        for y in 0..side as i64 {
            for x in 0..side as i64 {
                let mut sum = 0.0;
                for ty in 0..w {
                    for tx in 0..w {
                        let cx = (x - tx).rem_euclid(side as i64) as usize;
                        let cy = (y - ty).rem_euclid(side as i64) as usize;
                        sum += level[cy * side + cx];
                    }
                }
                acc[y as usize * side + x as usize] += sum;
            }
        }
    }
    Ok(FieldSample {
        box_spec,
        values: Grid::from_vec(side, acc),
        model: ModelTag::Mbrw,
        seed,
    })
}

/// Overlap of two length-`w` arcs at offset `d` on the circle `Z_N`.
fn arc_overlap(side: usize, w: usize, d: u64) -> u64 {
    let n = side as i64;
    let w = w as i64;
    let d = d as i64;
    ((w - d).max(0) + (w - (n - d)).max(0)) as u64
}

/// Exact MBRW covariance for a torus displacement, by window-overlap
/// counting: no sampling involved.
pub fn mbrw_covariance_exact(box_spec: BoxSpec, displacement: (i64, i64)) -> Result<f64> {
    let n = box_spec.level()?;
    let side = box_spec.side();
    let dx = displacement.0.rem_euclid(side as i64) as u64;
    let dy = displacement.1.rem_euclid(side as i64) as u64;
    let mut total = 0.0;
    for j in 0..=n {
        let w = 1usize << j;
        let cnt = arc_overlap(side, w, dx) * arc_overlap(side, w, dy);
        total += LEVEL_VARIANCE * 0.25f64.powi(j as i32) * cnt as f64;
    }
    Ok(total)
}

/// Exact BRW covariance: `(2 log 2)/pi` times the number of shared aligned
/// dyadic ancestors.
pub fn brw_covariance_exact(box_spec: BoxSpec, u: (i64, i64), v: (i64, i64)) -> Result<f64> {
    let n = box_spec.level()?;
    let mut shared = 0u32;
    for j in 0..=n {
        if (u.0 >> j, u.1 >> j) == (v.0 >> j, v.1 >> j) {
            shared += 1;
        }
    }
    Ok(LEVEL_VARIANCE * shared as f64)
}

/// One side of the covariance-sandwich report.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SandwichSide {
    pub n_side: usize,
    /// Max `|Cov - (2 log 2)/pi (n - log2 d)|` over the pair set.
    pub max_deviation: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct SandwichReport {
    pub mbrw: Vec<SandwichSide>,
    pub gff: Vec<SandwichSide>,
}

/// Max deviation of the exact MBRW covariance from
/// `(2 log 2)/pi (n - log2 d_N(u, v))` over all torus displacements.
pub fn covariance_sandwich_mbrw(box_spec: BoxSpec) -> Result<f64> {
    let n = box_spec.level()?;
    let side = box_spec.side();
    let mut worst: f64 = 0.0;
    for dy in 0..side as i64 {
        for dx in 0..side as i64 {
            let cov = mbrw_covariance_exact(box_spec, (dx, dy))?;
            let d = torus_distance((0, 0), (dx, dy), side).max(1.0);
            let pred = LEVEL_VARIANCE * (n as f64 - d.log2());
            worst = worst.max((cov - pred).abs());
        }
    }
    Ok(worst)
}

/// Max deviation of the GFF covariance from
/// `(2 log 2)/pi (n - (0 v log2 |u - v|))` over pairs in the centered box of
/// side `(1 - 2 delta) N`. `green` must cover those pairs.
pub fn covariance_sandwich_gff(
    box_spec: BoxSpec,
    delta: f64,
    green: &dyn Fn((i64, i64), (i64, i64)) -> f64,
) -> Result<f64> {
    let n = box_spec.level()?;
    let side = box_spec.side() as i64;
    let trim = (delta * side as f64).ceil() as i64;
    let lo = trim;
    let hi = side - trim;
    let mut sites = Vec::new();
    for y in lo..hi {
        for x in lo..hi {
            sites.push((x, y));
        }
    }
    let mut worst: f64 = 0.0;
    for (i, &u) in sites.iter().enumerate() {
        for &v in sites.iter().skip(i) {
            let d2 = ((u.0 - v.0).pow(2) + (u.1 - v.1).pow(2)) as f64;
            let log2d = if d2 <= 1.0 { 0.0 } else { 0.5 * d2.log2() };
            let pred = LEVEL_VARIANCE * (n as f64 - log2d);
            worst = worst.max((green(u, v) - pred).abs());
        }
    }
    Ok(worst)
}

/// Empirical `E max` comparison of the three models at one size, plus the
/// orderings the Gaussian comparison lemmas license at matched scales.
///
/// Cross-model orderings at equal `N` are not available without the paper's
/// unspecified embedding constants (the BRW domination of the GFF runs
/// through a `2^kappa`-fold larger box), so the three expected maxima are
/// reported side by side and the one-sided tests are:
/// * Sudakov-Fernique: dropping the i.i.d. bottom BRW layer shrinks every
///   increment, so `E max` cannot increase;
/// * Slepian: replacing the i.i.d. MBRW bottom layer by one global Gaussian
///   of the same variance preserves point variances and shrinks increments,
///   so exceedance probabilities cannot increase.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ComparisonReport {
    pub n_side: usize,
    pub reps: usize,
    pub emax_gff: (f64, f64),
    pub emax_brw: (f64, f64),
    pub emax_mbrw: (f64, f64),
    /// `E max BRW >= E max BRW(levels >= 1)` within CI slack.
    pub sudakov_fernique_pass: bool,
    /// `P(max MBRW >= lambda) >= P(max MBRW' >= lambda)` at the pooled
    /// median, within CI slack.
    pub slepian_pass: bool,
}

pub fn empirical_comparison_checks(
    box_spec: BoxSpec,
    reps: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    if reps < 100 {
        return Err(DgffError::statistics("need >= 100 reps", None));
    }
    let sampler = SpectralSampler::new(box_spec)?;
    let mut ws = sampler.make_workspace();
    let mut gff = Vec::with_capacity(reps);
    let mut brw = Vec::with_capacity(reps);
    let mut brw_trunc = Vec::with_capacity(reps);
    let mut mbrw = Vec::with_capacity(reps);
    let mut mbrw_replaced = Vec::with_capacity(reps);
    let gamma = LEVEL_VARIANCE.sqrt();
    for r in 0..reps {
        let s = rng::derive_key(seed, 1, r as u64);
        gff.push(sampler.sample(s, &mut ws).max_value());
        brw.push(sample_brw(box_spec, s)?.max_value());
        brw_trunc.push(sample_brw_levels(box_spec, s, 1)?.max_value());
        mbrw.push(sample_mbrw(box_spec, s)?.max_value());
        // same point variance, strictly larger covariances: Slepian target
        let global = gamma * rng::keyed_normal(rng::derive_key(s, 0x534C4550, 0), 0);
        mbrw_replaced.push(sample_mbrw_levels(box_spec, s, 1)?.max_value() + global);
    }
    let emax_gff = mean_se(&gff);
    let emax_brw = mean_se(&brw);
    let emax_brw_trunc = mean_se(&brw_trunc);
    let emax_mbrw = mean_se(&mbrw);
    let sf_slack = 3.0 * (emax_brw.1 + emax_brw_trunc.1);
    let sudakov_fernique_pass = emax_brw.0 >= emax_brw_trunc.0 - sf_slack;
    // pooled median as the Slepian threshold
    let mut pooled: Vec<f64> = mbrw.iter().chain(&mbrw_replaced).cloned().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lambda = pooled[pooled.len() / 2];
    let p_orig = mbrw.iter().filter(|&&m| m >= lambda).count() as f64 / reps as f64;
    let p_repl = mbrw_replaced.iter().filter(|&&m| m >= lambda).count() as f64 / reps as f64;
    let se = (0.5 / reps as f64).sqrt();
    let slepian_pass = p_orig >= p_repl - 3.0 * se;
    Ok(ComparisonReport {
        n_side: box_spec.side(),
        reps,
        emax_gff,
        emax_brw,
        emax_mbrw,
        sudakov_fernique_pass,
        slepian_pass,
    })
}

/// Regression of empirical `E max` against `log N`; the slope should match
/// `2 sqrt(2/pi)` to within the stated tolerance for all three models.
pub fn emax_growth_slope(emax: &[(usize, f64)]) -> f64 {
    let xs: Vec<f64> = emax.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = emax.iter().map(|(_, m)| *m).collect();
    let w = vec![1.0; xs.len()];
    crate::numeric::weighted_line_fit(&xs, &ys, &w).1
}

/// Relative slope error against `2 sqrt(2/pi)`.
pub fn emax_slope_rel_error(emax: &[(usize, f64)]) -> f64 {
    (emax_growth_slope(emax) - TWO_SQRT_TWO_OVER_PI).abs() / TWO_SQRT_TWO_OVER_PI
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brw_single_site() {
        // N = 1: one level, a single N(0, (2 log 2)/pi) value.
        let b = BoxSpec::new(1).unwrap();
        let reps = 100_000;
        let mut sq = 0.0;
        for r in 0..reps {
            let f = sample_brw(b, r as u64).unwrap();
            sq += f.values.get(0, 0).powi(2);
        }
        let var = sq / reps as f64;
        assert!((var - LEVEL_VARIANCE).abs() < 0.02 * LEVEL_VARIANCE, "{var}");
    }

    #[test]
    fn brw_point_variance_and_ancestors() {
        let b = BoxSpec::new(16).unwrap();
        let spec = HierarchicalSpec {
            box_spec: b,
            kind: HierKind::Brw,
        };
        assert!((spec.point_variance().unwrap() - 5.0 * LEVEL_VARIANCE).abs() < 1e-12);
        // sites in the same level-(n-1) box share levels n-1 and n
        let (u, v) = ((0i64, 0i64), (7i64, 7i64));
        let want = 2.0 * LEVEL_VARIANCE;
        assert_eq!(brw_covariance_exact(b, u, v).unwrap(), want);
        // empirical check against the ancestor count
        let reps = 50_000;
        let mut sum = 0.0;
        for r in 0..reps {
            let f = sample_brw(b, r as u64).unwrap();
            sum += f.value_at(u) * f.value_at(v);
        }
        let emp = sum / reps as f64;
        assert!((emp - want).abs() < 0.05, "emp {emp} want {want}");
    }

    #[test]
    fn mbrw_prefix_equals_naive_bitwise() {
        for n_side in [4usize, 8, 16] {
            let b = BoxSpec::new(n_side).unwrap();
            let fast = sample_mbrw(b, 2024).unwrap();
            let naive = sample_mbrw_naive(b, 2024).unwrap();
            assert_eq!(
                fast.values.as_slice(),
                naive.values.as_slice(),
                "N = {n_side}"
            );
        }
    }

    #[test]
    fn mbrw_point_variance_empirical() {
        let b = BoxSpec::new(16).unwrap();
        let want = 5.0 * LEVEL_VARIANCE;
        assert!((mbrw_covariance_exact(b, (0, 0)).unwrap() - want).abs() < 1e-12);
        let reps = 100_000;
        let mut sq = 0.0;
        for r in 0..reps {
            let f = sample_mbrw(b, r as u64).unwrap();
            let v = f.values.get(5, 9);
            sq += v * v;
        }
        let var = sq / reps as f64;
        assert!((var - want).abs() < 0.02 * want, "var {var} want {want}");
    }

    #[test]
    fn mbrw_translation_invariance() {
        // covariance depends only on the torus displacement
        let b = BoxSpec::new(32).unwrap();
        let reps = 20_000;
        let pairs = [((0i64, 0i64), (5i64, 3i64)), ((20i64, 30i64), (25i64, 1i64))];
        let mut sums = [0.0f64; 2];
        for r in 0..reps {
            let f = sample_mbrw(b, r as u64).unwrap();
            for (k, &(u, v)) in pairs.iter().enumerate() {
                sums[k] += f.value_at(u) * f.value_at(v);
            }
        }
        let exact = mbrw_covariance_exact(b, (5, 3)).unwrap();
        for (k, s) in sums.iter().enumerate() {
            let emp = s / reps as f64;
            // rough 4 SE band with Var(XY) <= Var X Var Y + Cov^2
            let v0 = mbrw_covariance_exact(b, (0, 0)).unwrap();
            let se = ((v0 * v0 + exact * exact) / reps as f64).sqrt();
            assert!((emp - exact).abs() < 4.0 * se, "pair {k}: {emp} vs {exact}");
        }
    }

    #[test]
    fn sandwich_deviation_at_u_eq_v() {
        // Cov(u,u) = (n+1) gamma^2, prediction n gamma^2: deviation gamma^2.
        let b = BoxSpec::new(16).unwrap();
        let cov = mbrw_covariance_exact(b, (0, 0)).unwrap();
        let pred = LEVEL_VARIANCE * 4.0;
        assert!((cov - pred - LEVEL_VARIANCE).abs() < 1e-12);
    }

    #[test]
    fn sandwich_maximal_distance_bounded() {
        let b = BoxSpec::new(32).unwrap();
        let cov = mbrw_covariance_exact(b, (16, 16)).unwrap();
        // near gamma^2 at maximal torus distance; sandwich holds with a
        // modest constant
        let d = torus_distance((0, 0), (16, 16), 32);
        let pred = LEVEL_VARIANCE * (5.0 - d.log2());
        assert!((cov - pred).abs() < 1.0, "cov {cov} pred {pred}");
    }

    #[test]
    fn sandwich_constant_stable_in_n() {
        let c32 = covariance_sandwich_mbrw(BoxSpec::new(32).unwrap()).unwrap();
        let c64 = covariance_sandwich_mbrw(BoxSpec::new(64).unwrap()).unwrap();
        let ratio = c64 / c32;
        assert!(
            (0.8..=1.25).contains(&ratio),
            "C_32 = {c32:.4}, C_64 = {c64:.4}, ratio {ratio:.3}"
        );
    }

    #[test]
    fn global_shift_leaves_recentered_max_unchanged() {
        let b = BoxSpec::new(16).unwrap();
        let f = sample_mbrw(b, 8).unwrap();
        let (m0, arg0) = f.max_with_ties();
        let mut shifted = f.clone();
        for v in shifted.values.as_mut_slice() {
            *v += 3.25;
        }
        let (m1, arg1) = shifted.max_with_ties();
        assert_eq!(arg0, arg1);
        assert!((m1 - m0 - 3.25).abs() < 1e-12);
    }

    #[test]
    fn doubling_covariance_scales_max_by_sqrt2() {
        let b = BoxSpec::new(16).unwrap();
        for seed in 0..50u64 {
            let base = sample_brw(b, seed).unwrap().max_value();
            let scaled = sample_brw_scaled(b, seed, 2.0).unwrap().max_value();
            assert!((scaled - std::f64::consts::SQRT_2 * base).abs() < 1e-10);
        }
    }

    #[test]
    fn comparison_report_small() {
        let b = BoxSpec::new(32).unwrap();
        let rep = empirical_comparison_checks(b, 400, 31).unwrap();
        assert!(rep.sudakov_fernique_pass, "{rep:?}");
        assert!(rep.slepian_pass, "{rep:?}");
        assert!(rep.emax_gff.0 > 0.0 && rep.emax_mbrw.0 > 0.0);
    }
}
