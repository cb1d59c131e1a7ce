//! Exact DGFF samplers and the coarse/fine Markov decomposition.
//!
//! The production sampler draws one standard normal per Dirichlet-Laplacian
//! sine mode, scales by `lambda_ab^{-1/2}`, and synthesizes with a fast 2D
//! DST: an exact sample of the Gaussian field with covariance `(I - P)^{-1}`
//! in `O(N^2 log N)`. The Cholesky sampler factorizes a dense Green table and
//! exists for cross-validation only.

use crate::dst::{Dst2d, DstWorkspace, PoissonSolver};
use crate::error::DgffError;
use crate::field::{FieldSample, Grid, ModelTag};
use crate::green::GreenTable;
use crate::lattice::{BoxSpec, SubBoxPartition};
use crate::rng;
use crate::Result;
use nalgebra::DVector;

/// Domain-separation tags for counter-mode draws.
pub(crate) const DOMAIN_SPECTRAL: u64 = 0x5350_4543; // "SPEC"
pub(crate) const DOMAIN_CHOLESKY: u64 = 0x43_484F4C; // "CHOL"

/// Reusable spectral sampler for one box size.
pub struct SpectralSampler {
    box_spec: BoxSpec,
    dst: Option<Dst2d>,
    /// Per-mode amplitude `(2/(M+1)) * lambda_ab^{-1/2}`, row-major.
    amplitude: Vec<f64>,
}

impl SpectralSampler {
    pub fn new(box_spec: BoxSpec) -> Result<Self> {
        let m = box_spec.interior_side();
        if m == 0 {
            return Ok(SpectralSampler {
                box_spec,
                dst: None,
                amplitude: Vec::new(),
            });
        }
        let norm = 2.0 / (m + 1) as f64;
        let mut amplitude = vec![0.0; m * m];
        for b in 1..=m {
            let cb = (std::f64::consts::PI * b as f64 / (m + 1) as f64).cos();
            for a in 1..=m {
                let ca = (std::f64::consts::PI * a as f64 / (m + 1) as f64).cos();
                let lambda = 1.0 - 0.5 * (ca + cb);
                amplitude[(b - 1) * m + (a - 1)] = norm / lambda.sqrt();
            }
        }
        Ok(SpectralSampler {
            box_spec,
            dst: Some(Dst2d::new(m)),
            amplitude,
        })
    }

    pub fn box_spec(&self) -> BoxSpec {
        self.box_spec
    }

    pub fn make_workspace(&self) -> Option<DstWorkspace> {
        self.dst.as_ref().map(|d| d.make_workspace())
    }

    /// Draw one field. Bit-reproducible in `seed`; mode normals are indexed
    /// by mode, so the result is independent of any scheduling.
    pub fn sample(&self, seed: u64, ws: &mut Option<DstWorkspace>) -> FieldSample {
        let n = self.box_spec.side();
        let mut grid = Grid::zeros(n);
        if let Some(dst) = &self.dst {
            let m = dst.side();
            let key = rng::derive_key(seed, DOMAIN_SPECTRAL, 0);
            let mut coeff = vec![0.0; m * m];
            rng::fill_normals(key, 0, &mut coeff);
            for (c, amp) in coeff.iter_mut().zip(&self.amplitude) {
                *c *= amp;
            }
            let ws = ws.as_mut().expect("workspace for non-degenerate sampler");
            dst.transform(&mut coeff, ws);
            for y in 0..m {
                for x in 0..m {
                    grid.set(x + 1, y + 1, coeff[y * m + x]);
                }
            }
        }
        FieldSample {
            box_spec: self.box_spec,
            values: grid,
            model: ModelTag::Gff,
            seed,
        }
    }
}

/// One-shot convenience wrapper.
pub fn sample_gff_spectral(box_spec: BoxSpec, seed: u64) -> Result<FieldSample> {
    let sampler = SpectralSampler::new(box_spec)?;
    let mut ws = sampler.make_workspace();
    Ok(sampler.sample(seed, &mut ws))
}

/// Oracle sampler via symmetric factorization of a dense Green table.
pub struct CholeskySampler {
    box_spec: BoxSpec,
    lower: nalgebra::DMatrix<f64>,
}

impl CholeskySampler {
    pub fn from_green(green: &GreenTable) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(green.matrix().clone())
            .ok_or_else(|| DgffError::Numeric("Green table is not positive definite".into()))?;
        Ok(CholeskySampler {
            box_spec: green.box_spec(),
            lower: chol.unpack(),
        })
    }

    pub fn sample(&self, seed: u64) -> FieldSample {
        let dim = self.lower.nrows();
        let key = rng::derive_key(seed, DOMAIN_CHOLESKY, 0);
        let mut z = DVector::zeros(dim);
        for i in 0..dim {
            z[i] = rng::keyed_normal(key, i as u64);
        }
        let vals = &self.lower * z;
        let n = self.box_spec.side();
        let m = self.box_spec.interior_side();
        let mut grid = Grid::zeros(n);
        for y in 0..m {
            for x in 0..m {
                grid.set(x + 1, y + 1, vals[y * m + x]);
            }
        }
        FieldSample {
            box_spec: self.box_spec,
            values: grid,
            model: ModelTag::Gff,
            seed,
        }
    }
}

/// The coarse/fine split of a field sample.
pub struct Decomposition {
    pub coarse: FieldSample,
    pub fine: FieldSample,
    pub partition: SubBoxPartition,
}

impl Decomposition {
    /// Max per-site reconstruction error `|coarse + fine - field|`.
    pub fn reconstruction_error(&self, field: &FieldSample) -> f64 {
        let n = field.values.side();
        let mut worst: f64 = 0.0;
        for i in 0..n * n {
            let sum = self.coarse.values.as_slice()[i] + self.fine.values.as_slice()[i];
            worst = worst.max((sum - field.values.as_slice()[i]).abs());
        }
        worst
    }

    /// Max harmonicity defect of the coarse field over sub-box interiors.
    pub fn coarse_harmonicity_defect(&self) -> f64 {
        let g = &self.coarse.values;
        let mut worst: f64 = 0.0;
        for (_, sb) in self.partition.enumerate_subboxes() {
            for p in sb.interior_sites() {
                let (x, y) = (p.0 as usize, p.1 as usize);
                let avg = 0.25
                    * (g.get(x - 1, y) + g.get(x + 1, y) + g.get(x, y - 1) + g.get(x, y + 1));
                worst = worst.max((avg - g.get(x, y)).abs());
            }
        }
        worst
    }

    /// Max |fine| over all sub-box boundary rings.
    pub fn fine_boundary_max(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (_, sb) in self.partition.enumerate_subboxes() {
            for p in sb.boundary_sites() {
                worst = worst.max(self.fine.value_at(p).abs());
            }
        }
        worst
    }
}

/// Split `field = coarse + fine`: within each sub-box the coarse part is the
/// discrete harmonic extension of the field's values on the sub-box boundary
/// ring, and the fine part is the remainder (zero on every ring).
pub fn decompose(field: &FieldSample, partition: &SubBoxPartition) -> Result<Decomposition> {
    if field.box_spec != partition.parent() {
        return Err(DgffError::Domain(
            "field box does not match the partition parent".into(),
        ));
    }
    let n = field.box_spec.side();
    let s = partition.sub_box_side();
    let mut coarse = Grid::zeros(n);
    let m = s.saturating_sub(2);
    let solver = if m > 0 { Some(PoissonSolver::new(m)) } else { None };
    let mut ws = solver.as_ref().map(|s| s.make_workspace());
    let mut rhs = vec![0.0; m * m];

    for (_, sb) in partition.enumerate_subboxes() {
        let (ox, oy) = sb.origin();
        // ring values are the field itself
        for p in sb.boundary_sites() {
            coarse.set(p.0 as usize, p.1 as usize, field.value_at(p));
        }
        let (Some(solver), Some(ws)) = (&solver, &mut ws) else {
            continue;
        };
        // boundary-lifted right-hand side: (1/4) sum of ring neighbors
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for ly in 0..m {
            for lx in 0..m {
                let (px, py) = (ox + lx as i64 + 1, oy + ly as i64 + 1);
                let mut acc = 0.0;
                for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                    let nb = (px + dx, py + dy);
                    if sb.is_boundary(nb) {
                        acc += 0.25 * field.value_at(nb);
                    }
                }
                rhs[ly * m + lx] = acc;
            }
        }
        solver.solve(&mut rhs, ws);
        for ly in 0..m {
            for lx in 0..m {
                coarse.set(
                    (ox + lx as i64 + 1) as usize,
                    (oy + ly as i64 + 1) as usize,
                    rhs[ly * m + lx],
                );
            }
        }
    }

    let mut fine = Grid::zeros(n);
    for i in 0..n * n {
        fine.as_mut_slice()[i] = field.values.as_slice()[i] - coarse.as_slice()[i];
    }
    Ok(Decomposition {
        coarse: FieldSample {
            box_spec: field.box_spec,
            values: coarse,
            model: ModelTag::Coarse,
            seed: field.seed,
        },
        fine: FieldSample {
            box_spec: field.box_spec,
            values: fine,
            model: ModelTag::Fine,
            seed: field.seed,
        },
        partition: *partition,
    })
}

/// One correlation check inside an independence report.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CorrelationCheck {
    pub label: String,
    pub rho_hat: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct IndependenceReport {
    pub reps: usize,
    pub checks: Vec<CorrelationCheck>,
}

impl IndependenceReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Empirical independence checks over an ensemble of decompositions:
/// fine/coarse at one site, fine/fine across sub-boxes (both null), and
/// fine/fine at adjacent sites of one sub-box (positive).
pub fn verify_independence(decomps: &[Decomposition]) -> Result<IndependenceReport> {
    let reps = decomps.len();
    if reps < 10_000 {
        return Err(DgffError::statistics(
            format!("independence check needs >= 10^4 decompositions, got {reps}"),
            None,
        ));
    }
    let partition = &decomps[0].partition;
    let s = partition.sub_box_side() as i64;
    let sb0 = partition.sub_box(0).expect("sub-box 0");
    let c0 = (
        sb0.origin().0 + s / 2,
        sb0.origin().1 + s / 2,
    );
    let c0_adj = (c0.0 + 1, c0.1);
    let other = partition.sub_box(partition.sub_box_count() - 1).expect("last sub-box");
    let c1 = (
        other.origin().0 + s / 2,
        other.origin().1 + s / 2,
    );

    let series = |f: &dyn Fn(&Decomposition) -> f64| -> Vec<f64> {
        decomps.iter().map(f).collect()
    };
    let fine_c0 = series(&|d| d.fine.value_at(c0));
    let fine_c0_adj = series(&|d| d.fine.value_at(c0_adj));
    let fine_c1 = series(&|d| d.fine.value_at(c1));
    let coarse_c0 = series(&|d| d.coarse.value_at(c0));

    let threshold = 4.0 / (reps as f64).sqrt();
    let mut checks = Vec::new();
    let rho = pearson(&fine_c0, &coarse_c0);
    checks.push(CorrelationCheck {
        label: "fine/coarse at one site".into(),
        rho_hat: rho,
        threshold,
        pass: rho.abs() < threshold,
    });
    let rho = pearson(&fine_c0, &fine_c1);
    checks.push(CorrelationCheck {
        label: "fine/fine across sub-boxes".into(),
        rho_hat: rho,
        threshold,
        pass: rho.abs() < threshold,
    });
    let rho = pearson(&fine_c0, &fine_c0_adj);
    checks.push(CorrelationCheck {
        label: "fine/fine adjacent within sub-box (expected positive)".into(),
        rho_hat: rho,
        threshold,
        pass: rho > threshold,
    });
    Ok(IndependenceReport { reps, checks })
}
